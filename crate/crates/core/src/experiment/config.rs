use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};

use crate::attack::{AttackConfig, AttackKind};
use crate::designs::{DesignConfig, DesignKind};
use crate::error::{Error, Result};
use crate::evset::{EvsetConfig, Method};
use crate::policy::ReplacementPolicy;
use crate::ree::ReeConfig;
use crate::victims::VictimKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Ree,
    Evset,
    Attack,
    Sweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Ree,
        ExperimentKind::Evset,
        ExperimentKind::Attack,
        ExperimentKind::Sweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Ree => "ree",
            ExperimentKind::Evset => "evset",
            ExperimentKind::Attack => "attack",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("field `experiment`: unknown experiment `{s}`")))
    }
}

/// Accepts either a single value or a list.
fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: serde::de::DeserializeOwned,
{
    use serde::de::Error as _;
    let items = match serde_json::Value::deserialize(d)? {
        serde_json::Value::Array(items) => items,
        one => vec![one],
    };
    items
        .into_iter()
        .map(|x| T::deserialize(x).map_err(D::Error::custom))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvsetSection {
    #[serde(deserialize_with = "one_or_many")]
    pub methods: Vec<Method>,
    /// Overrides the design's default target size.
    pub target_size: Option<usize>,
    /// Also report the size of the shortest set reaching this eviction probability.
    pub alpha: Option<f64>,
    #[serde(flatten)]
    pub config: EvsetConfig,
}

impl Default for EvsetSection {
    fn default() -> Self {
        EvsetSection {
            methods: Method::ALL.to_vec(),
            target_size: None,
            alpha: None,
            config: EvsetConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSection {
    #[serde(deserialize_with = "one_or_many")]
    pub victims: Vec<VictimKind>,
    #[serde(deserialize_with = "one_or_many")]
    pub kinds: Vec<AttackKind>,
    #[serde(flatten)]
    pub config: AttackConfig,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            victims: VictimKind::ALL.to_vec(),
            kinds: AttackKind::ALL.to_vec(),
            config: AttackConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    #[serde(deserialize_with = "one_or_many")]
    pub sizes: Vec<usize>,
    pub victim: VictimKind,
    #[serde(flatten)]
    pub config: AttackConfig,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            sizes: vec![1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048],
            victim: VictimKind::Aes,
            config: AttackConfig::default(),
        }
    }
}

/// A batch experiment: one measurement over a grid of cache configurations.
///
/// `design`, `lines`, `ways`, `policy` and `partitions` take a value or a
/// list; the grid is their cross product. An empty `partitions` list keeps
/// each design's default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    #[serde(deserialize_with = "one_or_many")]
    pub design: Vec<DesignKind>,
    #[serde(deserialize_with = "one_or_many")]
    pub lines: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub ways: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub policy: Vec<ReplacementPolicy>,
    #[serde(deserialize_with = "one_or_many")]
    pub partitions: Vec<usize>,
    pub k: u32,
    pub r: usize,
    pub domains: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Optional JSON file with the aggregate rows.
    pub summary: Option<PathBuf>,
    pub ree: ReeConfig,
    pub evset: EvsetSection,
    pub attack: AttackSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let d = DesignConfig::default();
        ExperimentConfig {
            experiment: None,
            design: vec![d.design],
            lines: vec![d.lines],
            ways: vec![d.ways],
            policy: vec![d.policy],
            partitions: Vec::new(),
            k: d.k,
            r: d.r,
            domains: d.domains,
            repetitions: 1,
            seed: 1,
            output: None,
            summary: None,
            ree: ReeConfig::default(),
            evset: EvsetSection::default(),
            attack: AttackSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// Command-line values that replace the corresponding file fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub design: Option<Vec<DesignKind>>,
    pub lines: Option<Vec<usize>>,
    pub ways: Option<Vec<usize>>,
    pub policy: Option<Vec<ReplacementPolicy>>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        if o.experiment.is_some() {
            self.experiment = o.experiment;
        }
        if let Some(v) = o.design {
            self.design = v;
        }
        if let Some(v) = o.lines {
            self.lines = v;
        }
        if let Some(v) = o.ways {
            self.ways = v;
        }
        if let Some(v) = o.policy {
            self.policy = v;
        }
        if let Some(v) = o.repetitions {
            self.repetitions = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if o.output.is_some() {
            self.output = o.output;
        }
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment.ok_or_else(|| {
            Error::config("field `experiment`: missing (ree, evset, attack or sweep)")
        })
    }

    /// Every cache configuration of the grid, in a fixed order.
    pub fn grid(&self) -> Vec<DesignConfig> {
        let partitions: Vec<Option<usize>> = if self.partitions.is_empty() {
            vec![None]
        } else {
            self.partitions.iter().copied().map(Some).collect()
        };
        let mut out = Vec::new();
        for &design in &self.design {
            for &lines in &self.lines {
                for &ways in &self.ways {
                    for &policy in &self.policy {
                        let has_partitions =
                            matches!(design, DesignKind::CeaserS | DesignKind::ScatterCache);
                        let ps: &[Option<usize>] =
                            if has_partitions { &partitions } else { &[None] };
                        for &p in ps {
                            out.push(DesignConfig {
                                design,
                                lines,
                                ways,
                                policy,
                                partitions: p,
                                k: self.k,
                                r: self.r,
                                domains: self.domains,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        let empty = [
            ("design", self.design.is_empty()),
            ("lines", self.lines.is_empty()),
            ("ways", self.ways.is_empty()),
            ("policy", self.policy.is_empty()),
        ];
        if let Some((field, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::config(format!(
                "field `{field}`: needs at least one value"
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::config("field `repetitions`: must be at least 1"));
        }
        for d in self.grid() {
            d.validate().map_err(|e| {
                Error::config(format!(
                    "field `design` ({} lines={} ways={}): {}",
                    d.design,
                    d.lines,
                    d.ways,
                    strip_prefix(&e)
                ))
            })?;
        }
        match kind {
            ExperimentKind::Ree => {
                if self.ree.samples == 0 || self.ree.chunk_multiple == 0 {
                    return Err(Error::config(
                        "field `ree`: samples and chunk_multiple must be positive",
                    ));
                }
            }
            ExperimentKind::Evset => {
                if self.evset.methods.is_empty() {
                    return Err(Error::config(
                        "field `evset.methods`: needs at least one method",
                    ));
                }
                if self.evset.target_size == Some(0) {
                    return Err(Error::config("field `evset.target_size`: must be positive"));
                }
                if let Some(a) = self.evset.alpha {
                    if !(0.0..=1.0).contains(&a) {
                        return Err(Error::config("field `evset.alpha`: must lie in [0, 1]"));
                    }
                }
            }
            ExperimentKind::Attack => {
                if self.attack.victims.is_empty() || self.attack.kinds.is_empty() {
                    return Err(Error::config(
                        "field `attack`: victims and kinds need at least one value",
                    ));
                }
                self.attack
                    .config
                    .validate()
                    .map_err(|e| Error::config(format!("field `attack`: {}", strip_prefix(&e))))?;
            }
            ExperimentKind::Sweep => {
                if self.sweep.sizes.is_empty() || self.sweep.sizes.contains(&0) {
                    return Err(Error::config("field `sweep.sizes`: needs positive sizes"));
                }
                self.sweep
                    .config
                    .validate()
                    .map_err(|e| Error::config(format!("field `sweep`: {}", strip_prefix(&e))))?;
            }
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}
