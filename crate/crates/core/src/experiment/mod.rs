//! Batch experiments over grids of cache configurations.
//!
//! Every repetition runs on its own cache instance with its own seed, so any
//! row can be replayed from `(config, seed)`. Repetitions run on the rayon
//! pool; rows are emitted in grid order, then repetition order.

mod config;

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use self::config::{
    AttackSection, EvsetSection, ExperimentConfig, ExperimentKind, Overrides, SweepSection,
};
use crate::attack::{self, AttackConfig, AttackKind};
use crate::designs::DesignConfig;
use crate::error::{Error, Result};
use crate::evset;
use crate::ree;
use crate::rng::RngStream;

/// Fixed CSV header.
pub const HEADER: [&str; 10] = [
    "experiment",
    "design",
    "lines",
    "ways",
    "policy",
    "params",
    "metric",
    "value",
    "seed",
    "repetition",
];

pub const AGGREGATES: [&str; 4] = ["min", "max", "median", "mean"];

/// One CSV row. `repetition` is the repetition index, an aggregate name, or
/// `summary` for values derived across a whole group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub design: String,
    pub lines: usize,
    pub ways: usize,
    pub policy: String,
    pub params: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub repetition: String,
}

impl Row {
    fn group_key(&self) -> (&str, &str, usize, usize, &str, &str, &str) {
        (
            &self.experiment,
            &self.design,
            self.lines,
            self.ways,
            &self.policy,
            &self.params,
            &self.metric,
        )
    }

    pub fn is_aggregate(&self) -> bool {
        AGGREGATES.contains(&self.repetition.as_str())
    }
}

/// Seed of repetition `rep`; shared by every grid point.
pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    RngStream::new(base).child(rep as u64).seed()
}

struct RowSink<'a> {
    kind: ExperimentKind,
    design: &'a DesignConfig,
    seed: u64,
    rep: usize,
    rows: Vec<Row>,
}

impl RowSink<'_> {
    fn push(&mut self, params: &str, metric: &str, value: f64) {
        let base = self.design.params_string();
        let params = match (base.is_empty(), params.is_empty()) {
            (_, true) => base,
            (true, false) => params.to_string(),
            (false, false) => format!("{base};{params}"),
        };
        self.rows.push(Row {
            experiment: self.kind.name().to_string(),
            design: self.design.design.name().to_string(),
            lines: self.design.lines,
            ways: self.design.ways,
            policy: self.design.policy.name().to_string(),
            params,
            metric: metric.to_string(),
            value,
            seed: self.seed,
            repetition: self.rep.to_string(),
        });
    }
}

fn attack_params(kind: AttackKind, cfg: &AttackConfig) -> String {
    format!("attack={kind};victim={}", cfg.victim)
}

fn run_one(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    design: &DesignConfig,
    rep: usize,
) -> Result<Vec<Row>> {
    let seed = repetition_seed(cfg.seed, rep);
    let mut sink = RowSink {
        kind,
        design,
        seed,
        rep,
        rows: Vec::new(),
    };
    match kind {
        ExperimentKind::Ree => {
            let r = ree::relative_eviction_entropy(design, &cfg.ree, seed)?;
            sink.push("", "ree_bits", r.bits);
            sink.push("", "evictions", r.histogram.total() as f64);
        }
        ExperimentKind::Evset => {
            let e = &cfg.evset;
            for &m in &e.methods {
                match evset::run_construction(design, m, e.target_size, &e.config, seed) {
                    Ok(r) => {
                        let p = format!("method={m}");
                        sink.push(&p, "accesses", r.memory_accesses as f64);
                        sink.push(&p, "set_size", r.set.len() as f64);
                        sink.push(&p, "iterations", r.iterations as f64);
                        sink.push(
                            &p,
                            "capped",
                            f64::from(r.terminated == evset::Termination::IterationCap),
                        );
                        sink.push(&p, "true_conflict_rate", r.true_conflict_rate);
                        sink.push(&p, "success_rate", r.success_rate);
                        sink.push(&p, "failed", 0.0);
                    }
                    Err(Error::Construction(_)) => sink.push(&format!("method={m}"), "failed", 1.0),
                    Err(err) => return Err(err),
                }
            }
            if let Some(alpha) = e.alpha {
                let p = format!("alpha={alpha}");
                match evset::alpha_set_size(design, alpha, &e.config, seed) {
                    Ok(n) => sink.push(&p, "alpha_set_size", n as f64),
                    Err(Error::SupplyExhausted { .. }) => sink.push(&p, "alpha_set_size", f64::NAN),
                    Err(err) => return Err(err),
                }
            }
        }
        ExperimentKind::Attack => {
            for &victim in &cfg.attack.victims {
                for &kind in &cfg.attack.kinds {
                    let c = AttackConfig {
                        victim,
                        kind,
                        ..cfg.attack.config.clone()
                    };
                    let r = attack::run_attack(design, &c, seed)?;
                    let p = attack_params(kind, &c);
                    sink.push(&p, "encryptions", r.encryptions as f64);
                    sink.push(&p, "capped", f64::from(r.capped()));
                    sink.push(&p, "probe_lines", r.probe_lines as f64);
                }
            }
        }
        ExperimentKind::Sweep => {
            for &size in &cfg.sweep.sizes {
                let c = AttackConfig {
                    victim: cfg.sweep.victim,
                    kind: AttackKind::EvictionSet,
                    evset_size: Some(size),
                    ..cfg.sweep.config.clone()
                };
                let r = attack::run_attack(design, &c, seed)?;
                let p = format!("victim={};size={size}", c.victim);
                sink.push(&p, "encryptions", r.encryptions as f64);
                sink.push(&p, "capped", f64::from(r.capped()));
                sink.push(&p, "probe_lines", r.probe_lines as f64);
            }
        }
    }
    Ok(sink.rows)
}

/// Min, max, median and mean of `values` in that order. NaN entries are skipped.
pub fn aggregate(values: &[f64]) -> Option<[f64; 4]> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let median = attack::median(&mut v)?;
    Some([v[0], v[v.len() - 1], median, mean])
}

/// Aggregate rows for every (configuration, params, metric) group, in order
/// of first appearance.
pub fn aggregate_rows(rows: &[Row], base_seed: u64) -> Vec<Row> {
    let mut groups: Vec<(Row, Vec<f64>)> = Vec::new();
    let mut index = rustc_hash::FxHashMap::default();
    for r in rows
        .iter()
        .filter(|r| r.repetition.parse::<usize>().is_ok())
    {
        let key = r.group_key();
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((r.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r.value);
    }
    let mut out = Vec::new();
    for (proto, values) in groups {
        if let Some(stats) = aggregate(&values) {
            for (name, value) in AGGREGATES.iter().zip(stats) {
                out.push(Row {
                    value,
                    seed: base_seed,
                    repetition: name.to_string(),
                    ..proto.clone()
                });
            }
        }
    }
    out
}

/// For a sweep, the set size with the lowest median encryptions per
/// configuration.
fn sweep_optimum(aggregates: &[Row], base_seed: u64) -> Vec<Row> {
    let mut best: Vec<(Row, f64, usize)> = Vec::new();
    for r in aggregates
        .iter()
        .filter(|r| r.repetition == "median" && r.metric == "encryptions")
    {
        let Some(size) = r.params.split(';').find_map(|p| p.strip_prefix("size=")) else {
            continue;
        };
        let size: usize = size.parse().unwrap_or(0);
        let base: Vec<&str> = r
            .params
            .split(';')
            .filter(|p| !p.starts_with("size="))
            .collect();
        let proto = Row {
            params: base.join(";"),
            metric: "optimal_size".into(),
            seed: base_seed,
            repetition: "summary".into(),
            ..r.clone()
        };
        match best
            .iter_mut()
            .find(|(p, ..)| p.group_key() == proto.group_key())
        {
            Some(entry) => {
                if r.value < entry.1 {
                    *entry = (proto, r.value, size);
                }
            }
            None => best.push((proto, r.value, size)),
        }
    }
    best.into_iter()
        .map(|(proto, _, size)| Row {
            value: size as f64,
            ..proto
        })
        .collect()
}

/// Results of one experiment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub aggregates: Vec<Row>,
}

impl ExperimentOutput {
    pub fn all_rows(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().chain(&self.aggregates)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wr.write_record(HEADER)?;
        for r in self.all_rows() {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.aggregates)?;
        Ok(())
    }
}

/// Runs the configured experiment. Does not touch the file system.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let grid = cfg.grid();
    let tasks: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..cfg.repetitions).map(move |r| (g, r)))
        .collect();
    let chunks: Vec<Vec<Row>> = tasks
        .par_iter()
        .map(|&(g, rep)| run_one(cfg, kind, &grid[g], rep))
        .collect::<Result<_>>()?;
    let rows: Vec<Row> = chunks.into_iter().flatten().collect();
    let mut aggregates = aggregate_rows(&rows, cfg.seed);
    if kind == ExperimentKind::Sweep {
        let optimum = sweep_optimum(&aggregates, cfg.seed);
        aggregates.extend(optimum);
    }
    Ok(ExperimentOutput { rows, aggregates })
}

/// Runs the experiment and writes the CSV (and the JSON summary if
/// configured). The output files are created before any work starts.
pub fn run_to_files(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out_path = cfg
        .output
        .clone()
        .ok_or_else(|| Error::config("field `output`: missing output path"))?;
    let csv_file = File::create(&out_path).map_err(|e| io_context(&out_path, e))?;
    let summary_file = match &cfg.summary {
        Some(p) => Some((File::create(p).map_err(|e| io_context(p, e))?, p.clone())),
        None => None,
    };
    let output = run(cfg)?;
    output.write_csv(std::io::BufWriter::new(csv_file))?;
    if let Some((f, _)) = summary_file {
        output.write_summary(std::io::BufWriter::new(f))?;
    }
    Ok(output)
}

fn io_context(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Reads rows back from a CSV produced by [`ExperimentOutput::write_csv`].
pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::Input(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}
