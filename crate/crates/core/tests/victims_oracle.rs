use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use cachefx_core::victims::aes::{first_round_te0_lines, MONITORED_LINE};
use cachefx_core::victims::modexp::{ACCESSES_PER_OPERATION, EXPONENT_BITS};
use cachefx_core::victims::{
    AesKeyPair, AesVictim, ModExpVictim, NullMemory, Rounds, TraceRecorder,
};
use cachefx_core::RngStream;
use proptest::prelude::*;
use rand::Rng;

fn reference(key: &[u8; 16], pt: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut block = GenericArray::clone_from_slice(pt);
    cipher.encrypt_block(&mut block);
    block.into()
}

#[test]
fn aes_matches_reference_on_random_pairs() {
    let mut rng = RngStream::new(2024);
    for _ in 0..1000 {
        let key: [u8; 16] = rng.gen();
        let pt: [u8; 16] = rng.gen();
        let got = AesVictim::new(&key).encrypt(&pt, &mut NullMemory).unwrap();
        assert_eq!(got, reference(&key, &pt));
    }
}

#[test]
fn first_round_only_leaves_ciphertext_unchanged() {
    let mut rng = RngStream::new(5);
    let key: [u8; 16] = rng.gen();
    let pt: [u8; 16] = rng.gen();
    let v = AesVictim::new(&key).with_rounds(Rounds::FirstOnly);
    assert_eq!(
        v.encrypt(&pt, &mut NullMemory).unwrap(),
        reference(&key, &pt)
    );
}

/// Line 0 of `Te0` is among the first four `Te0` lookups under key1 and never under key2.
#[test]
fn vulnerable_plaintexts_separate_the_keys() {
    let mut rng = RngStream::new(77);
    for k in 0..10_000 {
        let pair = AesKeyPair::generate(&mut rng);
        assert_ne!(pair.key1, pair.key2);
        for _ in 0..1000 {
            let pt = pair.sample_vulnerable_plaintext(&mut rng);
            assert!(pair.is_vulnerable(&pt));
            assert_eq!(first_round_te0_lines(&pair.key1, &pt), [0; 4]);
            let l2 = first_round_te0_lines(&pair.key2, &pt);
            assert!(l2.iter().all(|&l| l as u64 != MONITORED_LINE));
            let mut sorted = l2;
            sorted.sort_unstable();
            assert!(sorted.windows(2).all(|w| w[0] != w[1]), "{l2:?}");
        }
        // trace-level check on a subsample
        if k % 100 == 0 {
            let pt = pair.sample_vulnerable_plaintext(&mut rng);
            for (key, expect) in [(&pair.key1, true), (&pair.key2, false)] {
                let mut t = TraceRecorder::default();
                AesVictim::new(key).encrypt(&pt, &mut t).unwrap();
                let first_te0: Vec<u64> = [0, 4, 8, 12].iter().map(|&i| t.lines[i]).collect();
                assert_eq!(first_te0.contains(&MONITORED_LINE), expect);
            }
        }
    }
}

proptest! {
    #[test]
    fn modexp_step_length_depends_only_on_bit(e: u32, bit in 0..EXPONENT_BITS) {
        let mut t = TraceRecorder::default();
        ModExpVictim.step(e, bit, &mut t).unwrap();
        let ops = 1 + (e >> bit & 1) as usize;
        prop_assert_eq!(t.lines.len(), ops * ACCESSES_PER_OPERATION);
    }
}
