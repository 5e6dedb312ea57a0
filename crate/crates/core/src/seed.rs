//! Seed derivation. A derived seed is the first eight bytes of the SHA-256
//! of the length-prefixed parts, so any cell of a campaign can be re-run on
//! its own.

use sha2::{Digest, Sha256};

pub fn derive(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    let d = h.finalize();
    u64::from_be_bytes(d[..8].try_into().expect("digest has 8 bytes"))
}

/// Seed of attack step `step` in a run seeded with `run`.
pub fn step(run: u64, step: u32) -> u64 {
    derive(&[b"step", &run.to_be_bytes(), &step.to_be_bytes()])
}

/// Seed of trial `trial` of one (scenario, SUT) cell.
pub fn trial(campaign: u64, scenario: &str, sut: &str, trial: u32) -> u64 {
    derive(&[b"trial", &campaign.to_be_bytes(), scenario.as_bytes(), sut.as_bytes(), &trial.to_be_bytes()])
}
