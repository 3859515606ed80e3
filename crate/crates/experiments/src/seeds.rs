//! Master-seed fan-out.

use ar_surrogate::pde::PdeKind;
use ar_surrogate::schemes::SchemeKind;
use ar_surrogate::weighting::Strategy;
use sha2::{Digest, Sha256};

/// Seed of one training run, a pure function of its coordinates so any run
/// can be reproduced without replaying the sweep.
pub fn run_seed(master: u64, pde: PdeKind, sample: usize, scheme: SchemeKind, strategy: Strategy, repeat: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(b"ar-run-seed\0");
    h.update(master.to_le_bytes());
    for part in [pde.name(), scheme.name(), strategy.name()] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    h.update((sample as u64).to_le_bytes());
    h.update((repeat as u64).to_le_bytes());
    let out = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&out[..8]);
    u64::from_le_bytes(first)
}

/// Lowercase hex of the first `n_bytes` of the SHA-256 digest.
pub fn digest_hex(bytes: &[u8], n_bytes: usize) -> String {
    Sha256::digest(bytes)[..n_bytes.min(32)]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
