use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{fill, Element, Inputs, DEFAULT_SEED};
use crate::ast::TypeEnv;
use crate::layout::View;

/// The fill seed: `HOFFORGE_SEED` when set and numeric, else [`DEFAULT_SEED`].
pub fn seed_from_env() -> u64 {
    std::env::var("HOFFORGE_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_SEED)
}

/// Inputs laid out per their declared strided shapes, filled with small
/// integers in `-4..=4`. Each input draws from `seed` plus its position.
pub fn random_inputs<T: Element>(env: &TypeEnv, seed: u64) -> Inputs<T> {
    env.iter()
        .enumerate()
        .map(|(k, (name, ty))| {
            let len = ty.shape.max_offset() + 1;
            let buf: Arc<[T]> = fill(len, seed.wrapping_add(k as u64), -4, 4).into();
            let view = View::new(buf, 0, ty.shape.clone()).expect("buffer covers the shape");
            (name.clone(), view)
        })
        .collect()
}

/// SHA-256 over the extents and the canonical element bits in logical
/// order, as 16 hex digits.
pub fn checksum<T: Element>(v: &View<T>) -> String {
    let mut h = Sha256::new();
    for e in v.shape().extents() {
        h.update((e as u64).to_le_bytes());
    }
    for x in v.to_vec() {
        h.update(x.canonical_bits().to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}
