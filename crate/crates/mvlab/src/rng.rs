//! Deterministic counter-based random numbers.
//!
//! Every draw is a pure function of a 64-bit seed and a flat draw index, in
//! the style of SplitMix64 used as a counter generator: the state for index
//! `j` is `seed + (j+1)*GAMMA` and the output is the SplitMix64 avalanche of
//! that state. Streams can therefore be evaluated lazily, out of order, or in
//! parallel and still produce bit-identical values.
//!
//! Gaussian draws use Box-Muller over index pairs: indices `2p` and `2p+1`
//! share the two uniforms at raw indices `2p`, `2p+1` and yield the cosine
//! and sine variates respectively. This keeps normal draws addressable by
//! index while amortizing the transcendental calls over pairs.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const INV_2_53: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53
const TWO_PI: f64 = std::f64::consts::TAU;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Raw 64-bit value at position `index` of the stream identified by `seed`.
#[inline]
pub fn bits(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Uniform draw in the open interval (0, 1).
#[inline]
pub fn uniform(seed: u64, index: u64) -> f64 {
    ((bits(seed, index) >> 11) as f64 + 0.5) * INV_2_53
}

/// Standard normal draw at `index`.
///
/// Indices `2p` and `2p+1` form a Box-Muller pair; asking for a single member
/// of a pair recomputes the shared radius. Use [`fill_normals`] for blocks.
#[inline]
pub fn normal(seed: u64, index: u64) -> f64 {
    let base = index & !1;
    let u1 = uniform(seed, base);
    let u2 = uniform(seed, base + 1);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = TWO_PI * u2;
    if index & 1 == 0 {
        r * theta.cos()
    } else {
        r * theta.sin()
    }
}

/// Fill `out` with the normal draws at indices `start..start + out.len()`.
///
/// Bitwise identical to calling [`normal`] per index, but computes each
/// Box-Muller pair once.
pub fn fill_normals(seed: u64, start: u64, out: &mut [f64]) {
    let mut idx = start;
    let mut i = 0usize;
    if idx & 1 == 1 && i < out.len() {
        out[i] = normal(seed, idx);
        idx += 1;
        i += 1;
    }
    while i + 1 < out.len() {
        let u1 = uniform(seed, idx);
        let u2 = uniform(seed, idx + 1);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TWO_PI * u2).sin_cos();
        out[i] = r * c;
        out[i + 1] = r * s;
        idx += 2;
        i += 2;
    }
    if i < out.len() {
        out[i] = normal(seed, idx);
    }
}

/// Derive an independent sub-stream seed. Chain calls to namespace further.
#[inline]
pub fn derive(seed: u64, salt: u64) -> u64 {
    mix64(mix64(seed ^ GAMMA) ^ mix64(salt.wrapping_add(GAMMA)))
}
