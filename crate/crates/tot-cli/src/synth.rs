//! Deterministic synthetic sequence pairs with a known monotone ground
//! truth.
//!
//! One generator stream, consumed in a fixed order so outputs reproduce
//! across platforms: first the linguistic rows (row-major, uniform in
//! [-1, 1)), then one noise draw per acoustic entry (row-major), then one
//! draw per interior label. Acoustic frame i (0-based) copies linguistic
//! row floor(i * length_t / length_a) when warping, or row i when not,
//! plus noise times a fresh uniform draw; the warp mapping is monotone, so
//! the true correspondence is known to coupling tests. Labels come framed:
//! CLS = vocab-2, SEP = vocab-1, interior ids uniform in [1, vocab-3]
//! (id 0 stays reserved for the CTC blank).

use ndarray::Array2;
use tot_core::SplitMix64;

use crate::CliError;

pub struct SynthSpec {
    pub length_a: usize,
    pub length_t: usize,
    pub dim: usize,
    pub seed: u64,
    pub warp: bool,
    pub noise: f64,
    pub vocab: usize,
}

pub struct SynthOutput {
    pub acoustic: Array2<f64>,
    pub linguistic: Array2<f64>,
    pub labels: Vec<usize>,
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, CliError> {
    if spec.length_a == 0 || spec.length_t == 0 || spec.dim == 0 {
        return Err(CliError::Input(
            "lengths and dimension must be at least 1".into(),
        ));
    }
    if spec.vocab < 4 {
        return Err(CliError::Input(format!(
            "vocab must be at least 4 (blank, one interior id, CLS, SEP), got {}",
            spec.vocab
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(CliError::Input(format!(
            "noise must be a nonnegative finite real, got {}",
            spec.noise
        )));
    }
    if !spec.warp && spec.length_a != spec.length_t {
        return Err(CliError::Input(format!(
            "without --warp the lengths must match, got {} and {}",
            spec.length_a, spec.length_t
        )));
    }

    let mut rng = SplitMix64::new(spec.seed);
    let linguistic =
        Array2::from_shape_fn((spec.length_t, spec.dim), |_| rng.uniform_in(-1.0, 1.0));
    let acoustic = Array2::from_shape_fn((spec.length_a, spec.dim), |(i, k)| {
        let src = if spec.warp {
            i * spec.length_t / spec.length_a
        } else {
            i
        };
        linguistic[[src, k]] + spec.noise * rng.uniform_in(-1.0, 1.0)
    });

    let cls = spec.vocab - 2;
    let sep = spec.vocab - 1;
    let labels = if spec.length_t == 1 {
        vec![cls]
    } else {
        let mut ids = Vec::with_capacity(spec.length_t);
        ids.push(cls);
        for _ in 0..spec.length_t - 2 {
            ids.push(1 + rng.next_below(spec.vocab as u64 - 3) as usize);
        }
        ids.push(sep);
        ids
    };

    Ok(SynthOutput {
        acoustic,
        linguistic,
        labels,
    })
}
