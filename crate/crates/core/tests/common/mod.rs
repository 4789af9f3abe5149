#![allow(dead_code)]

use ctgibbs::linalg::DenseMatrix;
use ctgibbs::rng::substream;
use ctgibbs::{CylinderSpace, GeneratorMatrix, KernelField, Measure, PotentialField};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Desk-scale shapes exercised by the random-instance suites.
pub const SHAPES: [(usize, usize); 4] = [(2, 1), (2, 2), (2, 3), (3, 2)];

pub fn space(d: usize, k: usize) -> CylinderSpace {
    CylinderSpace::with_default_metric(d, k).unwrap()
}

/// Random normalized kernel: weights `exp(U[-1,1])`, rows rescaled to one.
pub fn random_kernel(s: CylinderSpace, rng: &mut ChaCha12Rng) -> KernelField {
    let d = s.alphabet();
    let n = s.word_count();
    let mut weights = vec![0.0; n * d];
    for x in 0..n {
        let row = &mut weights[x * d..(x + 1) * d];
        for w in row.iter_mut() {
            *w = rng.gen_range(-1.0f64..1.0).exp();
        }
        let sum: f64 = row.iter().sum();
        for w in row.iter_mut() {
            *w /= sum;
        }
    }
    KernelField::from_weights(s, weights).unwrap()
}

pub fn random_potential(s: CylinderSpace, amp: f64, rng: &mut ChaCha12Rng) -> PotentialField {
    let values = (0..s.word_count()).map(|_| rng.gen_range(-amp..amp)).collect();
    PotentialField::new(s, values).unwrap()
}

/// Strictly positive random probability: masses `exp(U[-1,1])` normalized.
pub fn random_probability(s: CylinderSpace, rng: &mut ChaCha12Rng) -> Measure {
    let masses: Vec<f64> =
        (0..s.word_count()).map(|_| rng.gen_range(-1.0f64..1.0).exp()).collect();
    Measure::new(s, masses).unwrap().normalized().unwrap()
}

pub fn rng_for(seed: u64, index: u64) -> ChaCha12Rng {
    substream(seed, index)
}

/// Dense matrix of `L + V` for the unit-rate chain over `a_kernel`.
pub fn weighted_generator_dense(a_kernel: &KernelField, v: &PotentialField) -> DenseMatrix {
    let s = *a_kernel.space();
    let rate = PotentialField::constant(s, 1.0);
    let gen = GeneratorMatrix::new(rate, a_kernel.clone()).unwrap();
    let mut m = gen.dense();
    for x in 0..s.word_count() {
        m.add_to(x, x, v.value(x));
    }
    m
}

pub fn matmul(a: &DenseMatrix, b: &DenseMatrix, n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, |i, j| (0..n).map(|l| a.get(i, l) * b.get(l, j)).sum())
}

/// `exp(t M)` by scaling and squaring on the plain Taylor series; an
/// oracle that shares no code with the uniformization route.
pub fn expm_dense(m: &DenseMatrix, t: f64, n: usize) -> DenseMatrix {
    let norm: f64 = (0..n)
        .map(|i| (0..n).map(|j| (t * m.get(i, j)).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm <= 0.5 { 0 } else { (norm / 0.5).log2().ceil() as u32 };
    let h = t / 2f64.powi(squarings as i32);

    let mut result = DenseMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 });
    let mut term = result.clone();
    let mut order = 1usize;
    loop {
        let scaled = DenseMatrix::from_fn(n, |i, j| h * m.get(i, j) / order as f64);
        term = matmul(&term, &scaled, n);
        result = result.add(&term).unwrap();
        if term.sup_norm() < 1e-20 * result.sup_norm().max(1.0) || order > 60 {
            break;
        }
        order += 1;
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n);
    }
    result
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
