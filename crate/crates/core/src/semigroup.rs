//! Continuous-time generator, Feynman-Kac semigroup, and the dominant
//! eigendata of `L + V`.
//!
//! The generator is `L f = rate * (L_A f - f)` for a normalized kernel
//! `A` and a strictly positive rate field; the a-priori chain has unit
//! rate. The weighted semigroup `P_t f (x) = E_x[exp(int_0^t V) f(X_t)]`
//! is evaluated by two independent routes:
//!
//! * [`uniformization_apply`]: the Poisson-mixture expansion of
//!   `exp(t (L + V))` around a uniformizing rate `c`, truncated by an
//!   explicit tail bound;
//! * [`feynman_kac_series`]: the jump-count expansion. The `n`-jump term
//!   integrates `exp(int V)` against the law of the first `n` jump times,
//!   and that integral is a divided difference of `s -> exp(t s)` at the
//!   shifted values `V - 1` along the path. Divided differences of the
//!   exponential expand into complete homogeneous symmetric polynomials of
//!   the (nonnegatively shifted) nodes, so the whole series is evaluated by
//!   a cancellation-free transfer recursion over endpoint words; repeated
//!   nodes (equal potential values along a path) are handled exactly.
//!
//! [`perron_solve`] finds the dominant eigenvalue of `L + V` with its
//! positive eigenfunction and eigenprobability by power iteration on the
//! nonnegative matrix `L + V + cI`, using Collatz-Wielandt brackets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::symbolic::{CylinderSpace, KernelField, Measure, PotentialField};

/// Eigenvalue stagnation threshold (Collatz-Wielandt bracket width).
const CW_GAP_TOL: f64 = 1e-13;

/// Residual at which the power iteration may stop early.
const RESIDUAL_BREAK_TOL: f64 = 1e-13;

/// Residual the returned solution must meet, relative to `max(1, |lambda|)`.
const RESIDUAL_TOL: f64 = 1e-12;

const MAX_ITER: usize = 1_000_000;

/// Largest uniformization exponent per slice; `exp(-30)` is still well
/// above the subnormal range.
const SLICE_EXPONENT: f64 = 30.0;

/// Jump-rate generator `f -> rate * (L_A f - f)` over a normalized kernel.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    rate: PotentialField,
    kernel: KernelField,
}

impl GeneratorMatrix {
    pub fn new(rate: PotentialField, kernel: KernelField) -> Result<Self> {
        if rate.space() != kernel.space() {
            return Err(Error::mismatch("generator rate and kernel spaces differ"));
        }
        if !(rate.min() > 0.0) {
            return Err(Error::invalid("generator rate must be strictly positive"));
        }
        if !kernel.is_normalized() {
            return Err(Error::invalid("generator kernel must be normalized"));
        }
        Ok(GeneratorMatrix { rate, kernel })
    }

    /// The a-priori chain: unit rate over the given kernel.
    pub fn unit_rate(kernel: KernelField) -> Result<Self> {
        let rate = PotentialField::constant(*kernel.space(), 1.0);
        GeneratorMatrix::new(rate, kernel)
    }

    pub fn rate(&self) -> &PotentialField {
        &self.rate
    }

    pub fn kernel(&self) -> &KernelField {
        &self.kernel
    }

    pub fn space(&self) -> &CylinderSpace {
        self.kernel.space()
    }

    /// Applies the generator to `f`.
    pub fn apply(&self, f: &PotentialField) -> Result<PotentialField> {
        self.space().check_same_as(f.space(), "generator_apply")?;
        let values = generator_rows(self, f.values());
        PotentialField::new(*self.space(), values)
    }

    /// Dense matrix of the generator. Self-transitions of the word chain
    /// contribute nothing, so every row sums to zero.
    pub fn dense(&self) -> DenseMatrix {
        let space = self.space();
        let d = space.alphabet();
        let mut g = DenseMatrix::zeros(space.word_count());
        for x in 0..space.word_count() {
            let gamma = self.rate.value(x);
            for a in 0..d {
                let y = space.prepend(a, x);
                let w = gamma * self.kernel.weight(x, a);
                g.add_to(x, y, w);
                g.add_to(x, x, -w);
            }
        }
        g
    }
}

// Space comparison helper used throughout this module.
trait SpaceCheck {
    fn check_same_as(&self, other: &CylinderSpace, what: &str) -> Result<()>;
}

impl SpaceCheck for CylinderSpace {
    fn check_same_as(&self, other: &CylinderSpace, what: &str) -> Result<()> {
        if self.alphabet() != other.alphabet() || self.depth() != other.depth() {
            return Err(Error::mismatch(format!(
                "{what}: ({}, {}) versus ({}, {})",
                self.alphabet(),
                self.depth(),
                other.alphabet(),
                other.depth()
            )));
        }
        Ok(())
    }
}

/// Generator action on a raw slice.
fn generator_rows(gen: &GeneratorMatrix, f: &[f64]) -> Vec<f64> {
    let space = gen.space();
    let d = space.alphabet();
    (0..space.word_count())
        .map(|x| {
            let avg: f64 = (0..d)
                .map(|a| gen.kernel.weight(x, a) * f[space.prepend(a, x)])
                .sum();
            gen.rate.value(x) * (avg - f[x])
        })
        .collect()
}

/// `(L + V) f` on a raw slice.
fn weighted_rows(gen: &GeneratorMatrix, v: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = generator_rows(gen, f);
    for (o, (vv, ff)) in out.iter_mut().zip(v.iter().zip(f)) {
        *o += vv * ff;
    }
    out
}

/// Transposed `(L + V)` action: mass flows parent -> preimage word.
fn weighted_rows_dual(gen: &GeneratorMatrix, v: &[f64], m: &[f64]) -> Vec<f64> {
    let space = gen.space();
    let d = space.alphabet();
    let mut out = vec![0.0; space.word_count()];
    for x in 0..space.word_count() {
        let mx = m[x];
        if mx != 0.0 {
            let gamma = gen.rate.value(x);
            for a in 0..d {
                out[space.prepend(a, x)] += gamma * gen.kernel.weight(x, a) * mx;
            }
        }
    }
    for (y, o) in out.iter_mut().enumerate() {
        *o += (v[y] - gen.rate.value(y)) * m[y];
    }
    out
}

/// Applies the generator to a potential; method form lives on
/// [`GeneratorMatrix`].
pub fn generator_apply(gen: &GeneratorMatrix, f: &PotentialField) -> Result<PotentialField> {
    gen.apply(f)
}

/// Shared Poisson-mixture driver for `exp(t (L + V))` acting on columns
/// (`dual = false`) or rows (`dual = true`).
///
/// The horizon is cut into slices with `c * dt <= 30`; within a slice the
/// series `exp(-c dt) sum (c dt)^n / n! M^n f` with `M = (L + V)/c + I` is
/// truncated once the remaining Poisson tail, inflated by an operator-norm
/// bound on `M`, drops below the slice's share of `tol` (relative to the
/// sup norm of the slice input when that exceeds one).
fn uniformization_driver(
    gen: &GeneratorMatrix,
    v: &PotentialField,
    start: &[f64],
    t: f64,
    tol: f64,
    dual: bool,
) -> Result<Vec<f64>> {
    gen.space().check_same_as(v.space(), "uniformization")?;
    if !(t >= 0.0) {
        return Err(Error::invalid("uniformization horizon must be nonnegative"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("uniformization tolerance must be positive"));
    }
    let n = gen.space().word_count();
    if start.len() != n {
        return Err(Error::invalid("uniformization input length mismatch"));
    }
    if t == 0.0 {
        return Ok(start.to_vec());
    }

    let c = gen.rate().max() + (-v.min()).max(0.0) + 1.0;
    let vv = v.values();

    // Operator norm bound for M = (L + V)/c + I. Row sums are
    // 1 + V(x)/c; column sums are computed explicitly for the dual action.
    let m_norm = if dual {
        let d = gen.space().alphabet();
        let space = gen.space();
        let mut col = vec![0.0; n];
        for x in 0..n {
            for a in 0..d {
                col[space.prepend(a, x)] += gen.rate().value(x) * gen.kernel().weight(x, a) / c;
            }
        }
        (0..n)
            .map(|y| col[y] + 1.0 + (vv[y] - gen.rate().value(y)) / c)
            .fold(0.0f64, f64::max)
    } else {
        1.0 + vv.iter().fold(0.0f64, |m, &x| m.max(x.max(0.0))) / c
    };

    let slices = ((c * t) / SLICE_EXPONENT).ceil().max(1.0) as usize;
    let dt = t / slices as f64;
    let slice_tol = tol / slices as f64;

    let mut vec = start.to_vec();
    for _ in 0..slices {
        vec = uniformization_slice(gen, vv, &vec, dt, c, m_norm, slice_tol, dual)?;
    }
    Ok(vec)
}

#[allow(clippy::too_many_arguments)]
fn uniformization_slice(
    gen: &GeneratorMatrix,
    v: &[f64],
    f: &[f64],
    dt: f64,
    c: f64,
    m_norm: f64,
    tol: f64,
    dual: bool,
) -> Result<Vec<f64>> {
    let a = c * dt;
    let am = a * m_norm;
    let sup_in = f.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);

    let m_apply = |w: &[f64]| -> Vec<f64> {
        let lv = if dual {
            weighted_rows_dual(gen, v, w)
        } else {
            weighted_rows(gen, v, w)
        };
        lv.iter().zip(w).map(|(l, x)| l / c + x).collect()
    };

    let mut term = f.to_vec();
    let mut weight = (-a).exp();
    let mut weight_bound = weight;
    let mut acc: Vec<f64> = term.iter().map(|x| x * weight).collect();
    for j in 1..=100_000usize {
        term = m_apply(&term);
        weight *= a / j as f64;
        weight_bound *= am / j as f64;
        for (s, x) in acc.iter_mut().zip(&term) {
            *s += weight * x;
        }
        if am < (j + 1) as f64 {
            let q = am / (j + 1) as f64;
            let tail = weight_bound * q / (1.0 - q);
            if tail * sup_in <= tol {
                return Ok(acc);
            }
        }
    }
    Err(Error::NoConvergence {
        context: "uniformization slice".to_string(),
        iterations: 100_000,
        residual: f64::NAN,
    })
}

/// Evaluates `exp(t (L + V)) f` by uniformization, accurate to `tol` in
/// sup norm (relative to the intermediate sup norms when those exceed one).
pub fn uniformization_apply(
    gen: &GeneratorMatrix,
    v: &PotentialField,
    f: &PotentialField,
    t: f64,
    tol: f64,
) -> Result<PotentialField> {
    gen.space().check_same_as(f.space(), "uniformization input")?;
    let values = uniformization_driver(gen, v, f.values(), t, tol, false)?;
    PotentialField::new(*gen.space(), values)
}

/// Dual action of the weighted semigroup on a mass vector:
/// `m -> m exp(t (L + V))`, entry `y` receiving mass from parents.
pub fn uniformization_adjoint_apply(
    gen: &GeneratorMatrix,
    v: &PotentialField,
    mass: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    uniformization_driver(gen, v, mass, t, tol, true)
}

/// Truncated Feynman-Kac jump series at one word.
#[derive(Debug, Clone, Copy)]
pub struct FeynmanKacEstimate {
    /// Value of the series truncated at `n_max` jumps.
    pub value: f64,
    /// Poisson bound on the dropped tail:
    /// `sup|f| exp(t (max V - 1)) sum_{n > n_max} t^n / n!`.
    pub tail_bound: f64,
}

/// Sum of `a^m / m!` over `m > n`.
fn exp_series_tail(a: f64, n: usize) -> f64 {
    let mut term = 1.0;
    for m in 1..=(n + 1) {
        term *= a / m as f64;
    }
    let mut sum = 0.0;
    let mut m = n + 1;
    loop {
        sum += term;
        m += 1;
        term *= a / m as f64;
        if term < sum * 1e-18 || m > n + 10_000 {
            return sum;
        }
    }
}

/// Smallest jump order whose Poisson tail bound is below `tol` for the
/// weight `sup_f exp(t (max V - 1))`.
pub fn feynman_kac_order(v: &PotentialField, t: f64, sup_f: f64, tol: f64) -> usize {
    let amp = sup_f * (t * (v.max() - 1.0)).exp();
    let mut n = 0;
    while amp * exp_series_tail(t, n) > tol && n < 10_000 {
        n += 1;
    }
    n
}

/// Evaluates the jump-count expansion of `E_x[exp(int_0^t V) f(X_t)]` for
/// the unit-rate chain over `a_kernel`, truncated at `n_max` jumps.
///
/// The `n`-jump term is a sum over preimage paths `x -> a_1 x -> ...` of
/// the kernel-weight product times `f` at the endpoint times the exact
/// time integral `I`, which equals the divided difference of
/// `s -> exp(t s)` at the nodes `V - 1` along the path. Writing
/// `exp(t s) = sum_m t^m/m! s^m` turns the divided difference into
/// complete homogeneous symmetric polynomials `h_j` of the nodes; after
/// shifting the nodes to `V - min V >= 0` every quantity in sight is
/// nonnegative, and `h_j` obeys a one-step extension identity, so the
/// whole series collapses to a stable transfer recursion over endpoint
/// words and polynomial degrees. Path enumeration is never materialized
/// and coincident nodes (revisited potential values) need no special case.
pub fn feynman_kac_series(
    a_kernel: &KernelField,
    v: &PotentialField,
    f: &PotentialField,
    t: f64,
    x0: usize,
    n_max: usize,
) -> Result<FeynmanKacEstimate> {
    let space = *a_kernel.space();
    space.check_same_as(v.space(), "feynman_kac_series potential")?;
    space.check_same_as(f.space(), "feynman_kac_series observable")?;
    if !a_kernel.is_normalized() {
        return Err(Error::invalid("feynman_kac_series requires a normalized kernel"));
    }
    if x0 >= space.word_count() {
        return Err(Error::invalid(format!("start word {x0} out of range")));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("feynman_kac_series horizon must be nonnegative"));
    }

    let n = space.word_count();
    let d = space.alphabet();
    let shift = v.min() - 1.0;
    let nodes: Vec<f64> = v.values().iter().map(|vv| vv - 1.0 - shift).collect();
    let big_r = (v.max() - v.min()) + 1.0;

    // Polynomial degree cap: high enough that the dropped exponential-series
    // tail is negligible against the reported jump-count tail bound.
    let mut m_ord = n_max + 4;
    while exp_series_tail(t * big_r, m_ord) > 1e-18 * (t * big_r).exp() && m_ord < 2048 {
        m_ord += 8;
    }

    // t^m / m! and node powers.
    let mut tw = vec![0.0; m_ord + 1];
    tw[0] = 1.0;
    for m in 1..=m_ord {
        tw[m] = tw[m - 1] * t / m as f64;
    }
    let mut node_pow = vec![vec![0.0; m_ord + 1]; n];
    for (y, pows) in node_pow.iter_mut().enumerate() {
        let mut p = 1.0;
        for entry in pows.iter_mut() {
            *entry = p;
            p *= nodes[y];
        }
    }

    let e_shift = (t * shift).exp();

    // cur[j][y] aggregates, over all n-jump paths from x0 ending at y, the
    // kernel-weight product times h_j(nodes along the path).
    let levels = n_max.min(m_ord);
    let mut cur = vec![vec![0.0; n]; m_ord + 1];
    for (j, row) in cur.iter_mut().enumerate() {
        row[x0] = node_pow[x0][j];
    }
    let mut next = vec![vec![0.0; n]; m_ord + 1];

    let mut value = 0.0;
    for level in 0..=levels {
        // Contribution of paths with exactly `level` jumps.
        let mut layer = 0.0;
        for j in 0..=(m_ord - level) {
            let w_time = tw[level + j];
            if w_time == 0.0 {
                continue;
            }
            let row = &cur[j];
            for y in 0..n {
                layer += w_time * row[y] * f.value(y);
            }
        }
        value += e_shift * layer;

        if level == levels {
            break;
        }

        // Extend every path by one preimage step; the new node multiplies
        // into the symmetric polynomials via h_j(old + node) =
        // sum_i node^i h_{j-i}(old).
        for row in next.iter_mut() {
            for entry in row.iter_mut() {
                *entry = 0.0;
            }
        }
        let j_cap = m_ord - (level + 1);
        for x in 0..n {
            for a in 0..d {
                let y = space.prepend(a, x);
                let w = a_kernel.weight(x, a);
                let pows = &node_pow[y];
                for j in 0..=j_cap {
                    let mut s = 0.0;
                    for i in 0..=j {
                        s += pows[i] * cur[j - i][x];
                    }
                    next[j][y] += w * s;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }

    if !value.is_finite() {
        return Err(Error::NoConvergence {
            context: "feynman_kac_series".to_string(),
            iterations: levels,
            residual: f64::NAN,
        });
    }

    let tail_bound = f.sup_norm() * (t * (v.max() - 1.0)).exp() * exp_series_tail(t, n_max);
    Ok(FeynmanKacEstimate { value, tail_bound })
}

/// Dominant eigendata of `L + V`.
#[derive(Debug, Clone)]
pub struct PerronSolution {
    /// Dominant (simple, real) eigenvalue.
    pub lambda: f64,
    /// Strictly positive right eigenfunction, sup-normalized to one.
    pub eigenfunction: PotentialField,
    /// Left eigenvector, normalized to a probability.
    pub eigenprobability: Measure,
    /// Sup-norm residual of `(L + V) F = lambda F` over `sup F = 1`.
    pub residual_right: f64,
    /// Sup-norm residual of the dual equation on the eigenprobability.
    pub residual_left: f64,
    /// `min F / max F`, the positivity margin of the eigenfunction.
    pub min_max_ratio: f64,
    pub iterations: usize,
}

/// Flat serializable form of a [`PerronSolution`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SolutionDocument {
    pub lambda: f64,
    pub f: Vec<f64>,
    pub nu: Vec<f64>,
    pub residual_right: f64,
    pub residual_left: f64,
    pub min_max_ratio: f64,
}

impl PerronSolution {
    pub fn to_document(&self) -> SolutionDocument {
        SolutionDocument {
            lambda: self.lambda,
            f: self.eigenfunction.values().to_vec(),
            nu: self.eigenprobability.masses().to_vec(),
            residual_right: self.residual_right,
            residual_left: self.residual_left,
            min_max_ratio: self.min_max_ratio,
        }
    }
}

/// Finds the dominant eigenvalue of `L + V` (generator built from
/// `a_kernel` and `rate`) together with its positive eigenfunction and
/// eigenprobability.
///
/// Power iteration runs on the nonnegative shift `M = L + V + cI` with
/// `c = max rate + max(0, -min V) + 1`; for a strictly positive vector the
/// Collatz-Wielandt ratios of `M` bracket the eigenvalue, and the bracket
/// width plus an explicit residual drive the stopping rule. The returned
/// eigenvalue is the eigenprobability-weighted Rayleigh quotient, which is
/// accurate to the product of the one-sided residuals. Left and right
/// bracket estimates must agree within `1e-11` (relative), and the
/// identity `lambda = int V d(nu)` is enforced at `1e-10`.
pub fn perron_solve(
    a_kernel: &KernelField,
    rate: &PotentialField,
    v: &PotentialField,
) -> Result<PerronSolution> {
    let gen = GeneratorMatrix::new(rate.clone(), a_kernel.clone())?;
    gen.space().check_same_as(v.space(), "perron_solve potential")?;
    let n = gen.space().word_count();
    let c = rate.max() + (-v.min()).max(0.0) + 1.0;
    let vv = v.values();

    let m_apply = |f: &[f64]| -> Vec<f64> {
        let mut out = weighted_rows(&gen, vv, f);
        for (o, x) in out.iter_mut().zip(f) {
            *o += c * x;
        }
        out
    };
    let m_scatter = |m: &[f64]| -> Vec<f64> {
        let mut out = weighted_rows_dual(&gen, vv, m);
        for (o, x) in out.iter_mut().zip(m) {
            *o += c * x;
        }
        out
    };

    let right = power_iterate(n, &m_apply, Normalization::Sup)?;
    let left = power_iterate(n, &m_scatter, Normalization::Sum)?;

    let scale_m = right.lambda.abs().max(1.0);
    if (right.lambda - left.lambda).abs() > 1e-11 * scale_m {
        return Err(Error::consistency(format!(
            "left/right eigenvalue estimates disagree: {} vs {}",
            right.lambda - c,
            left.lambda - c
        )));
    }

    // Rayleigh refinement through the left eigenvector.
    let mf = m_apply(&right.vector);
    let num: f64 = left.vector.iter().zip(&mf).map(|(l, m)| l * m).sum();
    let den: f64 = left
        .vector
        .iter()
        .zip(&right.vector)
        .map(|(l, f)| l * f)
        .sum();
    let lambda_m = num / den;
    let lambda = lambda_m - c;

    // Normalize F to sup one and report its positivity margin.
    let sup = right.vector.iter().fold(0.0f64, |m, x| m.max(*x));
    let f_vec: Vec<f64> = right.vector.iter().map(|x| x / sup).collect();
    let min_f = f_vec.iter().fold(f64::INFINITY, |m, x| m.min(*x));
    if !(min_f > 0.0) {
        return Err(Error::consistency(
            "eigenfunction lost strict positivity".to_string(),
        ));
    }

    let residual_right = {
        let lv = weighted_rows(&gen, vv, &f_vec);
        lv.iter()
            .zip(&f_vec)
            .fold(0.0f64, |m, (l, f)| m.max((l - lambda * f).abs()))
    };
    let residual_left = {
        let image = m_scatter(&left.vector);
        image
            .iter()
            .zip(&left.vector)
            .fold(0.0f64, |m, (i, nu)| m.max((i - lambda_m * nu).abs()))
    };
    let res_tol = RESIDUAL_TOL * scale_m;
    if residual_right > res_tol || residual_left > res_tol {
        return Err(Error::NoConvergence {
            context: "perron_solve".to_string(),
            iterations: right.iterations.max(left.iterations),
            residual: residual_right.max(residual_left),
        });
    }

    let eigenfunction = PotentialField::new(*gen.space(), f_vec)?;
    let eigenprobability = Measure::new(*gen.space(), left.vector)?;

    let v_mean = eigenprobability.expectation(v)?;
    if (lambda - v_mean).abs() > 1e-10 * lambda.abs().max(1.0) {
        return Err(Error::consistency(format!(
            "eigenvalue {lambda} disagrees with the eigenprobability mean of V {v_mean}"
        )));
    }

    Ok(PerronSolution {
        lambda,
        eigenfunction,
        eigenprobability,
        residual_right,
        residual_left,
        min_max_ratio: min_f,
        iterations: right.iterations.max(left.iterations),
    })
}

enum Normalization {
    Sup,
    Sum,
}

struct PowerResult {
    lambda: f64,
    vector: Vec<f64>,
    iterations: usize,
}

/// Power iteration on a nonnegative primitive operator given as a matvec,
/// for strictly positive start vectors.
fn power_iterate(
    n: usize,
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    norm: Normalization,
) -> Result<PowerResult> {
    let mut vector = vec![1.0; n];
    if let Normalization::Sum = norm {
        vector = vec![1.0 / n as f64; n];
    }
    let mut lambda;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let image = apply(&vector);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (num, den) in image.iter().zip(&vector) {
            let r = num / den;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        lambda = 0.5 * (lo + hi);
        let scale = lambda.abs().max(1.0);
        let residual = image
            .iter()
            .zip(&vector)
            .fold(0.0f64, |m, (i, x)| m.max((i - lambda * x).abs()));
        let z = match norm {
            Normalization::Sup => image.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            Normalization::Sum => image.iter().sum(),
        };
        vector = image.iter().map(|x| x / z).collect();
        if hi - lo <= CW_GAP_TOL * scale || residual <= RESIDUAL_BREAK_TOL * scale {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(Error::NoConvergence {
                context: "power iteration".to_string(),
                iterations,
                residual,
            });
        }
    }
    Ok(PowerResult {
        lambda,
        vector,
        iterations,
    })
}

/// Sup gap in the unit-rate eigen-identity
/// `(L_A F)(x) / F(x) = 1 - V(x) + lambda`.
pub fn eigen_equation_check(
    sol: &PerronSolution,
    a_kernel: &KernelField,
    v: &PotentialField,
) -> Result<f64> {
    let space = a_kernel.space();
    space.check_same_as(v.space(), "eigen_equation_check")?;
    space.check_same_as(sol.eigenfunction.space(), "eigen_equation_check solution")?;
    let d = space.alphabet();
    let f = sol.eigenfunction.values();
    let mut gap: f64 = 0.0;
    for x in 0..space.word_count() {
        let lf: f64 = (0..d)
            .map(|a| a_kernel.weight(x, a) * f[space.prepend(a, x)])
            .sum();
        let target = 1.0 - v.value(x) + sol.lambda;
        gap = gap.max((lf / f[x] - target).abs());
    }
    Ok(gap)
}

/// The Dirichlet form of the unit-rate chain, evaluated two ways.
#[derive(Debug, Clone, Copy)]
pub struct DirichletForm {
    /// `<(I - L_A) f, f>` in `L^2(mu)`.
    pub quadratic: f64,
    /// `1/2 int sum_a weight(x, a) (f(x) - f(ax))^2 dmu(x)`.
    pub jump_form: f64,
}

impl DirichletForm {
    pub fn value(&self) -> f64 {
        self.quadratic
    }
}

/// Evaluates the Dirichlet form both as an inner product and as a jump
/// average. The two agree (within `1e-12`) exactly because `mu` is the
/// stationary law of the word chain, which is validated first; the common
/// value is nonnegative.
pub fn dirichlet_form(
    a_kernel: &KernelField,
    mu: &Measure,
    f: &PotentialField,
) -> Result<DirichletForm> {
    let space = a_kernel.space();
    space.check_same_as(mu.space(), "dirichlet_form measure")?;
    space.check_same_as(f.space(), "dirichlet_form observable")?;
    if !a_kernel.is_normalized() {
        return Err(Error::invalid("dirichlet_form requires a normalized kernel"));
    }
    let d = space.alphabet();
    let n = space.word_count();

    // mu must be invariant under the word chain.
    let mut flow = vec![0.0; n];
    for x in 0..n {
        for a in 0..d {
            flow[space.prepend(a, x)] += a_kernel.weight(x, a) * mu.value(x);
        }
    }
    let stationarity = flow
        .iter()
        .zip(mu.masses())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if stationarity > 1e-10 {
        return Err(Error::invalid(format!(
            "dirichlet_form: measure moves under the word chain by {stationarity:.3e}"
        )));
    }

    let mut quadratic = 0.0;
    let mut jump_form = 0.0;
    for x in 0..n {
        let fx = f.value(x);
        let mut avg = 0.0;
        let mut sq = 0.0;
        for a in 0..d {
            let fy = f.value(space.prepend(a, x));
            let w = a_kernel.weight(x, a);
            avg += w * fy;
            sq += w * (fx - fy) * (fx - fy);
        }
        quadratic += mu.value(x) * fx * (fx - avg);
        jump_form += 0.5 * mu.value(x) * sq;
    }

    let scale = quadratic.abs().max(1.0);
    if (quadratic - jump_form).abs() > 1e-12 * scale {
        return Err(Error::consistency(format!(
            "Dirichlet form evaluations disagree: {quadratic} vs {jump_form}"
        )));
    }
    if quadratic < -1e-12 * scale {
        return Err(Error::consistency(format!(
            "Dirichlet form is negative: {quadratic}"
        )));
    }
    Ok(DirichletForm {
        quadratic,
        jump_form,
    })
}

/// Generator, its adjoint in `L^2(mu)`, and their symmetric part.
#[derive(Debug, Clone)]
pub struct AdjointPair {
    pub adjoint: DenseMatrix,
    pub symmetrized: DenseMatrix,
}

/// Builds the adjoint `L*` of the generator in `L^2(mu)` for a strictly
/// positive stationary `mu`, plus the symmetrization `(L + L*)/2`.
///
/// Stationarity of `mu` is what makes the adjoint another generator: its
/// off-diagonal mass sits on the shift direction (from a word to the
/// extensions of its shifted image) and every row sums to zero.
pub fn adjoint_and_symmetrize(gen: &GeneratorMatrix, mu: &Measure) -> Result<AdjointPair> {
    gen.space().check_same_as(mu.space(), "adjoint_and_symmetrize")?;
    let n = gen.space().word_count();
    if !mu.masses().iter().all(|&m| m > 0.0) {
        return Err(Error::invalid(
            "adjoint_and_symmetrize requires a strictly positive measure",
        ));
    }
    let g = gen.dense();

    // Stationarity: the mass flow G^T mu must vanish.
    let gt = g.transpose();
    let flow = gt.matvec(mu.masses());
    let scale = gen.rate().max().max(1.0);
    let stationarity = flow.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if stationarity > 1e-10 * scale {
        return Err(Error::invalid(format!(
            "adjoint_and_symmetrize: measure is not stationary (residual {stationarity:.3e})"
        )));
    }

    let adjoint = DenseMatrix::from_fn(n, |y, x| mu.value(x) * g.get(x, y) / mu.value(y));
    let row_gap = adjoint
        .row_sums()
        .iter()
        .fold(0.0f64, |m, s| m.max(s.abs()));
    if row_gap > 1e-9 * scale {
        return Err(Error::consistency(format!(
            "adjoint rows do not sum to zero (gap {row_gap:.3e})"
        )));
    }
    let symmetrized = g.add(&adjoint)?.scale(0.5);
    Ok(AdjointPair {
        adjoint,
        symmetrized,
    })
}
