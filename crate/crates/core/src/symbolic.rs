//! Cylinder-truncated shift space, potentials, transfer kernels, measures,
//! and the discrete-time equilibrium machinery.
//!
//! The state space is the set of depth-`k` words over the alphabet
//! `{0, .., d-1}`. A word is stored as an index in `0..d^k` with its first
//! symbol in the least-significant base-`d` digit, so the truncated shift
//! acts by integer division and preimages by prepending a symbol:
//! `prepend(a, x) = a + d * (x mod d^(k-1))`. Every word has exactly `d`
//! preimages, one per symbol.
//!
//! A [`KernelField`] stores the jump weights `weight(x, a) = exp(B(ax))`
//! of a transfer operator `(L_B f)(x) = sum_a weight(x, a) f(ax)`. A kernel
//! is *normalized* when each row sums to one, in which case it is the
//! transition table of the word chain `x -> ax`. [`discrete_perron`] finds
//! the dominant eigendata of an arbitrary positive transfer operator,
//! [`normalize`] turns a raw potential into a normalized kernel, and
//! [`equilibrium_measure`] returns the stationary law of the word chain.

use crate::error::{Error, Result};

/// Rows of a kernel must sum to one within this tolerance to count as
/// normalized.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Relative residual required of the dominant-eigenpair power iteration.
const PERRON_RESIDUAL_TOL: f64 = 1e-12;

/// Eigenvalue stagnation threshold for the power iteration.
const PERRON_GAP_TOL: f64 = 1e-13;

/// Power-iteration step cap.
const PERRON_MAX_ITER: usize = 1_000_000;

/// Hard cap on `d^k` so indices and tables stay comfortably in memory.
const MAX_WORDS: usize = 1 << 22;

/// Depth-`k` cylinder truncation of the full shift on `d` symbols.
///
/// `theta` in (0, 1) is the metric parameter: two words agreeing on exactly
/// their first `j` symbols are at distance `theta^j`. It scales reported
/// Lipschitz bounds and is metadata for everything else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderSpace {
    d: usize,
    k: usize,
    theta: f64,
    words: usize,
}

impl CylinderSpace {
    pub fn new(d: usize, k: usize, theta: f64) -> Result<Self> {
        if d < 1 {
            return Err(Error::invalid("alphabet size d must be at least 1"));
        }
        if k < 1 {
            return Err(Error::invalid("word depth k must be at least 1"));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::invalid(format!(
                "metric parameter theta must lie in (0, 1), got {theta}"
            )));
        }
        let words = d
            .checked_pow(k as u32)
            .filter(|&w| w <= MAX_WORDS)
            .ok_or_else(|| Error::invalid(format!("word count d^k = {d}^{k} is too large")))?;
        Ok(CylinderSpace { d, k, theta, words })
    }

    /// Space with the default metric parameter `theta = 1/2`.
    pub fn with_default_metric(d: usize, k: usize) -> Result<Self> {
        CylinderSpace::new(d, k, 0.5)
    }

    pub fn alphabet(&self) -> usize {
        self.d
    }

    pub fn depth(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Number of depth-`k` words, `d^k`.
    pub fn word_count(&self) -> usize {
        self.words
    }

    /// `d^(k-1)`, the modulus that drops the last symbol.
    fn suffix_base(&self) -> usize {
        self.words / self.d
    }

    /// Encodes symbols (first symbol first) into a word index.
    pub fn encode(&self, symbols: &[usize]) -> Result<usize> {
        if symbols.len() != self.k {
            return Err(Error::invalid(format!(
                "expected {} symbols, got {}",
                self.k,
                symbols.len()
            )));
        }
        let mut index = 0usize;
        for (i, &s) in symbols.iter().enumerate() {
            if s >= self.d {
                return Err(Error::invalid(format!(
                    "symbol {s} at position {i} is outside 0..{}",
                    self.d
                )));
            }
            index += s * self.d.pow(i as u32);
        }
        Ok(index)
    }

    /// Decodes a word index into its symbols, first symbol first.
    pub fn decode(&self, word: usize) -> Vec<usize> {
        debug_assert!(word < self.words);
        let mut rest = word;
        (0..self.k)
            .map(|_| {
                let s = rest % self.d;
                rest /= self.d;
                s
            })
            .collect()
    }

    /// First symbol of a word.
    pub fn first_symbol(&self, word: usize) -> usize {
        word % self.d
    }

    /// Prepends `symbol` and drops the last symbol: the word chain step.
    pub fn prepend(&self, symbol: usize, word: usize) -> usize {
        debug_assert!(symbol < self.d && word < self.words);
        symbol + self.d * (word % self.suffix_base())
    }

    /// The `d` preimages of `word` under the truncated shift, one per
    /// prepended symbol.
    pub fn preimages(&self, word: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.d).map(move |a| self.prepend(a, word))
    }

    /// Metric distance `theta^(length of common prefix)`.
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        let mut rx = x;
        let mut ry = y;
        let mut common = 0usize;
        while rx % self.d == ry % self.d {
            common += 1;
            rx /= self.d;
            ry /= self.d;
        }
        self.theta.powi(common as i32)
    }

    fn check_same(&self, other: &CylinderSpace, what: &str) -> Result<()> {
        if self.d != other.d || self.k != other.k {
            return Err(Error::mismatch(format!(
                "{what}: ({}, {}) versus ({}, {})",
                self.d, self.k, other.d, other.k
            )));
        }
        Ok(())
    }
}

/// Real-valued function on the words of a [`CylinderSpace`], stored in
/// word-index order.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    space: CylinderSpace,
    values: Vec<f64>,
}

impl PotentialField {
    pub fn new(space: CylinderSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.word_count() {
            return Err(Error::invalid(format!(
                "potential table has {} entries, space has {} words",
                values.len(),
                space.word_count()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("potential value {bad} is not finite")));
        }
        Ok(PotentialField { space, values })
    }

    pub fn constant(space: CylinderSpace, value: f64) -> Self {
        PotentialField {
            space,
            values: vec![value; space.word_count()],
        }
    }

    pub fn zero(space: CylinderSpace) -> Self {
        PotentialField::constant(space, 0.0)
    }

    /// Potential determined by the first `m` symbols: `value(x) =
    /// table[x mod d^m]`.
    pub fn from_first_symbols(space: CylinderSpace, table: &[f64]) -> Result<Self> {
        let d = space.alphabet();
        let mut m = 0u32;
        let mut block = 1usize;
        while block < table.len() {
            block = block
                .checked_mul(d)
                .ok_or_else(|| Error::invalid("rule table too large"))?;
            m += 1;
        }
        if block != table.len() {
            return Err(Error::invalid(format!(
                "rule table length {} is not a power of d = {d}",
                table.len()
            )));
        }
        if m as usize > space.depth() {
            return Err(Error::invalid(format!(
                "rule depth {m} exceeds word depth {}",
                space.depth()
            )));
        }
        let values = (0..space.word_count()).map(|x| table[x % block]).collect();
        PotentialField::new(space, values)
    }

    pub fn space(&self) -> &CylinderSpace {
        &self.space
    }

    pub fn value(&self, word: usize) -> f64 {
        self.values[word]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `scale * self + offset`, entrywise.
    pub fn affine(&self, scale: f64, offset: f64) -> Self {
        PotentialField {
            space: self.space,
            values: self.values.iter().map(|v| scale * v + offset).collect(),
        }
    }

    pub fn plus(&self, other: &PotentialField) -> Result<Self> {
        self.space.check_same(&other.space, "potential sum")?;
        Ok(PotentialField {
            space: self.space,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sup_distance(&self, other: &PotentialField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `j`-th variation: the largest gap between values on words agreeing
    /// on their first `j` symbols. `variation(0)` is the full oscillation
    /// and `variation(k)` is zero.
    pub fn variation(&self, j: usize) -> Result<f64> {
        variation_of(&self.values, &self.space, self.space.depth(), j)
    }

    /// Lipschitz bound `max_j variation(j) / theta^j` for the space metric.
    pub fn lipschitz_bound(&self) -> f64 {
        let theta = self.space.theta();
        (0..=self.space.depth())
            .map(|j| self.variation(j).expect("j <= depth") / theta.powi(j as i32))
            .fold(0.0, f64::max)
    }
}

/// `j`-th variation of a table indexed by depth-`depth` words over the
/// alphabet of `space`. Words agree on their first `j` symbols exactly when
/// their indices agree modulo `d^j`.
fn variation_of(values: &[f64], space: &CylinderSpace, depth: usize, j: usize) -> Result<f64> {
    if j > depth {
        return Err(Error::invalid(format!(
            "variation depth {j} exceeds word depth {depth}"
        )));
    }
    let block = space.alphabet().pow(j as u32);
    let mut worst: f64 = 0.0;
    for prefix in 0..block {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut x = prefix;
        while x < values.len() {
            lo = lo.min(values[x]);
            hi = hi.max(values[x]);
            x += block;
        }
        if hi > lo {
            worst = worst.max(hi - lo);
        }
    }
    Ok(worst)
}

/// `j`-th variation of a potential; method form lives on [`PotentialField`].
pub fn variation(f: &PotentialField, j: usize) -> Result<f64> {
    f.variation(j)
}

/// Jump weights `weight(x, a) = exp(B(ax))` of a transfer operator, stored
/// row-major by parent word.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelField {
    space: CylinderSpace,
    weights: Vec<f64>,
    normalized: bool,
}

impl KernelField {
    /// Builds a kernel from explicit positive weights in `(x, a)` order.
    pub fn from_weights(space: CylinderSpace, weights: Vec<f64>) -> Result<Self> {
        let expected = space.word_count() * space.alphabet();
        if weights.len() != expected {
            return Err(Error::invalid(format!(
                "kernel table has {} entries, expected {expected}",
                weights.len()
            )));
        }
        if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!(
                "kernel weights must be finite and strictly positive, got {bad}"
            )));
        }
        let normalized = rows_normalized(&space, &weights);
        Ok(KernelField {
            space,
            weights,
            normalized,
        })
    }

    /// Kernel of the raw transfer operator `L_raw`: `weight(x, a) =
    /// exp(raw(ax))`.
    pub fn from_log_weights(raw: &PotentialField) -> Self {
        let space = *raw.space();
        let d = space.alphabet();
        let mut weights = vec![0.0; space.word_count() * d];
        for x in 0..space.word_count() {
            for a in 0..d {
                weights[x * d + a] = raw.value(space.prepend(a, x)).exp();
            }
        }
        let normalized = rows_normalized(&space, &weights);
        KernelField {
            space,
            weights,
            normalized,
        }
    }

    /// Uniform normalized kernel: every row is `1/d`.
    pub fn uniform(space: CylinderSpace) -> Self {
        let d = space.alphabet();
        KernelField {
            space,
            weights: vec![1.0 / d as f64; space.word_count() * d],
            normalized: true,
        }
    }

    pub fn space(&self) -> &CylinderSpace {
        &self.space
    }

    pub fn weight(&self, x: usize, a: usize) -> f64 {
        self.weights[x * self.space.alphabet() + a]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let d = self.space.alphabet();
        &self.weights[x * d..(x + 1) * d]
    }

    /// True when every row sums to one within [`ROW_SUM_TOL`].
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn log_weight(&self, x: usize, a: usize) -> f64 {
        self.weight(x, a).ln()
    }

    /// Topological pressure of the kernel's transfer operator: the log of
    /// its dominant eigenvalue. Zero (within tolerance) for a normalized
    /// kernel.
    pub fn pressure(&self) -> Result<f64> {
        let eigen = transfer_dominant(self, "kernel pressure")?;
        Ok(eigen.lambda.ln())
    }

    /// `j`-th variation of the log-weights viewed as a potential on
    /// depth-`(k+1)` words `(a, x)`.
    pub fn log_weight_variation(&self, j: usize) -> Result<f64> {
        // The (k+1)-word (a, x_0, .., x_{k-1}) has index a + d * x, which is
        // exactly how the weight table is laid out when transposed; build
        // the table in (a, x) little-endian order.
        let d = self.space.alphabet();
        let n = self.space.word_count();
        let mut table = vec![0.0; n * d];
        for x in 0..n {
            for a in 0..d {
                table[a + d * x] = self.weight(x, a).ln();
            }
        }
        variation_of(&table, &self.space, self.space.depth() + 1, j)
    }

    /// Lipschitz bound of the log-weights for the space metric.
    pub fn log_weight_lipschitz(&self) -> f64 {
        let theta = self.space.theta();
        (0..=self.space.depth() + 1)
            .map(|j| {
                self.log_weight_variation(j).expect("j <= depth + 1") / theta.powi(j as i32)
            })
            .fold(0.0, f64::max)
    }
}

fn rows_normalized(space: &CylinderSpace, weights: &[f64]) -> bool {
    let d = space.alphabet();
    (0..space.word_count()).all(|x| {
        let sum: f64 = weights[x * d..(x + 1) * d].iter().sum();
        (sum - 1.0).abs() <= ROW_SUM_TOL
    })
}

/// Nonnegative mass assignment on the words of a space.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    space: CylinderSpace,
    mass: Vec<f64>,
}

impl Measure {
    pub fn new(space: CylinderSpace, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != space.word_count() {
            return Err(Error::invalid(format!(
                "measure table has {} entries, space has {} words",
                mass.len(),
                space.word_count()
            )));
        }
        if let Some(bad) = mass.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::invalid(format!(
                "measure masses must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Measure { space, mass })
    }

    pub fn uniform(space: CylinderSpace) -> Self {
        let n = space.word_count();
        Measure {
            space,
            mass: vec![1.0 / n as f64; n],
        }
    }

    pub fn dirac(space: CylinderSpace, word: usize) -> Result<Self> {
        if word >= space.word_count() {
            return Err(Error::invalid(format!("word {word} out of range")));
        }
        let mut mass = vec![0.0; space.word_count()];
        mass[word] = 1.0;
        Ok(Measure { space, mass })
    }

    pub fn space(&self) -> &CylinderSpace {
        &self.space
    }

    pub fn value(&self, word: usize) -> f64 {
        self.mass[word]
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total() - 1.0).abs() <= 1e-10
    }

    /// Rescales to total mass one.
    pub fn normalized(&self) -> Result<Measure> {
        let total = self.total();
        if !(total > 0.0) {
            return Err(Error::invalid("cannot normalize a zero measure"));
        }
        Ok(Measure {
            space: self.space,
            mass: self.mass.iter().map(|m| m / total).collect(),
        })
    }

    pub fn expectation(&self, f: &PotentialField) -> Result<f64> {
        self.space.check_same(f.space(), "expectation")?;
        Ok(self
            .mass
            .iter()
            .zip(f.values())
            .map(|(m, v)| m * v)
            .sum())
    }

    /// Total-variation distance (probability normalization assumed).
    pub fn tv_distance(&self, other: &Measure) -> f64 {
        0.5 * self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    pub fn sup_distance(&self, other: &Measure) -> f64 {
        self.mass
            .iter()
            .zip(&other.mass)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest gap between the two depth-`(k-1)` marginals: summing out the
    /// first symbol versus summing out the last. Zero for the depth-`k`
    /// marginal of a shift-invariant measure.
    pub fn shift_consistency_gap(&self) -> f64 {
        let d = self.space.alphabet();
        let base = self.space.word_count() / d;
        let mut gap: f64 = 0.0;
        for z in 0..base {
            let first: f64 = (0..d).map(|a| self.mass[a + d * z]).sum();
            let last: f64 = (0..d).map(|c| self.mass[z + base * c]).sum();
            gap = gap.max((first - last).abs());
        }
        gap
    }
}

/// Applies the transfer operator of `kernel` to `f`:
/// `(L f)(x) = sum_a weight(x, a) f(ax)`.
pub fn ruelle_apply(kernel: &KernelField, f: &PotentialField) -> Result<PotentialField> {
    kernel.space().check_same(f.space(), "ruelle_apply")?;
    Ok(PotentialField {
        space: *kernel.space(),
        values: apply_rows(kernel, f.values()),
    })
}

/// Row action on a raw slice; shared by the iteration loops.
fn apply_rows(kernel: &KernelField, f: &[f64]) -> Vec<f64> {
    let space = kernel.space();
    let d = space.alphabet();
    (0..space.word_count())
        .map(|x| {
            (0..d)
                .map(|a| kernel.weight(x, a) * f[space.prepend(a, x)])
                .sum()
        })
        .collect()
}

/// Dual row action: mass flows from each parent `x` to its targets `ax`.
fn scatter_rows(kernel: &KernelField, mass: &[f64]) -> Vec<f64> {
    let space = kernel.space();
    let d = space.alphabet();
    let mut out = vec![0.0; space.word_count()];
    for x in 0..space.word_count() {
        let m = mass[x];
        if m != 0.0 {
            for a in 0..d {
                out[space.prepend(a, x)] += kernel.weight(x, a) * m;
            }
        }
    }
    out
}

pub(crate) struct TransferEigen {
    pub lambda: f64,
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    pub iterations: usize,
    pub residual_right: f64,
    pub residual_left: f64,
}

/// Dominant eigendata of the (strictly positive, hence primitive) transfer
/// operator by power iteration with Collatz-Wielandt brackets: for a
/// positive vector v, min and max of `(Lv)/v` bracket the eigenvalue, and
/// the bracket collapses geometrically.
pub(crate) fn transfer_dominant(kernel: &KernelField, context: &str) -> Result<TransferEigen> {
    let n = kernel.space().word_count();

    // Right eigenvector.
    let mut right = vec![1.0; n];
    let mut lambda;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let image = apply_rows(kernel, &right);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (num, den) in image.iter().zip(&right) {
            let r = num / den;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        lambda = 0.5 * (lo + hi);
        let sup = image.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        right = image.iter().map(|v| v / sup).collect();
        if hi - lo <= PERRON_GAP_TOL * lambda.abs().max(1.0) || iterations >= PERRON_MAX_ITER {
            break;
        }
    }
    let residual_right = {
        let image = apply_rows(kernel, &right);
        image
            .iter()
            .zip(&right)
            .fold(0.0f64, |m, (im, h)| m.max((im - lambda * h).abs()))
    };
    let scale = lambda.abs().max(1.0);
    if residual_right > PERRON_RESIDUAL_TOL * scale {
        return Err(Error::NoConvergence {
            context: format!("{context}: right eigenvector"),
            iterations,
            residual: residual_right,
        });
    }

    // Left eigenvector, normalized to a probability.
    let mut left = vec![1.0 / n as f64; n];
    let mut lambda_left;
    let mut left_iterations = 0;
    loop {
        left_iterations += 1;
        let image = scatter_rows(kernel, &left);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (num, den) in image.iter().zip(&left) {
            let r = num / den;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        lambda_left = 0.5 * (lo + hi);
        let total: f64 = image.iter().sum();
        left = image.iter().map(|v| v / total).collect();
        if hi - lo <= PERRON_GAP_TOL * lambda_left.abs().max(1.0)
            || left_iterations >= PERRON_MAX_ITER
        {
            break;
        }
    }
    let residual_left = {
        let image = scatter_rows(kernel, &left);
        image
            .iter()
            .zip(&left)
            .fold(0.0f64, |m, (im, nu)| m.max((im - lambda * nu).abs()))
    };
    if residual_left > PERRON_RESIDUAL_TOL * scale {
        return Err(Error::NoConvergence {
            context: format!("{context}: left eigenvector"),
            iterations: left_iterations,
            residual: residual_left,
        });
    }
    if (lambda - lambda_left).abs() > 1e-11 * scale {
        return Err(Error::consistency(format!(
            "{context}: left and right eigenvalues disagree ({lambda} vs {lambda_left})"
        )));
    }

    Ok(TransferEigen {
        lambda,
        right,
        left,
        iterations: iterations.max(left_iterations),
        residual_right,
        residual_left,
    })
}

/// Dominant eigendata of the raw transfer operator `L_raw`.
#[derive(Debug, Clone)]
pub struct DiscretePerron {
    /// Dominant eigenvalue (simple and positive).
    pub lambda: f64,
    /// Strictly positive right eigenfunction, sup-normalized to one.
    pub h: PotentialField,
    /// Left eigenmeasure, normalized to a probability.
    pub nu: Measure,
    /// Sup-norm residual of the right eigen-equation, relative to lambda.
    pub residual: f64,
    pub iterations: usize,
}

/// Finds the dominant eigenvalue, eigenfunction, and eigenmeasure of the
/// transfer operator with weights `exp(raw)`.
pub fn discrete_perron(raw: &PotentialField) -> Result<DiscretePerron> {
    let kernel = KernelField::from_log_weights(raw);
    let eigen = transfer_dominant(&kernel, "discrete_perron")?;
    let space = *raw.space();
    Ok(DiscretePerron {
        lambda: eigen.lambda,
        h: PotentialField::new(space, eigen.right)?,
        nu: Measure::new(space, eigen.left)?,
        residual: eigen.residual_right.max(eigen.residual_left) / eigen.lambda.abs().max(1.0),
        iterations: eigen.iterations,
    })
}

/// Normalizes a raw potential: the returned kernel has weights
/// `exp(raw(ax)) h(ax) / (lambda h(x))`, whose rows sum to one exactly
/// because `h` is the dominant eigenfunction.
pub fn normalize(raw: &PotentialField) -> Result<KernelField> {
    let perron = discrete_perron(raw)?;
    let space = *raw.space();
    let d = space.alphabet();
    let mut weights = vec![0.0; space.word_count() * d];
    for x in 0..space.word_count() {
        let hx = perron.h.value(x);
        for a in 0..d {
            let y = space.prepend(a, x);
            weights[x * d + a] = raw.value(y).exp() * perron.h.value(y) / (perron.lambda * hx);
        }
    }
    let kernel = KernelField::from_weights(space, weights)?;
    if !kernel.is_normalized() {
        return Err(Error::consistency(
            "normalize produced a kernel whose rows do not sum to one".to_string(),
        ));
    }
    Ok(kernel)
}

/// Log of the dominant transfer eigenvalue of `exp(raw)`: the discrete
/// pressure of the raw potential. Zero exactly when `raw` is normalized.
pub fn discrete_pressure(raw: &PotentialField) -> Result<f64> {
    Ok(discrete_perron(raw)?.lambda.ln())
}

/// Stationary law of the word chain of a normalized kernel; equals the
/// depth-`k` marginal of the associated equilibrium state, so its two
/// depth-`(k-1)` marginals agree.
pub fn equilibrium_measure(kernel: &KernelField) -> Result<Measure> {
    if !kernel.is_normalized() {
        return Err(Error::invalid(
            "equilibrium_measure requires a normalized kernel",
        ));
    }
    let eigen = transfer_dominant(kernel, "equilibrium_measure")?;
    if (eigen.lambda - 1.0).abs() > 1e-9 {
        return Err(Error::consistency(format!(
            "normalized kernel has transfer eigenvalue {} instead of 1",
            eigen.lambda
        )));
    }
    let measure = Measure::new(*kernel.space(), eigen.left)?;
    // Fixed-point and shift-consistency guards.
    let image = scatter_rows(kernel, measure.masses());
    let fixed_gap = image
        .iter()
        .zip(measure.masses())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if fixed_gap > 1e-12 {
        return Err(Error::consistency(format!(
            "equilibrium measure moves under the word chain by {fixed_gap:.3e}"
        )));
    }
    let shift_gap = measure.shift_consistency_gap();
    if shift_gap > 1e-10 {
        return Err(Error::consistency(format!(
            "equilibrium measure marginals disagree by {shift_gap:.3e}"
        )));
    }
    Ok(measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(d: usize, k: usize) -> CylinderSpace {
        CylinderSpace::with_default_metric(d, k).unwrap()
    }

    #[test]
    fn prepend_matches_symbol_arithmetic() {
        let s = space(3, 2);
        // word (1, 2) has index 1 + 3*2 = 7; prepending 0 gives (0, 1) = 3.
        assert_eq!(s.encode(&[1, 2]).unwrap(), 7);
        assert_eq!(s.prepend(0, 7), 3);
        assert_eq!(s.decode(3), vec![0, 1]);
    }

    #[test]
    fn preimages_are_distinct_and_complete() {
        let s = space(2, 3);
        for x in 0..s.word_count() {
            let pre: Vec<usize> = s.preimages(x).collect();
            assert_eq!(pre.len(), 2);
            assert_ne!(pre[0], pre[1]);
            for (a, &y) in pre.iter().enumerate() {
                assert_eq!(s.first_symbol(y), a);
                // Dropping the first symbol of y recovers the first k-1
                // symbols of x.
                assert_eq!(y / 2, x % 4);
            }
        }
    }

    #[test]
    fn depth_one_word_chain_forgets_the_parent() {
        let s = space(2, 1);
        assert_eq!(s.prepend(0, 1), 0);
        assert_eq!(s.prepend(1, 0), 1);
        assert_eq!(s.prepend(1, 1), 1);
    }

    #[test]
    fn distance_counts_common_prefix() {
        let s = space(2, 3);
        let x = s.encode(&[0, 1, 0]).unwrap();
        let y = s.encode(&[0, 1, 1]).unwrap();
        assert_eq!(s.distance(x, y), 0.25);
        assert_eq!(s.distance(x, x), 0.0);
        let z = s.encode(&[1, 1, 0]).unwrap();
        assert_eq!(s.distance(x, z), 1.0);
    }

    #[test]
    fn space_rejects_bad_parameters() {
        assert!(CylinderSpace::new(0, 1, 0.5).is_err());
        assert!(CylinderSpace::new(2, 0, 0.5).is_err());
        assert!(CylinderSpace::new(2, 1, 1.0).is_err());
        assert!(CylinderSpace::new(2, 1, 0.0).is_err());
    }

    #[test]
    fn first_symbol_rule_expands_by_prefix() {
        let s = space(2, 3);
        let f = PotentialField::from_first_symbols(s, &[5.0, -3.0]).unwrap();
        for x in 0..s.word_count() {
            let expected = if x % 2 == 0 { 5.0 } else { -3.0 };
            assert_eq!(f.value(x), expected);
        }
        assert!(PotentialField::from_first_symbols(s, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn variation_on_indicator() {
        let s = space(2, 2);
        // Indicator of the word (0, 0).
        let mut values = vec![0.0; 4];
        values[s.encode(&[0, 0]).unwrap()] = 1.0;
        let f = PotentialField::new(s, values).unwrap();
        assert_eq!(f.variation(0).unwrap(), 1.0);
        assert_eq!(f.variation(1).unwrap(), 1.0);
        assert_eq!(f.variation(2).unwrap(), 0.0);
        assert!(f.variation(3).is_err());
        // Lipschitz bound: variation(1) / theta = 1 / 0.5 = 2.
        assert_eq!(f.lipschitz_bound(), 2.0);
    }

    #[test]
    fn variation_vanishes_for_constants() {
        let s = space(3, 2);
        let f = PotentialField::constant(s, 2.5);
        for j in 0..=2 {
            assert_eq!(f.variation(j).unwrap(), 0.0);
        }
        assert_eq!(f.lipschitz_bound(), 0.0);
    }

    #[test]
    fn ruelle_apply_averages_under_uniform_kernel() {
        let s = space(2, 1);
        let kernel = KernelField::uniform(s);
        let f = PotentialField::new(s, vec![0.0, 1.0]).unwrap();
        let g = ruelle_apply(&kernel, &f).unwrap();
        // Both rows average f over the two preimages {0, 1}.
        assert!((g.value(0) - 0.5).abs() < 1e-15);
        assert!((g.value(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalized_kernel_preserves_constants() {
        let s = space(3, 2);
        let raw = PotentialField::new(
            s,
            (0..9).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect(),
        )
        .unwrap();
        let kernel = normalize(&raw).unwrap();
        let one = PotentialField::constant(s, 1.0);
        let image = ruelle_apply(&kernel, &one).unwrap();
        for x in 0..s.word_count() {
            assert!((image.value(x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn discrete_perron_on_constant_potential() {
        // All weights e^c: dominant eigenvalue d * e^c, flat eigenfunction.
        let s = space(3, 2);
        let c = 0.7;
        let perron = discrete_perron(&PotentialField::constant(s, c)).unwrap();
        assert!((perron.lambda - 3.0 * c.exp()).abs() < 1e-12);
        for x in 0..s.word_count() {
            assert!((perron.h.value(x) - 1.0).abs() < 1e-12);
            assert!((perron.nu.value(x) - 1.0 / 9.0).abs() < 1e-13);
        }
    }

    #[test]
    fn discrete_perron_two_state_closed_form() {
        // Depth 1, raw = (0, 1): both transfer rows are (1, e), so the
        // dominant eigenvalue is 1 + e.
        let s = space(2, 1);
        let raw = PotentialField::new(s, vec![0.0, 1.0]).unwrap();
        let perron = discrete_perron(&raw).unwrap();
        assert!((perron.lambda - (1.0 + std::f64::consts::E)).abs() < 1e-12);
        assert!(perron.residual <= 1e-12);
    }

    #[test]
    fn discrete_pressure_of_normalized_kernel_is_zero() {
        let s = space(2, 2);
        let raw = PotentialField::new(s, vec![0.3, -0.1, 0.9, -0.4]).unwrap();
        let kernel = normalize(&raw).unwrap();
        assert!(kernel.is_normalized());
        assert!(kernel.pressure().unwrap().abs() < 1e-12);
    }

    #[test]
    fn normalize_is_idempotent_on_normalized_input() {
        // Raw potential already normalized: log of uniform row weights.
        let s = space(2, 1);
        let raw = PotentialField::constant(s, (0.5f64).ln());
        let kernel = normalize(&raw).unwrap();
        for x in 0..2 {
            for a in 0..2 {
                assert!((kernel.weight(x, a) - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_state_stochastic_matrix_round_trips_through_normalize() {
        // Depth-2 raw potential whose weights encode the stochastic matrix
        // rows (1-p1, p1) and (p2, 1-p2); normalize must reproduce them.
        let (p1, p2) = (0.3f64, 0.8f64);
        let m = [[1.0 - p1, p1], [p2, 1.0 - p2]];
        let s = space(2, 2);
        let mut values = vec![0.0; 4];
        for y0 in 0..2 {
            for y1 in 0..2 {
                // Word (y0, y1) records a jump from parent symbol y1 to y0.
                values[y0 + 2 * y1] = m[y1][y0].ln();
            }
        }
        let raw = PotentialField::new(s, values).unwrap();
        let kernel = normalize(&raw).unwrap();
        for x in 0..4 {
            let x0 = s.first_symbol(x);
            for a in 0..2 {
                assert!(
                    (kernel.weight(x, a) - m[x0][a]).abs() < 1e-12,
                    "weight({x}, {a})"
                );
            }
        }
    }

    #[test]
    fn equilibrium_measure_two_state_closed_form() {
        // Transition rows (1-p1, p1), (p2, 1-p2): stationary law is
        // (p2, p1) / (p1 + p2).
        let (p1, p2) = (0.25, 0.65);
        let s = space(2, 1);
        let kernel =
            KernelField::from_weights(s, vec![1.0 - p1, p1, p2, 1.0 - p2]).unwrap();
        let mu = equilibrium_measure(&kernel).unwrap();
        assert!((mu.value(0) - p2 / (p1 + p2)).abs() < 1e-13);
        assert!((mu.value(1) - p1 / (p1 + p2)).abs() < 1e-13);
    }

    #[test]
    fn equilibrium_measure_is_shift_consistent_at_depth_three() {
        let s = space(2, 3);
        let raw = PotentialField::new(
            s,
            vec![0.2, -0.5, 0.1, 0.9, -0.3, 0.4, -0.8, 0.6],
        )
        .unwrap();
        let kernel = normalize(&raw).unwrap();
        let mu = equilibrium_measure(&kernel).unwrap();
        assert!(mu.is_probability());
        assert!(mu.shift_consistency_gap() <= 1e-10);
    }

    #[test]
    fn equilibrium_measure_rejects_unnormalized_kernel() {
        let s = space(2, 1);
        let kernel = KernelField::from_weights(s, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(!kernel.is_normalized());
        assert!(equilibrium_measure(&kernel).is_err());
    }

    #[test]
    fn measure_shift_gap_detects_inconsistency() {
        let s = space(2, 2);
        // Mass only on word (0, 1): first-marginal puts it on suffix 1,
        // last-marginal on prefix 0.
        let mu = Measure::dirac(s, s.encode(&[0, 1]).unwrap()).unwrap();
        assert!(mu.shift_consistency_gap() == 1.0);
    }

    #[test]
    fn dirac_and_uniform_behave() {
        let s = space(2, 2);
        let delta = Measure::dirac(s, 3).unwrap();
        assert_eq!(delta.total(), 1.0);
        assert_eq!(delta.value(3), 1.0);
        let u = Measure::uniform(s);
        let f = PotentialField::new(s, vec![4.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((u.expectation(&f).unwrap() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(d in 2usize..4, k in 1usize..4, seed in 0u64..1000) {
            let s = space(d, k);
            let word = (seed as usize) % s.word_count();
            let symbols = s.decode(word);
            prop_assert_eq!(s.encode(&symbols).unwrap(), word);
        }

        #[test]
        fn averaging_property_holds(values in proptest::collection::vec(-1.0f64..1.0, 8)) {
            // For a normalized kernel, L(1) = 1 everywhere.
            let s = space(2, 3);
            let raw = PotentialField::new(s, values).unwrap();
            let kernel = normalize(&raw).unwrap();
            let image = ruelle_apply(&kernel, &PotentialField::constant(s, 1.0)).unwrap();
            for x in 0..s.word_count() {
                prop_assert!((image.value(x) - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn pressure_shifts_by_constants(values in proptest::collection::vec(-1.0f64..1.0, 4), c in -1.0f64..1.0) {
            let s = space(2, 2);
            let raw = PotentialField::new(s, values).unwrap();
            let p0 = discrete_pressure(&raw).unwrap();
            let p1 = discrete_pressure(&raw.affine(1.0, c)).unwrap();
            prop_assert!((p1 - (p0 + c)).abs() < 1e-10);
        }
    }
}
