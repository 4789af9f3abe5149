//! The Gibbs chain attached to a potential: the continuous-time change of
//! measure that turns the dominant eigendata of `L + V` into a bona fide
//! jump chain, plus the entropy functional whose supremum over admissible
//! chains is the eigenvalue.
//!
//! Given the a-priori kernel `A` (unit-rate chain) and a potential `V`
//! with dominant triple `(lambda, F, nu)`, the tilted chain jumps at rate
//! `gamma(x) = 1 - V(x) + lambda` (which must be positive) through the
//! kernel
//!
//! ```text
//! kernel(x, a) = weight_A(x, a) F(ax) / (gamma(x) F(x)),
//! ```
//!
//! whose rows sum to one precisely because `F` solves the eigen-identity.
//! Its stationary law weights the word-chain invariant measure by the
//! inverse jump rate, and coincides with `F nu` normalized.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::substream;
use crate::semigroup::{perron_solve, GeneratorMatrix, PerronSolution};
use crate::symbolic::{equilibrium_measure, CylinderSpace, KernelField, Measure, PotentialField};

/// Tilted jump chain built from the dominant eigendata of `L + V`.
#[derive(Debug, Clone)]
pub struct GibbsChain {
    base: KernelField,
    potential: PotentialField,
    solution: PerronSolution,
    gamma: PotentialField,
    kernel: KernelField,
    stationary: Measure,
}

impl GibbsChain {
    pub fn base(&self) -> &KernelField {
        &self.base
    }

    pub fn potential(&self) -> &PotentialField {
        &self.potential
    }

    pub fn solution(&self) -> &PerronSolution {
        &self.solution
    }

    /// Jump rate `gamma = 1 - V + lambda`.
    pub fn gamma(&self) -> &PotentialField {
        &self.gamma
    }

    /// Normalized jump kernel of the tilted chain.
    pub fn kernel(&self) -> &KernelField {
        &self.kernel
    }

    /// Stationary law of the tilted chain.
    pub fn stationary(&self) -> &Measure {
        &self.stationary
    }

    pub fn space(&self) -> &CylinderSpace {
        self.base.space()
    }

    pub fn generator(&self) -> Result<GeneratorMatrix> {
        GeneratorMatrix::new(self.gamma.clone(), self.kernel.clone())
    }
}

/// Builds the Gibbs chain for `V` over the a-priori kernel.
///
/// The tilted rate `1 - V + lambda` equals `(L_A F)/F`, a ratio of positive
/// quantities, so it is positive whenever the eigenproblem solved cleanly;
/// the positivity gate here is a defensive check on the numerics. The
/// construction is then cross-checked three ways: the tilted kernel rows
/// must sum to one before renormalization (gap below `1e-9`), the
/// stationary law must agree with `F nu` normalized, and the tilted
/// generator must annihilate it.
pub fn build_gibbs(a_kernel: &KernelField, v: &PotentialField) -> Result<GibbsChain> {
    let space = *a_kernel.space();
    if space != *v.space() {
        return Err(Error::mismatch("build_gibbs: kernel and potential spaces"));
    }
    let rate = PotentialField::constant(space, 1.0);
    let solution = perron_solve(a_kernel, &rate, v)?;
    let lambda = solution.lambda;
    let f = solution.eigenfunction.values();
    let d = space.alphabet();
    let n = space.word_count();

    let gamma_values: Vec<f64> = v.values().iter().map(|vv| 1.0 - vv + lambda).collect();
    if !gamma_values.iter().all(|&g| g > 0.0) {
        return Err(Error::invalid(format!(
            "build_gibbs: tilted rate 1 - V + lambda must be positive (min {:.6})",
            gamma_values.iter().fold(f64::INFINITY, |m, &g| m.min(g))
        )));
    }
    let gamma = PotentialField::new(space, gamma_values)?;

    // Tilted kernel; its rows sum to one up to the eigen-identity residual.
    let mut weights = vec![0.0; n * d];
    let mut worst_row_gap: f64 = 0.0;
    for x in 0..n {
        let mut row_sum = 0.0;
        for a in 0..d {
            let w = a_kernel.weight(x, a) * f[space.prepend(a, x)] / (gamma.value(x) * f[x]);
            weights[x * d + a] = w;
            row_sum += w;
        }
        worst_row_gap = worst_row_gap.max((row_sum - 1.0).abs());
        for a in 0..d {
            weights[x * d + a] /= row_sum;
        }
    }
    if worst_row_gap > 1e-9 {
        return Err(Error::consistency(format!(
            "build_gibbs: tilted kernel rows sum to one only within {worst_row_gap:.3e}"
        )));
    }
    let kernel = KernelField::from_weights(space, weights)?;
    if !kernel.is_normalized() {
        return Err(Error::consistency(
            "build_gibbs: tilted kernel failed normalization".to_string(),
        ));
    }

    // Stationary law: word-chain invariant measure reweighted by 1/gamma.
    let word_invariant = equilibrium_measure(&kernel)?;
    let masses: Vec<f64> = (0..n)
        .map(|x| word_invariant.value(x) / gamma.value(x))
        .collect();
    let stationary = Measure::new(space, masses)?.normalized()?;

    // Independent expression of the same law: F nu, normalized.
    let alt: Vec<f64> = (0..n)
        .map(|x| f[x] * solution.eigenprobability.value(x))
        .collect();
    let alt = Measure::new(space, alt)?.normalized()?;
    let tv = stationary.tv_distance(&alt);
    if tv > 1e-10 {
        return Err(Error::consistency(format!(
            "build_gibbs: stationary law disagrees with F nu (tv {tv:.3e})"
        )));
    }

    // The tilted generator must annihilate the stationary law.
    let mut flow = vec![0.0; n];
    for x in 0..n {
        let gx = gamma.value(x) * stationary.value(x);
        for a in 0..d {
            flow[space.prepend(a, x)] += kernel.weight(x, a) * gx;
        }
    }
    let residual = (0..n)
        .map(|y| (flow[y] - gamma.value(y) * stationary.value(y)).abs())
        .fold(0.0f64, f64::max);
    if residual > 1e-10 * gamma.max().max(1.0) {
        return Err(Error::consistency(format!(
            "build_gibbs: stationary law moves under the tilted generator by {residual:.3e}"
        )));
    }

    Ok(GibbsChain {
        base: a_kernel.clone(),
        potential: v.clone(),
        solution,
        gamma,
        kernel,
        stationary,
    })
}

/// Stationary law of the Gibbs chain.
pub fn stationary_measure(chain: &GibbsChain) -> &Measure {
    chain.stationary()
}

/// Relation between the Gibbs stationary law and the eigenprobability.
#[derive(Debug, Clone)]
pub struct EigenprobabilityRelation {
    /// The stationary law divided by the eigenfunction, normalized.
    pub nu_tilde: Measure,
    /// Sup residual of the dual eigen-equation on `nu_tilde`.
    pub dual_residual: f64,
    /// Total-variation gap between `nu_tilde` and the eigenprobability.
    pub tv_gap: f64,
}

/// Checks that the stationary law divided by `F` recovers the left
/// eigenvector: `mu / F` (normalized) satisfies the dual equation of
/// `L + V` and coincides with the eigenprobability.
pub fn eigenprobability_relation(chain: &GibbsChain) -> Result<EigenprobabilityRelation> {
    let space = chain.space();
    let n = space.word_count();
    let d = space.alphabet();
    let f = chain.solution.eigenfunction.values();
    let masses: Vec<f64> = (0..n).map(|x| chain.stationary.value(x) / f[x]).collect();
    let nu_tilde = Measure::new(*space, masses)?.normalized()?;

    // Dual action of L + V at unit rate on the mass vector.
    let lambda = chain.solution.lambda;
    let mut image = vec![0.0; n];
    for x in 0..n {
        for a in 0..d {
            image[space.prepend(a, x)] += chain.base.weight(x, a) * nu_tilde.value(x);
        }
    }
    for (y, entry) in image.iter_mut().enumerate() {
        *entry += (chain.potential.value(y) - 1.0) * nu_tilde.value(y);
    }
    let dual_residual = (0..n)
        .map(|y| (image[y] - lambda * nu_tilde.value(y)).abs())
        .fold(0.0f64, f64::max);
    if dual_residual > 1e-10 * lambda.abs().max(1.0) {
        return Err(Error::consistency(format!(
            "eigenprobability relation: dual residual {dual_residual:.3e}"
        )));
    }
    let tv_gap = nu_tilde.tv_distance(&chain.solution.eigenprobability);
    if tv_gap > 1e-9 {
        return Err(Error::consistency(format!(
            "eigenprobability relation: tv gap {tv_gap:.3e}"
        )));
    }
    Ok(EigenprobabilityRelation {
        nu_tilde,
        dual_residual,
        tv_gap,
    })
}

/// A stationary jump chain entering the entropy functional: a strictly
/// positive rate, a normalized kernel, and the stationary law they induce.
#[derive(Debug, Clone)]
pub struct AdmissibleCandidate {
    gamma: PotentialField,
    kernel: KernelField,
    stationary: Measure,
}

impl AdmissibleCandidate {
    /// Builds the candidate from its rate and kernel; the stationary law
    /// is the word-chain invariant measure reweighted by the inverse rate.
    pub fn new(gamma: PotentialField, kernel: KernelField) -> Result<Self> {
        if gamma.space() != kernel.space() {
            return Err(Error::mismatch("candidate rate and kernel spaces"));
        }
        if !(gamma.min() > 0.0) {
            return Err(Error::invalid("candidate rate must be strictly positive"));
        }
        if !kernel.is_normalized() {
            return Err(Error::invalid("candidate kernel must be normalized"));
        }
        let space = *kernel.space();
        let word_invariant = equilibrium_measure(&kernel)?;
        let masses: Vec<f64> = (0..space.word_count())
            .map(|x| word_invariant.value(x) / gamma.value(x))
            .collect();
        let stationary = Measure::new(space, masses)?.normalized()?;
        Ok(AdmissibleCandidate {
            gamma,
            kernel,
            stationary,
        })
    }

    /// The a-priori chain itself: unit rate over the given kernel.
    pub fn base(a_kernel: &KernelField) -> Result<Self> {
        let rate = PotentialField::constant(*a_kernel.space(), 1.0);
        AdmissibleCandidate::new(rate, a_kernel.clone())
    }

    pub fn from_gibbs(chain: &GibbsChain) -> Self {
        AdmissibleCandidate {
            gamma: chain.gamma.clone(),
            kernel: chain.kernel.clone(),
            stationary: chain.stationary.clone(),
        }
    }

    pub fn gamma(&self) -> &PotentialField {
        &self.gamma
    }

    pub fn kernel(&self) -> &KernelField {
        &self.kernel
    }

    pub fn stationary(&self) -> &Measure {
        &self.stationary
    }

    pub fn space(&self) -> &CylinderSpace {
        self.kernel.space()
    }
}

/// Entropy of an admissible chain relative to the unit-rate chain over
/// `a_kernel`, in stationarity:
///
/// ```text
/// H = int (gamma - 1) dmu
///   + int gamma(x) sum_a kernel(x, a)
///       [log weight_A(x, a) - log kernel(x, a) - log gamma(x)] dmu(x).
/// ```
///
/// `H` is the negative of a relative entropy rate, so it is nonpositive
/// and vanishes exactly on the a-priori chain.
pub fn relative_entropy(candidate: &AdmissibleCandidate, a_kernel: &KernelField) -> Result<f64> {
    let space = candidate.space();
    if space != a_kernel.space() {
        return Err(Error::mismatch("relative_entropy: candidate and kernel spaces"));
    }
    let d = space.alphabet();
    let mut h = 0.0;
    for x in 0..space.word_count() {
        let mu = candidate.stationary.value(x);
        let g = candidate.gamma.value(x);
        let log_g = g.ln();
        let mut jump = 0.0;
        for a in 0..d {
            let w = candidate.kernel.weight(x, a);
            jump += w * (a_kernel.weight(x, a).ln() - w.ln() - log_g);
        }
        h += mu * ((g - 1.0) + g * jump);
    }
    Ok(h)
}

/// Outcome of the variational audit of the pressure.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PressureReport {
    /// Dominant eigenvalue of `L + V`.
    pub lambda: f64,
    /// Entropy-plus-energy of the Gibbs chain; equals `lambda` up to
    /// solver accuracy.
    pub gibbs_value: f64,
    /// Number of random candidates audited.
    pub audit_count: usize,
    /// Largest entropy-plus-energy seen over the audit candidates;
    /// absent when no audits ran.
    pub best_audit: Option<f64>,
}

/// Verifies the variational principle for the pressure: the Gibbs chain
/// attains `lambda = H + int V dmu` (within `1e-9` relative), and no
/// random admissible candidate exceeds `lambda` beyond `1e-6`.
///
/// Candidate `i` draws its rate (`exp` of uniform values in `[-1, 1]`)
/// and its kernel (normalized from uniform raw values in `[-1, 1]`) from
/// the dedicated substream `seed, i + 1`.
pub fn pressure(
    a_kernel: &KernelField,
    v: &PotentialField,
    audit_count: usize,
    seed: u64,
) -> Result<PressureReport> {
    let chain = build_gibbs(a_kernel, v)?;
    let lambda = chain.solution.lambda;

    let gibbs = AdmissibleCandidate::from_gibbs(&chain);
    let gibbs_value = relative_entropy(&gibbs, a_kernel)? + gibbs.stationary.expectation(v)?;
    if (gibbs_value - lambda).abs() > 1e-9 * lambda.abs().max(1.0) {
        return Err(Error::consistency(format!(
            "pressure: Gibbs chain attains {gibbs_value}, eigenvalue is {lambda}"
        )));
    }

    let space = *a_kernel.space();
    let n = space.word_count();
    let mut best_audit: Option<f64> = None;
    for i in 0..audit_count {
        let mut rng = substream(seed, i as u64 + 1);
        let gamma_values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0f64).exp()).collect();
        let raw_values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gamma = PotentialField::new(space, gamma_values)?;
        let raw = PotentialField::new(space, raw_values)?;
        let kernel = crate::symbolic::normalize(&raw)?;
        let candidate = AdmissibleCandidate::new(gamma, kernel)?;
        let value = relative_entropy(&candidate, a_kernel)? + candidate.stationary.expectation(v)?;
        best_audit = Some(best_audit.map_or(value, |b| b.max(value)));
        if value > lambda + 1e-6 {
            return Err(Error::Property(format!(
                "pressure: candidate {i} attains {value}, exceeding eigenvalue {lambda}"
            )));
        }
    }

    Ok(PressureReport {
        lambda,
        gibbs_value,
        audit_count,
        best_audit,
    })
}
