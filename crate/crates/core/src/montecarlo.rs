//! Trajectory sampling and Monte Carlo estimators for the continuous-time
//! chains: Gillespie simulation of the word process, exact occupation
//! functionals, the log Radon-Nikodym derivative between two chains on a
//! finite horizon, estimators for the scaled cumulant generating function
//! and the entropy functional, a jump-compensator martingale check, and an
//! annealing schedule that tilts mass onto the maximizers of a potential.
//!
//! Randomness is split by [`substream`](crate::rng::substream): work item
//! `i` of an estimator draws from substream `i + 1` of the caller's seed
//! (the annealing schedule offsets by stage), so every estimate is
//! reproducible and extending the trajectory count leaves earlier
//! trajectories unchanged.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{build_gibbs, AdmissibleCandidate};
use crate::rng::substream;
use crate::symbolic::{equilibrium_measure, CylinderSpace, KernelField, Measure, PotentialField};

/// One sampled path of a jump chain on a finite horizon.
///
/// `states[0]` is the initial word and `states[j]` the word entered at
/// `jump_times[j - 1]`; jumps whose sampled target equals the current word
/// (possible whenever a word extends its own shift) are recorded like any
/// other jump. All times lie in `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: usize,
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub horizon: f64,
    pub space: CylinderSpace,
}

impl Trajectory {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len()
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("states never empty")
    }
}

/// Samples the chain with jump rate `gamma` and kernel `kernel` from `x0`
/// over `[0, horizon]`, drawing from the given generator.
///
/// Holding times use inversion (`-ln(u) / gamma`), targets a cumulative
/// scan of the kernel row, one uniform each per jump.
pub fn simulate_with_rng(
    gamma: &PotentialField,
    kernel: &KernelField,
    x0: usize,
    horizon: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Trajectory> {
    let space = *kernel.space();
    if space != *gamma.space() {
        return Err(Error::mismatch("simulate: rate and kernel spaces"));
    }
    if !(gamma.min() > 0.0) {
        return Err(Error::invalid("simulate: jump rate must be strictly positive"));
    }
    if !kernel.is_normalized() {
        return Err(Error::invalid("simulate: kernel must be normalized"));
    }
    if x0 >= space.word_count() {
        return Err(Error::invalid(format!("simulate: start word {x0} out of range")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("simulate: horizon must be finite and nonnegative"));
    }
    let d = space.alphabet();

    let mut state = x0;
    let mut t = 0.0;
    let mut jump_times = Vec::new();
    let mut states = vec![x0];
    loop {
        let mut u: f64 = rng.gen();
        if u <= 0.0 {
            u = f64::MIN_POSITIVE;
        }
        t += -u.ln() / gamma.value(state);
        if t > horizon {
            break;
        }
        let r: f64 = rng.gen();
        let mut cum = 0.0;
        let mut symbol = d - 1;
        for a in 0..d {
            cum += kernel.weight(state, a);
            if r < cum {
                symbol = a;
                break;
            }
        }
        state = space.prepend(symbol, state);
        jump_times.push(t);
        states.push(state);
    }
    Ok(Trajectory {
        initial: x0,
        jump_times,
        states,
        horizon,
        space,
    })
}

/// Samples one trajectory from the dedicated substream `seed, 1`.
pub fn simulate(
    gamma: &PotentialField,
    kernel: &KernelField,
    x0: usize,
    horizon: f64,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = substream(seed, 1);
    simulate_with_rng(gamma, kernel, x0, horizon, &mut rng)
}

/// Occupation of a trajectory: exact fraction of time spent in each word.
#[derive(Debug, Clone)]
pub struct EmpiricalMeasure {
    pub occupation: Measure,
    pub jumps: usize,
}

/// The occupation measure of a trajectory, from exact segment lengths.
pub fn empirical_measure(traj: &Trajectory) -> Result<EmpiricalMeasure> {
    if !(traj.horizon > 0.0) {
        return Err(Error::invalid(
            "empirical_measure: horizon must be positive",
        ));
    }
    let mut occ = vec![0.0; traj.space.word_count()];
    let mut prev = 0.0;
    for (j, &jt) in traj.jump_times.iter().enumerate() {
        occ[traj.states[j]] += jt - prev;
        prev = jt;
    }
    occ[traj.final_state()] += traj.horizon - prev;
    let occupation = Measure::new(traj.space, occ)?.normalized()?;
    Ok(EmpiricalMeasure {
        occupation,
        jumps: traj.jump_count(),
    })
}

/// Exact time integral `int_0^horizon f(X_s) ds` along a trajectory.
pub fn time_integral(traj: &Trajectory, f: &PotentialField) -> Result<f64> {
    if traj.space != *f.space() {
        return Err(Error::mismatch("time_integral: trajectory and field spaces"));
    }
    let mut total = 0.0;
    let mut prev = 0.0;
    for (j, &jt) in traj.jump_times.iter().enumerate() {
        total += f.value(traj.states[j]) * (jt - prev);
        prev = jt;
    }
    total += f.value(traj.final_state()) * (traj.horizon - prev);
    Ok(total)
}

/// Log Radon-Nikodym derivative `log (dP_cand / dP_base)` of the candidate
/// chain (`cand_gamma`, `cand_kernel`) with respect to the unit-rate chain
/// over `base_kernel`, evaluated on a recorded trajectory (self-jumps
/// included in both laws).
///
/// The change of measure pays `log(gamma w_cand / w_base)` at each jump,
/// evaluated at the parent word, minus `int (gamma - 1) ds` for the waiting
/// times:
///
/// * averaging `phi * exp(log_rn)` under the base chain estimates the
///   candidate expectation of `phi`;
/// * averaging `phi * exp(-log_rn)` under the candidate chain estimates
///   the base expectation.
pub fn log_rn(
    traj: &Trajectory,
    base_kernel: &KernelField,
    cand_gamma: &PotentialField,
    cand_kernel: &KernelField,
) -> Result<f64> {
    let space = &traj.space;
    if *space != *base_kernel.space()
        || *space != *cand_gamma.space()
        || *space != *cand_kernel.space()
    {
        return Err(Error::mismatch("log_rn: trajectory and chain spaces"));
    }
    if !(cand_gamma.min() > 0.0) {
        return Err(Error::invalid("log_rn: candidate rate must be positive"));
    }
    let d = space.alphabet();

    let mut integral = 0.0;
    let mut prev = 0.0;
    for (j, &jt) in traj.jump_times.iter().enumerate() {
        integral += (cand_gamma.value(traj.states[j]) - 1.0) * (jt - prev);
        prev = jt;
    }
    integral += (cand_gamma.value(traj.final_state()) - 1.0) * (traj.horizon - prev);

    let mut jumps = 0.0;
    for j in 0..traj.jump_count() {
        let parent = traj.states[j];
        let symbol = traj.states[j + 1] % d;
        jumps += cand_gamma.value(parent).ln() + cand_kernel.weight(parent, symbol).ln()
            - base_kernel.weight(parent, symbol).ln();
    }
    Ok(jumps - integral)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_measure(mu: &Measure, rng: &mut ChaCha12Rng) -> usize {
    let r: f64 = rng.gen::<f64>() * mu.total();
    let mut cum = 0.0;
    for (x, &m) in mu.masses().iter().enumerate() {
        cum += m;
        if r < cum {
            return x;
        }
    }
    mu.masses().len() - 1
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub horizon: f64,
    pub n_traj: usize,
}

/// Estimates the scaled cumulant generating function
/// `(1/T) log E[exp(int_0^T V)]` by direct simulation of the unit-rate
/// chain, started from its stationary law.
///
/// The exponential average is evaluated through a log-sum-exp shift and
/// the standard error maps the linear-scale error through the logarithm
/// (delta method). Trajectory `i` uses substream `seed, i + 1`. Note the
/// estimator is consistent as `n` grows with `T` fixed, but at fixed `n`
/// it misses mass from exponentially rare excursions, so long horizons
/// need exponentially many trajectories.
pub fn mc_scgf(
    a_kernel: &KernelField,
    v: &PotentialField,
    horizon: f64,
    n_traj: usize,
    seed: u64,
) -> Result<McEstimate> {
    let space = *a_kernel.space();
    if space != *v.space() {
        return Err(Error::mismatch("mc_scgf: kernel and potential spaces"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("mc_scgf: horizon must be positive"));
    }
    if n_traj < 2 {
        return Err(Error::invalid("mc_scgf: need at least two trajectories"));
    }
    let gamma = PotentialField::constant(space, 1.0);
    let mu = equilibrium_measure(a_kernel)?;

    let mut weights = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let mut rng = substream(seed, i as u64 + 1);
        let x0 = sample_measure(&mu, &mut rng);
        let traj = simulate_with_rng(&gamma, a_kernel, x0, horizon, &mut rng)?;
        weights.push(time_integral(&traj, v)?);
    }

    let shift = weights.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let scaled: Vec<f64> = weights.iter().map(|w| (w - shift).exp()).collect();
    let (mean, se) = mean_and_se(&scaled);
    Ok(McEstimate {
        value: (shift + mean.ln()) / horizon,
        std_error: se / (mean * horizon),
        horizon,
        n_traj,
    })
}

/// Estimates the entropy functional of an admissible chain relative to
/// the unit-rate chain over `a_kernel`: minus the time-averaged log
/// Radon-Nikodym derivative under the candidate's own law, started from
/// its stationary measure. Trajectory `i` uses substream `seed, i + 1`.
pub fn mc_entropy(
    candidate: &AdmissibleCandidate,
    a_kernel: &KernelField,
    horizon: f64,
    n_traj: usize,
    seed: u64,
) -> Result<McEstimate> {
    if candidate.space() != a_kernel.space() {
        return Err(Error::mismatch("mc_entropy: candidate and kernel spaces"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("mc_entropy: horizon must be positive"));
    }
    if n_traj < 2 {
        return Err(Error::invalid("mc_entropy: need at least two trajectories"));
    }
    let mut ratios = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let mut rng = substream(seed, i as u64 + 1);
        let x0 = sample_measure(candidate.stationary(), &mut rng);
        let traj =
            simulate_with_rng(candidate.gamma(), candidate.kernel(), x0, horizon, &mut rng)?;
        ratios.push(log_rn(&traj, a_kernel, candidate.gamma(), candidate.kernel())?);
    }
    let (mean, se) = mean_and_se(&ratios);
    Ok(McEstimate {
        value: -mean / horizon,
        std_error: se / horizon,
        horizon,
        n_traj,
    })
}

/// Jump sum versus compensator for one observable.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MartingaleReport {
    /// Mean over trajectories of `sum over jumps of g(target)`.
    pub mean_jump_sum: f64,
    /// Mean over trajectories of
    /// `int gamma(X_s) sum_a kernel(X_s, a) g(a X_s) ds`.
    pub mean_compensator: f64,
    /// `mean_jump_sum - mean_compensator`; a martingale forces this to
    /// vanish in expectation.
    pub gap: f64,
    /// Standard error of the paired per-trajectory difference.
    pub std_error: f64,
    pub horizon: f64,
    pub n_traj: usize,
}

/// Samples the candidate chain and compares the jump sum of `g` with its
/// predictable compensator, pairing both along the same trajectory. The
/// gap must stay within five standard errors. Trajectory `i` uses
/// substream `seed, i + 1`; initial states follow the stationary law.
pub fn martingale_check(
    candidate: &AdmissibleCandidate,
    g: &PotentialField,
    horizon: f64,
    n_traj: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    let space = *candidate.space();
    if space != *g.space() {
        return Err(Error::mismatch("martingale_check: candidate and observable spaces"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid("martingale_check: horizon must be positive"));
    }
    if n_traj < 2 {
        return Err(Error::invalid("martingale_check: need at least two trajectories"));
    }
    let d = space.alphabet();
    // Expected jump payoff per unit time, as a field over words.
    let intensity_values: Vec<f64> = (0..space.word_count())
        .map(|x| {
            candidate.gamma().value(x)
                * (0..d)
                    .map(|a| candidate.kernel().weight(x, a) * g.value(space.prepend(a, x)))
                    .sum::<f64>()
        })
        .collect();
    let intensity = PotentialField::new(space, intensity_values)?;

    let mut jump_sums = Vec::with_capacity(n_traj);
    let mut compensators = Vec::with_capacity(n_traj);
    let mut diffs = Vec::with_capacity(n_traj);
    for i in 0..n_traj {
        let mut rng = substream(seed, i as u64 + 1);
        let x0 = sample_measure(candidate.stationary(), &mut rng);
        let traj =
            simulate_with_rng(candidate.gamma(), candidate.kernel(), x0, horizon, &mut rng)?;
        let jump_sum: f64 = (1..traj.states.len()).map(|j| g.value(traj.states[j])).sum();
        let compensator = time_integral(&traj, &intensity)?;
        jump_sums.push(jump_sum);
        compensators.push(compensator);
        diffs.push(jump_sum - compensator);
    }
    let (mean_jump_sum, _) = mean_and_se(&jump_sums);
    let (mean_compensator, _) = mean_and_se(&compensators);
    let (gap, std_error) = mean_and_se(&diffs);
    if gap.abs() > 5.0 * std_error + 1e-12 {
        return Err(Error::Property(format!(
            "martingale gap {gap:.6e} exceeds five standard errors ({std_error:.6e})"
        )));
    }
    Ok(MartingaleReport {
        mean_jump_sum,
        mean_compensator,
        gap,
        std_error,
        horizon,
        n_traj,
    })
}

/// One stage of the annealing schedule.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnnealRow {
    pub beta: f64,
    /// Dominant eigenvalue of `L + beta V`.
    pub lambda: f64,
    /// `lambda - beta max V`, nonpositive and vanishing as `beta` grows.
    pub gap: f64,
    /// Stationary mass of the maximizer set under the Gibbs chain of
    /// `beta V`.
    pub analytic_mass: f64,
    /// Mean occupation of the maximizer set over the sampled trajectories.
    pub empirical_mass: f64,
    pub empirical_se: f64,
}

/// Annealing over an increasing inverse-temperature ladder.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnnealReport {
    /// Words attaining the maximum of the potential.
    pub argmax: Vec<usize>,
    /// Whether the maximizer is non-unique.
    pub degenerate: bool,
    pub rows: Vec<AnnealRow>,
}

/// Follows the Gibbs chains of `beta V` along an increasing ladder of
/// `beta`, reporting how the stationary mass concentrates on the
/// maximizers of `V`, with a matched Monte Carlo occupation estimate per
/// stage. The analytic mass must be nondecreasing along the ladder and
/// each empirical estimate must stay within five standard errors of it.
/// Stage `s`, trajectory `i` uses substream `seed, s * n_traj + i + 1`.
pub fn anneal(
    a_kernel: &KernelField,
    v: &PotentialField,
    betas: &[f64],
    t_per_stage: f64,
    n_traj: usize,
    seed: u64,
) -> Result<AnnealReport> {
    let space = *a_kernel.space();
    if space != *v.space() {
        return Err(Error::mismatch("anneal: kernel and potential spaces"));
    }
    if betas.is_empty() {
        return Err(Error::invalid("anneal: need at least one beta"));
    }
    if betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("anneal: betas must be strictly increasing"));
    }
    if !(betas[0] >= 0.0) {
        return Err(Error::invalid("anneal: betas must be nonnegative"));
    }
    if !(t_per_stage > 0.0) {
        return Err(Error::invalid("anneal: stage horizon must be positive"));
    }
    if n_traj < 2 {
        return Err(Error::invalid("anneal: need at least two trajectories"));
    }

    let max_v = v.max();
    let argmax: Vec<usize> = (0..space.word_count())
        .filter(|&x| v.value(x) >= max_v - 1e-12)
        .collect();
    let degenerate = argmax.len() > 1;

    let mut rows = Vec::with_capacity(betas.len());
    let mut prev_mass = f64::NEG_INFINITY;
    for (s, &beta) in betas.iter().enumerate() {
        let tilted = v.affine(beta, 0.0);
        let chain = build_gibbs(a_kernel, &tilted)?;
        let lambda = chain.solution().lambda;
        let gap = lambda - beta * max_v;
        if gap > 1e-10 {
            return Err(Error::Property(format!(
                "anneal: eigenvalue exceeds beta max V by {gap:.3e} at beta {beta}"
            )));
        }
        let analytic_mass: f64 = argmax.iter().map(|&x| chain.stationary().value(x)).sum();
        if analytic_mass < prev_mass - 1e-10 {
            return Err(Error::Property(format!(
                "anneal: maximizer mass fell from {prev_mass} to {analytic_mass} at beta {beta}"
            )));
        }
        prev_mass = analytic_mass;

        let mut fractions = Vec::with_capacity(n_traj);
        for i in 0..n_traj {
            let mut rng = substream(seed, (s * n_traj + i) as u64 + 1);
            let x0 = sample_measure(chain.stationary(), &mut rng);
            let traj = simulate_with_rng(
                chain.gamma(),
                chain.kernel(),
                x0,
                t_per_stage,
                &mut rng,
            )?;
            let emp = empirical_measure(&traj)?;
            fractions.push(argmax.iter().map(|&x| emp.occupation.value(x)).sum::<f64>());
        }
        let (empirical_mass, empirical_se) = mean_and_se(&fractions);
        if (empirical_mass - analytic_mass).abs() > 5.0 * empirical_se + 1e-12 {
            return Err(Error::Property(format!(
                "anneal: empirical mass {empirical_mass:.6} vs analytic {analytic_mass:.6} \
                 beyond five standard errors at beta {beta}"
            )));
        }

        rows.push(AnnealRow {
            beta,
            lambda,
            gap,
            analytic_mass,
            empirical_mass,
            empirical_se,
        });
    }

    Ok(AnnealReport {
        argmax,
        degenerate,
        rows,
    })
}
