//! Level-two large deviations of the empirical measure: the scaled
//! cumulant generating function `Q(V) = lambda(V)` and the rate function
//! `I`, evaluated by two independent routes.
//!
//! * Primal: `I(nu) = -inf over positive u of int (L u / u) dnu`. With
//!   `u = exp(g)` the objective is smooth and convex in `g`, its Hessian
//!   is a weighted graph Laplacian over the jump edges, and the infimum is
//!   found by a damped Newton method. `I >= 0` comes for free because
//!   `g = 0` gives objective zero.
//! * Dual: `I(nu) = sup over V of (int V dnu - Q(V))`. The gradient of
//!   the objective is `nu` minus the Gibbs stationary law of `V`, which is
//!   available in closed form from the dominant eigendata, so ascent
//!   steps are exact; the Hessian is differenced numerically. When the
//!   supremum is not attained (e.g. `nu` charges a null pattern) the
//!   maximizing sequence runs off to infinity; the solver reports
//!   `attained = false` once the potential leaves a fixed box.
//!
//! Both routes gauge out the additive constant (`g(0) = 0`, `V(0) = 0`),
//! which the objectives do not see.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, DenseMatrix};
use crate::rng::substream;
use crate::semigroup::perron_solve;
use crate::symbolic::{KernelField, Measure, PotentialField};

/// Box beyond which the dual ascent declares the supremum unattained.
const POTENTIAL_BOX: f64 = 30.0;

/// Largest Newton step (sup norm) accepted by the dual ascent.
const DUAL_STEP_CAP: f64 = 5.0;

/// Step size for the differenced dual Hessian.
const DUAL_HESSIAN_EPS: f64 = 1e-5;

const MAX_OPT_ITER: usize = 10_000;

/// Gradient norm always accepted at an iteration-cap or line-search exit.
///
/// Near the optimum the per-step objective gain is of order
/// `|grad|^2 / curvature`, which falls below the double-precision
/// resolution of the objective well before the gradient reaches the
/// tightest tolerances a caller may request; the backtracking search can
/// then no longer certify progress. A gradient at this scale contributes
/// `O(|grad|^2)` error to the reported value, far inside every tolerance
/// used downstream.
const GRAD_FLOOR: f64 = 1e-8;

/// Scaled cumulant generating function of the occupation measure:
/// `Q(V)` is the dominant eigenvalue of `L + V` for the unit-rate chain.
pub fn scgf(a_kernel: &KernelField, v: &PotentialField) -> Result<f64> {
    let rate = PotentialField::constant(*a_kernel.space(), 1.0);
    Ok(perron_solve(a_kernel, &rate, v)?.lambda)
}

/// Worst margins seen while spot-checking `Q`.
#[derive(Debug, Clone, Copy)]
pub struct ScgfPropertiesReport {
    pub trials: usize,
    /// `|Q(V) - Q(U)| - sup|V - U|`, at most zero up to solver accuracy.
    pub worst_lipschitz_margin: f64,
    /// `Q(tV + (1-t)U) - t Q(V) - (1-t) Q(U)`, at most zero up to solver
    /// accuracy.
    pub worst_convexity_margin: f64,
}

/// Samples potential pairs and verifies that `Q` is a sup-norm contraction
/// and convex along segments; trial `i` draws from substream `seed, i + 1`.
pub fn scgf_properties_check(
    a_kernel: &KernelField,
    trials: usize,
    seed: u64,
) -> Result<ScgfPropertiesReport> {
    let space = *a_kernel.space();
    let n = space.word_count();
    let mut worst_lip = f64::NEG_INFINITY;
    let mut worst_convex = f64::NEG_INFINITY;
    for i in 0..trials {
        let mut rng = substream(seed, i as u64 + 1);
        let v_vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let u_vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v = PotentialField::new(space, v_vals)?;
        let u = PotentialField::new(space, u_vals)?;
        let qv = scgf(a_kernel, &v)?;
        let qu = scgf(a_kernel, &u)?;

        let lip = (qv - qu).abs() - v.sup_distance(&u);
        worst_lip = worst_lip.max(lip);
        if lip > 1e-10 {
            return Err(Error::Property(format!(
                "scgf breaks the sup-norm contraction by {lip:.3e} on trial {i}"
            )));
        }

        for &t in &[0.25, 0.5, 0.75] {
            let mix = v.affine(t, 0.0).plus(&u.affine(1.0 - t, 0.0))?;
            let qm = scgf(a_kernel, &mix)?;
            let margin = qm - (t * qv + (1.0 - t) * qu);
            worst_convex = worst_convex.max(margin);
            if margin > 1e-10 {
                return Err(Error::Property(format!(
                    "scgf breaks convexity by {margin:.3e} on trial {i} at t = {t}"
                )));
            }
        }
    }
    Ok(ScgfPropertiesReport {
        trials,
        worst_lipschitz_margin: worst_lip,
        worst_convexity_margin: worst_convex,
    })
}

/// Which formulation produced a rate-function value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Primal,
    Dual,
}

/// Value of the rate function at a measure, with solver diagnostics.
#[derive(Debug, Clone)]
pub struct RateFunctionResult {
    pub value: f64,
    pub route: Route,
    /// Optimizer, gauged to vanish at word zero: the maximizing potential
    /// for the dual route, the exponent of the minimizing test function
    /// for the primal route.
    pub potential: Option<PotentialField>,
    pub iterations: usize,
    /// Sup norm of the objective gradient at termination; at most `1e-8`
    /// whenever the optimum is attained, and usually at the requested
    /// tolerance.
    pub gradient_norm: f64,
    /// Whether the optimum was reached inside the search region. The dual
    /// supremum is genuinely unattained when the measure charges patterns
    /// the chain visits too rarely; the maximizing sequence then escapes
    /// the box and the value is reported as a (sharp) lower bound.
    pub attained: bool,
}

struct Edge {
    from: usize,
    to: usize,
    coeff: f64,
}

/// Evaluates the rate function by the primal formulation.
///
/// Minimizes `phi(g) = sum over edges nu(x) w(x, a) exp(g(ax) - g(x)) - 1`
/// (self-edges contribute constants) by damped Newton with a ridge ladder
/// on the Laplacian Hessian; `I(nu) = -min phi >= 0` since `phi(0) = 0`.
/// The analytic gradient is verified against central differences before
/// the first step.
pub fn rate_primal(
    a_kernel: &KernelField,
    nu: &Measure,
    grad_tol: f64,
) -> Result<RateFunctionResult> {
    let space = *a_kernel.space();
    if space != *nu.space() {
        return Err(Error::mismatch("rate_primal: kernel and measure spaces"));
    }
    if !nu.is_probability() {
        return Err(Error::invalid("rate_primal expects a probability measure"));
    }
    if !(grad_tol > 0.0) {
        return Err(Error::invalid("rate_primal: gradient tolerance must be positive"));
    }
    let n = space.word_count();
    let d = space.alphabet();

    let mut edges = Vec::new();
    let mut constant = -1.0;
    for x in 0..n {
        if nu.value(x) == 0.0 {
            continue;
        }
        for a in 0..d {
            let y = space.prepend(a, x);
            let coeff = nu.value(x) * a_kernel.weight(x, a);
            if y == x {
                constant += coeff;
            } else {
                edges.push(Edge { from: x, to: y, coeff });
            }
        }
    }

    let phi = |g: &[f64]| -> f64 {
        constant
            + edges
                .iter()
                .map(|e| e.coeff * (g[e.to] - g[e.from]).exp())
                .sum::<f64>()
    };
    let gradient = |g: &[f64]| -> Vec<f64> {
        let mut grad = vec![0.0; n];
        for e in &edges {
            let flow = e.coeff * (g[e.to] - g[e.from]).exp();
            grad[e.to] += flow;
            grad[e.from] -= flow;
        }
        grad
    };

    // The analytic gradient must match central differences at the start.
    {
        let g0 = vec![0.0; n];
        let analytic = gradient(&g0);
        let eps = 1e-6;
        for y in 0..n {
            let mut gp = g0.clone();
            let mut gm = g0.clone();
            gp[y] += eps;
            gm[y] -= eps;
            let fd = (phi(&gp) - phi(&gm)) / (2.0 * eps);
            if (fd - analytic[y]).abs() > 1e-6 * analytic[y].abs().max(1.0) {
                return Err(Error::consistency(format!(
                    "rate_primal gradient check failed at word {y}: {fd} vs {}",
                    analytic[y]
                )));
            }
        }
    }

    let mut g = vec![0.0; n];
    let mut value = phi(&g);
    let mut iterations = 0;
    let mut grad = gradient(&g);
    loop {
        let grad_norm = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if grad_norm <= grad_tol {
            break;
        }
        iterations += 1;
        if iterations > MAX_OPT_ITER {
            if grad_norm <= grad_tol.max(GRAD_FLOOR) {
                break;
            }
            return Err(Error::NoConvergence {
                context: "rate_primal".to_string(),
                iterations,
                residual: grad_norm,
            });
        }

        // Laplacian Hessian over the current edge flows.
        let mut hess = DenseMatrix::zeros(n);
        for e in &edges {
            let flow = e.coeff * (g[e.to] - g[e.from]).exp();
            hess.add_to(e.to, e.to, flow);
            hess.add_to(e.from, e.from, flow);
            hess.add_to(e.to, e.from, -flow);
            hess.add_to(e.from, e.to, -flow);
        }
        // Gauge g(0) = 0: drop the first row and column.
        let reduced = DenseMatrix::from_fn(n - 1, |i, j| hess.get(i + 1, j + 1));
        let rhs: Vec<f64> = grad[1..].to_vec();
        let diag_scale = (0..n - 1)
            .map(|i| reduced.get(i, i))
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut direction = None;
        for exp10 in [-14.0f64, -12.0, -10.0, -8.0, -6.0, -4.0, -2.0] {
            if let Some(step) = cholesky_solve(&reduced, &rhs, diag_scale * 10f64.powf(exp10)) {
                direction = Some(step);
                break;
            }
        }
        let dir: Vec<f64> = match direction {
            Some(step) => {
                let mut dir = vec![0.0; n];
                for (i, s) in step.into_iter().enumerate() {
                    dir[i + 1] = -s;
                }
                dir
            }
            None => grad.iter().map(|x| -x).collect(),
        };

        let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let (dir, slope) = if slope < 0.0 {
            (dir, slope)
        } else {
            // A poorly conditioned solve can fail to give descent; fall
            // back to the negative gradient.
            let dir: Vec<f64> = grad.iter().map(|x| -x).collect();
            let slope = -grad.iter().map(|x| x * x).sum::<f64>();
            (dir, slope)
        };

        let mut t = 1.0;
        let mut stepped = false;
        while t > 1e-12 {
            let trial: Vec<f64> = g.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let trial_value = phi(&trial);
            if trial_value.is_finite() && trial_value <= value + 0.3 * t * slope {
                g = trial;
                value = trial_value;
                grad = gradient(&g);
                stepped = true;
                break;
            }
            t *= 0.5;
        }
        if !stepped {
            let grad_norm = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if grad_norm <= grad_tol.max(GRAD_FLOOR) {
                break;
            }
            return Err(Error::NoConvergence {
                context: "rate_primal line search".to_string(),
                iterations,
                residual: grad_norm,
            });
        }
    }

    let gradient_norm = grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let potential = PotentialField::new(space, g)?;
    Ok(RateFunctionResult {
        value: -value,
        route: Route::Primal,
        potential: Some(potential),
        iterations,
        gradient_norm,
        attained: true,
    })
}

/// Gibbs stationary law of `V`, straight from the dominant eigendata.
fn gibbs_stationary_fast(a_kernel: &KernelField, v: &PotentialField) -> Result<(f64, Measure)> {
    let rate = PotentialField::constant(*a_kernel.space(), 1.0);
    let sol = perron_solve(a_kernel, &rate, v)?;
    let masses: Vec<f64> = sol
        .eigenfunction
        .values()
        .iter()
        .zip(sol.eigenprobability.masses())
        .map(|(f, nu)| f * nu)
        .collect();
    let mu = Measure::new(*a_kernel.space(), masses)?.normalized()?;
    Ok((sol.lambda, mu))
}

/// Evaluates the rate function by the dual formulation, starting the
/// ascent from `V = 0`.
pub fn rate_dual(a_kernel: &KernelField, nu: &Measure, grad_tol: f64) -> Result<RateFunctionResult> {
    let v0 = PotentialField::zero(*a_kernel.space());
    rate_dual_from(a_kernel, nu, &v0, grad_tol)
}

/// Evaluates the rate function by the dual formulation
/// `I(nu) = sup over V of (int V dnu - Q(V))`, starting from `v0`.
///
/// The objective's gradient is `nu - mu(V)` with `mu(V)` the Gibbs
/// stationary law, so stationarity means `nu` is exactly the Gibbs law of
/// the maximizer; that identity (total variation within `1e-8`) is
/// enforced whenever the maximum is reported as attained.
pub fn rate_dual_from(
    a_kernel: &KernelField,
    nu: &Measure,
    v0: &PotentialField,
    grad_tol: f64,
) -> Result<RateFunctionResult> {
    let space = *a_kernel.space();
    if space != *nu.space() {
        return Err(Error::mismatch("rate_dual: kernel and measure spaces"));
    }
    if space != *v0.space() {
        return Err(Error::mismatch("rate_dual: kernel and start spaces"));
    }
    if !nu.is_probability() {
        return Err(Error::invalid("rate_dual expects a probability measure"));
    }
    if !(grad_tol > 0.0) {
        return Err(Error::invalid("rate_dual: gradient tolerance must be positive"));
    }
    let n = space.word_count();

    // Gauge the start at word zero.
    let mut v: Vec<f64> = v0.values().iter().map(|x| x - v0.value(0)).collect();

    let objective = |vals: &[f64]| -> Result<(f64, Vec<f64>)> {
        let field = PotentialField::new(space, vals.to_vec())?;
        let (lambda, mu) = gibbs_stationary_fast(a_kernel, &field)?;
        let energy: f64 = vals
            .iter()
            .zip(nu.masses())
            .map(|(v, m)| v * m)
            .sum();
        let grad: Vec<f64> = (0..n).map(|y| nu.value(y) - mu.value(y)).collect();
        Ok((energy - lambda, grad))
    };

    let (mut value, mut grad) = objective(&v)?;
    let mut iterations = 0;
    let mut attained = true;
    loop {
        let grad_norm = grad[1..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if grad_norm <= grad_tol {
            break;
        }
        let sup_v = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if sup_v > POTENTIAL_BOX {
            attained = false;
            break;
        }
        iterations += 1;
        if iterations > MAX_OPT_ITER {
            if grad_norm <= grad_tol.max(GRAD_FLOOR) {
                break;
            }
            return Err(Error::NoConvergence {
                context: "rate_dual".to_string(),
                iterations,
                residual: grad_norm,
            });
        }

        // Differenced Hessian of the objective on the gauged coordinates.
        let mut hess = DenseMatrix::zeros(n - 1);
        for j in 1..n {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[j] += DUAL_HESSIAN_EPS;
            vm[j] -= DUAL_HESSIAN_EPS;
            let (_, gp) = objective(&vp)?;
            let (_, gm) = objective(&vm)?;
            for i in 1..n {
                hess.add_to(i - 1, j - 1, (gp[i] - gm[i]) / (2.0 * DUAL_HESSIAN_EPS));
            }
        }
        // Symmetrize and negate: the objective is concave.
        let neg_sym = DenseMatrix::from_fn(n - 1, |i, j| {
            -0.5 * (hess.get(i, j) + hess.get(j, i))
        });
        let rhs: Vec<f64> = grad[1..].to_vec();
        let diag_scale = (0..n - 1)
            .map(|i| neg_sym.get(i, i))
            .fold(0.0f64, f64::max)
            .max(1e-300);
        let mut direction = None;
        for exp10 in [-14.0f64, -12.0, -10.0, -8.0, -6.0, -4.0, -2.0] {
            if let Some(step) = cholesky_solve(&neg_sym, &rhs, diag_scale * 10f64.powf(exp10)) {
                direction = Some(step);
                break;
            }
        }
        let mut dir = vec![0.0; n];
        match direction {
            Some(step) => {
                for (i, s) in step.into_iter().enumerate() {
                    dir[i + 1] = s;
                }
            }
            None => {
                for i in 1..n {
                    dir[i] = grad[i];
                }
            }
        }
        let dir_sup = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if dir_sup > DUAL_STEP_CAP {
            let scale = DUAL_STEP_CAP / dir_sup;
            for x in dir.iter_mut() {
                *x *= scale;
            }
        }

        let mut slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        if slope <= 0.0 {
            for i in 1..n {
                dir[i] = grad[i];
            }
            dir[0] = 0.0;
            slope = grad[1..].iter().map(|x| x * x).sum::<f64>();
        }

        let mut t = 1.0;
        let mut stepped = false;
        while t > 1e-12 {
            let trial: Vec<f64> = v.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            match objective(&trial) {
                Ok((trial_value, trial_grad)) if trial_value >= value + 0.1 * t * slope => {
                    v = trial;
                    value = trial_value;
                    grad = trial_grad;
                    stepped = true;
                    break;
                }
                _ => t *= 0.5,
            }
        }
        if !stepped {
            break;
        }
    }

    let gradient_norm = grad[1..].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if attained && gradient_norm > grad_tol.max(GRAD_FLOOR) {
        return Err(Error::NoConvergence {
            context: "rate_dual line search".to_string(),
            iterations,
            residual: gradient_norm,
        });
    }
    let potential = PotentialField::new(space, v.clone())?;
    if attained {
        let (_, mu) = gibbs_stationary_fast(a_kernel, &potential)?;
        let tv = mu.tv_distance(nu);
        if tv > 1e-8 {
            return Err(Error::consistency(format!(
                "rate_dual: maximizer's Gibbs law misses the target by tv {tv:.3e}"
            )));
        }
    }
    Ok(RateFunctionResult {
        value,
        route: Route::Dual,
        potential: Some(potential),
        iterations,
        gradient_norm,
        attained,
    })
}

/// Gibbs equilibrium against its own rate function.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumIdentityReport {
    pub lambda: f64,
    /// `int V` under the Gibbs stationary law.
    pub energy: f64,
    /// Rate-function value at the Gibbs stationary law (dual route).
    pub rate_value: f64,
    /// `|lambda - (energy - rate_value)|`.
    pub identity_gap: f64,
    /// Spread of the dual values across random restarts.
    pub value_spread: f64,
    /// Largest total-variation gap between the maximizing measures reached
    /// from random restarts and the one from the default start.
    pub measure_spread: f64,
    /// Largest primal/dual disagreement observed.
    pub route_gap: f64,
}

/// Checks `Q(V) = int V dmu - I(mu)` at the Gibbs stationary law `mu` of
/// `V`, evaluating `I` by both routes and restarting the dual ascent from
/// random potentials drawn from substreams of `seed`.
pub fn equilibrium_identity_check(
    a_kernel: &KernelField,
    v: &PotentialField,
    restarts: usize,
    seed: u64,
) -> Result<EquilibriumIdentityReport> {
    let space = *a_kernel.space();
    let rate = PotentialField::constant(space, 1.0);
    let sol = perron_solve(a_kernel, &rate, v)?;
    let lambda = sol.lambda;
    let masses: Vec<f64> = sol
        .eigenfunction
        .values()
        .iter()
        .zip(sol.eigenprobability.masses())
        .map(|(f, nu)| f * nu)
        .collect();
    let mu = Measure::new(space, masses)?.normalized()?;
    let energy = mu.expectation(v)?;

    let dual = rate_dual(a_kernel, &mu, 1e-10)?;
    if !dual.attained {
        return Err(Error::consistency(
            "equilibrium identity: dual supremum not attained at the Gibbs law".to_string(),
        ));
    }
    let primal = rate_primal(a_kernel, &mu, 1e-10)?;
    let route_gap = (dual.value - primal.value).abs();
    if route_gap > 1e-7 {
        return Err(Error::consistency(format!(
            "equilibrium identity: primal and dual rates disagree by {route_gap:.3e}"
        )));
    }

    let identity_gap = (lambda - (energy - dual.value)).abs();
    if identity_gap > 1e-7 * lambda.abs().max(1.0) {
        return Err(Error::consistency(format!(
            "equilibrium identity violated by {identity_gap:.3e}"
        )));
    }

    let reached = |result: &RateFunctionResult| -> Result<Measure> {
        let potential = result
            .potential
            .as_ref()
            .ok_or_else(|| Error::consistency("dual result lacks a potential".to_string()))?;
        Ok(gibbs_stationary_fast(a_kernel, potential)?.1)
    };
    let base_measure = reached(&dual)?;

    let n = space.word_count();
    let mut value_spread: f64 = 0.0;
    let mut measure_spread: f64 = 0.0;
    for i in 0..restarts {
        let mut rng = substream(seed, i as u64 + 1);
        let start: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v0 = PotentialField::new(space, start)?;
        let restarted = rate_dual_from(a_kernel, &mu, &v0, 1e-10)?;
        value_spread = value_spread.max((restarted.value - dual.value).abs());
        measure_spread = measure_spread.max(base_measure.tv_distance(&reached(&restarted)?));
        if value_spread > 1e-7 {
            return Err(Error::consistency(format!(
                "equilibrium identity: dual restarts spread by {value_spread:.3e}"
            )));
        }
        if measure_spread > 1e-7 {
            return Err(Error::consistency(format!(
                "equilibrium identity: maximizing measures spread by {measure_spread:.3e}"
            )));
        }
    }

    Ok(EquilibriumIdentityReport {
        lambda,
        energy,
        rate_value: dual.value,
        identity_gap,
        value_spread,
        measure_spread,
        route_gap,
    })
}
