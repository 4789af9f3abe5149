//! Command dispatch: each command reads the shared configuration, runs
//! one experiment, and writes its documents into the output directory.
//!
//! Every emitted JSON document re-parses to equal values, and identical
//! configurations with identical seeds produce byte-identical files; the
//! resolved configuration itself is echoed as `config.json` so the
//! output directory is self-describing.

use std::fs;
use std::path::{Path, PathBuf};

use ctgibbs::rng::substream;
use ctgibbs::{
    anneal, build_gibbs, eigen_equation_check, empirical_measure, martingale_check, mc_entropy,
    mc_scgf, perron_solve, pressure, rate_dual, rate_primal, relative_entropy, simulate,
    AnnealReport, KernelField, Measure, PotentialField, PressureReport, RateFunctionResult,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{
    build_base_kernel, build_candidate, build_nu, build_space, build_v, expand_potential,
    validate, Estimator, ExperimentConfig, Severity,
};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Gibbs,
    Entropy,
    PressureAudit,
    Rate,
    Simulate,
    Mc,
    Anneal,
}

/// What a run produced: a one-line summary and the files written.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: String,
    pub files: Vec<PathBuf>,
}

/// Dominant eigendata of `L + V` for the unit-rate chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDoc {
    pub lambda: f64,
    pub eigenfunction: Vec<f64>,
    pub eigenmeasure: Vec<f64>,
    pub residual_right: f64,
    pub residual_left: f64,
    pub min_max_ratio: f64,
    pub iterations: usize,
    /// Worst pointwise defect of the eigenvalue equation.
    pub eigen_check: f64,
}

/// The tilted chain of a potential: rates, kernel, stationary law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsDoc {
    pub lambda: f64,
    pub gamma: Vec<f64>,
    /// Row-stochastic jump weights in `(word, symbol)` order.
    pub kernel: Vec<f64>,
    pub stationary: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDoc {
    /// Entropy of the candidate chain relative to the base chain.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRouteDoc {
    pub value: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub attained: bool,
}

impl From<&RateFunctionResult> for RateRouteDoc {
    fn from(r: &RateFunctionResult) -> Self {
        RateRouteDoc {
            value: r.value,
            iterations: r.iterations,
            gradient_norm: r.gradient_norm,
            attained: r.attained,
        }
    }
}

/// Rate function at one target measure, by both routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePointDoc {
    /// First-word mass when the point came from a `q` grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub nu: Vec<f64>,
    pub primal: RateRouteDoc,
    pub dual: RateRouteDoc,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDoc {
    pub grad_tol: f64,
    pub points: Vec<RatePointDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateDoc {
    pub initial: usize,
    pub final_word: usize,
    pub jumps: usize,
    pub horizon: f64,
    /// Fraction of time spent in each word.
    pub occupation: Vec<f64>,
}

/// Monte Carlo report, tagged by estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "estimator", rename_all = "snake_case")]
pub enum McDoc {
    Scgf {
        value: f64,
        std_error: f64,
        horizon: f64,
        n_traj: usize,
    },
    Entropy {
        value: f64,
        std_error: f64,
        horizon: f64,
        n_traj: usize,
    },
    Martingale {
        mean_jump_sum: f64,
        mean_compensator: f64,
        gap: f64,
        std_error: f64,
        horizon: f64,
        n_traj: usize,
    },
}

/// Runs one command against the configuration, writing all artifacts
/// under `out_dir` (created if missing).
pub fn run(command: Command, config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput, CliError> {
    let diags = validate(config);
    if diags.iter().any(|d| d.severity == Severity::Error) {
        return Err(CliError::Invalid(diags));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::io(format!("creating {}", out_dir.display()), e))?;

    let space = build_space(config)?;
    let a_kernel = build_base_kernel(space, config)?;
    let mut files = Vec::new();
    write_json(out_dir.join("config.json"), config, &mut files)?;

    let summary = match command {
        Command::Solve => {
            let v = build_v(space, config)?;
            let rate = PotentialField::constant(space, 1.0);
            let sol = perron_solve(&a_kernel, &rate, &v)?;
            let eigen_check = eigen_equation_check(&sol, &a_kernel, &v)?;
            let doc = SolveDoc {
                lambda: sol.lambda,
                eigenfunction: sol.eigenfunction.values().to_vec(),
                eigenmeasure: sol.eigenprobability.masses().to_vec(),
                residual_right: sol.residual_right,
                residual_left: sol.residual_left,
                min_max_ratio: sol.min_max_ratio,
                iterations: sol.iterations,
                eigen_check,
            };
            write_json(out_dir.join("solve.json"), &doc, &mut files)?;
            format!("lambda = {}", doc.lambda)
        }
        Command::Gibbs => {
            let v = build_v(space, config)?;
            let chain = build_gibbs(&a_kernel, &v)?;
            let doc = GibbsDoc {
                lambda: chain.solution().lambda,
                gamma: chain.gamma().values().to_vec(),
                kernel: kernel_table(chain.kernel()),
                stationary: chain.stationary().masses().to_vec(),
            };
            write_json(out_dir.join("gibbs.json"), &doc, &mut files)?;
            format!("lambda = {}", doc.lambda)
        }
        Command::Entropy => {
            let candidate = require_candidate(config, space, "entropy")?;
            let doc = EntropyDoc {
                entropy: relative_entropy(&candidate, &a_kernel)?,
            };
            write_json(out_dir.join("entropy.json"), &doc, &mut files)?;
            format!("entropy = {}", doc.entropy)
        }
        Command::PressureAudit => {
            let v = build_v(space, config)?;
            let audit_count = config.params.audit_count.unwrap_or(0);
            let report: PressureReport = pressure(&a_kernel, &v, audit_count, config.seed)?;
            write_json(out_dir.join("pressure_audit.json"), &report, &mut files)?;
            match report.best_audit {
                Some(best) => format!(
                    "lambda = {}, gibbs value = {}, best of {} audits = {}",
                    report.lambda, report.gibbs_value, report.audit_count, best
                ),
                None => format!(
                    "lambda = {}, gibbs value = {}, no audits",
                    report.lambda, report.gibbs_value
                ),
            }
        }
        Command::Rate => {
            let grad_tol = config.params.grad_tol.unwrap_or(1e-10);
            let mut points = Vec::new();
            match (&config.params.nu, &config.params.q_grid) {
                (Some(masses), None) => {
                    let nu = build_nu(space, masses)?;
                    points.push(rate_point(&a_kernel, &nu, None, grad_tol)?);
                }
                (None, Some(grid)) => {
                    for &q in grid {
                        let nu = Measure::new(space, vec![q, 1.0 - q])?;
                        points.push(rate_point(&a_kernel, &nu, Some(q), grad_tol)?);
                    }
                }
                _ => {
                    return Err(CliError::usage(
                        "params.nu",
                        "the rate command needs exactly one of nu or q_grid",
                    ));
                }
            }
            let worst_gap = points.iter().fold(0.0f64, |m, p| m.max(p.gap));
            let with_grid = points.iter().any(|p| p.q.is_some());
            let doc = RateDoc { grad_tol, points };
            write_json(out_dir.join("rate.json"), &doc, &mut files)?;
            if with_grid {
                let mut csv = String::from("q,primal,dual,gap,dual_attained\n");
                for p in &doc.points {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        p.q.unwrap(),
                        p.primal.value,
                        p.dual.value,
                        p.gap,
                        p.dual.attained
                    ));
                }
                write_text(out_dir.join("rate.csv"), &csv, &mut files)?;
            }
            format!(
                "points = {}, max |primal - dual| = {:.3e}",
                doc.points.len(),
                worst_gap
            )
        }
        Command::Simulate => {
            let t = require_t(config)?;
            let v = build_v(space, config)?;
            let chain = build_gibbs(&a_kernel, &v)?;
            let x0 = match config.params.x0 {
                Some(x) => x,
                None => sample_word(chain.stationary(), config.seed),
            };
            let traj = simulate(chain.gamma(), chain.kernel(), x0, t, config.seed)?;
            let emp = empirical_measure(&traj)?;
            let doc = SimulateDoc {
                initial: traj.initial,
                final_word: traj.final_state(),
                jumps: traj.jump_count(),
                horizon: t,
                occupation: emp.occupation.masses().to_vec(),
            };
            write_json(out_dir.join("simulate.json"), &doc, &mut files)?;
            let mut csv = String::from("time,word\n");
            csv.push_str(&format!("0,{}\n", traj.initial));
            for (j, &time) in traj.jump_times.iter().enumerate() {
                csv.push_str(&format!("{},{}\n", time, traj.states[j + 1]));
            }
            write_text(out_dir.join("trajectory.csv"), &csv, &mut files)?;
            format!("jumps = {}, final word = {}", doc.jumps, doc.final_word)
        }
        Command::Mc => {
            let estimator = config.params.estimator.ok_or_else(|| {
                CliError::usage("params.estimator", "the mc command needs an estimator")
            })?;
            let t = require_t(config)?;
            let n_traj = require_n_traj(config)?;
            let doc = match estimator {
                Estimator::Scgf => {
                    let v = build_v(space, config)?;
                    let est = mc_scgf(&a_kernel, &v, t, n_traj, config.seed)?;
                    McDoc::Scgf {
                        value: est.value,
                        std_error: est.std_error,
                        horizon: est.horizon,
                        n_traj: est.n_traj,
                    }
                }
                Estimator::Entropy => {
                    let candidate = require_candidate(config, space, "mc")?;
                    let est = mc_entropy(&candidate, &a_kernel, t, n_traj, config.seed)?;
                    McDoc::Entropy {
                        value: est.value,
                        std_error: est.std_error,
                        horizon: est.horizon,
                        n_traj: est.n_traj,
                    }
                }
                Estimator::Martingale => {
                    let candidate = require_candidate(config, space, "mc")?;
                    let g_spec = config.g.as_ref().ok_or_else(|| {
                        CliError::usage("g", "the martingale estimator needs an observable g")
                    })?;
                    let g = expand_potential(space, g_spec, "g")?;
                    let report = martingale_check(&candidate, &g, t, n_traj, config.seed)?;
                    McDoc::Martingale {
                        mean_jump_sum: report.mean_jump_sum,
                        mean_compensator: report.mean_compensator,
                        gap: report.gap,
                        std_error: report.std_error,
                        horizon: report.horizon,
                        n_traj: report.n_traj,
                    }
                }
            };
            write_json(out_dir.join("mc.json"), &doc, &mut files)?;
            match &doc {
                McDoc::Scgf { value, std_error, .. } | McDoc::Entropy { value, std_error, .. } => {
                    format!("estimate = {value} (se {std_error})")
                }
                McDoc::Martingale { gap, std_error, .. } => {
                    format!("gap = {gap} (se {std_error})")
                }
            }
        }
        Command::Anneal => {
            let betas = config.params.betas.as_ref().ok_or_else(|| {
                CliError::usage("params.betas", "the anneal command needs a beta ladder")
            })?;
            let t = require_t(config)?;
            let n_traj = require_n_traj(config)?;
            let v = build_v(space, config)?;
            let report: AnnealReport = anneal(&a_kernel, &v, betas, t, n_traj, config.seed)?;
            write_json(out_dir.join("anneal.json"), &report, &mut files)?;
            let mut csv =
                String::from("beta,lambda,gap,analytic_mass,empirical_mass,empirical_se\n");
            for row in &report.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.beta,
                    row.lambda,
                    row.gap,
                    row.analytic_mass,
                    row.empirical_mass,
                    row.empirical_se
                ));
            }
            write_text(out_dir.join("anneal.csv"), &csv, &mut files)?;
            let last = report.rows.last().expect("validated ladder is nonempty");
            format!(
                "stages = {}, final analytic mass = {}",
                report.rows.len(),
                last.analytic_mass
            )
        }
    };

    Ok(RunOutput { summary, files })
}

fn rate_point(
    a_kernel: &KernelField,
    nu: &Measure,
    q: Option<f64>,
    grad_tol: f64,
) -> Result<RatePointDoc, CliError> {
    let primal = rate_primal(a_kernel, nu, grad_tol)?;
    let dual = rate_dual(a_kernel, nu, grad_tol)?;
    let gap = (primal.value - dual.value).abs();
    Ok(RatePointDoc {
        q,
        nu: nu.masses().to_vec(),
        primal: RateRouteDoc::from(&primal),
        dual: RateRouteDoc::from(&dual),
        gap,
    })
}

fn require_t(config: &ExperimentConfig) -> Result<f64, CliError> {
    config
        .params
        .t
        .ok_or_else(|| CliError::usage("params.t", "this command needs a time horizon"))
}

fn require_n_traj(config: &ExperimentConfig) -> Result<usize, CliError> {
    config
        .params
        .n_traj
        .ok_or_else(|| CliError::usage("params.n_traj", "this command needs a trajectory count"))
}

fn require_candidate(
    config: &ExperimentConfig,
    space: ctgibbs::CylinderSpace,
    command: &str,
) -> Result<ctgibbs::AdmissibleCandidate, CliError> {
    let spec = config.candidate.as_ref().ok_or_else(|| {
        CliError::usage("candidate", format!("the {command} command needs a candidate"))
    })?;
    build_candidate(space, spec)
}

/// One inverse-CDF draw from `substream(seed, 0)`; the trajectory sampler
/// itself starts at substream index 1, so the streams never overlap.
fn sample_word(measure: &Measure, seed: u64) -> usize {
    let mut rng = substream(seed, 0);
    let u: f64 = rng.gen();
    let masses = measure.masses();
    let mut acc = 0.0;
    for (i, m) in masses.iter().enumerate() {
        acc += m;
        if u < acc {
            return i;
        }
    }
    masses.len() - 1
}

fn kernel_table(kernel: &KernelField) -> Vec<f64> {
    let space = *kernel.space();
    let d = space.alphabet();
    let mut out = Vec::with_capacity(space.word_count() * d);
    for x in 0..space.word_count() {
        for a in 0..d {
            out.push(kernel.weight(x, a));
        }
    }
    out
}

fn write_json<T: Serialize>(path: PathBuf, doc: &T, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let body = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::usage("output", e.to_string()))?;
    write_text(path, &format!("{body}\n"), files)
}

fn write_text(path: PathBuf, body: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    fs::write(&path, body).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    files.push(path);
    Ok(())
}
