//! Experiment configuration: schema, validation, and expansion into the
//! library's domain types.
//!
//! A configuration is one JSON document describing the word space, the
//! potentials, and the command-specific parameters. [`validate`] returns
//! every problem it can find as data; nothing in this module panics on
//! bad input.

use ctgibbs::{normalize, AdmissibleCandidate, CylinderSpace, KernelField, Measure, PotentialField};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Word-space block: alphabet size `d`, depth `k`, metric parameter
/// `theta` (defaults to `1/2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub d: usize,
    pub k: usize,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    0.5
}

/// How a potential on depth-`k` words is specified.
///
/// Either a single constant, a full table of `d^k` values in word-index
/// order, or a rule table of `d^m` values read off the first `m` symbols
/// (the word's index modulo `d^m`, by the little-endian encoding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialSpec {
    Rule {
        rule: RuleKind,
        m: usize,
        table: Vec<f64>,
    },
    Table {
        table: Vec<f64>,
    },
    Constant {
        constant: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    FirstMSymbols,
}

/// A chain to compare against the base chain: jump rates plus a
/// row-stochastic jump kernel (raw weights are normalized row by row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSpec {
    pub gamma: PotentialSpec,
    /// `d^k * d` positive weights in `(word, symbol)` order.
    pub kernel: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Scgf,
    Entropy,
    Martingale,
}

/// Command-specific knobs; which ones a command requires is checked when
/// it runs, not here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Time horizon (simulation length, or per-stage length for anneal).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    /// Inverse-temperature ladder, strictly increasing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    /// Gradient tolerance for the rate-function optimizers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    /// Random candidates audited by `pressure-audit`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_count: Option<usize>,
    /// Initial word; sampled from the stationary law when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    /// Target occupation measure for `rate`, `d^k` masses summing to one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<Vec<f64>>,
    /// Grid of first-word masses `q`; each grid point is the two-word
    /// measure `(q, 1 - q)`, so this requires `d^k = 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_grid: Option<Vec<f64>>,
}

/// One experiment: space, potentials, parameters, seed. The base kernel
/// is the row normalization of `exp(a_raw)` (uniform when `a_raw` is
/// absent), and a missing `v` means the zero potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_raw: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<PotentialSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<CandidateSpec>,
    /// Observable for the martingale estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<PotentialSpec>,
    #[serde(default)]
    pub params: Params,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding, pointing at the offending field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn error(field: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn warning(field: &str, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            field: field.to_string(),
            message: message.into(),
        }
    }
}

/// Checks everything checkable without running a command and returns the
/// findings; an empty list means the configuration is well formed.
///
/// Errors block `run`; warnings do not. A metric parameter above `1/2`
/// draws a warning because the contraction and Lipschitz estimates behind
/// the solver tolerances are derived under `theta <= 1/2`.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let space = &config.space;
    if space.d < 1 {
        out.push(Diagnostic::error("space.d", "alphabet size must be at least 1"));
    }
    if space.k < 1 {
        out.push(Diagnostic::error("space.k", "word depth must be at least 1"));
    }
    if !(space.theta > 0.0 && space.theta < 1.0) {
        out.push(Diagnostic::error(
            "space.theta",
            format!("metric parameter must lie in (0, 1), got {}", space.theta),
        ));
    } else if space.theta > 0.5 {
        out.push(Diagnostic::warning(
            "space.theta",
            format!(
                "theta = {} is outside the regime theta <= 1/2 assumed by the contraction estimates",
                space.theta
            ),
        ));
    }

    let words = if space.d >= 1 && space.k >= 1 {
        space.d.checked_pow(space.k as u32)
    } else {
        None
    };

    if let Some(spec) = &config.a_raw {
        check_potential(spec, "a_raw", space.d, space.k, words, &mut out);
    }
    if let Some(spec) = &config.v {
        check_potential(spec, "v", space.d, space.k, words, &mut out);
    }
    if let Some(spec) = &config.g {
        check_potential(spec, "g", space.d, space.k, words, &mut out);
    }
    if let Some(candidate) = &config.candidate {
        check_potential(&candidate.gamma, "candidate.gamma", space.d, space.k, words, &mut out);
        if !spec_values(&candidate.gamma).iter().all(|x| *x > 0.0) {
            out.push(Diagnostic::error(
                "candidate.gamma",
                "jump rates must be strictly positive",
            ));
        }
        if let Some(w) = words {
            let expected = w * space.d;
            if candidate.kernel.len() != expected {
                out.push(Diagnostic::error(
                    "candidate.kernel",
                    format!(
                        "kernel table has {} entries, expected d^k * d = {expected}",
                        candidate.kernel.len()
                    ),
                ));
            }
        }
        if !candidate.kernel.iter().all(|x| x.is_finite() && *x > 0.0) {
            out.push(Diagnostic::error(
                "candidate.kernel",
                "kernel weights must be finite and strictly positive",
            ));
        }
    }

    let params = &config.params;
    if let Some(t) = params.t {
        if !(t > 0.0 && t.is_finite()) {
            out.push(Diagnostic::error("params.t", format!("horizon must be positive, got {t}")));
        }
    }
    if params.n_traj == Some(0) {
        out.push(Diagnostic::error("params.n_traj", "trajectory count must be at least 1"));
    }
    if let Some(tol) = params.grad_tol {
        if !(tol > 0.0 && tol.is_finite()) {
            out.push(Diagnostic::error(
                "params.grad_tol",
                format!("tolerance must be positive, got {tol}"),
            ));
        }
    }
    if let Some(betas) = &params.betas {
        if betas.is_empty() {
            out.push(Diagnostic::error("params.betas", "ladder must not be empty"));
        } else if !betas.iter().all(|b| b.is_finite()) {
            out.push(Diagnostic::error("params.betas", "ladder entries must be finite"));
        } else if !betas.windows(2).all(|w| w[0] < w[1]) {
            out.push(Diagnostic::error(
                "params.betas",
                "ladder must be strictly increasing",
            ));
        }
    }
    if let (Some(x0), Some(w)) = (params.x0, words) {
        if x0 >= w {
            out.push(Diagnostic::error(
                "params.x0",
                format!("initial word {x0} is outside 0..{w}"),
            ));
        }
    }
    if let Some(nu) = &params.nu {
        if let Some(w) = words {
            if nu.len() != w {
                out.push(Diagnostic::error(
                    "params.nu",
                    format!("measure has {} masses, expected d^k = {w}", nu.len()),
                ));
            }
        }
        if !nu.iter().all(|x| x.is_finite() && *x >= 0.0) {
            out.push(Diagnostic::error("params.nu", "masses must be finite and nonnegative"));
        } else {
            let sum: f64 = nu.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                out.push(Diagnostic::error(
                    "params.nu",
                    format!("masses sum to {sum}, expected 1"),
                ));
            }
        }
    }
    if let Some(grid) = &params.q_grid {
        if words.is_some() && words != Some(2) {
            out.push(Diagnostic::error(
                "params.q_grid",
                format!(
                    "the q grid parameterizes two-word measures; this space has {} words",
                    words.unwrap()
                ),
            ));
        }
        if !grid.iter().all(|q| q.is_finite() && *q > 0.0 && *q < 1.0) {
            out.push(Diagnostic::error(
                "params.q_grid",
                "grid points must lie strictly between 0 and 1",
            ));
        }
        if params.nu.is_some() {
            out.push(Diagnostic::error(
                "params.q_grid",
                "give either nu or q_grid, not both",
            ));
        }
    }
    out
}

fn spec_values(spec: &PotentialSpec) -> Vec<f64> {
    match spec {
        PotentialSpec::Constant { constant } => vec![*constant],
        PotentialSpec::Table { table } => table.clone(),
        PotentialSpec::Rule { table, .. } => table.clone(),
    }
}

fn check_potential(
    spec: &PotentialSpec,
    field: &str,
    d: usize,
    k: usize,
    words: Option<usize>,
    out: &mut Vec<Diagnostic>,
) {
    if !spec_values(spec).iter().all(|x| x.is_finite()) {
        out.push(Diagnostic::error(
            &format!("{field}.table"),
            "values must be finite",
        ));
    }
    match spec {
        PotentialSpec::Constant { .. } => {}
        PotentialSpec::Table { table } => {
            if let Some(w) = words {
                if table.len() != w {
                    out.push(Diagnostic::error(
                        &format!("{field}.table"),
                        format!("table has {} entries, expected d^k = {w}", table.len()),
                    ));
                }
            }
        }
        PotentialSpec::Rule { m, table, .. } => {
            if *m > k {
                out.push(Diagnostic::error(
                    &format!("{field}.m"),
                    format!("rule depth {m} exceeds the word depth {k}"),
                ));
            } else if let Some(len) = d.checked_pow(*m as u32) {
                if table.len() != len {
                    out.push(Diagnostic::error(
                        &format!("{field}.table"),
                        format!("rule table has {} entries, expected d^m = {len}", table.len()),
                    ));
                }
            }
        }
    }
}

/// Builds the word space, mapping constructor failures to usage errors.
pub fn build_space(config: &ExperimentConfig) -> Result<CylinderSpace, CliError> {
    CylinderSpace::new(config.space.d, config.space.k, config.space.theta)
        .map_err(|e| CliError::usage("space", e.to_string()))
}

/// Expands a potential spec to a full table on the space.
pub fn expand_potential(
    space: CylinderSpace,
    spec: &PotentialSpec,
    field: &str,
) -> Result<PotentialField, CliError> {
    let values = match spec {
        PotentialSpec::Constant { constant } => vec![*constant; space.word_count()],
        PotentialSpec::Table { table } => table.clone(),
        PotentialSpec::Rule { m, table, .. } => {
            let base = space.alphabet().checked_pow(*m as u32).ok_or_else(|| {
                CliError::usage(&format!("{field}.m"), "rule depth overflows the word count")
            })?;
            if table.len() != base {
                return Err(CliError::usage(
                    &format!("{field}.table"),
                    format!("rule table has {} entries, expected d^m = {base}", table.len()),
                ));
            }
            (0..space.word_count()).map(|w| table[w % base]).collect()
        }
    };
    PotentialField::new(space, values).map_err(|e| CliError::usage(field, e.to_string()))
}

/// The potential `V` of the experiment; zero when unspecified.
pub fn build_v(space: CylinderSpace, config: &ExperimentConfig) -> Result<PotentialField, CliError> {
    match &config.v {
        Some(spec) => expand_potential(space, spec, "v"),
        None => Ok(PotentialField::zero(space)),
    }
}

/// The base jump kernel: row normalization of `exp(a_raw)`, or the
/// uniform kernel when `a_raw` is absent.
pub fn build_base_kernel(
    space: CylinderSpace,
    config: &ExperimentConfig,
) -> Result<KernelField, CliError> {
    match &config.a_raw {
        Some(spec) => {
            let raw = expand_potential(space, spec, "a_raw")?;
            Ok(normalize(&raw)?)
        }
        None => Ok(KernelField::uniform(space)),
    }
}

/// Expands a candidate spec: rates from the potential spec, kernel rows
/// normalized to sum to one.
pub fn build_candidate(
    space: CylinderSpace,
    spec: &CandidateSpec,
) -> Result<AdmissibleCandidate, CliError> {
    let gamma = expand_potential(space, &spec.gamma, "candidate.gamma")?;
    let d = space.alphabet();
    let expected = space.word_count() * d;
    if spec.kernel.len() != expected {
        return Err(CliError::usage(
            "candidate.kernel",
            format!(
                "kernel table has {} entries, expected d^k * d = {expected}",
                spec.kernel.len()
            ),
        ));
    }
    let mut weights = spec.kernel.clone();
    for x in 0..space.word_count() {
        let row = &mut weights[x * d..(x + 1) * d];
        let sum: f64 = row.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(CliError::usage(
                "candidate.kernel",
                format!("row {x} has non-normalizable weights"),
            ));
        }
        for w in row.iter_mut() {
            *w /= sum;
        }
    }
    let kernel =
        KernelField::from_weights(space, weights).map_err(|e| CliError::usage("candidate.kernel", e.to_string()))?;
    Ok(AdmissibleCandidate::new(gamma, kernel)?)
}

/// The target measure for a single-point `rate` run.
pub fn build_nu(space: CylinderSpace, masses: &[f64]) -> Result<Measure, CliError> {
    Measure::new(space, masses.to_vec())
        .and_then(|m| m.normalized())
        .map_err(|e| CliError::usage("params.nu", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(d: usize, k: usize, theta: f64) -> ExperimentConfig {
        ExperimentConfig {
            space: SpaceConfig { d, k, theta },
            a_raw: None,
            v: None,
            candidate: None,
            g: None,
            params: Params::default(),
            seed: 1,
        }
    }

    #[test]
    fn well_formed_config_has_no_diagnostics() {
        let mut config = minimal(2, 1, 0.5);
        config.v = Some(PotentialSpec::Table { table: vec![0.0, 1.0] });
        assert!(validate(&config).is_empty());
    }

    #[test]
    fn wrong_table_length_names_the_field() {
        let mut config = minimal(2, 1, 0.5);
        config.v = Some(PotentialSpec::Table { table: vec![0.0, 1.0, 2.0] });
        let diags = validate(&config);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field, "v.table");
        assert_eq!(diags[0].severity, Severity::Error);
    }

    #[test]
    fn large_theta_draws_a_warning() {
        let config = minimal(2, 2, 0.9);
        let diags = validate(&config);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field, "space.theta");
        assert_eq!(diags[0].severity, Severity::Warning);
    }

    #[test]
    fn rule_spec_parses_and_expands_by_leading_symbols() {
        let json = r#"{"rule": "first_m_symbols", "m": 1, "table": [5.0, 7.0]}"#;
        let spec: PotentialSpec = serde_json::from_str(json).unwrap();
        let space = CylinderSpace::with_default_metric(2, 2).unwrap();
        let field = expand_potential(space, &spec, "v").unwrap();
        // Little-endian indices: words 0,2 start with symbol 0; 1,3 with 1.
        assert_eq!(field.values(), &[5.0, 7.0, 5.0, 7.0]);
    }

    #[test]
    fn untagged_specs_disambiguate() {
        let table: PotentialSpec = serde_json::from_str(r#"{"table": [1.0, 2.0]}"#).unwrap();
        assert_eq!(table, PotentialSpec::Table { table: vec![1.0, 2.0] });
        let constant: PotentialSpec = serde_json::from_str(r#"{"constant": 3.0}"#).unwrap();
        assert_eq!(constant, PotentialSpec::Constant { constant: 3.0 });
    }

    #[test]
    fn q_grid_on_a_larger_space_is_rejected() {
        let mut config = minimal(3, 2, 0.5);
        config.params.q_grid = Some(vec![0.5]);
        let diags = validate(&config);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field, "params.q_grid");
    }

    #[test]
    fn decreasing_ladder_is_rejected() {
        let mut config = minimal(2, 1, 0.5);
        config.params.betas = Some(vec![0.0, 2.0, 1.0]);
        let diags = validate(&config);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].field, "params.betas");
    }
}
