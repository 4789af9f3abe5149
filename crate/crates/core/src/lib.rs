//! Continuous-time Gibbs chains on cylinder-truncated shift spaces.
//!
//! This crate studies the jump process on words of fixed depth over a
//! finite alphabet whose moves prepend a symbol (the finite-depth
//! truncation of the shift on one-sided sequences), together with the
//! thermodynamic objects a potential induces on it:
//!
//! * [`symbolic`] — the word space, potentials, transfer kernels, and the
//!   discrete Ruelle operator with its dominant eigendata;
//! * [`semigroup`] — the continuous-time generator, the weighted
//!   (Feynman-Kac) semigroup evaluated by two independent routes, and the
//!   dominant eigentriple of `L + V`;
//! * [`gibbs`] — the tilted chain a potential defines, entropy relative
//!   to the a-priori chain, and the variational principle for the
//!   pressure;
//! * [`ldp`] — the scaled cumulant generating function and the large
//!   deviation rate function of occupation measures, by primal and dual
//!   optimization;
//! * [`montecarlo`] — trajectory sampling, estimators matched against the
//!   analytic quantities, and an annealing schedule;
//! * [`linalg`], [`rng`], [`error`] — small shared utilities.
//!
//! Numerical claims are enforced, not assumed: constructors validate
//! their inputs, solvers report residuals and fail loudly when
//! cross-checks (left/right eigenvalues, dual feasibility, stationarity)
//! disagree.

pub mod error;
pub mod gibbs;
pub mod ldp;
pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod semigroup;
pub mod symbolic;

pub use error::{Error, Result};
pub use gibbs::{
    build_gibbs, eigenprobability_relation, pressure, relative_entropy, stationary_measure,
    AdmissibleCandidate, GibbsChain, PressureReport,
};
pub use ldp::{
    equilibrium_identity_check, rate_dual, rate_dual_from, rate_primal, scgf,
    scgf_properties_check, RateFunctionResult, Route,
};
pub use montecarlo::{
    anneal, empirical_measure, log_rn, martingale_check, mc_entropy, mc_scgf, simulate,
    simulate_with_rng, time_integral, AnnealReport, EmpiricalMeasure, McEstimate, Trajectory,
};
pub use semigroup::{
    dirichlet_form, eigen_equation_check, feynman_kac_order, feynman_kac_series, generator_apply,
    perron_solve, uniformization_adjoint_apply, uniformization_apply, AdjointPair, DirichletForm,
    FeynmanKacEstimate, GeneratorMatrix, PerronSolution, SolutionDocument,
};
pub use symbolic::{
    discrete_perron, discrete_pressure, equilibrium_measure, normalize, ruelle_apply,
    CylinderSpace, DiscretePerron, KernelField, Measure, PotentialField,
};
pub use semigroup::adjoint_and_symmetrize;
