//! Exponential moments of affine processes.
//!
//! The crate models affine jump-diffusions on the canonical cone
//! `ℝ≥0^m × ℝ^n` and on positive semidefinite matrices, validates parameter
//! sets against the admissibility conditions, integrates the associated
//! generalized Riccati equations in real and complex arithmetic, and exposes
//! the transform formula `E[e^{⟨u,X_T⟩}] = exp(φ + ⟨ψ,x⟩)` together with its
//! finance applications: bond prices, martingale diagnostics, and Fourier
//! option pricing. A Monte Carlo oracle cross-checks the analytic path.
//!
//! The flow between the pieces:
//!
//! * [`state_space`] holds parameters and validates admissibility,
//! * [`levy`] turns validated parameters into evaluatable `F`/`R` functionals
//!   with effective-domain metadata,
//! * [`riccati`] integrates `ṗ = F(q)`, `q̇ = R(q)` with blow-up detection,
//! * [`transform`] wraps solutions into moment/characteristic-function
//!   verdicts,
//! * [`pricing`] builds discounted transforms on top,
//! * [`mc`] simulates paths for independent verification.

pub mod domain;
pub mod error;
pub mod jumps;
pub mod levy;
pub mod ode;
pub mod linalg;
pub mod pricing;
pub mod quad;
pub mod riccati;
pub mod transform;
pub mod state_space;

pub use domain::{DomainY, HalfSpace, Region};
pub use error::{Error, Result};
pub use jumps::{DeclaredTail, JumpAtom, JumpMeasureSpec, NumericJumpDensity};
pub use levy::{build_family, verify_complex_inequality, FunctionalFamily, LkFunctional};
pub use pricing::{
    asset_explosion_time, bond_price, discounted_exponent, fourier_price, martingale_check,
    AssetExplosion, ConditionReport, FourierPrice, MartingaleReport, PayoffTransform,
    QuadOptions, ShortRateSpec,
};
pub use riccati::{
    comparison_check, explosion_time, solve_complex, solve_extended, verify_semiflow,
    ComplexTrajectory, ExplosionTime, MinimalityCertificate, RiccatiTrajectory, SolveOptions,
    TrajectoryStatus,
};
pub use state_space::{
    check_complex_assumption, embed_discounting, validate_canonical, validate_matrix,
    AffineParams, CanonicalParams, LinearMap, MatrixJumpAtom, MatrixLinearJumpAtom, MatrixParams,
    StateSpace, ValidationReport, Violation,
};
pub use transform::{
    char_function, conditional_exponent, exp_moment, CharFunctionResult, MomentResult,
    MomentVerdict,
};
