//! Exponential moments and characteristic-function values.
//!
//! The functions here turn exponent trajectories into statements about the
//! process itself: whether an exponential moment is finite at a horizon,
//! which exponent pair represents it conditionally part-way, and what value
//! the characteristic function takes. Finiteness claims are tied to the
//! trajectory certificates; where no certificate applies the verdict says
//! so instead of guessing.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::domain::Region;
use crate::error::{Error, Result};
use crate::levy::{build_family, FunctionalFamily};
use crate::riccati::{
    solve_complex, solve_extended, MinimalityCertificate, RiccatiTrajectory, SolveOptions,
    TrajectoryStatus,
};
use crate::state_space::{check_complex_assumption, AffineParams};

/// Outcome of an exponential-moment evaluation.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentVerdict {
    /// The moment is finite and equals `exp(p + ⟨q, x⟩)`.
    Finite {
        value: f64,
        p: f64,
        q: DVector<f64>,
    },
    /// The moment is infinite from `t_plus` onwards.
    Infinite { t_plus: f64 },
    /// Neither finiteness nor explosion could be established.
    Indeterminate { reason: String },
}

/// An exponential-moment verdict together with the certificate of the
/// trajectory that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentResult {
    pub verdict: MomentVerdict,
    pub certificate: MinimalityCertificate,
}

/// A characteristic-function evaluation: either the value itself or the
/// name of the hypothesis that failed.
#[derive(Debug, Clone, PartialEq)]
pub enum CharFunctionResult {
    Value(Complex64),
    Unsupported { reason: String },
}

pub(crate) fn check_horizon(horizon: f64) -> Result<()> {
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::Structure(format!(
            "the horizon must extend a finite nonnegative time, got {horizon}"
        )));
    }
    Ok(())
}

pub(crate) fn check_dim(name: &str, len: usize, d: usize) -> Result<()> {
    if len != d {
        return Err(Error::Structure(format!(
            "{name} has dimension {len}, expected {d}"
        )));
    }
    Ok(())
}

pub(crate) fn check_state(params: &AffineParams, x: &[f64]) -> Result<()> {
    if !params.space().contains(x) {
        return Err(Error::Domain(
            "the starting state lies outside the state space".into(),
        ));
    }
    Ok(())
}

fn dot(q: &DVector<f64>, x: &[f64]) -> f64 {
    q.iter().zip(x.iter()).map(|(a, b)| a * b).sum()
}

/// Map a finished exponent run to a moment verdict. `y_interior` reports
/// whether the run started strictly inside the finiteness region; blow-up
/// from the boundary is left open because the slope functions need not
/// determine the trajectory uniquely there.
fn verdict_for(traj: &RiccatiTrajectory, y_interior: bool, x: &[f64]) -> MomentVerdict {
    match &traj.status {
        TrajectoryStatus::Completed => {
            if traj.certificate == MinimalityCertificate::Unknown {
                MomentVerdict::Indeterminate {
                    reason: "the exponent run finished but carries no minimality certificate; \
                             the moment value cannot be asserted from an uncertified solution"
                        .into(),
                }
            } else {
                let p = traj.final_p();
                let q = traj.final_q().clone();
                let value = (p + dot(&q, x)).exp();
                MomentVerdict::Finite { value, p, q }
            }
        }
        TrajectoryStatus::BlowUp { t_star, .. } => {
            if y_interior {
                MomentVerdict::Infinite { t_plus: *t_star }
            } else {
                MomentVerdict::Indeterminate {
                    reason: format!(
                        "the exponent blows up at t ≈ {t_star:.6} from a boundary start, \
                         where the trajectory is not necessarily the minimal one"
                    ),
                }
            }
        }
        TrajectoryStatus::BoundaryContact { t, .. } => MomentVerdict::Indeterminate {
            reason: format!(
                "the exponent reaches the domain boundary at t ≈ {t:.6}; \
                 continuation past the contact is not determined"
            ),
        },
        TrajectoryStatus::DomainExit { t } => MomentVerdict::Indeterminate {
            reason: format!(
                "the exponent leaves the admissible region near t ≈ {t:.6}; \
                 continuation past the exit is not determined"
            ),
        },
    }
}

/// Exponential moment of the process at `horizon`, started at `x` with a
/// real argument vector `y`.
///
/// The verdict is `Finite` with the value `exp(p + ⟨q, x⟩)` when the
/// exponent run completes under a minimality certificate, `Infinite` when
/// the exponent blows up before the horizon from an interior argument, and
/// `Indeterminate` whenever the available trajectory does not settle the
/// question.
pub fn exp_moment(
    params: &AffineParams,
    x: &[f64],
    y: &[f64],
    horizon: f64,
) -> Result<MomentResult> {
    params.ensure_valid()?;
    let d = params.dim();
    check_dim("the starting state", x.len(), d)?;
    check_dim("the argument vector", y.len(), d)?;
    check_horizon(horizon)?;
    check_state(params, x)?;
    let family = build_family(params)?;
    moment_of_family(&family, x, y, horizon)
}

/// Verdict machinery of [`exp_moment`] on an already built family, shared
/// with the discounting layer where the family carries constant shifts.
/// Inputs are assumed validated.
pub(crate) fn moment_of_family(
    family: &FunctionalFamily,
    x: &[f64],
    y: &[f64],
    horizon: f64,
) -> Result<MomentResult> {
    let region = family.classify(y);

    if horizon == 0.0 {
        // The process has not moved yet, so the moment is the plain
        // exponential of the argument at the start.
        let q = DVector::from_column_slice(y);
        let value = dot(&q, x).exp();
        let certificate = if region == Region::Outside {
            MinimalityCertificate::Unknown
        } else {
            solve_extended(family, y, 0.0, &SolveOptions::default())?.certificate
        };
        return Ok(MomentResult {
            verdict: MomentVerdict::Finite { value, p: 0.0, q },
            certificate,
        });
    }

    if region == Region::Outside {
        // The jump transforms already diverge at the argument itself, so
        // every positive horizon carries an infinite moment.
        return Ok(MomentResult {
            verdict: MomentVerdict::Infinite { t_plus: 0.0 },
            certificate: MinimalityCertificate::Unknown,
        });
    }

    let traj = solve_extended(family, y, horizon, &SolveOptions::default())?;
    let verdict = verdict_for(&traj, region == Region::Interior, x);
    Ok(MomentResult {
        verdict,
        certificate: traj.certificate,
    })
}

/// Exponent pair `(p, q)` over the remaining time `horizon - t`, so that
/// the conditional moment at time `t` equals `exp(p + ⟨q, X_t⟩)`.
///
/// Requires the moment to be certified finite at the full horizon; `t = 0`
/// reproduces the full exponent and `t = horizon` returns `(0, y)`.
pub fn conditional_exponent(
    params: &AffineParams,
    y: &[f64],
    horizon: f64,
    t: f64,
) -> Result<(f64, DVector<f64>)> {
    params.ensure_valid()?;
    let d = params.dim();
    check_dim("the argument vector", y.len(), d)?;
    check_horizon(horizon)?;
    if !t.is_finite() || t < 0.0 || t > horizon {
        return Err(Error::Structure(format!(
            "the conditioning time must lie between 0 and the horizon {horizon}, got {t}"
        )));
    }
    let family = build_family(params)?;

    let full = solve_extended(&family, y, horizon, &SolveOptions::default())?;
    if full.status != TrajectoryStatus::Completed
        || full.certificate == MinimalityCertificate::Unknown
    {
        return Err(Error::Unsupported(format!(
            "the conditional exponent needs a certified finite moment at the horizon; \
             the run ended with status {:?} and certificate {:?}",
            full.status, full.certificate
        )));
    }
    if t == 0.0 {
        return Ok((full.final_p(), full.final_q().clone()));
    }

    let tail = solve_extended(&family, y, horizon - t, &SolveOptions::default())?;
    if tail.status != TrajectoryStatus::Completed {
        return Err(Error::NonConvergence(format!(
            "the exponent run over the remaining time {:.6} ended with status {:?} \
             although the full horizon completed",
            horizon - t,
            tail.status
        )));
    }
    Ok((tail.final_p(), tail.final_q().clone()))
}

/// First time at which the real exponent path leaves the open interior,
/// sampled at the accepted points and at eight interpolation nodes inside
/// every step. `None` means the whole path stays interior.
pub(crate) fn first_noninterior(
    family: &FunctionalFamily,
    traj: &RiccatiTrajectory,
) -> Result<Option<f64>> {
    if family.domain().is_full_space() {
        return Ok(None);
    }
    for k in 0..traj.times.len() {
        if family.classify(traj.q[k].as_slice()) != Region::Interior {
            return Ok(Some(traj.times[k]));
        }
        if k + 1 < traj.times.len() {
            let (a, b) = (traj.times[k], traj.times[k + 1]);
            for j in 1..=8 {
                let s = a + (b - a) * j as f64 / 9.0;
                let (_, q) = traj.eval(s)?;
                if family.classify(q.as_slice()) != Region::Interior {
                    return Ok(Some(s));
                }
            }
        }
    }
    Ok(None)
}

/// Characteristic-function value `exp(φ + ⟨ψ, x⟩)` at a complex argument.
///
/// The evaluation is guarded by three hypotheses, each reported by name
/// when it fails: the state-space assumption behind the analytic
/// extension, membership of `Re u` in the open finiteness region, and an
/// interior real exponent path certified finite up to the horizon. The
/// returned modulus is checked against the real moment at `Re u`.
pub fn char_function(
    params: &AffineParams,
    x: &[f64],
    u: &[Complex64],
    horizon: f64,
) -> Result<CharFunctionResult> {
    params.ensure_valid()?;
    let d = params.dim();
    check_dim("the starting state", x.len(), d)?;
    check_dim("the argument vector", u.len(), d)?;
    check_horizon(horizon)?;
    check_state(params, x)?;

    if !check_complex_assumption(params) {
        return Ok(CharFunctionResult::Unsupported {
            reason: "the state-space assumption behind the analytic extension fails for \
                     these parameters (degenerate but nonzero matrix diffusion)"
                .into(),
        });
    }

    let family = build_family(params)?;
    let re: Vec<f64> = u.iter().map(|z| z.re).collect();
    if family.classify(&re) != Region::Interior {
        return Ok(CharFunctionResult::Unsupported {
            reason: "the real part of the argument must lie strictly inside the open \
                     finiteness region"
                .into(),
        });
    }

    let dense_opts = SolveOptions {
        dense_output: true,
        ..SolveOptions::default()
    };
    let real_run = solve_extended(&family, &re, horizon, &dense_opts)?;
    let bound = match verdict_for(&real_run, true, x) {
        MomentVerdict::Finite { value, .. } => value,
        MomentVerdict::Infinite { t_plus } => {
            return Ok(CharFunctionResult::Unsupported {
                reason: format!(
                    "the real moment at the argument's real part is infinite from \
                     t ≈ {t_plus:.6}, before the horizon"
                ),
            });
        }
        MomentVerdict::Indeterminate { reason } => {
            return Ok(CharFunctionResult::Unsupported {
                reason: format!(
                    "the real moment at the argument's real part is not certified \
                     finite: {reason}"
                ),
            });
        }
    };
    if let Some(t_out) = first_noninterior(&family, &real_run)? {
        return Ok(CharFunctionResult::Unsupported {
            reason: format!(
                "the real exponent path leaves the open interior near t ≈ {t_out:.6}"
            ),
        });
    }

    let cplx = solve_complex(&family, u, horizon, &SolveOptions::default())?;
    let stopped = match cplx.status {
        TrajectoryStatus::Completed => None,
        TrajectoryStatus::BlowUp { t_star, .. } => Some(t_star),
        TrajectoryStatus::BoundaryContact { t, .. } | TrajectoryStatus::DomainExit { t } => {
            Some(t)
        }
    };
    if let Some(ts) = stopped {
        return Err(Error::NonConvergence(format!(
            "the complex exponent run stopped at t ≈ {ts:.6} although its real part \
             is certified finite to the horizon"
        )));
    }

    let shift: Complex64 = cplx
        .final_psi()
        .iter()
        .zip(x.iter())
        .fold(Complex64::new(0.0, 0.0), |acc, (z, &xi)| acc + z * xi);
    let value = (cplx.final_phi() + shift).exp();

    let slack = 1e-10 * (1.0 + bound);
    if value.norm() > bound + slack {
        return Err(Error::NonConvergence(format!(
            "the transform value has modulus {:.6e}, above its bound {:.6e}",
            value.norm(),
            bound
        )));
    }
    Ok(CharFunctionResult::Value(value))
}
