//! Jump measure specifications and their exponential integrals.
//!
//! Each variant knows three things: how to evaluate the compensated
//! exponential integral `∫ (e^{⟨u,ξ⟩} - 1 - ⟨h(ξ),u⟩) ν(dξ)` with the
//! truncation `h(ξ) = ξ·1_{|ξ|≤1}`, the region of arguments where its
//! large-jump integral stays finite, and the handful of moment quantities the
//! validator and the growth estimate ask for. Everything is closed-form
//! except the density-specified variant, which is integrated adaptively.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use statrs::function::erf::erfc;

use crate::domain::{DomainY, HalfSpace, Region};
use crate::linalg;
use crate::quad;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// A single point mass `weight * δ_location`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpAtom {
    pub location: DVector<f64>,
    pub weight: f64,
}

/// Declared behavior of a numeric density's large-jump integral
/// `s ↦ ∫_{|ξ|≥1} e^{s ξ} ν(dξ)` as a function of the coordinate argument.
///
/// The library takes this declaration at face value; it is the price of
/// admitting arbitrary densities.
#[derive(Clone)]
pub enum DeclaredTail {
    /// Finite for every argument (e.g. compactly supported densities).
    Entire,
    /// Finite iff the coordinate argument is `< bound` (strict) or `≤ bound`.
    Threshold { bound: f64, strict: bool },
    /// Arbitrary classification of the coordinate argument.
    Callback(Arc<dyn Fn(f64) -> Region + Send + Sync>),
}

impl fmt::Debug for DeclaredTail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeclaredTail::Entire => write!(f, "Entire"),
            DeclaredTail::Threshold { bound, strict } => f
                .debug_struct("Threshold")
                .field("bound", bound)
                .field("strict", strict)
                .finish(),
            DeclaredTail::Callback(_) => write!(f, "Callback"),
        }
    }
}

/// A measure on a single coordinate axis given by a density callback.
#[derive(Clone)]
pub struct NumericJumpDensity {
    pub coordinate: usize,
    pub density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Support interval; endpoints may be infinite.
    pub support: (f64, f64),
    pub tail: DeclaredTail,
}

impl fmt::Debug for NumericJumpDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericJumpDensity")
            .field("coordinate", &self.coordinate)
            .field("support", &self.support)
            .field("tail", &self.tail)
            .finish()
    }
}

impl NumericJumpDensity {
    /// Density with the support indicator applied, so quadrature probes
    /// outside the declared interval are harmless.
    fn density_at(&self, s: f64) -> f64 {
        if s > self.support.0 && s < self.support.1 {
            (self.density)(s)
        } else {
            0.0
        }
    }
}

/// Jump measure of one coefficient (the constant part or one linear slope).
#[derive(Debug, Clone)]
pub enum JumpMeasureSpec {
    Zero,
    /// Finite mixture of point masses.
    PointMasses(Vec<JumpAtom>),
    /// `intensity * rate * e^{-rate s} ds` on the positive ray of one
    /// coordinate; `intensity` is the total mass.
    OneSidedExponential {
        coordinate: usize,
        rate: f64,
        intensity: f64,
    },
    /// Compound-Poisson factor with Gaussian jump size, restricted to
    /// real-valued coordinates; `intensity` is the total mass.
    GaussianFactor {
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        intensity: f64,
    },
    /// Density callback on one coordinate with a declared tail.
    NumericDensity(NumericJumpDensity),
}

impl JumpMeasureSpec {
    pub fn is_zero(&self) -> bool {
        match self {
            JumpMeasureSpec::Zero => true,
            JumpMeasureSpec::PointMasses(atoms) => atoms.is_empty(),
            _ => false,
        }
    }

    /// Structural shape check against the ambient dimension.
    // Negated comparisons so that NaN inputs fail the gate.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check_shape(&self, dim: usize) -> Result<(), String> {
        match self {
            JumpMeasureSpec::Zero => Ok(()),
            JumpMeasureSpec::PointMasses(atoms) => {
                for (k, atom) in atoms.iter().enumerate() {
                    if atom.location.len() != dim {
                        return Err(format!(
                            "jump atom {k} has dimension {}, expected {dim}",
                            atom.location.len()
                        ));
                    }
                    if !atom.weight.is_finite() || atom.weight <= 0.0 {
                        return Err(format!("jump atom {k} needs a positive finite weight"));
                    }
                    if atom.location.iter().any(|x| !x.is_finite()) {
                        return Err(format!("jump atom {k} has a non-finite location"));
                    }
                }
                Ok(())
            }
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => {
                if *coordinate >= dim {
                    return Err(format!("jump coordinate {coordinate} out of range for dimension {dim}"));
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err("exponential jump rate must be positive".into());
                }
                if !(intensity.is_finite() && *intensity > 0.0) {
                    return Err("jump intensity must be positive".into());
                }
                Ok(())
            }
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => {
                if mean.len() != dim {
                    return Err(format!(
                        "Gaussian jump mean has dimension {}, expected {dim}",
                        mean.len()
                    ));
                }
                if cov.nrows() != dim || cov.ncols() != dim {
                    return Err(format!(
                        "Gaussian jump covariance is {}x{}, expected {dim}x{dim}",
                        cov.nrows(),
                        cov.ncols()
                    ));
                }
                if linalg::asymmetry(cov) > 1e-12 * (1.0 + cov.amax()) {
                    return Err("Gaussian jump covariance must be symmetric".into());
                }
                if !linalg::is_psd(cov) {
                    return Err("Gaussian jump covariance must be positive semidefinite".into());
                }
                if !(intensity.is_finite() && *intensity > 0.0) {
                    return Err("jump intensity must be positive".into());
                }
                Ok(())
            }
            JumpMeasureSpec::NumericDensity(nd) => {
                if nd.coordinate >= dim {
                    return Err(format!(
                        "jump coordinate {} out of range for dimension {dim}",
                        nd.coordinate
                    ));
                }
                if !(nd.support.0 < nd.support.1) {
                    return Err("numeric jump density needs a nonempty support interval".into());
                }
                Ok(())
            }
        }
    }

    /// Coordinates on which a Gaussian factor actually moves.
    pub fn gaussian_active(&self) -> Vec<usize> {
        if let JumpMeasureSpec::GaussianFactor { mean, cov, .. } = self {
            (0..mean.len())
                .filter(|&j| {
                    mean[j] != 0.0 || cov.row(j).iter().any(|&c| c != 0.0)
                })
                .collect()
        } else {
            Vec::new()
        }
    }

    /// Region of real arguments with finite large-jump exponential integral.
    pub fn tail_domain(&self, dim: usize) -> DomainY {
        match self {
            JumpMeasureSpec::Zero
            | JumpMeasureSpec::PointMasses(_)
            | JumpMeasureSpec::GaussianFactor { .. } => DomainY::full_space(),
            JumpMeasureSpec::OneSidedExponential {
                coordinate, rate, ..
            } => {
                let mut normal = DVector::zeros(dim);
                normal[*coordinate] = 1.0;
                DomainY::from_half_spaces(vec![HalfSpace {
                    normal,
                    offset: *rate,
                    strict: true,
                }])
            }
            JumpMeasureSpec::NumericDensity(nd) => {
                let coordinate = nd.coordinate;
                match &nd.tail {
                    DeclaredTail::Entire => DomainY::full_space(),
                    DeclaredTail::Threshold { bound, strict } => {
                        let mut normal = DVector::zeros(dim);
                        normal[coordinate] = 1.0;
                        DomainY::from_half_spaces(vec![HalfSpace {
                            normal,
                            offset: *bound,
                            strict: *strict,
                        }])
                    }
                    DeclaredTail::Callback(cb) => {
                        let cb = cb.clone();
                        let mut d = DomainY::full_space();
                        d.push_callback(Arc::new(move |y: &[f64]| cb(y[coordinate])));
                        d
                    }
                }
            }
        }
    }

    /// Description of the tail condition an argument failed, for domain
    /// errors raised by complex evaluation.
    pub fn tail_condition(&self, y: &[f64]) -> String {
        match self {
            JumpMeasureSpec::Zero
            | JumpMeasureSpec::PointMasses(_)
            | JumpMeasureSpec::GaussianFactor { .. } => {
                "the exponent is entire, yet the argument was classified outside its domain".into()
            }
            JumpMeasureSpec::OneSidedExponential {
                coordinate, rate, ..
            } => format!(
                "the exponential jump tail needs Re u at coordinate {} strictly below the rate {}; got {}",
                coordinate, rate, y[*coordinate]
            ),
            JumpMeasureSpec::NumericDensity(nd) => match &nd.tail {
                DeclaredTail::Entire => {
                    "the density declares an entire tail, yet the argument was classified outside"
                        .into()
                }
                DeclaredTail::Threshold { bound, strict } => format!(
                    "the declared jump tail needs Re u at coordinate {} {} {}; got {}",
                    nd.coordinate,
                    if *strict { "strictly below" } else { "at most" },
                    bound,
                    y[nd.coordinate]
                ),
                DeclaredTail::Callback(_) => format!(
                    "the declared jump tail domain excludes Re u at coordinate {} (value {})",
                    nd.coordinate, y[nd.coordinate]
                ),
            },
        }
    }

    /// Total mass, when finite activity can be certified without quadrature.
    /// `None` for density-specified measures.
    pub fn total_mass(&self) -> Option<f64> {
        match self {
            JumpMeasureSpec::Zero => Some(0.0),
            JumpMeasureSpec::PointMasses(atoms) => {
                Some(atoms.iter().map(|a| a.weight).sum())
            }
            JumpMeasureSpec::OneSidedExponential { intensity, .. }
            | JumpMeasureSpec::GaussianFactor { intensity, .. } => Some(*intensity),
            JumpMeasureSpec::NumericDensity(_) => None,
        }
    }

    /// `∫ ξ_k ν(dξ)` over the whole support (may be infinite).
    pub fn first_moment(&self, k: usize) -> f64 {
        match self {
            JumpMeasureSpec::Zero => 0.0,
            JumpMeasureSpec::PointMasses(atoms) => {
                atoms.iter().map(|a| a.weight * a.location[k]).sum()
            }
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => {
                if *coordinate == k {
                    intensity / rate
                } else {
                    0.0
                }
            }
            JumpMeasureSpec::GaussianFactor {
                mean, intensity, ..
            } => intensity * mean[k],
            JumpMeasureSpec::NumericDensity(nd) => {
                if nd.coordinate != k {
                    return 0.0;
                }
                let (lo, hi) = nd.support;
                let mut total = 0.0;
                let a = lo.max(-1.0);
                let b = hi.min(1.0);
                if a < b {
                    let lim = b.max(a.abs()).max(1e-6);
                    if quad::diverges_at_origin(
                        |s| s * (nd.density_at(s).abs() + nd.density_at(-s).abs()),
                        lim,
                    ) {
                        return f64::INFINITY;
                    }
                    total += quad::integrate(|s| s * nd.density_at(s), a, b, 1e-10, 1e-14).value;
                }
                if hi > 1.0 {
                    let r = quad::integrate_to_infinity(
                        |s| s * nd.density_at(s),
                        1.0_f64.max(lo),
                        1e-10,
                        1e-14,
                    );
                    if !r.converged {
                        return f64::INFINITY;
                    }
                    total += r.value;
                }
                if lo < -1.0 {
                    let r = quad::integrate_from_neg_infinity(
                        |s| s * nd.density_at(s),
                        (-1.0_f64).min(hi),
                        1e-10,
                        1e-14,
                    );
                    if !r.converged {
                        return f64::NEG_INFINITY;
                    }
                    total += r.value;
                }
                total
            }
        }
    }

    /// `∫_{|ξ|≤1} |ξ_S| ν(dξ)` for a coordinate subset `S`, `+∞` when the
    /// small jumps carry too much mass on those coordinates.
    pub fn small_ball_abs_moment(&self, coords: &[usize]) -> f64 {
        if coords.is_empty() {
            return 0.0;
        }
        match self {
            JumpMeasureSpec::Zero => 0.0,
            JumpMeasureSpec::PointMasses(atoms) => atoms
                .iter()
                .filter(|a| a.location.norm() <= 1.0)
                .map(|a| {
                    let sub: f64 = coords.iter().map(|&k| a.location[k].powi(2)).sum();
                    a.weight * sub.sqrt()
                })
                .sum(),
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => {
                if coords.contains(coordinate) {
                    // ∫_0^1 s · rate e^{-rate s} ds, scaled by the intensity.
                    intensity * (1.0 - (-rate).exp() * (1.0 + rate)) / rate
                } else {
                    0.0
                }
            }
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => {
                // Upper bound: drop the ball indicator.
                let m2: f64 = coords
                    .iter()
                    .map(|&k| mean[k] * mean[k] + cov[(k, k)])
                    .sum();
                intensity * m2.sqrt()
            }
            JumpMeasureSpec::NumericDensity(nd) => {
                if !coords.contains(&nd.coordinate) {
                    return 0.0;
                }
                let (lo, hi) = nd.support;
                let lim = hi.min(1.0).max(lo.max(-1.0).abs()).max(1e-6);
                if quad::diverges_at_origin(
                    |s| s * (nd.density_at(s).abs() + nd.density_at(-s).abs()),
                    lim,
                ) {
                    return f64::INFINITY;
                }
                let a = lo.max(-1.0);
                let b = hi.min(1.0);
                if a >= b {
                    return 0.0;
                }
                quad::integrate(|s| s.abs() * nd.density_at(s), a, b, 1e-10, 1e-14).value
            }
        }
    }

    /// Whether `∫ (|ξ|² ∧ 1) ν(dξ)` is finite, i.e. the specification is a
    /// Lévy measure at all.
    pub fn is_levy_measure(&self) -> bool {
        match self {
            JumpMeasureSpec::NumericDensity(nd) => {
                let (lo, hi) = nd.support;
                let lim = hi.min(1.0).max(lo.max(-1.0).abs()).max(1e-6);
                if quad::diverges_at_origin(
                    |s| s * s * (nd.density_at(s).abs() + nd.density_at(-s).abs()),
                    lim,
                ) {
                    return false;
                }
                if hi > 1.0 {
                    let r = quad::integrate_to_infinity(|s| nd.density_at(s), 1.0, 1e-9, 1e-13);
                    if !r.converged {
                        return false;
                    }
                }
                if lo < -1.0 {
                    let r =
                        quad::integrate_from_neg_infinity(|s| nd.density_at(s), -1.0, 1e-9, 1e-13);
                    if !r.converged {
                        return false;
                    }
                }
                true
            }
            _ => true,
        }
    }

    /// Upper bound for `∫_{|ξ|>1} e^{⟨y,ξ⟩} ν(dξ)`; `+∞` outside the domain.
    pub fn tail_exp_upper(&self, y: &[f64]) -> f64 {
        match self {
            JumpMeasureSpec::Zero => 0.0,
            JumpMeasureSpec::PointMasses(atoms) => atoms
                .iter()
                .filter(|a| a.location.norm() > 1.0)
                .map(|a| {
                    let dot: f64 = a
                        .location
                        .iter()
                        .zip(y.iter())
                        .map(|(xi, yi)| xi * yi)
                        .sum();
                    a.weight * dot.exp()
                })
                .sum(),
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => {
                let z = y[*coordinate];
                if z < *rate {
                    intensity * rate * ((z - rate).exp()) / (rate - z)
                } else {
                    f64::INFINITY
                }
            }
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => {
                // Upper bound: the full moment generating function.
                let my: f64 = mean.iter().zip(y.iter()).map(|(m, v)| m * v).sum();
                let yv = DVector::from_column_slice(y);
                let quadform = (cov * &yv).dot(&yv);
                intensity * (my + 0.5 * quadform).exp()
            }
            JumpMeasureSpec::NumericDensity(nd) => {
                if self.tail_domain(y.len()).classify(y) == Region::Outside {
                    return f64::INFINITY;
                }
                let z = y[nd.coordinate];
                let zc = Complex64::new(z, 0.0);
                let tail = |s: f64| exp_weighted(zc, s, nd.density_at(s)).re + nd.density_at(s);
                let (lo, hi) = nd.support;
                let mut total = 0.0;
                if hi > 1.0 {
                    let r = quad::integrate_to_infinity(tail, 1.0, 1e-9, 1e-13);
                    if !r.converged {
                        return f64::INFINITY;
                    }
                    total += r.value;
                }
                if lo < -1.0 {
                    let r = quad::integrate_from_neg_infinity(tail, -1.0, 1e-9, 1e-13);
                    if !r.converged {
                        return f64::INFINITY;
                    }
                    total += r.value;
                }
                total
            }
        }
    }

    /// Upper bound for the mass outside the unit ball.
    pub fn tail_mass_upper(&self) -> f64 {
        match self {
            JumpMeasureSpec::Zero => 0.0,
            JumpMeasureSpec::PointMasses(atoms) => atoms
                .iter()
                .filter(|a| a.location.norm() > 1.0)
                .map(|a| a.weight)
                .sum(),
            JumpMeasureSpec::OneSidedExponential {
                rate, intensity, ..
            } => intensity * (-rate).exp(),
            JumpMeasureSpec::GaussianFactor { intensity, .. } => *intensity,
            JumpMeasureSpec::NumericDensity(nd) => {
                let zeros = vec![0.0; nd.coordinate + 1];
                self.tail_exp_upper(&zeros)
            }
        }
    }

    /// Upper bound for `∫ |ξ_S|² ν(dξ)` restricted (up to an upper bound)
    /// to the unit ball.
    pub fn sq_moment_upper(&self, coords: &[usize]) -> f64 {
        if coords.is_empty() {
            return 0.0;
        }
        match self {
            JumpMeasureSpec::Zero => 0.0,
            JumpMeasureSpec::PointMasses(atoms) => atoms
                .iter()
                .filter(|a| a.location.norm() <= 1.0)
                .map(|a| {
                    let sub: f64 = coords.iter().map(|&k| a.location[k].powi(2)).sum();
                    a.weight * sub
                })
                .sum(),
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => {
                if coords.contains(coordinate) {
                    2.0 * intensity / (rate * rate)
                } else {
                    0.0
                }
            }
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => {
                let m2: f64 = coords
                    .iter()
                    .map(|&k| mean[k] * mean[k] + cov[(k, k)])
                    .sum();
                intensity * m2
            }
            JumpMeasureSpec::NumericDensity(nd) => {
                if !coords.contains(&nd.coordinate) {
                    return 0.0;
                }
                let a = nd.support.0.max(-1.0);
                let b = nd.support.1.min(1.0);
                if a >= b {
                    return 0.0;
                }
                quad::integrate(|s| s * s * nd.density_at(s), a, b, 1e-9, 1e-13).value
            }
        }
    }

    /// `∫_{|ξ|≤1} ξ_i (e^{a ξ_i} - 1) ν(dξ)` for `a ≥ 0`; the coordinate is
    /// cone-valued so the integrand is nonnegative.
    pub fn ghat(&self, i: usize, a: f64) -> f64 {
        match self {
            JumpMeasureSpec::Zero | JumpMeasureSpec::GaussianFactor { .. } => 0.0,
            JumpMeasureSpec::PointMasses(atoms) => atoms
                .iter()
                .filter(|at| at.location.norm() <= 1.0)
                .map(|at| {
                    let xi = at.location[i];
                    at.weight * xi * ((a * xi).exp() - 1.0)
                })
                .sum(),
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => {
                if *coordinate != i {
                    return 0.0;
                }
                // intensity * rate * ∫_0^1 s (e^{as} - 1) e^{-rate s} ds
                fn int_s_exp(b: f64) -> f64 {
                    if b.abs() < 1e-8 {
                        0.5 + b / 3.0 + b * b / 8.0
                    } else {
                        (b.exp() * (b - 1.0) + 1.0) / (b * b)
                    }
                }
                intensity * rate * (int_s_exp(a - rate) - int_s_exp(-rate))
            }
            JumpMeasureSpec::NumericDensity(nd) => {
                if nd.coordinate != i {
                    return 0.0;
                }
                let lo = nd.support.0.max(0.0);
                let hi = nd.support.1.min(1.0);
                if lo >= hi {
                    return 0.0;
                }
                quad::integrate(
                    |s| s * ((a * s).exp() - 1.0) * nd.density_at(s),
                    lo,
                    hi,
                    1e-9,
                    1e-13,
                )
                .value
            }
        }
    }

    /// Zero-pad the specification into `dim + extra` ambient dimensions.
    pub fn lift(&self, extra: usize) -> JumpMeasureSpec {
        match self {
            JumpMeasureSpec::Zero => JumpMeasureSpec::Zero,
            JumpMeasureSpec::PointMasses(atoms) => JumpMeasureSpec::PointMasses(
                atoms
                    .iter()
                    .map(|a| {
                        let mut loc = DVector::zeros(a.location.len() + extra);
                        loc.rows_mut(0, a.location.len()).copy_from(&a.location);
                        JumpAtom {
                            location: loc,
                            weight: a.weight,
                        }
                    })
                    .collect(),
            ),
            JumpMeasureSpec::OneSidedExponential { .. } => self.clone(),
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => {
                let d = mean.len();
                let mut mean2 = DVector::zeros(d + extra);
                mean2.rows_mut(0, d).copy_from(mean);
                let mut cov2 = DMatrix::zeros(d + extra, d + extra);
                cov2.view_mut((0, 0), (d, d)).copy_from(cov);
                JumpMeasureSpec::GaussianFactor {
                    mean: mean2,
                    cov: cov2,
                    intensity: *intensity,
                }
            }
            JumpMeasureSpec::NumericDensity(_) => self.clone(),
        }
    }

    /// Same measure with all mass scaled by `c > 0`.
    pub fn scaled(&self, c: f64) -> JumpMeasureSpec {
        match self {
            JumpMeasureSpec::Zero => JumpMeasureSpec::Zero,
            JumpMeasureSpec::PointMasses(atoms) => JumpMeasureSpec::PointMasses(
                atoms
                    .iter()
                    .map(|a| JumpAtom {
                        location: a.location.clone(),
                        weight: c * a.weight,
                    })
                    .collect(),
            ),
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => JumpMeasureSpec::OneSidedExponential {
                coordinate: *coordinate,
                rate: *rate,
                intensity: c * intensity,
            },
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => JumpMeasureSpec::GaussianFactor {
                mean: mean.clone(),
                cov: cov.clone(),
                intensity: c * intensity,
            },
            JumpMeasureSpec::NumericDensity(nd) => {
                let g = nd.density.clone();
                JumpMeasureSpec::NumericDensity(NumericJumpDensity {
                    coordinate: nd.coordinate,
                    density: Arc::new(move |s| c * g(s)),
                    support: nd.support,
                    tail: nd.tail.clone(),
                })
            }
        }
    }

    /// Draw one jump size; `None` when the variant cannot be sampled.
    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Option<DVector<f64>> {
        match self {
            JumpMeasureSpec::Zero => Some(DVector::zeros(dim)),
            JumpMeasureSpec::PointMasses(atoms) => {
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                let mut pick = rng.gen::<f64>() * total;
                for a in atoms {
                    pick -= a.weight;
                    if pick <= 0.0 {
                        return Some(a.location.clone());
                    }
                }
                atoms.last().map(|a| a.location.clone())
            }
            JumpMeasureSpec::OneSidedExponential {
                coordinate, rate, ..
            } => {
                let s = Exp::new(*rate).expect("validated rate").sample(rng);
                let mut v = DVector::zeros(dim);
                v[*coordinate] = s;
                Some(v)
            }
            JumpMeasureSpec::GaussianFactor { mean, cov, .. } => {
                let l = linalg::psd_sqrt(cov);
                let z = DVector::from_fn(dim, |_, _| {
                    rand_distr::StandardNormal.sample(rng)
                });
                Some(mean + l * z)
            }
            JumpMeasureSpec::NumericDensity(_) => None,
        }
    }
}

/// A jump specification with evaluation-time constants cached (currently the
/// truncated first moment of Gaussian factors, which needs a ball integral).
#[derive(Debug, Clone)]
pub struct PreparedJumpMeasure {
    pub spec: JumpMeasureSpec,
    /// `∫_{|ξ|≤1} ξ ν(dξ)`, cached for variants whose compensator term is
    /// not otherwise closed-form.
    kappa: Option<DVector<f64>>,
}

impl PreparedJumpMeasure {
    pub fn new(spec: JumpMeasureSpec, dim: usize) -> Result<Self, String> {
        spec.check_shape(dim)?;
        let kappa = match &spec {
            JumpMeasureSpec::GaussianFactor { .. } => Some(gaussian_truncated_mean(&spec, dim)?),
            _ => None,
        };
        Ok(PreparedJumpMeasure { spec, kappa })
    }

    pub fn spec(&self) -> &JumpMeasureSpec {
        &self.spec
    }

    /// Compensated exponential integral at a real argument; `+∞` when the
    /// large-jump integral diverges there.
    pub fn eval_real(&self, y: &[f64]) -> f64 {
        match &self.spec {
            JumpMeasureSpec::Zero => 0.0,
            JumpMeasureSpec::PointMasses(atoms) => {
                let mut acc = 0.0;
                for a in atoms {
                    let dot: f64 = a
                        .location
                        .iter()
                        .zip(y.iter())
                        .map(|(xi, yi)| xi * yi)
                        .sum();
                    let mut term = dot.exp() - 1.0;
                    if a.location.norm() <= 1.0 {
                        term -= dot;
                    }
                    acc += a.weight * term;
                }
                acc
            }
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => {
                let z = y[*coordinate];
                if z >= *rate {
                    return f64::INFINITY;
                }
                one_sided_value(z, *rate, *intensity)
            }
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => {
                let yv = DVector::from_column_slice(y);
                let my = mean.dot(&yv);
                let quadform = (cov * &yv).dot(&yv);
                let kappa = self.kappa.as_ref().expect("cached at preparation");
                intensity * ((my + 0.5 * quadform).exp() - 1.0) - kappa.dot(&yv)
            }
            JumpMeasureSpec::NumericDensity(nd) => {
                match self.spec.tail_domain(y.len()).classify(y) {
                    Region::Outside => return f64::INFINITY,
                    Region::Boundary => {
                        // Boundary points belong to the domain only for
                        // closed declarations; strict ones diverge here.
                        if let DeclaredTail::Threshold { strict: true, .. } = nd.tail {
                            return f64::INFINITY;
                        }
                    }
                    Region::Interior => {}
                }
                numeric_value(nd, Complex64::new(y[nd.coordinate], 0.0)).re
            }
        }
    }

    /// Compensated exponential integral at a complex argument. The caller is
    /// responsible for `Re u` lying in the finiteness region.
    pub fn eval_complex(&self, u: &[Complex64]) -> Complex64 {
        match &self.spec {
            JumpMeasureSpec::Zero => Complex64::new(0.0, 0.0),
            JumpMeasureSpec::PointMasses(atoms) => {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in atoms {
                    let mut dot = Complex64::new(0.0, 0.0);
                    for (xi, ui) in a.location.iter().zip(u.iter()) {
                        dot += ui * *xi;
                    }
                    let mut term = dot.exp() - 1.0;
                    if a.location.norm() <= 1.0 {
                        term -= dot;
                    }
                    acc += term * a.weight;
                }
                acc
            }
            JumpMeasureSpec::OneSidedExponential {
                coordinate,
                rate,
                intensity,
            } => one_sided_value_complex(u[*coordinate], *rate, *intensity),
            JumpMeasureSpec::GaussianFactor {
                mean,
                cov,
                intensity,
            } => {
                let mut my = Complex64::new(0.0, 0.0);
                for (m, ui) in mean.iter().zip(u.iter()) {
                    my += ui * *m;
                }
                let d = mean.len();
                let mut quadform = Complex64::new(0.0, 0.0);
                for i in 0..d {
                    for j in 0..d {
                        quadform += u[i] * u[j] * cov[(i, j)];
                    }
                }
                let kappa = self.kappa.as_ref().expect("cached at preparation");
                let mut ky = Complex64::new(0.0, 0.0);
                for (k, ui) in kappa.iter().zip(u.iter()) {
                    ky += ui * *k;
                }
                ((my + 0.5 * quadform).exp() - 1.0) * *intensity - ky
            }
            JumpMeasureSpec::NumericDensity(nd) => numeric_value(nd, u[nd.coordinate]),
        }
    }
}

/// Closed form of the compensated integral for the one-sided exponential
/// measure at a real argument strictly below the rate.
fn one_sided_value(z: f64, rate: f64, intensity: f64) -> f64 {
    let trunc = (1.0 - (-rate).exp() * (1.0 + rate)) / rate;
    intensity * (z / (rate - z) - z * trunc)
}

fn one_sided_value_complex(z: Complex64, rate: f64, intensity: f64) -> Complex64 {
    let trunc = (1.0 - (-rate).exp() * (1.0 + rate)) / rate;
    (z / (rate - z) - z * trunc) * intensity
}

/// `(e^{z s} - 1) · g` computed through `exp(z s + ln g)`, so that a huge
/// exponential factor against an underflowing density value cannot turn a
/// decaying product into `inf · 0 = NaN`.
fn exp_weighted(z: Complex64, s: f64, g: f64) -> Complex64 {
    if g == 0.0 {
        Complex64::new(0.0, 0.0)
    } else if g > 0.0 {
        (z * s + g.ln()).exp() - g
    } else {
        ((z * s).exp() - 1.0) * g
    }
}

/// Adaptive evaluation of a density-specified measure at a (complex) scalar
/// argument whose real part lies inside the declared domain.
fn numeric_value(nd: &NumericJumpDensity, z: Complex64) -> Complex64 {
    let (lo, hi) = nd.support;
    let integrand = |s: f64| {
        let g = nd.density_at(s);
        let base = exp_weighted(z, s, g);
        if s.abs() <= 1.0 {
            base - z * s * g
        } else {
            base
        }
    };
    let mut acc = Complex64::new(0.0, 0.0);
    // Middle part, split at the truncation kinks.
    let a = lo.max(-1.0);
    let b = hi.min(1.0);
    if a < b {
        if a < 0.0 && b > 0.0 {
            acc += quad::integrate(integrand, a, 0.0, 1e-11, 1e-15).value;
            acc += quad::integrate(integrand, 0.0, b, 1e-11, 1e-15).value;
        } else {
            acc += quad::integrate(integrand, a, b, 1e-11, 1e-15).value;
        }
    }
    if hi > 1.0 {
        acc += quad::integrate_to_infinity(integrand, 1.0, 1e-11, 1e-15).value;
    }
    if lo < -1.0 {
        acc += quad::integrate_from_neg_infinity(integrand, -1.0, 1e-11, 1e-15).value;
    }
    acc
}

/// `∫_{|ξ|≤1} ξ ν(dξ)` for a Gaussian factor. Exact through the error
/// function when a single coordinate is active; a polar quadrature covers two
/// active coordinates. More than two active coordinates are rejected, which
/// keeps the compensator deterministic.
fn gaussian_truncated_mean(spec: &JumpMeasureSpec, dim: usize) -> Result<DVector<f64>, String> {
    let (mean, cov, intensity) = match spec {
        JumpMeasureSpec::GaussianFactor {
            mean,
            cov,
            intensity,
        } => (mean, cov, *intensity),
        _ => unreachable!("caller matches the variant"),
    };
    let active = spec.gaussian_active();
    let mut kappa = DVector::zeros(dim);
    match active.len() {
        0 => Ok(kappa),
        1 => {
            let j = active[0];
            let mu = mean[j];
            let delta = cov[(j, j)].max(0.0).sqrt();
            kappa[j] = if delta < 1e-300 {
                if mu.abs() <= 1.0 {
                    intensity * mu
                } else {
                    0.0
                }
            } else {
                let alpha = (-1.0 - mu) / delta;
                let beta = (1.0 - mu) / delta;
                intensity
                    * (mu * (norm_cdf(beta) - norm_cdf(alpha))
                        - delta * (norm_pdf(beta) - norm_pdf(alpha)))
            };
            Ok(kappa)
        }
        2 => {
            let (p, q) = (active[0], active[1]);
            let sub = DMatrix::from_fn(2, 2, |i, j| {
                cov[(if i == 0 { p } else { q }, if j == 0 { p } else { q })]
            });
            let det = sub[(0, 0)] * sub[(1, 1)] - sub[(0, 1)] * sub[(1, 0)];
            if det <= 1e-14 * (1.0 + sub.amax()).powi(2) {
                return Err(
                    "degenerate two-coordinate Gaussian jump factor is not supported".into(),
                );
            }
            let inv = DMatrix::from_row_slice(
                2,
                2,
                &[
                    sub[(1, 1)] / det,
                    -sub[(0, 1)] / det,
                    -sub[(1, 0)] / det,
                    sub[(0, 0)] / det,
                ],
            );
            let mu = [mean[p], mean[q]];
            let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
            // Polar Gauss-Legendre over the unit disk: smooth integrand,
            // fixed order is plenty.
            let (nodes, weights) = gauss_legendre_64();
            let n_ang = 128usize;
            let mut acc = [0.0_f64; 2];
            for (&tn, &tw) in nodes.iter().zip(weights.iter()) {
                let r = 0.5 * (tn + 1.0);
                let rw = 0.5 * tw;
                for k in 0..n_ang {
                    let ang = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / n_ang as f64;
                    let aw = 2.0 * std::f64::consts::PI / n_ang as f64;
                    let x = [r * ang.cos(), r * ang.sin()];
                    let dx = [x[0] - mu[0], x[1] - mu[1]];
                    let quadform = dx[0] * (inv[(0, 0)] * dx[0] + inv[(0, 1)] * dx[1])
                        + dx[1] * (inv[(1, 0)] * dx[0] + inv[(1, 1)] * dx[1]);
                    let pdf = norm * (-0.5 * quadform).exp();
                    let w = rw * aw * r * pdf;
                    acc[0] += w * x[0];
                    acc[1] += w * x[1];
                }
            }
            kappa[p] = intensity * acc[0];
            kappa[q] = intensity * acc[1];
            Ok(kappa)
        }
        n => Err(format!(
            "Gaussian jump factors with {n} active coordinates are not supported (at most 2)"
        )),
    }
}

/// 64-point Gauss-Legendre rule on `[-1, 1]`, computed once by Newton
/// iteration on the Legendre recurrence.
fn gauss_legendre_64() -> (Vec<f64>, Vec<f64>) {
    let n = 64usize;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let (mut p0, mut p1) = (1.0_f64, 0.0_f64);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            let dp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
            let dx = p0 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                let w = 2.0 / ((1.0 - x * x) * dp * dp);
                nodes[i] = -x;
                nodes[n - 1 - i] = x;
                weights[i] = w;
                weights[n - 1 - i] = w;
                break;
            }
        }
    }
    (nodes, weights)
}
