//! Generalized Riccati systems `ṗ = F(q)`, `q̇ = R(q)` with `p(0) = 0`,
//! `q(0) = y`, integrated in real and in complex arithmetic.
//!
//! The solvers wrap [`crate::ode`] with the bookkeeping the exponents need:
//! a monitor that watches the trajectory against the finiteness region of
//! the jump transforms, blow-up detection with a refined estimate of the
//! explosion time, and a certificate stating why the computed solution is
//! the minimal one (or that no reason could be established). On top of a
//! single solve sit [`explosion_time`], the semiflow self-check, and the
//! coordinatewise comparison between the real and the complex system.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::domain::{DomainY, Region};
use crate::error::{Error, Result};
use crate::levy::FunctionalFamily;
use crate::ode::{self, MonitorVerdict, OdeOptions, OdeSolution, StepInterp, Termination};
use crate::state_space::AffineParams;

/// Knobs of a single Riccati solve.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step the integrator may take; `None` leaves it free.
    pub max_step: Option<f64>,
    /// Norm of `q` past which the trajectory counts as escaping. Blow-up is
    /// declared only when the step size collapses as well, so a large but
    /// tame excursion is not mistaken for an explosion.
    pub blowup_norm_threshold: f64,
    /// Step floor as a fraction of the horizon.
    pub min_step_factor: f64,
    /// Keep the interpolation data so the trajectory can be evaluated
    /// between grid points afterwards.
    pub dense_output: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: None,
            blowup_norm_threshold: 1e8,
            min_step_factor: 1e-12,
            dense_output: false,
        }
    }
}

impl SolveOptions {
    // Negated comparisons so that NaN inputs fail the gate.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn check(&self, horizon: f64) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Structure("tolerances must be positive".into()));
        }
        if !(self.blowup_norm_threshold > 1.0) {
            return Err(Error::Structure(
                "blowup_norm_threshold must exceed 1".into(),
            ));
        }
        if !(self.min_step_factor > 0.0) {
            return Err(Error::Structure("min_step_factor must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::Structure("max_step must be positive".into()));
            }
        }
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::Structure(
                "the horizon must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn ode_options(&self, horizon: f64) -> OdeOptions {
        OdeOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            min_step: self.min_step_factor * horizon,
            dense: true,
        }
    }
}

/// How a solve ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    /// The horizon was reached.
    Completed,
    /// `‖q‖` crossed the norm threshold and the step size collapsed;
    /// `t_star` estimates the explosion time, `bracket` its half-width.
    BlowUp { t_star: f64, bracket: f64 },
    /// The trajectory reached the boundary of the finiteness region with
    /// the vector field still finite on the way there.
    BoundaryContact { t: f64, description: String },
    /// The trajectory was caught outside the finiteness region.
    DomainExit { t: f64 },
}

/// Why the computed solution is the minimal one. The clauses are ordered
/// from the most structural to the most path-dependent; `Unknown` means
/// none of them could be verified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimalityCertificate {
    /// No jumps at all: the system is locally Lipschitz and the solution
    /// unique outright.
    Diffusion,
    /// The finiteness region is the whole space.
    FullDomain,
    /// The finiteness region is open, so any solution staying inside it is
    /// automatically minimal.
    OpenDomain,
    /// The region has a boundary the trajectory might have met, but the
    /// computed path stayed in the interior throughout.
    InteriorPath,
    Unknown,
}

/// Solution of the extended (real) system on `[0, T]`.
#[derive(Debug)]
pub struct RiccatiTrajectory {
    /// Accepted time grid, starting at `0`.
    pub times: Vec<f64>,
    /// `p` samples on the grid; `p[0] = 0`.
    pub p: Vec<f64>,
    /// `q` samples on the grid; `q[0] = y`.
    pub q: Vec<DVector<f64>>,
    pub status: TrajectoryStatus,
    pub certificate: MinimalityCertificate,
    /// Tolerance-scaled bound on the accumulated integration error.
    pub error_estimate: f64,
    dense: Option<OdeSolution>,
}

impl RiccatiTrajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("grid holds the initial point")
    }

    pub fn final_p(&self) -> f64 {
        *self.p.last().expect("grid holds the initial point")
    }

    pub fn final_q(&self) -> &DVector<f64> {
        self.q.last().expect("grid holds the initial point")
    }

    /// Interpolated `(p, q)` anywhere on the grid span. Needs the solve to
    /// have been run with `dense_output`.
    pub fn eval(&self, t: f64) -> Result<(f64, DVector<f64>)> {
        let sol = self.dense.as_ref().ok_or_else(|| {
            Error::Structure("trajectory was not solved with dense_output".into())
        })?;
        let mut buf = vec![0.0; 1 + self.q[0].len()];
        sol.eval(t, &mut buf);
        Ok((buf[0], DVector::from_column_slice(&buf[1..])))
    }

    /// CSV rows `t,p,q_1..q_d` followed by a JSON status footer.
    pub fn to_csv(&self) -> String {
        let d = self.q[0].len();
        let mut out = String::from("t,p");
        for i in 1..=d {
            out.push_str(&format!(",q_{i}"));
        }
        out.push('\n');
        for k in 0..self.times.len() {
            out.push_str(&format!("{:.16e},{:.16e}", self.times[k], self.p[k]));
            for v in self.q[k].iter() {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out.push_str(&status_footer(&self.status, &self.certificate));
        out
    }
}

/// Solution of the complex system `φ̇ = F(ψ)`, `ψ̇ = R(ψ)` on `[0, T]`.
#[derive(Debug)]
pub struct ComplexTrajectory {
    pub times: Vec<f64>,
    /// `φ` samples; `φ[0] = 0`.
    pub phi: Vec<Complex64>,
    /// `ψ` samples; `ψ[0] = u`.
    pub psi: Vec<DVector<Complex64>>,
    pub status: TrajectoryStatus,
    pub certificate: MinimalityCertificate,
    pub error_estimate: f64,
    dense: Option<(QLayout, OdeSolution)>,
}

impl ComplexTrajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("grid holds the initial point")
    }

    pub fn final_phi(&self) -> Complex64 {
        *self.phi.last().expect("grid holds the initial point")
    }

    pub fn final_psi(&self) -> &DVector<Complex64> {
        self.psi.last().expect("grid holds the initial point")
    }

    /// Interpolated `(φ, ψ)` anywhere on the grid span. Needs the solve to
    /// have been run with `dense_output`.
    pub fn eval(&self, t: f64) -> Result<(Complex64, DVector<Complex64>)> {
        let (layout, sol) = self.dense.as_ref().ok_or_else(|| {
            Error::Structure("trajectory was not solved with dense_output".into())
        })?;
        let d = self.psi[0].len();
        match layout {
            QLayout::Real => {
                let mut buf = vec![0.0; 1 + d];
                sol.eval(t, &mut buf);
                let phi = Complex64::new(buf[0], 0.0);
                let psi = DVector::from_fn(d, |i, _| Complex64::new(buf[1 + i], 0.0));
                Ok((phi, psi))
            }
            QLayout::Complex => {
                let mut buf = vec![0.0; 2 * (1 + d)];
                sol.eval(t, &mut buf);
                let phi = Complex64::new(buf[0], buf[1]);
                let psi = DVector::from_fn(d, |i, _| {
                    Complex64::new(buf[2 + 2 * i], buf[3 + 2 * i])
                });
                Ok((phi, psi))
            }
        }
    }

    /// CSV rows `t,p_re,p_im,q_1_re,q_1_im,..` with a JSON status footer.
    pub fn to_csv(&self) -> String {
        let d = self.psi[0].len();
        let mut out = String::from("t,p_re,p_im");
        for i in 1..=d {
            out.push_str(&format!(",q_{i}_re,q_{i}_im"));
        }
        out.push('\n');
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e}",
                self.times[k], self.phi[k].re, self.phi[k].im
            ));
            for v in self.psi[k].iter() {
                out.push_str(&format!(",{:.16e},{:.16e}", v.re, v.im));
            }
            out.push('\n');
        }
        out.push_str(&status_footer(&self.status, &self.certificate));
        out
    }
}

fn status_footer(status: &TrajectoryStatus, certificate: &MinimalityCertificate) -> String {
    let json = serde_json::json!({ "status": status, "certificate": certificate });
    format!("# status: {json}\n")
}

/// Where the `q` block lives inside the stacked ODE state and how to read
/// the real part driving the domain monitor.
#[derive(Debug, Clone, Copy)]
enum QLayout {
    /// `[p, q_1..q_d]`.
    Real,
    /// `[Re φ, Im φ, Re ψ_1, Im ψ_1, ..]`.
    Complex,
}

impl QLayout {
    fn q_start(self) -> usize {
        match self {
            QLayout::Real => 1,
            QLayout::Complex => 2,
        }
    }

    fn real_part(self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            QLayout::Real => out.extend_from_slice(&x[1..]),
            QLayout::Complex => out.extend(x[2..].iter().step_by(2)),
        }
    }
}

fn block_norm(x: &[f64], start: usize) -> f64 {
    x[start..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Monitor bookkeeping shared by the real and the complex solve.
struct DomainWatch<'a> {
    domain: &'a DomainY,
    layout: QLayout,
    threshold: f64,
    crossed_at: Option<f64>,
    all_interior: bool,
    stop: Option<TrajectoryStatus>,
}

impl<'a> DomainWatch<'a> {
    fn new(domain: &'a DomainY, layout: QLayout, threshold: f64, y0_interior: bool) -> Self {
        DomainWatch {
            domain,
            layout,
            threshold,
            crossed_at: None,
            all_interior: y0_interior,
            stop: None,
        }
    }

    fn inspect(&mut self, interp: &StepInterp, t_new: f64, x: &[f64]) -> MonitorVerdict {
        if self.crossed_at.is_none() && block_norm(x, self.layout.q_start()) >= self.threshold {
            self.crossed_at = Some(t_new);
        }
        if self.domain.is_full_space() {
            return MonitorVerdict::Continue;
        }
        let mut re_q = Vec::new();
        self.layout.real_part(x, &mut re_q);
        match self.domain.classify(&re_q) {
            Region::Interior => MonitorVerdict::Continue,
            region => {
                let t_hit = first_departure(interp, t_new, self.domain, self.layout);
                let mut buf = vec![0.0; x.len()];
                interp.eval(t_hit, &mut buf);
                self.layout.real_part(&buf, &mut re_q);
                self.all_interior = false;
                self.stop = Some(match region {
                    Region::Boundary => TrajectoryStatus::BoundaryContact {
                        t: t_hit,
                        description: describe_boundary(self.domain, &re_q),
                    },
                    _ => TrajectoryStatus::DomainExit { t: t_hit },
                });
                MonitorVerdict::Stop { t: t_hit }
            }
        }
    }
}

/// Earliest time in the step at which the interpolated state stops being
/// interior. The step start is interior for every accepted step except a
/// flagged boundary start, which is returned as-is.
fn first_departure(interp: &StepInterp, t_new: f64, domain: &DomainY, layout: QLayout) -> f64 {
    let mut buf = Vec::new();
    let mut re_q = Vec::new();
    let mut eval_region = |t: f64| {
        buf.resize(0, 0.0);
        buf.resize(interp_len(interp), 0.0);
        interp.eval(t, &mut buf);
        layout.real_part(&buf, &mut re_q);
        domain.classify(&re_q)
    };
    let mut lo = interp.t_start();
    let mut hi = t_new;
    if !matches!(eval_region(lo), Region::Interior) {
        return lo;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if matches!(eval_region(mid), Region::Interior) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn interp_len(interp: &StepInterp) -> usize {
    interp.dim()
}

/// Short human-readable account of which boundary face was met.
fn describe_boundary(domain: &DomainY, q: &[f64]) -> String {
    let mut best: Option<(f64, String)> = None;
    for hs in domain.half_spaces() {
        let gap = hs.margin(q).abs();
        let side = if hs.strict { "open" } else { "closed" };
        let text = match single_coordinate(&hs.normal) {
            Some((i, scale)) => format!(
                "coordinate {i} at its bound {} ({side} side)",
                hs.offset / scale
            ),
            None => format!("hyperplane with offset {} ({side} side)", hs.offset),
        };
        if best.as_ref().map_or(true, |(g, _)| gap < *g) {
            best = Some((gap, text));
        }
    }
    match best {
        Some((_, text)) => text,
        None => "membership callback boundary".into(),
    }
}

fn single_coordinate(normal: &DVector<f64>) -> Option<(usize, f64)> {
    let mut found = None;
    for (i, v) in normal.iter().enumerate() {
        if *v != 0.0 {
            if found.is_some() {
                return None;
            }
            found = Some((i, *v));
        }
    }
    found
}

fn jump_free(params: &AffineParams) -> bool {
    match params {
        AffineParams::Canonical(p) => {
            p.m_jumps.is_zero() && p.mu_jumps.iter().all(|j| j.is_zero())
        }
        AffineParams::Matrix(p) => p.m_jumps.is_empty() && p.mu_jumps.is_empty(),
    }
}

fn certificate_for(
    family: &FunctionalFamily,
    all_interior: bool,
    status: &TrajectoryStatus,
) -> MinimalityCertificate {
    if jump_free(family.params()) {
        return MinimalityCertificate::Diffusion;
    }
    let dom = family.domain();
    if dom.is_full_space() {
        return MinimalityCertificate::FullDomain;
    }
    if dom.is_open() {
        return MinimalityCertificate::OpenDomain;
    }
    if !dom.has_callbacks()
        && all_interior
        && matches!(status, TrajectoryStatus::Completed)
    {
        return MinimalityCertificate::InteriorPath;
    }
    MinimalityCertificate::Unknown
}

fn tolerance_scale(opts: &SolveOptions, states: &[Vec<f64>]) -> f64 {
    let biggest = states
        .iter()
        .flat_map(|x| x.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    opts.abs_tol + opts.rel_tol * biggest
}

/// Integrate `ṗ = F(q)`, `q̇ = R(q)` from `p = 0`, `q = y` up to `horizon`.
///
/// The initial point may lie on the boundary of the finiteness region;
/// such a start is allowed but can no longer earn an `InteriorPath`
/// certificate. A point outside the region is rejected, since the moments
/// the solution would describe are infinite from the outset.
pub fn solve_extended(
    family: &FunctionalFamily,
    y: &[f64],
    horizon: f64,
    opts: &SolveOptions,
) -> Result<RiccatiTrajectory> {
    opts.check(horizon)?;
    let d = family.dim();
    if y.len() != d {
        return Err(Error::Structure(format!(
            "initial point has dimension {}, expected {d}",
            y.len()
        )));
    }
    let y0_region = family.classify(y);
    if matches!(y0_region, Region::Outside) {
        return Err(Error::Domain(
            "the initial point lies outside the finiteness region of the jump transforms"
                .into(),
        ));
    }

    let mut x0 = vec![0.0; d + 1];
    x0[1..].copy_from_slice(y);

    let mut rhs = real_rhs(family);
    let mut watch = DomainWatch::new(
        family.domain(),
        QLayout::Real,
        opts.blowup_norm_threshold,
        matches!(y0_region, Region::Interior),
    );
    let sol = ode::integrate_adaptive(
        &mut rhs,
        0.0,
        &x0,
        horizon,
        &opts.ode_options(horizon),
        |interp, t, x| watch.inspect(interp, t, x),
    );

    let status = settle_status(&sol, &mut watch, family, QLayout::Real, horizon, opts)?;
    let certificate = certificate_for(family, watch.all_interior, &status);
    let error_estimate = sol.error_sum * tolerance_scale(opts, &sol.states);

    let times = sol.times.clone();
    let p: Vec<f64> = sol.states.iter().map(|x| x[0]).collect();
    let q: Vec<DVector<f64>> = sol
        .states
        .iter()
        .map(|x| DVector::from_column_slice(&x[1..]))
        .collect();
    Ok(RiccatiTrajectory {
        times,
        p,
        q,
        status,
        certificate,
        error_estimate,
        dense: opts.dense_output.then_some(sol),
    })
}

/// Integrate `φ̇ = F(ψ)`, `ψ̇ = R(ψ)` from `φ = 0`, `ψ = u` up to `horizon`.
///
/// The real part of `ψ` is held to the interior of the finiteness region;
/// the solve ends with `DomainExit` or `BoundaryContact` when it leaves.
/// For real `u` the result coincides with [`solve_extended`].
pub fn solve_complex(
    family: &FunctionalFamily,
    u: &[Complex64],
    horizon: f64,
    opts: &SolveOptions,
) -> Result<ComplexTrajectory> {
    opts.check(horizon)?;
    let d = family.dim();
    if u.len() != d {
        return Err(Error::Structure(format!(
            "initial point has dimension {}, expected {d}",
            u.len()
        )));
    }
    // Rejects a start whose real part is not interior, naming the violated
    // jump tail in the error.
    family.eval_r_complex(u)?;
    family.eval_f_complex(u)?;

    // A real start keeps the whole trajectory real, and with identical
    // arithmetic the real solver is the same computation; running it keeps
    // the two solvers consistent to the last bit rather than to the step
    // controller's whim.
    if u.iter().all(|z| z.im == 0.0) {
        let re: Vec<f64> = u.iter().map(|z| z.re).collect();
        let traj = solve_extended(family, &re, horizon, opts)?;
        return Ok(embed_real(traj));
    }

    let mut x0 = vec![0.0; 2 * (d + 1)];
    for (i, z) in u.iter().enumerate() {
        x0[2 + 2 * i] = z.re;
        x0[3 + 2 * i] = z.im;
    }

    let mut rhs = complex_rhs(family);
    let mut watch = DomainWatch::new(
        family.domain(),
        QLayout::Complex,
        opts.blowup_norm_threshold,
        true,
    );
    let sol = ode::integrate_adaptive(
        &mut rhs,
        0.0,
        &x0,
        horizon,
        &opts.ode_options(horizon),
        |interp, t, x| watch.inspect(interp, t, x),
    );

    let status = settle_status(&sol, &mut watch, family, QLayout::Complex, horizon, opts)?;
    let certificate = certificate_for(family, watch.all_interior, &status);
    let error_estimate = sol.error_sum * tolerance_scale(opts, &sol.states);

    let times = sol.times.clone();
    let phi: Vec<Complex64> = sol
        .states
        .iter()
        .map(|x| Complex64::new(x[0], x[1]))
        .collect();
    let psi: Vec<DVector<Complex64>> = sol
        .states
        .iter()
        .map(|x| DVector::from_fn(d, |i, _| Complex64::new(x[2 + 2 * i], x[3 + 2 * i])))
        .collect();
    Ok(ComplexTrajectory {
        times,
        phi,
        psi,
        status,
        certificate,
        error_estimate,
        dense: opts.dense_output.then_some((QLayout::Complex, sol)),
    })
}

fn embed_real(traj: RiccatiTrajectory) -> ComplexTrajectory {
    ComplexTrajectory {
        times: traj.times,
        phi: traj.p.iter().map(|&p| Complex64::new(p, 0.0)).collect(),
        psi: traj
            .q
            .iter()
            .map(|q| q.map(|v| Complex64::new(v, 0.0)))
            .collect(),
        status: traj.status,
        certificate: traj.certificate,
        error_estimate: traj.error_estimate,
        dense: traj.dense.map(|sol| (QLayout::Real, sol)),
    }
}

fn real_rhs(family: &FunctionalFamily) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    move |_t, x, dx| {
        let q = &x[1..];
        dx[0] = family.eval_f_real(q);
        let r = family.eval_r_real(q);
        dx[1..].copy_from_slice(r.as_slice());
    }
}

fn complex_rhs(family: &FunctionalFamily) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    let d = family.dim();
    let mut psi = vec![Complex64::new(0.0, 0.0); d];
    move |_t, x, dx| {
        for (i, z) in psi.iter_mut().enumerate() {
            *z = Complex64::new(x[2 + 2 * i], x[3 + 2 * i]);
        }
        // Evaluation fails when Re ψ drifts out of the finiteness region
        // mid-step; a non-finite slope makes the integrator retreat, and
        // the monitor settles the verdict at an accepted point.
        match (family.eval_f_complex(&psi), family.eval_r_complex(&psi)) {
            (Ok(fv), Ok(rv)) => {
                dx[0] = fv.re;
                dx[1] = fv.im;
                for (i, z) in rv.iter().enumerate() {
                    dx[2 + 2 * i] = z.re;
                    dx[3 + 2 * i] = z.im;
                }
            }
            _ => dx.fill(f64::NAN),
        }
    }
}

/// Translate the integrator's termination into a trajectory status,
/// refining a blow-up and recognizing a collapse onto the boundary.
fn settle_status(
    sol: &OdeSolution,
    watch: &mut DomainWatch,
    family: &FunctionalFamily,
    layout: QLayout,
    horizon: f64,
    opts: &SolveOptions,
) -> Result<TrajectoryStatus> {
    match sol.termination {
        Termination::Reached => Ok(TrajectoryStatus::Completed),
        Termination::MonitorStop { .. } => Ok(watch
            .stop
            .take()
            .expect("monitor recorded a reason before stopping")),
        Termination::StepSizeCollapse { t } => {
            let x_last = sol.final_state();
            let q_norm = block_norm(x_last, layout.q_start());
            if watch.crossed_at.is_some() || q_norm >= opts.blowup_norm_threshold {
                let (t_star, bracket) = refine_blowup(sol, family, layout, horizon, opts);
                return Ok(TrajectoryStatus::BlowUp { t_star, bracket });
            }
            let mut re_q = Vec::new();
            layout.real_part(x_last, &mut re_q);
            let dom = family.domain();
            if !dom.is_full_space() {
                if !matches!(dom.classify(&re_q), Region::Interior) {
                    watch.all_interior = false;
                    return Ok(TrajectoryStatus::BoundaryContact {
                        t,
                        description: describe_boundary(dom, &re_q),
                    });
                }
                // A diverging vector field pins the step floor a hair short
                // of the face. When the remaining gap is small and would be
                // crossed in a negligible fraction of the elapsed time, the
                // run has reached the boundary for every practical purpose.
                if let Some(dist) = dom.boundary_distance(&re_q) {
                    let speed = family.eval_r_real(&re_q).norm();
                    if dist.is_finite()
                        && speed.is_finite()
                        && speed > 0.0
                        && dist <= 1e-4 * (1.0 + block_norm(x_last, layout.q_start()))
                        && dist / speed <= 1e-6 * (1.0 + t)
                    {
                        watch.all_interior = false;
                        return Ok(TrajectoryStatus::BoundaryContact {
                            t,
                            description: describe_boundary(dom, &re_q),
                        });
                    }
                }
            }
            Err(Error::NonConvergence(format!(
                "step size collapsed at t = {t:.6e} with bounded state away from the boundary"
            )))
        }
    }
}

/// Re-run the tail of a blown-up solve with the tolerances floored and the
/// step floor at machine precision, then extrapolate the remaining time to
/// the pole. For the quadratic vector fields at hand `‖q‖/‖R(q)‖` is the
/// leading-order value of `t* − t`, so the collapse point of the refined
/// run plus that increment estimates `t*` to roughly the integration error.
/// The disagreement between the coarse and the refined estimate measures
/// that error and widens the reported bracket.
fn refine_blowup(
    sol: &OdeSolution,
    family: &FunctionalFamily,
    layout: QLayout,
    horizon: f64,
    opts: &SolveOptions,
) -> (f64, f64) {
    let start = layout.q_start();
    let coarse = pole_estimate(family, layout, sol.final_time(), sol.final_state());

    let cap = (opts.blowup_norm_threshold / 100.0).max(1.0);
    let idx = sol
        .states
        .iter()
        .rposition(|x| block_norm(x, start) <= cap)
        .unwrap_or(0);
    let t_restart = sol.times[idx];
    let x_restart = sol.states[idx].clone();

    let sub_opts = OdeOptions {
        rel_tol: opts.rel_tol.min(1e-12),
        abs_tol: opts.abs_tol.min(1e-12),
        max_step: None,
        min_step: 4.0 * f64::EPSILON * (1.0 + sol.final_time()),
        dense: false,
    };
    let run = match layout {
        QLayout::Real => ode::integrate_adaptive(
            real_rhs(family),
            t_restart,
            &x_restart,
            horizon,
            &sub_opts,
            |_, _, _| MonitorVerdict::Continue,
        ),
        QLayout::Complex => ode::integrate_adaptive(
            complex_rhs(family),
            t_restart,
            &x_restart,
            horizon,
            &sub_opts,
            |_, _, _| MonitorVerdict::Continue,
        ),
    };

    let (t_star, delta) = pole_estimate(family, layout, run.final_time(), run.final_state());
    // The refined run inherits the first pass's state at the restart, so
    // the two estimates share whatever time lag built up before it. That
    // lag is worst where the field is slowest, which for a blow-up run is
    // the start: a state error of tolerance size there shifts the whole
    // schedule by its ratio to the initial speed.
    let mut dx0 = vec![0.0; sol.states[0].len()];
    match layout {
        QLayout::Real => real_rhs(family)(sol.times[0], &sol.states[0], &mut dx0),
        QLayout::Complex => complex_rhs(family)(sol.times[0], &sol.states[0], &mut dx0),
    }
    let speed0 = block_norm(&dx0, start);
    let q0_norm = block_norm(&sol.states[0], start);
    let inherited = if speed0 > 0.0 {
        sol.error_sum * (opts.abs_tol + opts.rel_tol * q0_norm) / speed0
    } else {
        0.0
    };
    let bracket = 2.0 * delta
        + (t_star - coarse.0).abs()
        + inherited
        + 1e3 * f64::EPSILON * (1.0 + t_star);
    (t_star, bracket)
}

/// Extrapolated pole position from a state deep in the singular regime,
/// together with the extrapolation increment.
fn pole_estimate(
    family: &FunctionalFamily,
    layout: QLayout,
    t: f64,
    x: &[f64],
) -> (f64, f64) {
    let start = layout.q_start();
    let mut dx = vec![0.0; x.len()];
    match layout {
        QLayout::Real => real_rhs(family)(t, x, &mut dx),
        QLayout::Complex => complex_rhs(family)(t, x, &mut dx),
    }
    let q_norm = block_norm(x, start);
    let slope = block_norm(&dx, start);
    let delta = if slope.is_finite() && slope > 0.0 && q_norm.is_finite() {
        q_norm / slope
    } else {
        0.0
    };
    (t + delta, delta)
}

/// When the exponential moment from `y` stops being finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplosionTime {
    /// Explosion observed at `t_plus`, accurate to `± tol`.
    Finite { t_plus: f64, tol: f64 },
    /// No explosion up to the largest horizon tried.
    ExceedsHorizon { t_max: f64 },
}

/// Locate the lifetime of the solution from `y`, growing the attempted
/// horizon geometrically up to `t_max`.
///
/// Once a blow-up is observed, the solve is repeated at tighter integration
/// tolerances and a higher escape threshold until the reported half-width
/// drops below `tol`; a request beyond what refinement can deliver ends in
/// a non-convergence error carrying the half-width that was achieved.
///
/// A starting point outside the finiteness region explodes immediately and
/// returns `Finite` with `t_plus = 0`. A boundary start is attempted like
/// any other, but carries no minimality certificate. When the trajectory
/// ends on the boundary rather than by norm growth, the lifetime past the
/// contact is not determined and an error says so.
// Negated comparisons so that NaN inputs fail the gate.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn explosion_time(
    family: &FunctionalFamily,
    y: &[f64],
    t_max: f64,
    tol: f64,
) -> Result<ExplosionTime> {
    if !(tol > 0.0) {
        return Err(Error::Structure("tolerance must be positive".into()));
    }
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::Structure(
            "t_max must be finite and positive".into(),
        ));
    }
    if matches!(family.classify(y), Region::Outside) {
        return Ok(ExplosionTime::Finite {
            t_plus: 0.0,
            tol: 0.0,
        });
    }

    let mut opts = SolveOptions::default();
    let mut horizon = t_max.min(1.0);
    loop {
        let traj = solve_extended(family, y, horizon, &opts)?;
        match traj.status {
            TrajectoryStatus::BlowUp { t_star, bracket } => {
                let (mut best_t, mut best_b) = (t_star, bracket);
                while best_b > tol && opts.rel_tol > 1.1e-13 {
                    opts.rel_tol = (opts.rel_tol * 1e-2).max(1e-13);
                    opts.abs_tol = (opts.abs_tol * 1e-2).max(1e-15);
                    opts.blowup_norm_threshold =
                        (opts.blowup_norm_threshold * 1e2).min(1e12);
                    match solve_extended(family, y, horizon, &opts)?.status {
                        TrajectoryStatus::BlowUp { t_star, bracket }
                            if bracket < best_b =>
                        {
                            best_t = t_star;
                            best_b = bracket;
                        }
                        TrajectoryStatus::BlowUp { .. } => {}
                        // The sharper run pushed the escape past the horizon;
                        // keep the coarse location rather than refine further.
                        _ => break,
                    }
                }
                if best_b > tol {
                    return Err(Error::NonConvergence(format!(
                        "the blow-up is located to ± {best_b:.3e}; \
                         the requested ± {tol:.3e} was not reached"
                    )));
                }
                return Ok(ExplosionTime::Finite {
                    t_plus: best_t,
                    tol: best_b,
                });
            }
            TrajectoryStatus::Completed => {
                if horizon >= t_max {
                    return Ok(ExplosionTime::ExceedsHorizon { t_max });
                }
                horizon = (2.0 * horizon).min(t_max);
            }
            TrajectoryStatus::BoundaryContact { t, .. }
            | TrajectoryStatus::DomainExit { t } => {
                return Err(Error::Unsupported(format!(
                    "the trajectory reaches the domain boundary at t ≈ {t:.6}; \
                     lifetimes past a boundary contact are not determined"
                )));
            }
        }
    }
}

/// Check the flow property `p(T) = p(s) + p(T−s, q(s))` and its `q`
/// counterpart on a completed trajectory.
///
/// Each requested split is snapped to the nearest grid time, so the restart
/// state is a stored value rather than an interpolation. Returns the worst
/// residual over all splits, measuring `p` mismatches absolutely and `q`
/// mismatches in the Euclidean norm.
pub fn verify_semiflow(
    family: &FunctionalFamily,
    traj: &RiccatiTrajectory,
    split_points: &[f64],
) -> Result<f64> {
    if !matches!(traj.status, TrajectoryStatus::Completed) {
        return Err(Error::Structure(
            "semiflow verification needs a completed trajectory".into(),
        ));
    }
    let t_end = traj.final_time();
    let p_end = traj.final_p();
    let q_end = traj.final_q();
    let opts = SolveOptions::default();

    let mut worst = 0.0f64;
    for &t in split_points {
        let s = (t_end - t).clamp(0.0, t_end);
        let j = nearest_index(&traj.times, s);
        let tail = t_end - traj.times[j];
        let second = solve_extended(family, traj.q[j].as_slice(), tail, &opts)?;
        if !matches!(second.status, TrajectoryStatus::Completed) {
            return Err(Error::NonConvergence(
                "re-solving from the split point did not reach the horizon".into(),
            ));
        }
        let dp = (p_end - traj.p[j] - second.final_p()).abs();
        let dq = (q_end - second.final_q()).norm();
        worst = worst.max(dp).max(dq);
    }
    Ok(worst)
}

fn nearest_index(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    let mut gap = f64::INFINITY;
    for (i, ti) in times.iter().enumerate() {
        let g = (ti - t).abs();
        if g < gap {
            gap = g;
            best = i;
        }
    }
    best
}

/// Integrate the real system from `Re u` and the complex system from `u`
/// side by side and return the worst value of `min_i [q_i − Re ψ_i]` over
/// the cone coordinates along the way.
///
/// The real solution dominates the real part of the complex one
/// coordinatewise on the cone, so the returned margin should never fall
/// meaningfully below zero; it is zero at `t = 0` by construction.
pub fn comparison_check(
    family: &FunctionalFamily,
    u: &[Complex64],
    horizon: f64,
) -> Result<f64> {
    let m = match family.params() {
        AffineParams::Canonical(p) => p.m,
        AffineParams::Matrix(_) => {
            return Err(Error::Unsupported(
                "the coordinatewise comparison needs the canonical state space".into(),
            ));
        }
    };
    let d = family.dim();
    if u.len() != d {
        return Err(Error::Structure(format!(
            "initial point has dimension {}, expected {d}",
            u.len()
        )));
    }
    family.eval_r_complex(u)?;

    // Joint state [q_1..q_d, Re ψ_1, Im ψ_1, ..]: one step sequence for
    // both systems, so the margin is sampled at common times.
    let mut x0 = vec![0.0; 3 * d];
    for (i, z) in u.iter().enumerate() {
        x0[i] = z.re;
        x0[d + 2 * i] = z.re;
        x0[d + 2 * i + 1] = z.im;
    }

    let mut psi = vec![Complex64::new(0.0, 0.0); d];
    let mut rhs = |_t: f64, x: &[f64], dx: &mut [f64]| {
        let r = family.eval_r_real(&x[..d]);
        dx[..d].copy_from_slice(r.as_slice());
        for (i, z) in psi.iter_mut().enumerate() {
            *z = Complex64::new(x[d + 2 * i], x[d + 2 * i + 1]);
        }
        match family.eval_r_complex(&psi) {
            Ok(rv) => {
                for (i, z) in rv.iter().enumerate() {
                    dx[d + 2 * i] = z.re;
                    dx[d + 2 * i + 1] = z.im;
                }
            }
            Err(_) => dx[d..].fill(f64::NAN),
        }
    };

    let opts = SolveOptions::default();
    let mut margin = 0.0f64;
    let sol = ode::integrate_adaptive(
        &mut rhs,
        0.0,
        &x0,
        horizon,
        &opts.ode_options(horizon),
        |_interp, _t, x| {
            for i in 0..m {
                margin = margin.min(x[i] - x[d + 2 * i]);
            }
            MonitorVerdict::Continue
        },
    );
    if !matches!(sol.termination, Termination::Reached) {
        return Err(Error::NonConvergence(format!(
            "the joint real/complex solve did not reach the horizon ({:?})",
            sol.termination
        )));
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jumps::JumpMeasureSpec;
    use crate::levy::build_family;
    use crate::state_space::CanonicalParams;
    use nalgebra::DMatrix;

    #[allow(clippy::too_many_arguments)]
    fn canonical(
        m: usize,
        n: usize,
        a: DMatrix<f64>,
        alpha: Vec<DMatrix<f64>>,
        b: DVector<f64>,
        beta: Vec<DVector<f64>>,
        m_jumps: JumpMeasureSpec,
        mu_jumps: Vec<JumpMeasureSpec>,
    ) -> FunctionalFamily {
        build_family(&AffineParams::Canonical(CanonicalParams {
            m,
            n,
            a,
            alpha,
            b,
            beta,
            m_jumps,
            mu_jumps,
        }))
        .expect("fixture parameters are admissible")
    }

    fn cir(kappa: f64, theta: f64, sigma: f64) -> FunctionalFamily {
        canonical(
            1,
            0,
            DMatrix::zeros(1, 1),
            vec![DMatrix::from_element(1, 1, sigma * sigma)],
            DVector::from_element(1, kappa * theta),
            vec![DVector::from_element(1, -kappa)],
            JumpMeasureSpec::Zero,
            vec![JumpMeasureSpec::Zero],
        )
    }

    fn heston() -> FunctionalFamily {
        let alpha0 =
            DMatrix::from_row_slice(2, 2, &[0.16, -0.24, -0.24, 1.0]);
        canonical(
            1,
            1,
            DMatrix::zeros(2, 2),
            vec![alpha0, DMatrix::zeros(2, 2)],
            DVector::from_column_slice(&[0.18, 0.0]),
            vec![
                DVector::from_column_slice(&[-2.0, -0.5]),
                DVector::zeros(2),
            ],
            JumpMeasureSpec::Zero,
            vec![JumpMeasureSpec::Zero, JumpMeasureSpec::Zero],
        )
    }

    fn one_sided_model(rate: f64) -> FunctionalFamily {
        canonical(
            1,
            0,
            DMatrix::zeros(1, 1),
            vec![DMatrix::from_element(1, 1, 0.1)],
            DVector::from_element(1, 0.3),
            vec![DVector::from_element(1, -1.0)],
            JumpMeasureSpec::Zero,
            vec![JumpMeasureSpec::OneSidedExponential {
                coordinate: 0,
                rate,
                intensity: 0.8,
            }],
        )
    }

    fn levy_family() -> FunctionalFamily {
        canonical(
            0,
            1,
            DMatrix::from_element(1, 1, 0.04),
            vec![DMatrix::zeros(1, 1)],
            DVector::from_element(1, 0.1),
            vec![DVector::zeros(1)],
            JumpMeasureSpec::OneSidedExponential {
                coordinate: 0,
                rate: 3.0,
                intensity: 0.5,
            },
            vec![JumpMeasureSpec::Zero],
        )
    }

    // The scalar slope q̇ = σ²q²/2 − κq turns linear in w = 1/q, giving
    // w(t) = (1/y − c)e^{κt} + c with c = σ²/(2κ). Integrating κθ·q on top
    // yields p in closed form; the blow-up time is where w crosses zero.
    fn cir_q_exact(t: f64, y: f64, kappa: f64, sigma: f64) -> f64 {
        let c = sigma * sigma / (2.0 * kappa);
        1.0 / ((1.0 / y - c) * (kappa * t).exp() + c)
    }

    fn cir_p_exact(t: f64, y: f64, kappa: f64, theta: f64, sigma: f64) -> f64 {
        let c = sigma * sigma / (2.0 * kappa);
        let w = (1.0 / y - c) * (kappa * t).exp() + c;
        kappa * theta * (t / c - (y * w).ln() / (kappa * c))
    }

    fn cir_blowup_exact(y: f64, kappa: f64, sigma: f64) -> f64 {
        let s2y = sigma * sigma * y;
        (s2y / (s2y - 2.0 * kappa)).ln() / kappa
    }

    #[test]
    fn zero_start_is_stationary() {
        let fam = cir(2.0, 0.09, 0.4);
        let traj =
            solve_extended(&fam, &[0.0], 5.0, &SolveOptions::default()).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        assert_eq!(traj.certificate, MinimalityCertificate::Diffusion);
        for k in 0..traj.times.len() {
            assert_eq!(traj.p[k], 0.0);
            assert_eq!(traj.q[k][0], 0.0);
        }
    }

    #[test]
    fn state_independent_family_grows_linearly() {
        let fam = levy_family();
        let y = [1.2];
        let horizon = 3.0;
        let traj =
            solve_extended(&fam, &y, horizon, &SolveOptions::default()).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        assert_eq!(traj.certificate, MinimalityCertificate::OpenDomain);
        let f_y = fam.eval_f_real(&y);
        for k in 0..traj.times.len() {
            assert_eq!(traj.q[k][0], 1.2);
            let expect = traj.times[k] * f_y;
            assert!(
                (traj.p[k] - expect).abs() <= 1e-13 * (1.0 + expect.abs()),
                "p({}) = {}, expected {}",
                traj.times[k],
                traj.p[k],
                expect
            );
        }
    }

    #[test]
    fn cir_matches_the_reciprocal_closed_form() {
        let (kappa, theta, sigma) = (2.0, 0.09, 0.4);
        let fam = cir(kappa, theta, sigma);
        let y = 10.0;
        for horizon in [0.3, 1.0, 2.5] {
            let traj =
                solve_extended(&fam, &[y], horizon, &SolveOptions::default()).unwrap();
            assert_eq!(traj.status, TrajectoryStatus::Completed);
            let q_exact = cir_q_exact(horizon, y, kappa, sigma);
            let p_exact = cir_p_exact(horizon, y, kappa, theta, sigma);
            assert!(
                (traj.final_q()[0] - q_exact).abs() <= 1e-9 * (1.0 + q_exact.abs()),
                "q({horizon}) = {}, exact {q_exact}",
                traj.final_q()[0]
            );
            assert!(
                (traj.final_p() - p_exact).abs() <= 1e-9 * (1.0 + p_exact.abs()),
                "p({horizon}) = {}, exact {p_exact}",
                traj.final_p()
            );
        }
    }

    #[test]
    fn cir_blow_up_is_located() {
        let (kappa, theta, sigma) = (2.0, 0.09, 0.4);
        let fam = cir(kappa, theta, sigma);
        let y = 30.0;
        let exact = cir_blowup_exact(y, kappa, sigma);
        let traj =
            solve_extended(&fam, &[y], 2.0, &SolveOptions::default()).unwrap();
        match traj.status {
            TrajectoryStatus::BlowUp { t_star, bracket } => {
                assert!(
                    (t_star - exact).abs() < 1e-6,
                    "t_star = {t_star}, exact {exact}"
                );
                assert!(bracket > 0.0 && bracket < 1e-5, "bracket {bracket}");
                assert!(
                    (t_star - exact).abs() <= bracket,
                    "true pole {exact} outside [{} , {}]",
                    t_star - bracket,
                    t_star + bracket
                );
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert_eq!(traj.certificate, MinimalityCertificate::Diffusion);
    }

    #[test]
    fn shrinking_the_horizon_below_blow_up_completes() {
        let fam = cir(2.0, 0.09, 0.4);
        let traj =
            solve_extended(&fam, &[30.0], 2.0, &SolveOptions::default()).unwrap();
        let t_star = match traj.status {
            TrajectoryStatus::BlowUp { t_star, .. } => t_star,
            other => panic!("expected blow-up, got {other:?}"),
        };
        let shorter =
            solve_extended(&fam, &[30.0], t_star * (1.0 - 1e-3), &SolveOptions::default())
                .unwrap();
        assert_eq!(shorter.status, TrajectoryStatus::Completed);
    }

    #[test]
    fn state_dependent_tail_stops_at_the_boundary() {
        let fam = one_sided_model(3.0);
        let traj =
            solve_extended(&fam, &[2.9], 0.5, &SolveOptions::default()).unwrap();
        match &traj.status {
            TrajectoryStatus::BoundaryContact { t, description } => {
                assert!(*t > 0.0 && *t < 0.5);
                assert!(
                    description.contains("coordinate 0"),
                    "description: {description}"
                );
            }
            other => panic!("expected boundary contact, got {other:?}"),
        }
        assert_eq!(traj.certificate, MinimalityCertificate::OpenDomain);
    }

    #[test]
    fn outside_start_is_rejected() {
        let fam = one_sided_model(3.0);
        let err = solve_extended(&fam, &[3.5], 1.0, &SolveOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Domain(_)), "got {err:?}");
    }

    #[test]
    fn complex_solve_agrees_with_real_on_the_real_axis() {
        let fam = heston();
        let u = [Complex64::new(0.5, 0.0), Complex64::new(0.3, 0.0)];
        let real =
            solve_extended(&fam, &[0.5, 0.3], 1.0, &SolveOptions::default()).unwrap();
        let complex = solve_complex(&fam, &u, 1.0, &SolveOptions::default()).unwrap();
        assert_eq!(complex.status, TrajectoryStatus::Completed);
        let scale = 1.0 + real.final_q().amax();
        for i in 0..2 {
            let z = complex.final_psi()[i];
            assert!(
                (z.re - real.final_q()[i]).abs() <= 1e-12 * scale,
                "Re ψ_{i} = {}, q_{i} = {}",
                z.re,
                real.final_q()[i]
            );
            assert!(z.im.abs() <= 1e-12 * scale);
        }
        assert!(
            (complex.final_phi().re - real.final_p()).abs()
                <= 1e-12 * (1.0 + real.final_p().abs())
        );
        assert!(complex.final_phi().im.abs() <= 1e-12);
    }

    #[test]
    fn conjugating_the_start_conjugates_the_solution() {
        let fam = heston();
        let u = [Complex64::new(0.5, 0.4), Complex64::new(-0.3, 0.2)];
        let conj_u: Vec<Complex64> = u.iter().map(|z| z.conj()).collect();
        let a = solve_complex(&fam, &u, 1.0, &SolveOptions::default()).unwrap();
        let b = solve_complex(&fam, &conj_u, 1.0, &SolveOptions::default()).unwrap();
        assert!((a.final_phi() - b.final_phi().conj()).norm() <= 1e-12);
        for i in 0..2 {
            assert!((a.final_psi()[i] - b.final_psi()[i].conj()).norm() <= 1e-12);
        }
    }

    #[test]
    fn complex_solve_agrees_with_a_fixed_step_run() {
        let fam = heston();
        let u = [Complex64::new(0.5, 3.0), Complex64::new(1.0, 1.0)];
        let traj = solve_complex(&fam, &u, 1.0, &SolveOptions::default()).unwrap();

        let mut x0 = vec![0.0; 6];
        for (i, z) in u.iter().enumerate() {
            x0[2 + 2 * i] = z.re;
            x0[3 + 2 * i] = z.im;
        }
        let reference = ode::integrate_fixed(complex_rhs(&fam), 0.0, &x0, 1.0, 20_000);
        assert!(
            (traj.final_phi() - Complex64::new(reference[0], reference[1])).norm() <= 1e-8
        );
        for i in 0..2 {
            let z = Complex64::new(reference[2 + 2 * i], reference[3 + 2 * i]);
            assert!(
                (traj.final_psi()[i] - z).norm() <= 1e-8,
                "ψ_{i} = {}, reference {z}",
                traj.final_psi()[i]
            );
        }
    }

    #[test]
    fn explosion_time_matches_the_cir_formula() {
        let (kappa, sigma) = (2.0, 0.4);
        let fam = cir(kappa, 0.09, sigma);
        let y = 30.0;
        let exact = cir_blowup_exact(y, kappa, sigma);
        match explosion_time(&fam, &[y], 10.0, 1e-6).unwrap() {
            ExplosionTime::Finite { t_plus, tol } => {
                assert!((t_plus - exact).abs() < 1e-6, "t_plus {t_plus}, exact {exact}");
                assert!(tol < 1e-5);
                assert!(
                    (t_plus - exact).abs() <= tol,
                    "true explosion {exact} outside [{} , {}]",
                    t_plus - tol,
                    t_plus + tol
                );
            }
            other => panic!("expected a finite explosion time, got {other:?}"),
        }
    }

    #[test]
    fn a_tight_tolerance_request_triggers_refinement() {
        let (kappa, sigma) = (2.0, 0.4);
        let fam = cir(kappa, 0.09, sigma);
        let y = 30.0;
        let exact = cir_blowup_exact(y, kappa, sigma);
        match explosion_time(&fam, &[y], 10.0, 1e-8).unwrap() {
            ExplosionTime::Finite { t_plus, tol } => {
                assert!(tol <= 1e-8, "achieved half-width {tol}");
                assert!(
                    (t_plus - exact).abs() <= tol,
                    "true explosion {exact} outside [{} , {}]",
                    t_plus - tol,
                    t_plus + tol
                );
            }
            other => panic!("expected a finite explosion time, got {other:?}"),
        }
    }

    #[test]
    fn state_independent_moments_never_explode() {
        let fam = levy_family();
        match explosion_time(&fam, &[1.2], 50.0, 1e-6).unwrap() {
            ExplosionTime::ExceedsHorizon { t_max } => assert_eq!(t_max, 50.0),
            other => panic!("expected no explosion, got {other:?}"),
        }
    }

    #[test]
    fn explosion_from_outside_the_domain_is_immediate() {
        let fam = levy_family();
        match explosion_time(&fam, &[3.5], 10.0, 1e-6).unwrap() {
            ExplosionTime::Finite { t_plus, .. } => assert_eq!(t_plus, 0.0),
            other => panic!("expected immediate explosion, got {other:?}"),
        }
    }

    #[test]
    fn semiflow_identity_holds_for_cir() {
        let fam = cir(2.0, 0.09, 0.4);
        let traj =
            solve_extended(&fam, &[10.0], 1.0, &SolveOptions::default()).unwrap();
        let splits: Vec<f64> = (0..10).map(|k| 0.05 + 0.09 * k as f64).collect();
        let residual = verify_semiflow(&fam, &traj, &splits).unwrap();
        assert!(residual < 1e-8, "residual {residual}");
    }

    #[test]
    fn semiflow_residual_vanishes_at_trivial_splits() {
        let fam = heston();
        let traj =
            solve_extended(&fam, &[0.5, 0.3], 1.0, &SolveOptions::default()).unwrap();
        let at_ends = verify_semiflow(&fam, &traj, &[0.0]).unwrap();
        assert_eq!(at_ends, 0.0);
    }

    #[test]
    fn comparison_margin_stays_near_zero_from_a_real_start() {
        let fam = heston();
        let u = [Complex64::new(0.5, 0.0), Complex64::new(0.3, 0.0)];
        let margin = comparison_check(&fam, &u, 1.0).unwrap();
        assert!(margin.abs() <= 1e-12, "margin {margin}");
    }

    #[test]
    fn comparison_margin_is_not_meaningfully_negative() {
        let fam = heston();
        let u = [Complex64::new(0.5, 3.0), Complex64::new(1.0, 1.0)];
        let margin = comparison_check(&fam, &u, 1.0).unwrap();
        assert!(margin >= -1e-9, "margin {margin}");
        assert!(margin <= 0.0);

        let jumps = one_sided_model(3.0);
        let margin = comparison_check(&jumps, &[Complex64::new(1.0, 0.7)], 0.4).unwrap();
        assert!(margin >= -1e-9, "margin {margin}");
    }

    #[test]
    fn point_mass_jumps_leave_the_domain_unconstrained() {
        let fam = canonical(
            1,
            0,
            DMatrix::zeros(1, 1),
            vec![DMatrix::from_element(1, 1, 0.05)],
            DVector::from_element(1, 0.2),
            vec![DVector::from_element(1, -1.0)],
            JumpMeasureSpec::Zero,
            vec![JumpMeasureSpec::PointMasses(vec![crate::jumps::JumpAtom {
                location: DVector::from_element(1, 0.5),
                weight: 2.0,
            }])],
        );
        let traj =
            solve_extended(&fam, &[0.1], 1.0, &SolveOptions::default()).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        assert_eq!(traj.certificate, MinimalityCertificate::FullDomain);
    }

    #[test]
    fn dense_output_evaluates_between_grid_points() {
        let (kappa, theta, sigma) = (2.0, 0.09, 0.4);
        let fam = cir(kappa, theta, sigma);
        let opts = SolveOptions {
            dense_output: true,
            ..SolveOptions::default()
        };
        let traj = solve_extended(&fam, &[10.0], 1.0, &opts).unwrap();
        for k in 0..40 {
            let t = 0.025 * k as f64;
            let (p, q) = traj.eval(t).unwrap();
            let q_exact = cir_q_exact(t, 10.0, kappa, sigma);
            let p_exact = cir_p_exact(t, 10.0, kappa, theta, sigma);
            assert!((q[0] - q_exact).abs() <= 1e-8 * (1.0 + q_exact.abs()));
            assert!((p - p_exact).abs() <= 1e-8 * (1.0 + p_exact.abs()));
        }

        let plain = solve_extended(&fam, &[10.0], 1.0, &SolveOptions::default()).unwrap();
        assert!(plain.eval(0.5).is_err());
    }

    #[test]
    fn csv_export_carries_grid_and_status_footer() {
        let fam = cir(2.0, 0.09, 0.4);
        let traj =
            solve_extended(&fam, &[10.0], 0.5, &SolveOptions::default()).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,p,q_1"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("0.0000000000000000e0,"), "row: {first}");
        let footer = csv.lines().last().unwrap();
        assert!(footer.starts_with("# status: {"), "footer: {footer}");
        assert!(footer.contains("\"completed\""));
        assert!(footer.contains("\"diffusion\""));
        assert_eq!(csv.lines().count(), traj.times.len() + 2);
    }

    #[test]
    fn blow_up_status_serializes_with_its_bracket() {
        let fam = cir(2.0, 0.09, 0.4);
        let traj =
            solve_extended(&fam, &[30.0], 2.0, &SolveOptions::default()).unwrap();
        let csv = traj.to_csv();
        let footer = csv.lines().last().unwrap();
        assert!(footer.contains("\"blow_up\""), "footer: {footer}");
        assert!(footer.contains("\"t_star\""));
        assert!(footer.contains("\"bracket\""));
    }

    #[test]
    fn halving_the_tolerance_stays_within_the_reported_estimate() {
        let fam = cir(2.0, 0.09, 0.4);
        let coarse_opts = SolveOptions {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            ..SolveOptions::default()
        };
        let fine_opts = SolveOptions {
            rel_tol: 5e-9,
            abs_tol: 1e-10,
            ..SolveOptions::default()
        };
        let coarse = solve_extended(&fam, &[10.0], 1.0, &coarse_opts).unwrap();
        let fine = solve_extended(&fam, &[10.0], 1.0, &fine_opts).unwrap();
        let shift = (coarse.final_p() - fine.final_p())
            .abs()
            .max((coarse.final_q() - fine.final_q()).amax());
        assert!(coarse.error_estimate > 0.0);
        assert!(
            shift < 10.0 * coarse.error_estimate,
            "shift {shift}, estimate {}",
            coarse.error_estimate
        );
    }
}
