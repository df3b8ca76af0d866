//! Adaptive Runge–Kutta integration.
//!
//! The solver is an explicit Dormand–Prince 5(4) pair with the first-same-as-
//! last optimization, a weighted-RMS error norm, and the classic quartic
//! interpolant for dense output. Riccati right-hand sides are smooth inside
//! their domain but can grow without bound near a blow-up, so the controller
//! treats a non-finite stage as an oversized step (reject and halve) and
//! reports step-size collapse as a distinct outcome instead of an error: the
//! caller decides whether collapse means blow-up, boundary contact, or a
//! genuine failure.

/// Controls for one integration run.
#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Cap on the step size; `None` leaves the controller free.
    pub max_step: Option<f64>,
    /// Steps below this are reported as [`Termination::StepSizeCollapse`].
    pub min_step: f64,
    /// Keep per-step interpolation data for [`OdeSolution::eval`].
    pub dense: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: None,
            min_step: 1e-14,
            dense: false,
        }
    }
}

/// Why the run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// The requested end time was reached.
    Reached,
    /// The monitor callback asked to stop at the contained time.
    MonitorStop { t: f64 },
    /// The controller pushed the step below `min_step`; `t` is the last
    /// accepted time.
    StepSizeCollapse { t: f64 },
}

/// Verdict of the per-step monitor.
pub enum MonitorVerdict {
    Continue,
    /// Stop and truncate the trajectory at the given time, which must lie
    /// within the step just taken.
    Stop { t: f64 },
}

/// Interpolant over a single accepted step, exact at both endpoints and
/// locally of order five.
pub struct StepInterp<'a> {
    t0: f64,
    h: f64,
    rcont: &'a [Vec<f64>; 5],
}

impl StepInterp<'_> {
    pub fn t_start(&self) -> f64 {
        self.t0
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.h
    }

    /// Dimension of the interpolated state.
    pub fn dim(&self) -> usize {
        self.rcont[0].len()
    }

    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let theta = if self.h == 0.0 { 0.0 } else { (t - self.t0) / self.h };
        let th1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + th1 * (r3[i] + theta * (r4[i] + th1 * r5[i])));
        }
    }
}

#[derive(Debug)]
struct DenseStep {
    t0: f64,
    h: f64,
    rcont: [Vec<f64>; 5],
}

/// Result of an adaptive run.
#[derive(Debug)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub termination: Termination,
    pub rhs_evals: usize,
    /// Number of accepted steps.
    pub steps: usize,
    /// Sum of the scaled error-norm values of the accepted steps. Multiplied
    /// by the tolerance scale this is a crude but serviceable bound on the
    /// accumulated global error.
    pub error_sum: f64,
    dense: Vec<DenseStep>,
}

impl OdeSolution {
    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("at least the initial point")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("at least the initial point")
    }

    /// Dense evaluation anywhere in the integrated range. Requires the run
    /// to have been made with `dense: true`.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        assert!(!self.dense.is_empty(), "dense output was not requested");
        let idx = match self
            .dense
            .binary_search_by(|s| s.t0.partial_cmp(&t).expect("finite times"))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        let step = &self.dense[idx];
        StepInterp {
            t0: step.t0,
            h: step.h,
            rcont: &step.rcont,
        }
        .eval(t, out);
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];

/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Weights of the dense-output correction stage.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

/// Integrate `y' = f(t, y)` from `(t0, y0)` to `t_end`.
///
/// The monitor runs after every accepted step and may stop the run inside
/// the step it just saw; the trajectory is then cut at the reported time
/// using the step interpolant.
pub fn integrate_adaptive<F, M>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    mut monitor: M,
) -> OdeSolution
where
    F: FnMut(f64, &[f64], &mut [f64]),
    M: FnMut(&StepInterp, f64, &[f64]) -> MonitorVerdict,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut times = vec![t0];
    let mut states = vec![y.clone()];
    let mut dense = Vec::new();
    let mut rhs_evals = 0usize;
    let mut steps = 0usize;
    let mut error_sum = 0.0f64;

    let mut k: [Vec<f64>; 7] = Default::default();
    for ki in &mut k {
        *ki = vec![0.0; n];
    }
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    if n == 0 || t_end == t0 {
        return OdeSolution {
            times,
            states,
            termination: Termination::Reached,
            rhs_evals,
            steps,
            error_sum,
            dense,
        };
    }

    f(t, &y, &mut k[0]);
    rhs_evals += 1;

    let span = t_end - t0;
    let mut h = initial_step(&mut f, t, &y, &k[0].clone(), span, opts, &mut rhs_evals);
    let mut facmax = 10.0;

    loop {
        if t >= t_end - 1e-14 * span.abs() {
            return OdeSolution {
                times,
                states,
                termination: Termination::Reached,
                rhs_evals,
                steps,
                error_sum,
                dense,
            };
        }
        if h < opts.min_step {
            return OdeSolution {
                times,
                states,
                termination: Termination::StepSizeCollapse { t },
                rhs_evals,
                steps,
                error_sum,
                dense,
            };
        }
        let h_step = h.min(t_end - t).min(opts.max_step.unwrap_or(f64::INFINITY));

        // Stages two through seven; the first is inherited from the
        // previous step.
        let mut finite = true;
        'stages: for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                ytmp[i] = y[i] + h_step * acc;
                if !ytmp[i].is_finite() {
                    finite = false;
                    break 'stages;
                }
            }
            f(t + C[s] * h_step, &ytmp, &mut k[s]);
            rhs_evals += 1;
            if k[s].iter().any(|v| !v.is_finite()) {
                finite = false;
                break 'stages;
            }
        }

        let mut err = 0.0;
        if finite {
            for i in 0..n {
                let incr: f64 = (0..6).map(|j| A[6][j] * k[j][i]).sum();
                ynew[i] = y[i] + h_step * incr;
                if !ynew[i].is_finite() {
                    finite = false;
                    break;
                }
                let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum();
                let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(ynew[i].abs());
                err += (h_step * e / sc).powi(2);
            }
            err = (err / n as f64).sqrt();
        }

        if !finite || !err.is_finite() {
            h = h_step * 0.5;
            facmax = 1.0;
            continue;
        }

        if err <= 1.0 {
            // k7 sits at (t+h, ynew) by construction of the pair; the
            // interpolant is built unconditionally because the monitor may
            // need it even when the trajectory is not kept dense.
            let mut r1 = vec![0.0; n];
            let mut r2 = vec![0.0; n];
            let mut r3 = vec![0.0; n];
            let mut r4 = vec![0.0; n];
            let mut r5 = vec![0.0; n];
            for i in 0..n {
                let dy = ynew[i] - y[i];
                let bspl = h_step * k[0][i] - dy;
                r1[i] = y[i];
                r2[i] = dy;
                r3[i] = bspl;
                r4[i] = dy - h_step * k[6][i] - bspl;
                r5[i] = h_step * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>();
            }
            let rcont = [r1, r2, r3, r4, r5];

            let t_new = t + h_step;
            steps += 1;
            error_sum += err;
            let interp = StepInterp {
                t0: t,
                h: h_step,
                rcont: &rcont,
            };
            let verdict = monitor(&interp, t_new, &ynew);
            match verdict {
                MonitorVerdict::Continue => {
                    times.push(t_new);
                    states.push(ynew.clone());
                    if opts.dense {
                        dense.push(DenseStep {
                            t0: t,
                            h: h_step,
                            rcont,
                        });
                    }
                    t = t_new;
                    y.copy_from_slice(&ynew);
                    k.swap(0, 6);

                    let fac = 0.9 * err.powf(-0.2);
                    h = h_step * fac.clamp(0.2, facmax);
                    facmax = 10.0;
                }
                MonitorVerdict::Stop { t: t_stop } => {
                    let t_stop = t_stop.clamp(t, t_new);
                    let mut y_stop = vec![0.0; n];
                    interp.eval(t_stop, &mut y_stop);
                    times.push(t_stop);
                    states.push(y_stop);
                    if opts.dense {
                        dense.push(DenseStep {
                            t0: t,
                            h: h_step,
                            rcont,
                        });
                    }
                    return OdeSolution {
                        times,
                        states,
                        termination: Termination::MonitorStop { t: t_stop },
                        rhs_evals,
                        steps,
                        error_sum,
                        dense,
                    };
                }
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h = h_step * fac;
            facmax = 1.0;
        }
    }
}

/// Starting step selection following the usual two-derivative heuristic.
fn initial_step<F>(
    f: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    opts: &OdeOptions,
    rhs_evals: &mut usize,
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let sc: Vec<f64> = y0
        .iter()
        .map(|v| opts.abs_tol + opts.rel_tol * v.abs())
        .collect();
    let d0 = rms(y0, &sc);
    let d1 = rms(f0, &sc);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    let h0 = h0.min(span.abs());

    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    f(t0 + h0, &y1, &mut f1);
    *rhs_evals += 1;
    if f1.iter().any(|v| !v.is_finite()) {
        return (h0 * 0.01).max(opts.min_step);
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff, &sc) / h0;

    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span.abs())
}

fn rms(v: &[f64], sc: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let s: f64 = v.iter().zip(sc).map(|(x, s)| (x / s).powi(2)).sum();
    (s / v.len() as f64).sqrt()
}

/// Classic fourth-order fixed-step integration, kept as an independent
/// cross-check for the adaptive path.
pub fn integrate_fixed<F>(mut f: F, t0: f64, y0: &[f64], t_end: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let h = (t_end - t0) / steps as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        f(t + 0.5 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        f(t + 0.5 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        f(t + h, &tmp, &mut k4);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn no_monitor(_: &StepInterp, _: f64, _: &[f64]) -> MonitorVerdict {
        MonitorVerdict::Continue
    }

    #[test]
    fn exponential_decay_hits_tolerance() {
        let sol = integrate_adaptive(
            |_, y, dy| dy[0] = -y[0],
            0.0,
            &[1.0],
            5.0,
            &OdeOptions::default(),
            no_monitor,
        );
        assert_eq!(sol.termination, Termination::Reached);
        assert_abs_diff_eq!(sol.final_state()[0], (-5.0f64).exp(), epsilon = 1e-11);
        assert!(sol.rhs_evals < 2000, "evals {}", sol.rhs_evals);
    }

    #[test]
    fn oscillator_phase_is_kept() {
        let sol = integrate_adaptive(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            10.0,
            &OdeOptions {
                rel_tol: 1e-12,
                abs_tol: 1e-14,
                ..OdeOptions::default()
            },
            no_monitor,
        );
        assert_abs_diff_eq!(sol.final_state()[0], 10.0f64.cos(), epsilon = 1e-10);
        assert_abs_diff_eq!(sol.final_state()[1], -10.0f64.sin(), epsilon = 1e-10);
    }

    #[test]
    fn dense_output_tracks_the_solution() {
        let sol = integrate_adaptive(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            8.0,
            &OdeOptions {
                dense: true,
                ..OdeOptions::default()
            },
            no_monitor,
        );
        let mut out = [0.0; 2];
        for i in 0..=200 {
            let t = 8.0 * i as f64 / 200.0;
            sol.eval(t, &mut out);
            assert_abs_diff_eq!(out[0], t.sin(), epsilon = 1e-8);
        }
    }

    #[test]
    fn dense_output_is_exact_at_nodes() {
        let sol = integrate_adaptive(
            |t, _, dy| dy[0] = t.cos(),
            0.0,
            &[0.0],
            6.0,
            &OdeOptions {
                dense: true,
                ..OdeOptions::default()
            },
            no_monitor,
        );
        let mut out = [0.0];
        for (t, s) in sol.times.iter().zip(sol.states.iter()) {
            sol.eval(*t, &mut out);
            assert_abs_diff_eq!(out[0], s[0], epsilon = 1e-13);
        }
    }

    #[test]
    fn first_same_as_last_reuses_evaluations() {
        let sol = integrate_adaptive(
            |_, y, dy| dy[0] = -0.5 * y[0],
            0.0,
            &[2.0],
            3.0,
            &OdeOptions::default(),
            no_monitor,
        );
        // Six fresh evaluations per step plus the start-up costs.
        assert!(
            sol.rhs_evals <= 6 * sol.steps + 30,
            "evals {} for {} steps",
            sol.rhs_evals,
            sol.steps
        );
    }

    #[test]
    fn monitor_truncates_inside_a_step() {
        let sol = integrate_adaptive(
            |_, _, dy| dy[0] = 1.0,
            0.0,
            &[0.0],
            2.0,
            &OdeOptions::default(),
            |interp, t_new, y_new| {
                if y_new[0] >= 0.5 {
                    // Linear flow, so the crossing is exactly solvable.
                    let mut probe = [0.0];
                    let mut lo = interp.t_start();
                    let mut hi = t_new;
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        interp.eval(mid, &mut probe);
                        if probe[0] < 0.5 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    MonitorVerdict::Stop { t: hi }
                } else {
                    MonitorVerdict::Continue
                }
            },
        );
        match sol.termination {
            Termination::MonitorStop { t } => assert_abs_diff_eq!(t, 0.5, epsilon = 1e-9),
            other => panic!("unexpected termination {other:?}"),
        }
        assert_abs_diff_eq!(sol.final_state()[0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn quadratic_growth_collapses_near_the_pole() {
        let opts = OdeOptions {
            min_step: 1e-13,
            ..OdeOptions::default()
        };
        let sol = integrate_adaptive(|_, y, dy| dy[0] = y[0] * y[0], 0.0, &[2.0], 1.0, &opts, no_monitor);
        match sol.termination {
            Termination::StepSizeCollapse { t } => {
                assert_abs_diff_eq!(t, 0.5, epsilon = 1e-6);
            }
            other => panic!("unexpected termination {other:?}"),
        }
        assert!(sol.final_state()[0] > 1e6);
    }

    #[test]
    fn non_finite_rhs_is_treated_as_too_large_a_step() {
        let opts = OdeOptions {
            min_step: 1e-12,
            ..OdeOptions::default()
        };
        let sol = integrate_adaptive(
            |t, _, dy| dy[0] = if t > 0.3 { f64::NAN } else { 1.0 },
            0.0,
            &[0.0],
            1.0,
            &opts,
            no_monitor,
        );
        match sol.termination {
            Termination::StepSizeCollapse { t } => {
                assert!(t <= 0.3 + 1e-9 && t > 0.29, "stopped at {t}");
            }
            other => panic!("unexpected termination {other:?}"),
        }
    }

    #[test]
    fn stationary_start_is_cheap() {
        let sol = integrate_adaptive(
            |_, y, dy| dy[0] = y[0] * (1.0 - y[0]),
            0.0,
            &[0.0],
            50.0,
            &OdeOptions::default(),
            no_monitor,
        );
        assert_eq!(sol.termination, Termination::Reached);
        assert_abs_diff_eq!(sol.final_state()[0], 0.0, epsilon = 1e-12);
        assert!(sol.steps < 200, "steps {}", sol.steps);
    }

    #[test]
    fn fixed_step_matches_adaptive() {
        let fixed = integrate_fixed(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], 5.0, 20_000);
        assert_abs_diff_eq!(fixed[0], (-5.0f64).exp(), epsilon = 1e-12);
    }
}
