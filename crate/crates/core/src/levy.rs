//! Lévy–Khintchine exponents of a validated parameter set.
//!
//! A [`LkFunctional`] is one scalar exponent: a quadratic form, a linear
//! part and a compensated jump integral. [`build_family`] assembles the
//! constant exponent `F` and the state slopes `R_1..R_d` from parameters on
//! either state space and intersects their finiteness regions into a single
//! [`DomainY`]. Evaluation is total on real arguments (`+∞` signals a
//! divergent jump tail); complex evaluation insists on the real part lying
//! in the interior of the domain and reports which tail condition failed
//! otherwise.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::domain::{DomainY, Region};
use crate::error::{Error, Result};
use crate::jumps::{JumpAtom, JumpMeasureSpec, PreparedJumpMeasure};
use crate::linalg;
use crate::state_space::{AffineParams, CanonicalParams, MatrixParams};

/// One exponent of Lévy–Khintchine type,
/// `y ↦ ½⟨y,Qy⟩ + ⟨ℓ,y⟩ + c + ∫(e^{⟨ξ,y⟩} − 1 − ⟨h(ξ),y⟩) ν(dξ)`
/// with the truncation `h(ξ) = ξ·1_{|ξ|≤1}`. The constant `c` is zero for
/// a plain parameter set and becomes nonzero only through
/// [`FunctionalFamily::shifted`].
#[derive(Debug, Clone)]
pub struct LkFunctional {
    quadratic: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
    jumps: PreparedJumpMeasure,
}

impl LkFunctional {
    fn new(quadratic: DMatrix<f64>, linear: DVector<f64>, jumps: JumpMeasureSpec) -> Result<Self> {
        let dim = linear.len();
        let jumps = PreparedJumpMeasure::new(jumps, dim).map_err(Error::Unsupported)?;
        Ok(LkFunctional {
            quadratic,
            linear,
            constant: 0.0,
            jumps,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn quadratic(&self) -> &DMatrix<f64> {
        &self.quadratic
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn measure(&self) -> &JumpMeasureSpec {
        self.jumps.spec()
    }

    /// Finiteness region of this exponent alone.
    pub fn domain(&self) -> DomainY {
        self.jumps.spec().tail_domain(self.dim())
    }

    /// Value at a real argument; `+∞` when the jump tail diverges there.
    pub fn eval_real(&self, y: &[f64]) -> f64 {
        let yv = DVector::from_column_slice(y);
        let quad = 0.5 * (&self.quadratic * &yv).dot(&yv);
        quad + self.linear.dot(&yv) + self.constant + self.jumps.eval_real(y)
    }

    /// Analytic extension to complex arguments whose real part lies in the
    /// interior of the finiteness region.
    pub fn eval_complex(&self, u: &[Complex64]) -> Result<Complex64> {
        let re: Vec<f64> = u.iter().map(|z| z.re).collect();
        if self.domain().classify(&re) != Region::Interior {
            return Err(Error::Domain(self.jumps.spec().tail_condition(&re)));
        }
        let mut quad = Complex64::new(0.0, 0.0);
        for (r, row) in self.quadratic.row_iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, q) in row.iter().enumerate() {
                if *q != 0.0 {
                    acc += u[c] * *q;
                }
            }
            quad += u[r] * acc;
        }
        let linear: Complex64 = self
            .linear
            .iter()
            .zip(u.iter())
            .map(|(l, z)| z * *l)
            .sum();
        Ok(0.5 * quad + linear + self.constant + self.jumps.eval_complex(u))
    }
}

/// The full exponent family of one model: `F`, the coordinates of `R`, and
/// the intersection of all their finiteness regions.
#[derive(Debug, Clone)]
pub struct FunctionalFamily {
    f: LkFunctional,
    r: Vec<LkFunctional>,
    domain: DomainY,
    params: AffineParams,
}

/// Wire the exponents from a parameter set. Validation runs first, so an
/// inadmissible set is rejected rather than silently evaluated.
pub fn build_family(params: &AffineParams) -> Result<FunctionalFamily> {
    params.ensure_valid()?;
    let (f, r) = match params {
        AffineParams::Canonical(p) => canonical_functionals(p)?,
        AffineParams::Matrix(p) => matrix_functionals(p)?,
    };
    let mut domain = f.domain();
    for ri in &r {
        domain.intersect(&ri.domain());
    }
    Ok(FunctionalFamily {
        f,
        r,
        domain,
        params: params.clone(),
    })
}

fn canonical_functionals(p: &CanonicalParams) -> Result<(LkFunctional, Vec<LkFunctional>)> {
    let f = LkFunctional::new(p.a.clone(), p.b.clone(), p.m_jumps.clone())?;
    let mut r = Vec::with_capacity(p.dim());
    for i in 0..p.dim() {
        r.push(LkFunctional::new(
            p.alpha[i].clone(),
            p.beta[i].clone(),
            p.mu_jumps[i].clone(),
        )?);
    }
    Ok((f, r))
}

/// On the matrix cone the exponents arrive in matrix form,
/// `F(u) = tr(bu) + ∫(e^{tr(uξ)}−1) m(dξ)` and
/// `R(u) = 2uαu + B^⊤(u) + ∫(e^{tr(uξ)}−1) μ(dξ)`,
/// and are flattened row-major into `d²` scalar exponents. The plain jump
/// integrals are rewritten in compensated form, with the compensator
/// `∫_{|ξ|≤1} ξ ν(dξ)` folded into the linear part, so that evaluation runs
/// through the same code path as the canonical backend.
fn matrix_functionals(p: &MatrixParams) -> Result<(LkFunctional, Vec<LkFunctional>)> {
    let d = p.d;
    let dim = d * d;

    let m_atoms: Vec<JumpAtom> = p
        .m_jumps
        .iter()
        .map(|a| JumpAtom {
            location: linalg::flatten(&a.location),
            weight: a.weight,
        })
        .collect();
    let mut f_linear = linalg::flatten(&p.b);
    f_linear += &truncated_mean(&m_atoms, dim);
    let f = LkFunctional::new(
        DMatrix::zeros(dim, dim),
        f_linear,
        point_masses_or_zero(m_atoms),
    )?;

    let big_dense = p.big_b.dense_matrix(d);
    let mut r = Vec::with_capacity(dim);
    for k in 0..d {
        for l in 0..d {
            // Quadratic form with ½⟨u,Qu⟩ = (2uαu)_{kl} on flattened input.
            let mut q = DMatrix::zeros(dim, dim);
            for pp in 0..d {
                for qq in 0..d {
                    q[(k * d + pp, qq * d + l)] += 2.0 * p.alpha[(pp, qq)];
                }
            }
            let qt = q.transpose();
            q += qt;

            let atoms: Vec<JumpAtom> = p
                .mu_jumps
                .iter()
                .map(|a| JumpAtom {
                    location: linalg::flatten(&a.location),
                    weight: a.weight[(k, l)],
                })
                .collect();
            // ⟨B(x),u⟩ = ⟨x,B^⊤(u)⟩ makes the adjoint's flattened matrix the
            // plain transpose, whose row (k,l) is the column of the original.
            let mut linear = big_dense.column(k * d + l).clone_owned();
            linear += &truncated_mean(&atoms, dim);
            r.push(LkFunctional::new(q, linear, point_masses_or_zero(atoms))?);
        }
    }
    Ok((f, r))
}

fn truncated_mean(atoms: &[JumpAtom], dim: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(dim);
    for a in atoms {
        if a.location.norm() <= 1.0 {
            acc += &a.location * a.weight;
        }
    }
    acc
}

fn point_masses_or_zero(atoms: Vec<JumpAtom>) -> JumpMeasureSpec {
    if atoms.is_empty() {
        JumpMeasureSpec::Zero
    } else {
        JumpMeasureSpec::PointMasses(atoms)
    }
}

impl FunctionalFamily {
    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn params(&self) -> &AffineParams {
        &self.params
    }

    pub fn f(&self) -> &LkFunctional {
        &self.f
    }

    pub fn r(&self) -> &[LkFunctional] {
        &self.r
    }

    pub fn domain(&self) -> &DomainY {
        &self.domain
    }

    /// Same family with a constant added to `F` and to each coordinate of
    /// `R`. Constants leave the finiteness region untouched, so every solver
    /// and certificate applies to the shifted family as to the original.
    /// This is the exponent system of a process extended by an integrated
    /// affine functional, restricted to a fixed value of the extra argument.
    pub fn shifted(&self, f_shift: f64, r_shift: &DVector<f64>) -> Result<FunctionalFamily> {
        if r_shift.len() != self.dim() {
            return Err(Error::Structure(format!(
                "shift vector has length {}, the family has dimension {}",
                r_shift.len(),
                self.dim()
            )));
        }
        if !f_shift.is_finite() || r_shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::Structure(
                "shift constants must be finite".to_string(),
            ));
        }
        let mut out = self.clone();
        out.f.constant += f_shift;
        for (ri, s) in out.r.iter_mut().zip(r_shift.iter()) {
            ri.constant += *s;
        }
        Ok(out)
    }

    /// Position of `y` relative to the joint finiteness region.
    pub fn classify(&self, y: &[f64]) -> Region {
        self.domain.classify(y)
    }

    pub fn eval_f_real(&self, y: &[f64]) -> f64 {
        self.f.eval_real(y)
    }

    pub fn eval_r_real(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.r.len(), self.r.iter().map(|ri| ri.eval_real(y)))
    }

    pub fn eval_f_complex(&self, u: &[Complex64]) -> Result<Complex64> {
        self.f.eval_complex(u)
    }

    pub fn eval_r_complex(&self, u: &[Complex64]) -> Result<Vec<Complex64>> {
        self.r.iter().map(|ri| ri.eval_complex(u)).collect()
    }

    /// Certified growth estimate for the cone coordinates of `R` on the
    /// canonical space: returns `(lhs, rhs)` with
    /// `lhs = Re⟨conj(u_I), R_I(u)⟩` and
    /// `rhs = g(Re u)·(1+‖u_J‖²)·(1+‖u_I‖²)`, where `g` collects one
    /// explicit bound per coordinate (drift, diffusion, compensator,
    /// small-jump and large-jump terms). Every step in the assembly of `g`
    /// is a true upper bound, so `lhs ≤ rhs` holds wherever `Re u` is
    /// interior to the domain.
    pub fn growth_bound(&self, u: &[Complex64]) -> Result<(f64, f64)> {
        let p = match &self.params {
            AffineParams::Canonical(p) => p,
            AffineParams::Matrix(_) => {
                return Err(Error::Unsupported(
                    "the growth estimate is formulated for the canonical state space".into(),
                ))
            }
        };
        if u.len() != p.dim() {
            return Err(Error::Structure(format!(
                "expected {} components, got {}",
                p.dim(),
                u.len()
            )));
        }
        let y: Vec<f64> = u.iter().map(|z| z.re).collect();
        if self.domain.classify(&y) != Region::Interior {
            return Err(Error::Domain(
                "the growth estimate needs Re u interior to the domain".into(),
            ));
        }

        let m = p.m;
        let d = p.dim();
        let mut lhs = 0.0;
        for i in 0..m {
            let ri = self.r[i].eval_complex(u)?;
            lhs += (u[i].conj() * ri).re;
        }

        let u_i_sq: f64 = u[..m].iter().map(|z| z.norm_sqr()).sum();
        let u_j_sq: f64 = u[m..].iter().map(|z| z.norm_sqr()).sum();
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();

        let mut g = 0.0;
        for i in 0..m {
            let beta = &p.beta[i];
            let beta_i_norm: f64 = (0..m).map(|k| beta[k] * beta[k]).sum::<f64>().sqrt();
            let beta_j_norm: f64 = (m..d).map(|k| beta[k] * beta[k]).sum::<f64>().sqrt();

            let alpha = &p.alpha[i];
            let alpha_ij_norm: f64 = (m..d).map(|k| alpha[(i, k)].powi(2)).sum::<f64>().sqrt();
            let alpha_jj_norm = if d > m {
                linalg::operator_norm(&alpha.view((m, m), (d - m, d - m)).clone_owned())
            } else {
                0.0
            };

            let mu = &p.mu_jumps[i];
            let cross: Vec<usize> = (0..m).filter(|&k| k != i).collect();
            let in_ball: Vec<usize> = (m..d).chain(std::iter::once(i)).collect();
            let s1 = mu.small_ball_abs_moment(&cross);
            let s2 = mu.sq_moment_upper(&in_ball);

            g += beta_i_norm + 0.5 * beta_j_norm
                + s1
                + 0.5 * alpha[(i, i)] * y[i].max(0.0)
                + 0.5 * alpha_ij_norm
                + 0.25 * alpha_jj_norm
                + 0.5 * (mu.tail_exp_upper(&y) + mu.tail_mass_upper())
                + (2.0 * y_norm).exp() * (s1 + 0.5 * s2)
                + mu.ghat(i, y[i].max(0.0));
        }
        let rhs = g * (1.0 + u_j_sq) * (1.0 + u_i_sq);
        Ok((lhs, rhs))
    }
}

/// Both sides of the scalar bound
/// `∫₀¹ (1−t)·Re(z e^{tz}) dt ≤ e^{(Re z)₊} − 1`.
///
/// The integral has the closed form `Re((e^z − 1 − z)/z)`, expanded near the
/// origin where the direct expression cancels catastrophically.
pub fn verify_complex_inequality(z: Complex64) -> (f64, f64) {
    let (p, q) = (z.re, z.im);
    let lhs = if z.norm() < 1e-4 {
        p / 2.0 + (p * p - q * q) / 6.0 + p * (p * p - 3.0 * q * q) / 24.0
    } else {
        (p * (p.exp() * q.cos() - 1.0 - p) + q * (p.exp() * q.sin() - q)) / (p * p + q * q)
    };
    let rhs = p.max(0.0).exp() - 1.0;
    (lhs, rhs)
}
