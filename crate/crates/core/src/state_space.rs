//! State spaces, affine parameter sets, and admissibility validation.
//!
//! Two families of state spaces are supported: the canonical cone
//! `ℝ≥0^m × ℝ^n` and the cone of positive semidefinite `d×d` matrices.
//! Matrix-valued states are flattened row-major into `ℝ^{d²}`, which turns
//! the trace pairing into the plain Euclidean inner product.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jumps::JumpMeasureSpec;
use crate::linalg;

/// Tolerance for exact-zero admissibility clauses, relative to scale.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpace {
    /// `ℝ≥0^m × ℝ^n`; the first `m` coordinates are nonnegative.
    Canonical { m: usize, n: usize },
    /// Positive semidefinite `d×d` matrices, flattened to `ℝ^{d²}`.
    MatrixCone { d: usize },
}

impl StateSpace {
    pub fn dim(&self) -> usize {
        match self {
            StateSpace::Canonical { m, n } => m + n,
            StateSpace::MatrixCone { d } => d * d,
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            StateSpace::Canonical { m, n } => {
                if m + n == 0 {
                    Err(Error::Structure(
                        "canonical state space needs at least one coordinate".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            StateSpace::MatrixCone { d } => {
                if *d < 2 {
                    Err(Error::Structure(
                        "matrix cone with d = 1 degenerates to the half-line; use the canonical space with m = 1, n = 0".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Membership in the state space, up to a small tolerance.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            StateSpace::Canonical { m, .. } => {
                let scale = 1.0 + x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
                x[..*m].iter().all(|&v| v >= -ZERO_TOL * scale)
            }
            StateSpace::MatrixCone { d } => {
                let mat = linalg::unflatten(x, *d);
                linalg::is_psd(&mat)
            }
        }
    }

    /// Nearest point of the state space, coordinatewise for the canonical
    /// cone and by eigenvalue clipping for the matrix cone.
    pub fn project(&self, x: &[f64]) -> DVector<f64> {
        match self {
            StateSpace::Canonical { m, .. } => {
                let mut v = DVector::from_column_slice(x);
                for k in 0..*m {
                    if v[k] < 0.0 {
                        v[k] = 0.0;
                    }
                }
                v
            }
            StateSpace::MatrixCone { d } => {
                let mat = linalg::unflatten(x, *d);
                let sym = (&mat + mat.transpose()) * 0.5;
                let eig = sym.symmetric_eigen();
                let mut rebuilt = DMatrix::zeros(*d, *d);
                for (k, &lam) in eig.eigenvalues.iter().enumerate() {
                    if lam > 0.0 {
                        let v = eig.eigenvectors.column(k);
                        rebuilt += v * v.transpose() * lam;
                    }
                }
                linalg::flatten(&rebuilt)
            }
        }
    }
}

/// Linear map on symmetric matrices, used for the matrix-cone drift.
#[derive(Debug, Clone)]
pub enum LinearMap {
    /// Explicit `d²×d²` matrix acting on row-major flattened arguments.
    Dense(DMatrix<f64>),
    /// `x ↦ M x + x Mᵀ`.
    Congruence(DMatrix<f64>),
}

impl LinearMap {
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            LinearMap::Dense(big) => {
                let out = big * linalg::flatten(x);
                let raw = linalg::unflatten(out.as_slice(), x.nrows());
                (&raw + raw.transpose()) * 0.5
            }
            LinearMap::Congruence(m) => m * x + x * m.transpose(),
        }
    }

    /// Adjoint with respect to the trace pairing: `⟨B(x),u⟩ = ⟨x,Bᵀ(u)⟩`.
    pub fn transpose_apply(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            LinearMap::Dense(big) => {
                let out = big.transpose() * linalg::flatten(u);
                let raw = linalg::unflatten(out.as_slice(), u.nrows());
                (&raw + raw.transpose()) * 0.5
            }
            LinearMap::Congruence(m) => m.transpose() * u + u * m,
        }
    }

    /// Flattened `d²×d²` representation.
    pub fn dense_matrix(&self, d: usize) -> DMatrix<f64> {
        match self {
            LinearMap::Dense(big) => big.clone(),
            LinearMap::Congruence(_) => {
                let mut big = DMatrix::zeros(d * d, d * d);
                for col in 0..d * d {
                    let mut e = DMatrix::zeros(d, d);
                    e[(col / d, col % d)] = 1.0;
                    let image = self.apply(&e);
                    big.column_mut(col).copy_from(&linalg::flatten(&image));
                }
                big
            }
        }
    }
}

/// Parameters of an affine process on the canonical state space. Diffusion
/// and drift are `a + Σ αⁱ x_i` and `b + Σ βⁱ x_i`; the jump kernel is
/// `m_jumps + Σ mu_jumps[i] x_i`. All slope lists run over every coordinate,
/// with admissibility forcing the real-valued ones to zero.
#[derive(Debug, Clone)]
pub struct CanonicalParams {
    pub m: usize,
    pub n: usize,
    pub a: DMatrix<f64>,
    pub alpha: Vec<DMatrix<f64>>,
    pub b: DVector<f64>,
    pub beta: Vec<DVector<f64>>,
    pub m_jumps: JumpMeasureSpec,
    pub mu_jumps: Vec<JumpMeasureSpec>,
}

impl CanonicalParams {
    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    pub fn space(&self) -> StateSpace {
        StateSpace::Canonical {
            m: self.m,
            n: self.n,
        }
    }

    /// Indices of the nonnegative coordinates.
    pub fn cone_coords(&self) -> Vec<usize> {
        (0..self.m).collect()
    }
}

/// One jump atom of the constant matrix-cone measure.
#[derive(Debug, Clone)]
pub struct MatrixJumpAtom {
    pub location: DMatrix<f64>,
    pub weight: f64,
}

/// One atom of the linear (state-dependent) matrix-cone measure: jump size
/// `location` arriving at rate `⟨weight, x⟩` in the trace pairing.
#[derive(Debug, Clone)]
pub struct MatrixLinearJumpAtom {
    pub location: DMatrix<f64>,
    pub weight: DMatrix<f64>,
}

/// Parameters of an affine process on the matrix cone.
#[derive(Debug, Clone)]
pub struct MatrixParams {
    pub d: usize,
    pub alpha: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub big_b: LinearMap,
    pub m_jumps: Vec<MatrixJumpAtom>,
    pub mu_jumps: Vec<MatrixLinearJumpAtom>,
}

impl MatrixParams {
    pub fn dim(&self) -> usize {
        self.d * self.d
    }

    pub fn space(&self) -> StateSpace {
        StateSpace::MatrixCone { d: self.d }
    }
}

#[derive(Debug, Clone)]
pub enum AffineParams {
    Canonical(CanonicalParams),
    Matrix(MatrixParams),
}

impl AffineParams {
    pub fn space(&self) -> StateSpace {
        match self {
            AffineParams::Canonical(p) => p.space(),
            AffineParams::Matrix(p) => p.space(),
        }
    }

    pub fn dim(&self) -> usize {
        self.space().dim()
    }

    pub fn validate(&self) -> Result<ValidationReport> {
        match self {
            AffineParams::Canonical(p) => validate_canonical(p),
            AffineParams::Matrix(p) => validate_matrix(p),
        }
    }

    /// Validate and turn a failing report into an error.
    pub fn ensure_valid(&self) -> Result<ValidationReport> {
        let report = self.validate()?;
        if report.passed {
            Ok(report)
        } else {
            Err(Error::NotAdmissible(report))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    /// Stable ASCII identifier of the violated clause.
    pub condition: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ValidationReport {
            passed: violations.is_empty(),
            violations,
        }
    }

    pub fn summary(&self) -> String {
        if self.passed {
            "admissible".into()
        } else {
            let ids: Vec<&str> = self.violations.iter().map(|v| v.condition).collect();
            format!("{} violation(s): {}", ids.len(), ids.join(", "))
        }
    }

    pub fn has(&self, condition: &str) -> bool {
        self.violations.iter().any(|v| v.condition == condition)
    }
}

struct Collector {
    violations: Vec<Violation>,
}

impl Collector {
    fn new() -> Self {
        Collector {
            violations: Vec::new(),
        }
    }

    fn flag(&mut self, condition: &'static str, message: String) {
        self.violations.push(Violation { condition, message });
    }
}

/// Check every clause of the canonical admissibility definition. Shape
/// mismatches are structural errors, not violations.
// Negated comparisons so that NaN inputs fail the gate.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_canonical(p: &CanonicalParams) -> Result<ValidationReport> {
    p.space().check()?;
    let d = p.dim();
    let m = p.m;

    check_square(&p.a, d, "constant diffusion a")?;
    if p.alpha.len() != d {
        return Err(Error::Structure(format!(
            "expected {d} linear diffusion matrices, got {}",
            p.alpha.len()
        )));
    }
    for (i, al) in p.alpha.iter().enumerate() {
        check_square(al, d, &format!("linear diffusion alpha[{i}]"))?;
    }
    if p.b.len() != d {
        return Err(Error::Structure(format!(
            "constant drift has dimension {}, expected {d}",
            p.b.len()
        )));
    }
    if p.beta.len() != d {
        return Err(Error::Structure(format!(
            "expected {d} linear drift vectors, got {}",
            p.beta.len()
        )));
    }
    for (i, be) in p.beta.iter().enumerate() {
        if be.len() != d {
            return Err(Error::Structure(format!(
                "linear drift beta[{i}] has dimension {}, expected {d}",
                be.len()
            )));
        }
    }
    if p.mu_jumps.len() != d {
        return Err(Error::Structure(format!(
            "expected {d} linear jump measures, got {}",
            p.mu_jumps.len()
        )));
    }
    p.m_jumps
        .check_shape(d)
        .map_err(|e| Error::Structure(format!("constant jump measure: {e}")))?;
    for (i, mu) in p.mu_jumps.iter().enumerate() {
        mu.check_shape(d)
            .map_err(|e| Error::Structure(format!("linear jump measure mu[{i}]: {e}")))?;
    }

    let mut c = Collector::new();
    let scale_a = 1.0 + p.a.amax();

    // Constant diffusion must not touch the cone coordinates.
    for k in 0..d {
        for l in 0..d {
            if (k < m || l < m) && p.a[(k, l)].abs() > ZERO_TOL * scale_a {
                c.flag(
                    "a_I_block_zero",
                    format!("a[({k},{l})] = {} but a_kl must vanish when k or l indexes a nonnegative coordinate", p.a[(k, l)]),
                );
            }
        }
    }
    if !linalg::is_psd(&p.a) {
        c.flag(
            "a_psd",
            format!(
                "constant diffusion a has minimal eigenvalue {:.3e} < 0",
                linalg::min_eigenvalue(&p.a)
            ),
        );
    }

    for j in m..d {
        let al = &p.alpha[j];
        if al.amax() > ZERO_TOL * (1.0 + al.amax()) {
            c.flag(
                "alpha_J_zero",
                format!("alpha[{j}] must vanish for the real-valued coordinate {j}"),
            );
        }
    }
    for i in 0..m {
        let al = &p.alpha[i];
        let scale = 1.0 + al.amax();
        for k in 0..d {
            for l in 0..d {
                let k_bad = k < m && k != i;
                let l_bad = l < m && l != i;
                if (k_bad || l_bad) && al[(k, l)].abs() > ZERO_TOL * scale {
                    c.flag(
                        "alpha_I_structure",
                        format!(
                            "alpha[{i}][({k},{l})] = {} but only the ({i},{i}) diagonal and real-coordinate block may be nonzero",
                            al[(k, l)]
                        ),
                    );
                }
            }
        }
        if !linalg::is_psd(al) {
            c.flag(
                "alpha_psd",
                format!(
                    "alpha[{i}] has minimal eigenvalue {:.3e} < 0",
                    linalg::min_eigenvalue(al)
                ),
            );
        }
    }

    let scale_b = 1.0 + p.b.amax();
    for k in 0..m {
        if p.b[k] < -ZERO_TOL * scale_b {
            c.flag(
                "b_in_D",
                format!("b ∈ D fails: b[{k}] = {} < 0", p.b[k]),
            );
        }
    }

    for i in 0..m {
        for k in 0..m {
            if k == i {
                continue;
            }
            let cross = p.mu_jumps[i].first_moment(k);
            let margin = p.beta[i][k] - cross;
            if !(margin >= -ZERO_TOL * (1.0 + p.beta[i][k].abs() + cross.abs())) {
                c.flag(
                    "beta_I_cross_drift",
                    format!(
                        "beta[{i}][{k}] - ∫ ξ_{k} mu[{i}](dξ) = {margin:.6e} < 0; off-diagonal drift must dominate the jump compensator"
                    ),
                );
            }
        }
    }

    for j in m..d {
        let scale = 1.0 + p.beta[j].amax();
        for k in 0..m {
            if p.beta[j][k].abs() > ZERO_TOL * scale {
                c.flag(
                    "beta_J_to_I_zero",
                    format!(
                        "beta[{j}][{k}] = {}; real-valued coordinates may not drive nonnegative ones",
                        p.beta[j][k]
                    ),
                );
            }
        }
    }

    let cone: Vec<usize> = (0..m).collect();
    if !p.m_jumps.is_levy_measure() {
        c.flag(
            "m_levy_measure",
            "constant jump measure is not a Lévy measure: ∫(|ξ|²∧1) m(dξ) diverges".into(),
        );
    } else if p.m_jumps.small_ball_abs_moment(&cone).is_infinite() {
        c.flag(
            "m_small_jump_integrable",
            "∫_{|ξ|≤1} |ξ_I| m(dξ) diverges".into(),
        );
    }

    for j in m..d {
        if !p.mu_jumps[j].is_zero() {
            c.flag(
                "mu_J_zero",
                format!("mu[{j}] must vanish for the real-valued coordinate {j}"),
            );
        }
    }
    for i in 0..m {
        let off: Vec<usize> = (0..m).filter(|&k| k != i).collect();
        if !p.mu_jumps[i].is_levy_measure() {
            c.flag(
                "mu_levy_measure",
                format!("mu[{i}] is not a Lévy measure: ∫(|ξ|²∧1) diverges"),
            );
        } else if p.mu_jumps[i].small_ball_abs_moment(&off).is_infinite() {
            c.flag(
                "mu_small_jump_integrable",
                format!("∫_{{|ξ|≤1}} |ξ_(I∖{{{i}}})| mu[{i}](dξ) diverges"),
            );
        }
    }

    if let Some(msg) = support_violation(&p.m_jumps, m, d) {
        c.flag("m_support_in_D", format!("constant jump measure: {msg}"));
    }
    for i in 0..m {
        if let Some(msg) = support_violation(&p.mu_jumps[i], m, d) {
            c.flag("mu_support_in_D", format!("mu[{i}]: {msg}"));
        }
    }

    Ok(ValidationReport::from_violations(c.violations))
}

/// Per-variant structural check that a measure's support stays inside
/// `ℝ≥0^m × ℝ^n` and avoids the origin.
fn support_violation(spec: &JumpMeasureSpec, m: usize, _d: usize) -> Option<String> {
    match spec {
        JumpMeasureSpec::Zero => None,
        JumpMeasureSpec::PointMasses(atoms) => {
            for (idx, atom) in atoms.iter().enumerate() {
                let scale = 1.0 + atom.location.amax();
                if atom.location.norm() <= ZERO_TOL * scale {
                    return Some(format!("atom {idx} sits at the origin"));
                }
                for k in 0..m {
                    if atom.location[k] < -ZERO_TOL * scale {
                        return Some(format!(
                            "atom {idx} has negative jump {} in nonnegative coordinate {k}",
                            atom.location[k]
                        ));
                    }
                }
            }
            None
        }
        JumpMeasureSpec::OneSidedExponential { .. } => None,
        JumpMeasureSpec::GaussianFactor { .. } => {
            let active = spec.gaussian_active();
            active.iter().find(|&&j| j < m).map(|&j| {
                format!("Gaussian jump factor touches nonnegative coordinate {j}; its support must lie in the real-valued block")
            })
        }
        JumpMeasureSpec::NumericDensity(nd) => {
            if nd.coordinate < m && nd.support.0 < 0.0 {
                Some(format!(
                    "density support starts at {} < 0 on nonnegative coordinate {}",
                    nd.support.0, nd.coordinate
                ))
            } else {
                None
            }
        }
    }
}

fn check_square(mat: &DMatrix<f64>, d: usize, what: &str) -> Result<()> {
    if mat.nrows() != d || mat.ncols() != d {
        Err(Error::Structure(format!(
            "{what} is {}x{}, expected {d}x{d}",
            mat.nrows(),
            mat.ncols()
        )))
    } else {
        Ok(())
    }
}

/// Check the matrix-cone admissibility conditions. The inward-pointing
/// property of the linear drift cannot be verified over the whole boundary;
/// it is sampled on deterministic rank-one orthogonal pairs plus 100 seeded
/// random ones, and the worst margin is reported.
pub fn validate_matrix(p: &MatrixParams) -> Result<ValidationReport> {
    p.space().check()?;
    let d = p.d;
    check_square(&p.alpha, d, "diffusion alpha")?;
    check_square(&p.b, d, "constant drift b")?;
    if let LinearMap::Dense(big) = &p.big_b {
        check_square(big, d * d, "linear drift map")?;
    }
    if let LinearMap::Congruence(m) = &p.big_b {
        check_square(m, d, "congruence factor of the linear drift")?;
    }
    for (k, atom) in p.m_jumps.iter().enumerate() {
        check_square(&atom.location, d, &format!("jump atom {k} location"))?;
        if !(atom.weight.is_finite() && atom.weight > 0.0) {
            return Err(Error::Structure(format!(
                "jump atom {k} needs a positive finite weight"
            )));
        }
    }
    for (k, atom) in p.mu_jumps.iter().enumerate() {
        check_square(&atom.location, d, &format!("linear jump atom {k} location"))?;
        check_square(&atom.weight, d, &format!("linear jump atom {k} weight"))?;
    }

    let mut c = Collector::new();

    if linalg::asymmetry(&p.alpha) > ZERO_TOL * (1.0 + p.alpha.amax()) || !linalg::is_psd(&p.alpha)
    {
        c.flag(
            "alpha_psd",
            format!(
                "alpha must be symmetric positive semidefinite (minimal eigenvalue {:.3e})",
                linalg::min_eigenvalue(&(&p.alpha + p.alpha.transpose()).scale(0.5))
            ),
        );
    }

    let gap = &p.b - p.alpha.scale((d - 1) as f64);
    let gap_sym = (&gap + gap.transpose()) * 0.5;
    if linalg::asymmetry(&p.b) > ZERO_TOL * (1.0 + p.b.amax()) || !linalg::is_psd(&gap_sym) {
        c.flag(
            "b_drift_domination",
            format!(
                "b - (d-1)·alpha must be positive semidefinite (minimal eigenvalue {:.3e})",
                linalg::min_eigenvalue(&gap_sym)
            ),
        );
    }

    for (k, atom) in p.m_jumps.iter().enumerate() {
        let scale = 1.0 + atom.location.amax();
        if atom.location.norm() <= ZERO_TOL * scale {
            c.flag(
                "m_support_in_cone",
                format!("jump atom {k} sits at the origin"),
            );
        } else if linalg::asymmetry(&atom.location) > ZERO_TOL * scale
            || !linalg::is_psd(&atom.location)
        {
            c.flag(
                "m_support_in_cone",
                format!("jump atom {k} is not positive semidefinite"),
            );
        }
    }
    for (k, atom) in p.mu_jumps.iter().enumerate() {
        let scale = 1.0 + atom.location.amax();
        if atom.location.norm() <= ZERO_TOL * scale {
            c.flag(
                "mu_support_in_cone",
                format!("linear jump atom {k} sits at the origin"),
            );
        } else if linalg::asymmetry(&atom.location) > ZERO_TOL * scale
            || !linalg::is_psd(&atom.location)
        {
            c.flag(
                "mu_support_in_cone",
                format!("linear jump atom {k} is not positive semidefinite"),
            );
        }
        if linalg::asymmetry(&atom.weight) > ZERO_TOL * (1.0 + atom.weight.amax())
            || !linalg::is_psd(&atom.weight)
        {
            c.flag(
                "mu_weights_psd",
                format!("linear jump atom {k} has a weight matrix that is not positive semidefinite"),
            );
        }
    }

    let (worst, pair_count) = inward_pointing_margin(&p.big_b, d);
    let b_scale = 1.0 + linalg::operator_norm(&p.big_b.dense_matrix(d));
    if worst < -1e-9 * b_scale {
        c.flag(
            "B_inward_pointing",
            format!(
                "tr(x·B(u)) ≥ 0 fails on orthogonal rank-one boundary pairs: worst margin {worst:.6e} over {pair_count} pairs"
            ),
        );
    }

    Ok(ValidationReport::from_violations(c.violations))
}

/// Worst value of `tr(wwᵀ · B(vvᵀ))` over orthonormal pairs `(v, w)`:
/// axis-aligned and diagonally rotated pairs, then seeded random ones.
fn inward_pointing_margin(map: &LinearMap, d: usize) -> (f64, usize) {
    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let mut v = DVector::zeros(d);
            let mut w = DVector::zeros(d);
            v[i] = 1.0;
            w[j] = 1.0;
            pairs.push((v.clone(), w.clone()));
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let mut vp = DVector::zeros(d);
            let mut wp = DVector::zeros(d);
            vp[i] = s;
            vp[j] = s;
            wp[i] = s;
            wp[j] = -s;
            pairs.push((vp, wp));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1b2d_90aa);
    while pairs.len() < 2 * d * (d - 1) + 100 {
        let v = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        if v.norm() < 1e-6 {
            continue;
        }
        let v = v.normalize();
        let mut w = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        w -= &v * v.dot(&w);
        if w.norm() < 1e-6 {
            continue;
        }
        let w = w.normalize();
        pairs.push((v, w));
    }
    let mut worst = f64::INFINITY;
    for (v, w) in &pairs {
        let u = v * v.transpose();
        let image = map.apply(&u);
        let margin = (w.transpose() * image * w)[(0, 0)];
        worst = worst.min(margin);
    }
    (worst, pairs.len())
}

/// Whether the analytic-extension results apply: always on the canonical
/// space, and on the matrix cone iff the diffusion either vanishes or is
/// invertible.
pub fn check_complex_assumption(params: &AffineParams) -> bool {
    match params {
        AffineParams::Canonical(_) => true,
        AffineParams::Matrix(p) => {
            let scale = p.alpha.amax();
            if scale == 0.0 {
                return true;
            }
            let eig = (&p.alpha + p.alpha.transpose()).scale(0.5).symmetric_eigen();
            eig.eigenvalues.iter().all(|l| l.abs() > 1e-10 * scale)
        }
    }
}

/// Extend a canonical parameter set by one real-valued coordinate carrying
/// the running integral of the affine rate `l + ⟨λ,x⟩`, so that discounted
/// transforms become plain transforms of the extended process.
pub fn embed_discounting(
    params: &AffineParams,
    l: f64,
    lambda: &DVector<f64>,
) -> Result<AffineParams> {
    let p = match params {
        AffineParams::Canonical(p) => p,
        AffineParams::Matrix(_) => {
            return Err(Error::Unsupported(
                "discounting embedding needs a product state space, which the matrix cone does not form; use the shifted-system solver instead".into(),
            ))
        }
    };
    let d = p.dim();
    if lambda.len() != d {
        return Err(Error::Structure(format!(
            "rate slope has dimension {}, expected {d}",
            lambda.len()
        )));
    }
    let mut a = DMatrix::zeros(d + 1, d + 1);
    a.view_mut((0, 0), (d, d)).copy_from(&p.a);
    let mut alpha = Vec::with_capacity(d + 1);
    for al in &p.alpha {
        let mut padded = DMatrix::zeros(d + 1, d + 1);
        padded.view_mut((0, 0), (d, d)).copy_from(al);
        alpha.push(padded);
    }
    alpha.push(DMatrix::zeros(d + 1, d + 1));
    let mut b = DVector::zeros(d + 1);
    b.rows_mut(0, d).copy_from(&p.b);
    b[d] = l;
    let mut beta = Vec::with_capacity(d + 1);
    for (i, be) in p.beta.iter().enumerate() {
        let mut padded = DVector::zeros(d + 1);
        padded.rows_mut(0, d).copy_from(be);
        padded[d] = lambda[i];
        beta.push(padded);
    }
    beta.push(DVector::zeros(d + 1));
    let mut mu_jumps: Vec<JumpMeasureSpec> = p.mu_jumps.iter().map(|mu| mu.lift(1)).collect();
    mu_jumps.push(JumpMeasureSpec::Zero);
    Ok(AffineParams::Canonical(CanonicalParams {
        m: p.m,
        n: p.n + 1,
        a,
        alpha,
        b,
        beta,
        m_jumps: p.m_jumps.lift(1),
        mu_jumps,
    }))
}
