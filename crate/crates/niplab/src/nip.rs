//! Non-Hermitian interaction picture: Coriolis operators, the generator
//! G = H − Σ, co-evolution of kets and ketkets, expectation values,
//! projectors and finite-difference residuals of the evolution equations.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{NipError, Result};
use crate::linalg::{self, cr, CMat, I, ZERO};
use crate::metric::{self, DysonMap, FourierExponential, MetricOperator, Subspace};
use crate::operators::{self, Basis, GridSpec, OperatorMatrix};
use crate::spectra::{self, ArtifactFilter};

pub use crate::schedule::{Schedule, ScheduleKind};

pub const DEFAULT_FD_STEP: f64 = 1e-4;
pub const DEFAULT_ABORT_DRIFT: f64 = 1e-2;
pub const DEFAULT_REDUCED_DIM: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub t: f64,
    pub ket: Vec<c64>,
    pub ketket: Vec<c64>,
}

impl EvolutionState {
    /// ⟨⟨ψ|ψ⟩, the physical norm.
    pub fn pairing(&self) -> c64 {
        linalg::dot(&self.ketket, &self.ket)
    }

    pub fn with_metric(t: f64, ket: Vec<c64>, theta: &MetricOperator) -> Self {
        let ketket = linalg::column(&theta.apply_columns(&linalg::from_columns(&[ket.clone()])), 0);
        EvolutionState { t, ket, ketket }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub norms: Vec<c64>,
    pub observables: BTreeMap<String, Vec<c64>>,
    pub drift: f64,
    pub dt: f64,
    #[serde(skip)]
    pub final_state: Option<EvolutionState>,
    /// Reduced coordinates (a, b) at the final time, for reduced runs.
    #[serde(skip)]
    pub final_coefficients: Option<(Vec<c64>, Vec<c64>)>,
}

pub type Coefficient = Arc<dyn Fn(f64) -> c64 + Send + Sync>;

/// Operator family Σ c_i(t)·A_i on a fixed grid.
#[derive(Clone)]
pub struct AffineFamily {
    pub grid: GridSpec,
    pub terms: Vec<(Coefficient, CMat)>,
}

impl AffineFamily {
    pub fn new(grid: GridSpec) -> Self {
        AffineFamily { grid, terms: vec![] }
    }

    pub fn constant(op: &OperatorMatrix) -> Self {
        AffineFamily::new(op.grid).with_term(Arc::new(|_| cr(1.0)), op.entries.clone())
    }

    pub fn with_term(mut self, c: Coefficient, a: CMat) -> Self {
        self.terms.push((c, a));
        self
    }

    pub fn at(&self, t: f64) -> CMat {
        let n = self.grid.n_points;
        let mut m = CMat::zeros(n, n);
        for (c, a) in &self.terms {
            m += linalg::scale(a, c(t));
        }
        m
    }

    pub fn operator_at(&self, t: f64) -> OperatorMatrix {
        OperatorMatrix { entries: self.at(t), basis: Basis::PositionGrid, grid: self.grid }
    }

    fn reduce(&self, basis: &PetrovGalerkin) -> Vec<(Coefficient, CMat)> {
        self.terms
            .iter()
            .map(|(c, a)| (c.clone(), basis.left.adjoint() * a * &basis.right))
            .collect()
    }
}

/// Fixed biorthogonal pair: R holds right eigenvectors of H(t₀) and
/// L = Θ₀R(R†Θ₀R)⁻¹, so L†R = I and the pairing b†a equals ⟨⟨ψ|ψ⟩.
#[derive(Debug, Clone)]
pub struct PetrovGalerkin {
    pub right: CMat,
    pub left: CMat,
    /// R†Θ₀R, the metric Gram matrix.
    pub gram: CMat,
    pub biorthogonality: f64,
}

impl PetrovGalerkin {
    pub fn new(h0: &OperatorMatrix, theta0: &MetricOperator, m: usize) -> Result<Self> {
        let ep = spectra::eigenpairs(h0, &ArtifactFilter::default())?;
        let r = ep.lowest(m)?;
        Self::from_right(r, theta0)
    }

    pub fn from_right(r: CMat, theta0: &MetricOperator) -> Result<Self> {
        let tr = theta0.apply_columns(&r);
        let gram = linalg::hermitian_part(&(r.adjoint() * &tr));
        let cond = linalg::condition_number(&gram)?;
        if !(cond < metric::MAX_CONDITION) {
            return Err(NipError::Conditioning {
                condition: cond,
                advice: "metric Gram matrix of the reduced basis is singular; reduce the basis size".into(),
            });
        }
        let left = &tr * linalg::inverse(&gram);
        let m = r.ncols();
        let biorthogonality = linalg::fro(&(left.adjoint() * &r - linalg::identity(m)));
        Ok(PetrovGalerkin { right: r, left, gram, biorthogonality })
    }

    pub fn dim(&self) -> usize {
        self.right.ncols()
    }
}

#[derive(Debug, Clone)]
pub enum EvolutionSpace {
    Full,
    Reduced(PetrovGalerkin),
}

#[derive(Clone)]
pub struct EvolveOptions {
    pub space: EvolutionSpace,
    pub abort_drift: f64,
    pub observables: Vec<(String, AffineFamily)>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { space: EvolutionSpace::Full, abort_drift: DEFAULT_ABORT_DRIFT, observables: vec![] }
    }
}

fn assemble(terms: &[(Coefficient, CMat)], t: f64, dim: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    for (c, a) in terms {
        m += linalg::scale(a, c(t));
    }
    m
}

fn rk4_step(gen: &dyn Fn(f64) -> CMat, y: &[c64], t: f64, dt: f64, adjoint: bool) -> Vec<c64> {
    let f = |m: &CMat, v: &[c64]| -> Vec<c64> {
        let r = if adjoint { linalg::adjoint_mat_vec(m, v) } else { linalg::mat_vec(m, v) };
        r.into_iter().map(|z| -I * z).collect()
    };
    let axpy = |y: &[c64], k: &[c64], h: f64| -> Vec<c64> { y.iter().zip(k).map(|(a, b)| a + b * h).collect() };
    let m0 = gen(t);
    let mh = gen(t + 0.5 * dt);
    let m1 = gen(t + dt);
    let k1 = f(&m0, y);
    let k2 = f(&mh, &axpy(y, &k1, 0.5 * dt));
    let k3 = f(&mh, &axpy(y, &k2, 0.5 * dt));
    let k4 = f(&m1, &axpy(y, &k3, dt));
    (0..y.len())
        .map(|i| y[i] + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0))
        .collect()
}

/// RK4 co-integration of i∂ₜψ = Gψ and i∂ₜφ = G†φ from state₀.t to t1.
///
/// The ketket is evolved independently of any metric. In the reduced space
/// both vectors must lie in the basis span: a = L†ψ, b = R†φ.
pub fn evolve_pair(g: &AffineFamily, state0: &EvolutionState, t1: f64, dt: f64, opts: &EvolveOptions) -> Result<EvolutionTrace> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(NipError::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    let n = g.grid.n_points;
    if state0.ket.len() != n || state0.ketket.len() != n {
        return Err(NipError::InvalidConfig("state dimension does not match the grid".into()));
    }
    let span = t1 - state0.t;
    let steps = (span / dt).round() as usize;
    if span <= 0.0 || ((steps as f64) * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(NipError::InvalidConfig(format!(
            "interval [{}, {t1}] is not a positive whole number of steps of {dt}",
            state0.t
        )));
    }

    let (terms, obs_terms, mut a, mut b, dim) = match &opts.space {
        EvolutionSpace::Full => (
            g.terms.clone(),
            opts.observables.iter().map(|(k, f)| (k.clone(), f.terms.clone())).collect::<Vec<_>>(),
            state0.ket.clone(),
            state0.ketket.clone(),
            n,
        ),
        EvolutionSpace::Reduced(pg) => (
            g.reduce(pg),
            opts.observables.iter().map(|(k, f)| (k.clone(), f.reduce(pg))).collect(),
            linalg::adjoint_mat_vec(&pg.left, &state0.ket),
            linalg::adjoint_mat_vec(&pg.right, &state0.ketket),
            pg.dim(),
        ),
    };
    let gen = |t: f64| assemble(&terms, t, dim);

    let norm0 = linalg::dot(&b, &a);
    if norm0.norm() < 1e-300 {
        return Err(NipError::DegenerateState("initial pairing vanishes".into()));
    }
    let record = |t: f64, a: &[c64], b: &[c64], n: c64, obs: &mut BTreeMap<String, Vec<c64>>| {
        for (name, ts) in &obs_terms {
            let q = assemble(ts, t, dim);
            obs.get_mut(name).unwrap().push(linalg::dot(b, &linalg::mat_vec(&q, a)) / n);
        }
    };
    let mut observables: BTreeMap<String, Vec<c64>> =
        obs_terms.iter().map(|(k, _)| (k.clone(), Vec::with_capacity(steps + 1))).collect();
    let mut times = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);
    times.push(state0.t);
    norms.push(norm0);
    record(state0.t, &a, &b, norm0, &mut observables);

    let mut drift = 0.0f64;
    for step in 1..=steps {
        let t = state0.t + (step - 1) as f64 * dt;
        a = rk4_step(&gen, &a, t, dt, false);
        b = rk4_step(&gen, &b, t, dt, true);
        let tn = state0.t + step as f64 * dt;
        let nn = linalg::dot(&b, &a);
        let d = (nn - norm0).norm() / norm0.norm();
        if !d.is_finite() || d > opts.abort_drift {
            return Err(NipError::Instability {
                step,
                t: tn,
                last_stable_t: t,
                drift: d,
                threshold: opts.abort_drift,
            });
        }
        drift = drift.max(d);
        times.push(tn);
        norms.push(nn);
        record(tn, &a, &b, nn, &mut observables);
    }

    let (ket, ketket, coeffs) = match &opts.space {
        EvolutionSpace::Full => (a, b, None),
        EvolutionSpace::Reduced(pg) => (
            linalg::mat_vec(&pg.right, &a),
            linalg::mat_vec(&pg.left, &b),
            Some((a, b)),
        ),
    };
    Ok(EvolutionTrace {
        times,
        norms,
        observables,
        drift,
        dt,
        final_state: Some(EvolutionState { t: t1, ket, ketket }),
        final_coefficients: coeffs,
    })
}

/// ⟨⟨ψ|Q|ψ⟩ / ⟨⟨ψ|ψ⟩.
pub fn expectation(state: &EvolutionState, q: &OperatorMatrix) -> Result<c64> {
    if q.dim() != state.ket.len() {
        return Err(NipError::InvalidConfig("operator and state dimensions differ".into()));
    }
    let n = nondegenerate_pairing(state)?;
    Ok(linalg::dot(&state.ketket, &q.apply(&state.ket)) / n)
}

fn nondegenerate_pairing(state: &EvolutionState) -> Result<c64> {
    let n = state.pairing();
    let scale = linalg::vnorm(&state.ket) * linalg::vnorm(&state.ketket);
    if !(n.norm() > 1e-14 * scale) || scale == 0.0 {
        return Err(NipError::DegenerateState(format!("pairing {n} is numerically zero")));
    }
    Ok(n)
}

/// π = |ψ⟩⟨⟨ψ| / ⟨⟨ψ|ψ⟩.
pub fn projector(state: &EvolutionState, grid: GridSpec) -> Result<OperatorMatrix> {
    let n = nondegenerate_pairing(state)?;
    let k = &state.ket;
    let kk = &state.ketket;
    let m = CMat::from_fn(k.len(), k.len(), |i, j| k[i] * kk[j].conj() / n);
    OperatorMatrix::new(m, Basis::PositionGrid, grid)
}

/// Σ(t) = −i·ġ/(96g²)·P³.
pub fn coriolis_njm(g: &Schedule, t: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    let c = coriolis_njm_coefficient(g, t)?;
    let sym: Vec<c64> = grid.wavenumbers().iter().map(|&k| c * k.powi(3)).collect();
    grid.require_even()?;
    let m = linalg::anti_hermitian_part(&linalg::symbol_matrix(&sym));
    OperatorMatrix::new(m, Basis::PositionGrid, grid)
}

/// The factor −i·ġ/(96g²) multiplying P³.
pub fn coriolis_njm_coefficient(g: &Schedule, t: f64) -> Result<c64> {
    let gv = g.value(t);
    if !(gv > 0.0) {
        return Err(NipError::Domain(format!("g({t}) = {gv} must be positive")));
    }
    let gd = g.derivative(t)?;
    Ok(-I * (gd / (96.0 * gv * gv)))
}

/// G = H − Σ.
pub fn generator_g(h: &OperatorMatrix, sigma: &OperatorMatrix) -> Result<OperatorMatrix> {
    h.check_compatible(sigma)?;
    Ok(OperatorMatrix { entries: &h.entries - &sigma.entries, ..h.clone() })
}

/// Relative ‖Σ_analytic − iΩ⁻¹(Ω(t+h) − Ω(t−h))/(2h)‖_F for the closed-form
/// Dyson map. Both operators are Fourier multipliers, so the Frobenius norm
/// is the ℓ² norm of the symbol and Ω(t±h)/Ω(t) is taken in log form.
pub fn coriolis_fd_residual(g: &Schedule, t: f64, h: f64, grid: GridSpec) -> Result<f64> {
    let c = coriolis_njm_coefficient(g, t)?;
    let f0 = metric::njm_dyson_exponent(g.value(t), &grid);
    let fp = metric::njm_dyson_exponent(g.value(t + h), &grid);
    let fm = metric::njm_dyson_exponent(g.value(t - h), &grid);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, k) in grid.wavenumbers().iter().enumerate() {
        let fd = I * (((fp[i] - f0[i]).exp() - (fm[i] - f0[i]).exp()) / (2.0 * h));
        let an = c * k.powi(3);
        num += (fd - an).norm_sqr();
        den += an.norm_sqr();
    }
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

/// Residuals of i∂ₜΘ = ΘΣ − Σ†Θ and i∂ₜΘ = G†Θ − ΘG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEvolutionResiduals {
    pub coriolis_form: f64,
    pub generator_form: f64,
    /// ‖(ΘΣ − Σ†Θ) − (G†Θ − ΘG)‖ on the same scale.
    pub pair_gap: f64,
    pub h: f64,
}

type Family<'a> = &'a dyn Fn(f64) -> Result<CMat>;

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        num / den
    }
}

/// Central differences at step h; with a subspace every matrix is
/// compressed to W†(·)W before norms are taken.
pub fn metric_evolution_residuals(
    theta: Family,
    sigma: Family,
    gen: Family,
    t: f64,
    h: f64,
    sub: Option<&Subspace>,
) -> Result<MetricEvolutionResiduals> {
    if !(h > 0.0) {
        return Err(NipError::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    let th = theta(t)?;
    let s = sigma(t)?;
    let g = gen(t)?;
    let lhs = linalg::scale(&(theta(t + h)? - theta(t - h)?), I / (2.0 * h));
    let r21 = &th * &s - s.adjoint() * &th;
    let r22 = g.adjoint() * &th - &th * &g;
    let c = |m: CMat| -> CMat {
        match sub {
            Some(w) => w.compress(&m),
            None => m,
        }
    };
    let (lhs, r21, r22) = (c(lhs), c(r21), c(r22));
    let den = linalg::fro(&lhs).max(linalg::fro(&r21));
    Ok(MetricEvolutionResiduals {
        coriolis_form: ratio(linalg::fro(&(&lhs - &r21)), den),
        generator_form: ratio(linalg::fro(&(&lhs - &r22)), den),
        pair_gap: ratio(linalg::fro(&(&r21 - &r22)), den),
        h,
    })
}

/// Residual of i∂ₜQ = QΣ − ΣQ + K by central differences.
pub fn heisenberg_residual(q: Family, sigma: Family, k: Option<Family>, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(NipError::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    let qt = q(t)?;
    let s = sigma(t)?;
    let lhs = linalg::scale(&(q(t + h)? - q(t - h)?), I / (2.0 * h));
    let mut rhs = &qt * &s - &s * &qt;
    if let Some(k) = k {
        rhs += k(t)?;
    }
    Ok(ratio(linalg::fro(&(&lhs - &rhs)), linalg::fro(&lhs).max(linalg::fro(&rhs))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianHeisenbergResiduals {
    pub coriolis_form: f64,
    pub generator_form: f64,
    pub pair_gap: f64,
    pub h: f64,
}

/// Q = H checked in both the Σ form and the G form (G = H − Σ).
pub fn heisenberg_pair_residuals(
    ham: Family,
    sigma: Family,
    k: Option<Family>,
    t: f64,
    h: f64,
) -> Result<HamiltonianHeisenbergResiduals> {
    if !(h > 0.0) {
        return Err(NipError::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    let ht = ham(t)?;
    let s = sigma(t)?;
    let g = &ht - &s;
    let lhs = linalg::scale(&(ham(t + h)? - ham(t - h)?), I / (2.0 * h));
    let kt = match k {
        Some(k) => k(t)?,
        None => CMat::zeros(ht.nrows(), ht.ncols()),
    };
    let r25 = &ht * &s - &s * &ht + &kt;
    let r26 = &g * &ht - &ht * &g + &kt;
    let den = linalg::fro(&lhs).max(linalg::fro(&r25));
    Ok(HamiltonianHeisenbergResiduals {
        coriolis_form: ratio(linalg::fro(&(&lhs - &r25)), den),
        generator_form: ratio(linalg::fro(&(&lhs - &r26)), den),
        pair_gap: ratio(linalg::fro(&(&r25 - &r26)), den),
        h,
    })
}

fn steps_for(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    let span = t1 - t0;
    let steps = (span / dt).round() as usize;
    if !(dt > 0.0) || span < 0.0 || ((steps as f64) * dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(NipError::InvalidConfig(format!("[{t0}, {t1}] is not a whole number of steps of {dt}")));
    }
    Ok(steps)
}

/// RK4 for i∂ₜΩ = ΩΣ with dense matrices.
pub fn reconstruct_dyson(sigma: Family, omega0: &CMat, t0: f64, t1: f64, dt: f64) -> Result<CMat> {
    let steps = steps_for(t0, t1, dt)?;
    let n0 = linalg::fro(omega0);
    let rhs = |o: &CMat, s: &CMat| -> CMat { linalg::scale(&(o * s), -I) };
    let mut o = omega0.clone();
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let s0 = sigma(t)?;
        let sh = sigma(t + 0.5 * dt)?;
        let s1 = sigma(t + dt)?;
        let k1 = rhs(&o, &s0);
        let k2 = rhs(&(&o + linalg::scale(&k1, cr(0.5 * dt))), &sh);
        let k3 = rhs(&(&o + linalg::scale(&k2, cr(0.5 * dt))), &sh);
        let k4 = rhs(&(&o + linalg::scale(&k3, cr(dt))), &s1);
        o = &o + linalg::scale(&(k1 + linalg::scale(&k2, cr(2.0)) + linalg::scale(&k3, cr(2.0)) + k4), cr(dt / 6.0));
        let no = linalg::fro(&o);
        if !no.is_finite() || no > 1e12 * n0.max(1e-300) {
            return Err(NipError::Instability {
                step: step + 1,
                t: t + dt,
                last_stable_t: t,
                drift: no / n0,
                threshold: 1e12,
            });
        }
    }
    Ok(o)
}

/// Mode-by-mode RK4 for Fourier-diagonal Ω and Σ: ω̇ = −i·ω·σ.
pub fn reconstruct_dyson_diagonal(
    sigma: &dyn Fn(f64) -> Result<Vec<c64>>,
    omega0: &[c64],
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Vec<c64>> {
    let steps = steps_for(t0, t1, dt)?;
    let mut w = omega0.to_vec();
    for step in 0..steps {
        let t = t0 + step as f64 * dt;
        let s0 = sigma(t)?;
        let sh = sigma(t + 0.5 * dt)?;
        let s1 = sigma(t + dt)?;
        for i in 0..w.len() {
            let f = |y: c64, s: c64| -I * y * s;
            let k1 = f(w[i], s0[i]);
            let k2 = f(w[i] + k1 * (0.5 * dt), sh[i]);
            let k3 = f(w[i] + k2 * (0.5 * dt), sh[i]);
            let k4 = f(w[i] + k3 * dt, s1[i]);
            w[i] += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (dt / 6.0);
        }
        if w.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(NipError::Instability {
                step: step + 1,
                t: t + dt,
                last_stable_t: t,
                drift: f64::INFINITY,
                threshold: 0.0,
            });
        }
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub struct DysonReconstruction {
    pub dyson: DysonMap,
    pub closed_form: DysonMap,
    pub relative_error: f64,
    pub retained_modes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialState {
    /// Gaussian exp(−(x−c)²/(2w²)), Θ₀-orthogonally projected onto the reduced basis.
    Gaussian { center: f64, width: f64 },
    /// Θ₀-normalized eigenvectors 0, 1, 2 of H(t₀) with these weights.
    Eigenmodes([f64; 3]),
}

/// The non-stationary Jones–Mateo family on a Fourier grid.
#[derive(Clone)]
pub struct NjmFamily {
    pub g: Schedule,
    pub grid: GridSpec,
    kinetic: CMat,
    potential: CMat,
    p3: CMat,
    metric_cap: f64,
}

impl NjmFamily {
    pub fn new(g: Schedule, grid: GridSpec) -> Result<Self> {
        grid.require_even()?;
        g.check_positive("g(t)")?;
        let kinetic = operators::jm_kinetic(grid)?;
        let potential = linalg::diag(&operators::jm_potential(1.0, &grid));
        let sym: Vec<c64> = grid.wavenumbers().iter().map(|&k| cr(k.powi(3))).collect();
        let p3 = linalg::hermitian_part(&linalg::symbol_matrix(&sym));
        Ok(NjmFamily { g, grid, kinetic, potential, p3, metric_cap: metric::DEFAULT_METRIC_CAP })
    }

    pub fn with_metric_cap(mut self, cap: f64) -> Self {
        self.metric_cap = cap;
        self
    }

    pub fn metric_cap(&self) -> f64 {
        self.metric_cap
    }

    fn g_at(&self, t: f64) -> Result<f64> {
        let v = self.g.value(t);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(NipError::Domain(format!("g({t}) = {v} must be positive")))
        }
    }

    pub fn hamiltonian(&self, t: f64) -> Result<OperatorMatrix> {
        operators::build_njm_mapped(self.g_at(t)?, self.grid)
    }

    pub fn coriolis(&self, t: f64) -> Result<OperatorMatrix> {
        coriolis_njm(&self.g, t, self.grid)
    }

    pub fn generator(&self, t: f64) -> Result<OperatorMatrix> {
        generator_g(&self.hamiltonian(t)?, &self.coriolis(t)?)
    }

    pub fn hamiltonian_family(&self) -> AffineFamily {
        let g = self.g.clone();
        AffineFamily::new(self.grid)
            .with_term(Arc::new(|_| cr(1.0)), self.kinetic.clone())
            .with_term(Arc::new(move |t| cr(g.value(t))), self.potential.clone())
    }

    /// G(t) = K + g(t)V + i·ġ/(96g²)·P³.
    pub fn generator_family(&self) -> AffineFamily {
        let g = self.g.clone();
        self.hamiltonian_family().with_term(
            Arc::new(move |t| {
                let gv = g.value(t);
                I * (g.derivative(t).unwrap_or(f64::NAN) / (96.0 * gv * gv))
            }),
            self.p3.clone(),
        )
    }

    pub fn dyson_exponent(&self, t: f64) -> Result<Vec<f64>> {
        Ok(metric::njm_dyson_exponent(self.g_at(t)?, &self.grid))
    }

    pub fn metric(&self, t: f64) -> Result<MetricOperator> {
        metric::build_metric_for_g(self.g_at(t)?, self.grid, self.metric_cap)
    }

    /// Θ(t) truncated with a fixed retained-mode mask, so finite differences
    /// in t never see modes switching on or off.
    pub fn metric_with_mask(&self, t: f64, mask: &[bool]) -> Result<MetricOperator> {
        let e = metric::jm_metric_exponent(self.g_at(t)?, &self.grid);
        MetricOperator::from_exponential(FourierExponential::with_mask(self.grid, e, mask.to_vec())?)
    }

    pub fn dyson(&self, t: f64) -> Result<DysonMap> {
        metric::build_njm_dyson_capped(self.g_at(t)?, self.grid, self.metric_cap / 2.0)
    }

    /// Fourier modes with |Dyson exponent| ≤ cap at time t.
    pub fn momentum_window(&self, t: f64, cap: f64) -> Result<Vec<usize>> {
        Ok(self
            .dyson_exponent(t)?
            .iter()
            .enumerate()
            .filter(|(_, e)| e.abs() <= cap)
            .map(|(i, _)| i)
            .collect())
    }

    pub fn initial_state(&self, t0: f64, init: InitialState, pg: &PetrovGalerkin) -> Result<EvolutionState> {
        let theta = self.metric(t0)?;
        let ket = match init {
            InitialState::Gaussian { center, width } => {
                if !(width > 0.0) {
                    return Err(NipError::InvalidConfig(format!("Gaussian width must be positive, got {width}")));
                }
                let v: Vec<c64> = self
                    .grid
                    .points()
                    .iter()
                    .map(|&x| cr((-(x - center).powi(2) / (2.0 * width * width)).exp()))
                    .collect();
                linalg::mat_vec(&pg.right, &linalg::adjoint_mat_vec(&pg.left, &v))
            }
            InitialState::Eigenmodes(w) => {
                if pg.dim() < 3 {
                    return Err(NipError::InvalidConfig("eigenmode initial state needs a basis of at least 3".into()));
                }
                let mut a = vec![ZERO; pg.dim()];
                for (j, &c) in w.iter().enumerate() {
                    a[j] = cr(c / pg.gram[(j, j)].re.sqrt());
                }
                linalg::mat_vec(&pg.right, &a)
            }
        };
        let mut s = EvolutionState::with_metric(t0, ket, &theta);
        let n = s.pairing().re.sqrt();
        s.ket.iter_mut().for_each(|z| *z /= n);
        s.ketket.iter_mut().for_each(|z| *z /= n);
        Ok(s)
    }

    /// Default initial ket: Gaussian of width 0.5 centred at the avatar-well minimum.
    pub fn default_initial(&self, t0: f64) -> Result<InitialState> {
        let w = operators::analyze_well(self.g_at(t0)?.sqrt())?;
        Ok(InitialState::Gaussian { center: w.y_min, width: 0.5 })
    }

    pub fn reduced_basis(&self, t0: f64, m: usize) -> Result<PetrovGalerkin> {
        PetrovGalerkin::new(&self.hamiltonian(t0)?, &self.metric(t0)?, m)
    }

    /// Closed-form Ω(t₁) versus RK4 of i∂ₜΩ = ΩΣ from the closed-form Ω(t₀),
    /// on the modes retained by both closed-form maps.
    pub fn reconstruct_dyson(&self, t0: f64, t1: f64, dt: f64) -> Result<DysonReconstruction> {
        let d0 = self.dyson(t0)?;
        let d1 = self.dyson(t1)?;
        let f0 = d0.symbol.as_ref().unwrap();
        let f1 = d1.symbol.as_ref().unwrap();
        let mask: Vec<bool> = f0.retained.iter().zip(&f1.retained).map(|(a, b)| *a && *b).collect();
        let k = self.grid.wavenumbers();
        let w0: Vec<c64> = f0
            .exponent
            .iter()
            .zip(&mask)
            .map(|(&e, &r)| if r { cr(e.exp()) } else { ZERO })
            .collect();
        let g = self.g.clone();
        let sigma = move |t: f64| -> Result<Vec<c64>> {
            let c = coriolis_njm_coefficient(&g, t)?;
            Ok(k.iter().map(|&k| c * k.powi(3)).collect())
        };
        let w1 = reconstruct_dyson_diagonal(&sigma, &w0, t0, t1, dt)?;
        let (mut num, mut den) = (0.0, 0.0);
        let mut exponent = vec![0.0; w1.len()];
        for i in 0..w1.len() {
            if mask[i] {
                let exact = f1.exponent[i].exp();
                num += (w1[i] - exact).norm_sqr();
                den += exact * exact;
                exponent[i] = w1[i].re.ln();
            }
        }
        let fe = FourierExponential::with_mask(self.grid, exponent, mask.clone())?;
        Ok(DysonReconstruction {
            dyson: DysonMap::from_exponential(fe)?,
            closed_form: d1,
            relative_error: (num / den).sqrt(),
            retained_modes: mask.iter().filter(|&&r| r).count(),
        })
    }
}

/// Residuals of the Heisenberg-type equations on a momentum window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowedHeisenberg {
    /// Q = Ω⁻¹XΩ, no explicit time dependence.
    pub position: f64,
    pub hamiltonian: HamiltonianHeisenbergResiduals,
    pub modes: usize,
}

impl NjmFamily {
    /// Metric-evolution residuals at t on the span of the lowest m filtered
    /// eigenvectors of H(t), with the truncation mask of Θ(t) held fixed.
    pub fn metric_evolution_check(&self, t: f64, h: f64, m: usize) -> Result<MetricEvolutionResiduals> {
        let mask = self.metric(t)?.symbol.unwrap().retained;
        let sub = metric::admissible_subspace(&self.hamiltonian(t)?, m, &ArtifactFilter::default())?;
        let theta = |s: f64| -> Result<CMat> { Ok(self.metric_with_mask(s, &mask)?.matrix.entries) };
        let sigma = |s: f64| -> Result<CMat> { Ok(self.coriolis(s)?.entries) };
        let gen = |s: f64| -> Result<CMat> { Ok(self.generator(s)?.entries) };
        metric_evolution_residuals(&theta, &sigma, &gen, t, h, Some(&sub))
    }

    /// Heisenberg residuals in the Fourier basis, restricted to the modes
    /// with |Dyson exponent| ≤ cap at t. There Ω is diagonal, so Ω⁻¹AΩ is
    /// the entrywise product A_ab·e^{f_b − f_a} and never inverts a small number.
    /// The explicit term K = Ω⁻¹(i∂ₜh)Ω of H uses h = ΩHΩ⁻¹ differenced in t.
    pub fn heisenberg_window_check(&self, t: f64, h: f64, cap: f64) -> Result<WindowedHeisenberg> {
        let modes = self.momentum_window(t, cap)?;
        if modes.is_empty() {
            return Err(NipError::InvalidConfig(format!("no Fourier mode has |exponent| ≤ {cap}")));
        }
        let k: Vec<f64> = {
            let all = self.grid.wavenumbers();
            modes.iter().map(|&i| all[i]).collect()
        };
        let f = |s: f64| -> Result<Vec<f64>> {
            let e = self.dyson_exponent(s)?;
            Ok(modes.iter().map(|&i| e[i]).collect())
        };
        let x = momentum_window_matrix(&operators::build_position(self.grid).entries, &modes);
        let sigma = |s: f64| -> Result<CMat> {
            let c = coriolis_njm_coefficient(&self.g, s)?;
            Ok(linalg::diag(&k.iter().map(|&k| c * k.powi(3)).collect::<Vec<_>>()))
        };
        let q = |s: f64| -> Result<CMat> { Ok(conjugate_by_exponent(&x, &f(s)?)) };
        let position = heisenberg_residual(&q, &sigma, None, t, h)?;

        let ham = |s: f64| -> Result<CMat> { Ok(momentum_window_matrix(&self.hamiltonian(s)?.entries, &modes)) };
        // h(s) = ΩH(s)Ω⁻¹ with Ω frozen at s
        let hermitian = |s: f64| -> Result<CMat> {
            let fs: Vec<f64> = f(s)?.iter().map(|v| -v).collect();
            Ok(conjugate_by_exponent(&ham(s)?, &fs))
        };
        let explicit = |s: f64| -> Result<CMat> {
            let d = linalg::scale(&(hermitian(s + h)? - hermitian(s - h)?), I / (2.0 * h));
            Ok(conjugate_by_exponent(&d, &f(s)?))
        };
        let pair = heisenberg_pair_residuals(&ham, &sigma, Some(&explicit), t, h)?;
        Ok(WindowedHeisenberg { position, hamiltonian: pair, modes: modes.len() })
    }
}

/// Dense unitary change to the Fourier basis followed by restriction to `modes`.
pub fn momentum_window_matrix(m: &CMat, modes: &[usize]) -> CMat {
    let full = linalg::to_momentum_basis(m);
    CMat::from_fn(modes.len(), modes.len(), |a, b| full[(modes[a], modes[b])])
}

/// Entrywise conjugation M_ab·e^{f_b − f_a}, i.e. D⁻¹MD for D = diag(e^{f}).
pub fn conjugate_by_exponent(m: &CMat, f: &[f64]) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |a, b| m[(a, b)] * (f[b] - f[a]).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::build_jm_avatar;

    fn grid(n: usize, l: f64) -> GridSpec {
        GridSpec::new(n, l).unwrap()
    }

    #[test]
    fn constant_g_has_no_coriolis() {
        let g = Schedule::constant(1.3);
        let s = coriolis_njm(&g, 0.4, grid(32, 5.0)).unwrap();
        assert_eq!(linalg::fro(&s.entries), 0.0);
    }

    #[test]
    fn exponential_g_coriolis() {
        let g0 = 1.7;
        let g: Schedule = format!("exp:{g0},1").parse().unwrap();
        let gr = grid(32, 5.0);
        let t = 0.6;
        let s = coriolis_njm(&g, t, gr).unwrap();
        let p = operators::build_momentum(gr, operators::MomentumScheme::Fourier).unwrap().entries;
        let expect = linalg::scale(&(&p * &p * &p), -I * ((-t as f64).exp() / (96.0 * g0)));
        assert!(linalg::fro(&(&s.entries - &expect)) / linalg::fro(&expect) < 1e-12);
        assert!(linalg::fro(&(&s.entries + s.entries.adjoint())) < 1e-12 * linalg::fro(&s.entries));
    }

    #[test]
    fn pwl_kink_is_a_derivative_error() {
        let g: Schedule = "pwl:0,1;1,2;2,1".parse().unwrap();
        assert!(matches!(coriolis_njm(&g, 1.0, grid(16, 2.0)), Err(NipError::Derivative(_))));
    }

    #[test]
    fn generator_splitting() {
        let gr = grid(32, 5.0);
        let g: Schedule = "poly:1,0.5".parse().unwrap();
        let fam = NjmFamily::new(g.clone(), gr).unwrap();
        let h = fam.hamiltonian(0.3).unwrap();
        let s = fam.coriolis(0.3).unwrap();
        let gg = generator_g(&h, &s).unwrap();
        assert!(linalg::fro(&(&gg.entries + &s.entries - &h.entries)) < 1e-13 * linalg::fro(&h.entries));
        let aff = fam.generator_family().at(0.3);
        assert!(linalg::fro(&(&aff - &gg.entries)) < 1e-12 * linalg::fro(&gg.entries));
        let zero = OperatorMatrix::zeros(gr, Basis::PositionGrid);
        assert_eq!(generator_g(&h, &zero).unwrap().entries, h.entries);
    }

    #[test]
    fn hermitian_evolution_is_unitary() {
        let gr = grid(64, 4.0);
        let h = build_jm_avatar(1.0, gr).unwrap();
        let fam = AffineFamily::constant(&h);
        let ket: Vec<c64> = gr.points().iter().map(|&x| cr((-(x - 0.5).powi(2)).exp())).collect();
        let s0 = EvolutionState { t: 0.0, ket: ket.clone(), ketket: ket };
        let tr = evolve_pair(&fam, &s0, 0.1, 2.5e-4, &EvolveOptions::default()).unwrap();
        assert!(tr.drift < 1e-8, "{}", tr.drift);
        assert_eq!(tr.times.len(), 401);
    }

    #[test]
    fn evolution_rejects_bad_steps() {
        let gr = grid(16, 2.0);
        let fam = AffineFamily::constant(&OperatorMatrix::identity(gr, Basis::PositionGrid));
        let v = vec![cr(1.0); 16];
        let s0 = EvolutionState { t: 0.0, ket: v.clone(), ketket: v };
        assert!(evolve_pair(&fam, &s0, 1.0, 0.0, &EvolveOptions::default()).is_err());
        assert!(evolve_pair(&fam, &s0, 1.0, 0.3, &EvolveOptions::default()).is_err());
    }

    #[test]
    fn drift_abort_names_the_step() {
        // dt·G far outside the RK4 stability region
        let gr = grid(16, 2.0);
        let m = linalg::scale(&linalg::identity(16), cr(1000.0));
        let fam = AffineFamily::constant(&OperatorMatrix::new(m, Basis::PositionGrid, gr).unwrap());
        let v = vec![cr(1.0); 16];
        let s0 = EvolutionState { t: 0.0, ket: v.clone(), ketket: v };
        match evolve_pair(&fam, &s0, 1.0, 1e-2, &EvolveOptions::default()) {
            Err(NipError::Instability { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected instability, got {other:?}"),
        }
    }

    #[test]
    fn projector_properties() {
        let gr = grid(16, 2.0);
        let ket: Vec<c64> = (0..16).map(|i| c64::new(1.0 + i as f64 * 0.1, 0.2)).collect();
        let ketket: Vec<c64> = (0..16).map(|i| c64::new(0.5, -0.05 * i as f64)).collect();
        let s = EvolutionState { t: 0.0, ket: ket.clone(), ketket };
        let p = projector(&s, gr).unwrap().entries;
        let p2 = &p * &p;
        assert!(linalg::fro(&(&p2 - &p)) < 1e-10 * linalg::fro(&p));
        let tr: c64 = (0..16).map(|i| p[(i, i)]).sum();
        assert!((tr - cr(1.0)).norm() < 1e-10);
        let pk = linalg::mat_vec(&p, &ket);
        let d: Vec<c64> = pk.iter().zip(&ket).map(|(a, b)| a - b).collect();
        assert!(linalg::vnorm(&d) < 1e-10 * linalg::vnorm(&ket));
        let bad = EvolutionState { t: 0.0, ket: vec![cr(1.0), ZERO], ketket: vec![ZERO, cr(1.0)] };
        assert!(matches!(projector(&bad, grid(8, 1.0)), Err(NipError::DegenerateState(_))));
    }

    #[test]
    fn expectation_basics() {
        let gr = grid(64, 8.0);
        let v: Vec<c64> = gr.points().iter().map(|&x| cr((-x * x / 2.0).exp())).collect();
        let s = EvolutionState { t: 0.0, ket: v.clone(), ketket: v.clone() };
        let one = expectation(&s, &OperatorMatrix::identity(gr, Basis::PositionGrid)).unwrap();
        assert!((one - cr(1.0)).norm() < 1e-14);
        // Σ anti-Hermitian: plain pairing of a Gaussian is purely imaginary
        let g: Schedule = "poly:1,0.5".parse().unwrap();
        let sig = coriolis_njm(&g, 0.0, gr).unwrap();
        let sh: Vec<c64> = gr.points().iter().map(|&x| c64::from_polar((-(x - 0.7).powi(2) / 2.0).exp(), x)).collect();
        let s = EvolutionState { t: 0.0, ket: sh.clone(), ketket: sh };
        let e = expectation(&s, &sig).unwrap();
        assert!(e.re.abs() < 1e-12 * e.norm().max(1e-300) + 1e-15);
        assert!(e.im.abs() > 1e-6);
    }

    #[test]
    fn stationary_residuals_vanish() {
        let gr = grid(32, 5.0);
        let h = build_jm_avatar(1.0, gr).unwrap().entries;
        let id = linalg::identity(32);
        let z = CMat::zeros(32, 32);
        let th = |_t: f64| -> Result<CMat> { Ok(id.clone()) };
        let sg = |_t: f64| -> Result<CMat> { Ok(z.clone()) };
        let gg = |_t: f64| -> Result<CMat> { Ok(h.clone()) };
        let r = metric_evolution_residuals(&th, &sg, &gg, 0.3, 1e-4, None).unwrap();
        assert!(r.coriolis_form < 1e-12 && r.generator_form < 1e-12);
        assert_eq!(heisenberg_residual(&gg, &sg, None, 0.3, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn zero_coriolis_keeps_dyson_fixed() {
        let o0 = CMat::from_fn(6, 6, |i, j| c64::new((i + j) as f64, i as f64 - j as f64));
        let z = CMat::zeros(6, 6);
        let s = |_t: f64| -> Result<CMat> { Ok(z.clone()) };
        let o1 = reconstruct_dyson(&s, &o0, 0.0, 1.0, 0.1).unwrap();
        assert_eq!(o1, o0);
    }

    #[test]
    fn dense_and_diagonal_reconstruction_agree() {
        let gr = grid(16, 3.0);
        let g: Schedule = "poly:1,0.5".parse().unwrap();
        let k = gr.wavenumbers();
        let u = linalg::dft_matrix(16);
        let sig_sym = |t: f64| -> Result<Vec<c64>> {
            let c = coriolis_njm_coefficient(&g, t)?;
            Ok(k.iter().map(|&k| c * k.powi(3)).collect())
        };
        let sig_dense = |t: f64| -> Result<CMat> { Ok(coriolis_njm(&g, t, gr)?.entries) };
        let w0: Vec<c64> = metric::njm_dyson_exponent(1.0, &gr).iter().map(|e| cr(e.exp())).collect();
        let o0 = u.adjoint() * linalg::diag(&w0) * &u;
        let w1 = reconstruct_dyson_diagonal(&sig_sym, &w0, 0.0, 0.5, 1e-3).unwrap();
        let o1 = reconstruct_dyson(&sig_dense, &o0, 0.0, 0.5, 1e-3).unwrap();
        let o1d = u.adjoint() * linalg::diag(&w1) * &u;
        assert!(linalg::fro(&(&o1 - &o1d)) / linalg::fro(&o1d) < 1e-10);
    }
}
