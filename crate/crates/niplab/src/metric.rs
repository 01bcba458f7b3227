//! Metrics Θ and Dyson maps Ω, quasi-Hermiticity residuals and Hermitization.
//!
//! The closed-form metrics are Fourier multipliers exp(e(k)) with e unbounded
//! above, so they are truncated: modes with e(k) above a cap (or below −700)
//! are dropped and recorded. Residuals are measured on an admissible
//! subspace, the span of the lowest filtered eigenvectors of the Hamiltonian.

use faer::{c64, Side};
use serde::{Deserialize, Serialize};

use crate::error::{NipError, Result};
use crate::linalg::{self, cr, CMat};
use crate::operators::{Basis, GridSpec, OperatorMatrix};
use crate::spectra::{self, ArtifactFilter};

/// Hard double-precision bound on exponents.
pub const OVERFLOW_GUARD: f64 = 700.0;
/// Default exponent cap for metrics; Dyson maps use half of it.
pub const DEFAULT_METRIC_CAP: f64 = 20.0;
pub const DEFAULT_SUBSPACE_DIM: usize = 10;
pub const MAX_CONDITION: f64 = 1e12;

/// exp(e(k)) on retained Fourier modes, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierExponential {
    pub exponent: Vec<f64>,
    pub retained: Vec<bool>,
    pub grid: GridSpec,
}

impl FourierExponential {
    pub fn new(grid: GridSpec, exponent: Vec<f64>, cap: f64) -> Result<Self> {
        if !(cap > 0.0 && cap <= OVERFLOW_GUARD) {
            return Err(NipError::InvalidConfig(format!(
                "exponent cap {cap} must lie in (0, {OVERFLOW_GUARD}]"
            )));
        }
        let retained = exponent.iter().map(|&e| e <= cap && e >= -OVERFLOW_GUARD).collect();
        Self::with_mask(grid, exponent, retained)
    }

    pub fn with_mask(grid: GridSpec, exponent: Vec<f64>, retained: Vec<bool>) -> Result<Self> {
        grid.require_even()?;
        if exponent.len() != grid.n_points || retained.len() != grid.n_points {
            return Err(NipError::InvalidConfig("exponent length does not match the grid".into()));
        }
        if exponent.iter().zip(&retained).any(|(e, &r)| r && *e > OVERFLOW_GUARD) {
            return Err(NipError::InvalidConfig(format!(
                "retained exponent exceeds {OVERFLOW_GUARD}; use a coarser grid or a smaller cutoff"
            )));
        }
        if !retained.iter().any(|&r| r) {
            return Err(NipError::InvalidConfig(
                "no Fourier mode survives the exponent cutoff; use a coarser grid or a smaller p_max".into(),
            ));
        }
        Ok(FourierExponential { exponent, retained, grid })
    }

    pub fn symbol(&self) -> Vec<c64> {
        self.exponent
            .iter()
            .zip(&self.retained)
            .map(|(&e, &r)| if r { cr(e.exp()) } else { cr(0.0) })
            .collect()
    }

    pub fn matrix(&self) -> CMat {
        linalg::hermitian_part(&linalg::symbol_matrix(&self.symbol()))
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        linalg::apply_symbol(&self.symbol(), v)
    }

    pub fn apply_columns(&self, m: &CMat) -> CMat {
        let cols: Vec<Vec<c64>> = (0..m.ncols()).map(|j| self.apply(&linalg::column(m, j))).collect();
        linalg::from_columns(&cols)
    }

    /// Every mode with |k| below this value is retained.
    pub fn cutoff_pmax(&self) -> f64 {
        self.grid
            .wavenumbers()
            .iter()
            .zip(&self.retained)
            .filter(|(_, &r)| !r)
            .map(|(k, _)| k.abs())
            .fold(self.grid.p_max(), f64::min)
    }

    pub fn retained_count(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    /// Ratio of largest to smallest retained entry.
    pub fn condition(&self) -> f64 {
        let (lo, hi) = self
            .exponent
            .iter()
            .zip(&self.retained)
            .filter(|(_, &r)| r)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&e, _)| (lo.min(e), hi.max(e)));
        (hi - lo).exp()
    }

    pub fn halved(&self) -> Self {
        FourierExponential {
            exponent: self.exponent.iter().map(|e| 0.5 * e).collect(),
            retained: self.retained.clone(),
            grid: self.grid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MetricOperator {
    pub matrix: OperatorMatrix,
    pub positive: bool,
    pub cutoff_pmax: f64,
    pub symbol: Option<FourierExponential>,
}

impl MetricOperator {
    pub fn from_exponential(fe: FourierExponential) -> Result<Self> {
        let matrix = OperatorMatrix::new(fe.matrix(), Basis::PositionGrid, fe.grid)?;
        Ok(MetricOperator { positive: true, cutoff_pmax: fe.cutoff_pmax(), matrix, symbol: Some(fe) })
    }

    /// Dense metric; Hermiticity and positivity are checked here.
    pub fn from_matrix(matrix: OperatorMatrix) -> Result<Self> {
        let r = matrix.hermiticity_residual();
        if r > 1e-12 {
            return Err(NipError::NotAMetric(format!("matrix is not Hermitian (residual {r:.3e})")));
        }
        let s = matrix
            .entries
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| NipError::Numerical(format!("Hermitian eigensolve failed: {e:?}")))?;
        let positive = s.first().is_some_and(|&m| m > 0.0);
        let cutoff_pmax = matrix.grid.p_max();
        Ok(MetricOperator { matrix, positive, cutoff_pmax, symbol: None })
    }

    pub fn identity(grid: GridSpec) -> Self {
        MetricOperator {
            matrix: OperatorMatrix::identity(grid, Basis::PositionGrid),
            positive: true,
            cutoff_pmax: grid.p_max(),
            symbol: None,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.matrix.grid
    }

    pub fn apply_columns(&self, m: &CMat) -> CMat {
        match &self.symbol {
            Some(fe) => fe.apply_columns(m),
            None => &self.matrix.entries * m,
        }
    }

    /// Smallest eigenvalue of W†ΘW.
    pub fn min_eigenvalue_on(&self, sub: &Subspace) -> Result<f64> {
        let w = &sub.basis;
        let c = linalg::hermitian_part(&(w.adjoint() * self.apply_columns(w)));
        let s = c
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| NipError::Numerical(format!("Hermitian eigensolve failed: {e:?}")))?;
        Ok(s[0])
    }
}

#[derive(Debug, Clone)]
pub struct DysonMap {
    pub matrix: OperatorMatrix,
    /// ‖Ω†Ω − Θ‖_F / ‖Θ‖_F against the metric it was built for.
    pub metric_consistency: f64,
    /// Condition number on the retained modes.
    pub condition: f64,
    pub symbol: Option<FourierExponential>,
}

impl DysonMap {
    pub fn from_exponential(fe: FourierExponential) -> Result<Self> {
        let matrix = OperatorMatrix::new(fe.matrix(), Basis::PositionGrid, fe.grid)?;
        Ok(DysonMap { metric_consistency: 0.0, condition: fe.condition(), matrix, symbol: Some(fe) })
    }

    pub fn identity(grid: GridSpec) -> Self {
        DysonMap {
            matrix: OperatorMatrix::identity(grid, Basis::PositionGrid),
            metric_consistency: 0.0,
            condition: 1.0,
            symbol: None,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.matrix.grid
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        match &self.symbol {
            Some(fe) => fe.apply(v),
            None => self.matrix.apply(v),
        }
    }

    pub fn apply_columns(&self, m: &CMat) -> CMat {
        match &self.symbol {
            Some(fe) => fe.apply_columns(m),
            None => &self.matrix.entries * m,
        }
    }

    /// Θ = Ω†Ω as a dense matrix.
    pub fn metric_matrix(&self) -> CMat {
        let o = &self.matrix.entries;
        linalg::hermitian_part(&(o.adjoint() * o))
    }

    pub fn metric(&self) -> Result<MetricOperator> {
        match &self.symbol {
            Some(fe) => {
                let doubled = FourierExponential {
                    exponent: fe.exponent.iter().map(|e| 2.0 * e).collect(),
                    retained: fe.retained.clone(),
                    grid: fe.grid,
                };
                MetricOperator::from_exponential(doubled)
            }
            None => MetricOperator::from_matrix(OperatorMatrix::new(self.metric_matrix(), Basis::PositionGrid, self.grid())?),
        }
    }
}

/// Exponent k³/(48g) − 2k of the closed-form metric, g = λ².
pub fn jm_metric_exponent(g: f64, grid: &GridSpec) -> Vec<f64> {
    grid.wavenumbers().iter().map(|&k| k.powi(3) / (48.0 * g) - 2.0 * k).collect()
}

/// Exponent k³/(96g) − k of the closed-form Dyson map.
pub fn njm_dyson_exponent(g: f64, grid: &GridSpec) -> Vec<f64> {
    grid.wavenumbers().iter().map(|&k| k.powi(3) / (96.0 * g) - k).collect()
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(NipError::Domain(format!("{name} must be positive, got {v}")))
    }
}

pub fn build_jm_metric(lambda: f64, grid: GridSpec) -> Result<MetricOperator> {
    build_jm_metric_capped(lambda, grid, DEFAULT_METRIC_CAP)
}

pub fn build_jm_metric_capped(lambda: f64, grid: GridSpec, cap: f64) -> Result<MetricOperator> {
    check_positive("lambda", lambda)?;
    build_metric_for_g(lambda * lambda, grid, cap)
}

pub fn build_metric_for_g(g: f64, grid: GridSpec, cap: f64) -> Result<MetricOperator> {
    check_positive("g", g)?;
    MetricOperator::from_exponential(FourierExponential::new(grid, jm_metric_exponent(g, &grid), cap)?)
}

pub fn build_njm_dyson(g_value: f64, grid: GridSpec) -> Result<DysonMap> {
    build_njm_dyson_capped(g_value, grid, DEFAULT_METRIC_CAP / 2.0)
}

pub fn build_njm_dyson_capped(g_value: f64, grid: GridSpec, cap: f64) -> Result<DysonMap> {
    check_positive("g", g_value)?;
    let fe = FourierExponential::new(grid, njm_dyson_exponent(g_value, &grid), cap)?;
    let mut d = DysonMap::from_exponential(fe)?;
    let theta = build_metric_for_g(g_value, grid, 2.0 * cap)?;
    let t = &theta.matrix.entries;
    d.metric_consistency = linalg::fro(&(d.metric_matrix() - t)) / linalg::fro(t);
    Ok(d)
}

/// Orthonormal basis of the span of selected eigenvectors.
#[derive(Debug, Clone)]
pub struct Subspace {
    pub basis: CMat,
    pub eigenvectors: CMat,
    pub eigenvalues: Vec<c64>,
}

impl Subspace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn compress(&self, m: &CMat) -> CMat {
        self.basis.adjoint() * m * &self.basis
    }
}

/// Span of the m lowest filtered eigenvectors of H.
pub fn admissible_subspace(h: &OperatorMatrix, m: usize, filter: &ArtifactFilter) -> Result<Subspace> {
    let ep = spectra::eigenpairs(h, filter)?;
    let r = ep.lowest(m)?;
    let (q, _) = linalg::thin_qr(&r);
    Ok(Subspace { basis: q, eigenvectors: r, eigenvalues: ep.values[..m].to_vec() })
}

/// ‖W†(Q†Θ − ΘQ)W‖_F / (‖W†QW‖_F·‖W†ΘW‖_F).
pub fn quasi_hermiticity_residual_on(q: &OperatorMatrix, theta: &MetricOperator, sub: &Subspace) -> Result<f64> {
    q.check_compatible(&theta.matrix)?;
    let w = &sub.basis;
    let qw = &q.entries * w;
    let tw = theta.apply_columns(w);
    let tq = theta.apply_columns(&qw);
    let lhs = qw.adjoint() * &tw;
    let rhs = w.adjoint() * &tq;
    let nq = linalg::fro(&(w.adjoint() * &qw));
    let nt = linalg::fro(&(w.adjoint() * &tw));
    if nq == 0.0 || nt == 0.0 {
        return Ok(0.0);
    }
    Ok(linalg::fro(&(lhs - rhs)) / (nq * nt))
}

/// Residual on the span of Q's lowest filtered eigenvectors.
pub fn quasi_hermiticity_residual(q: &OperatorMatrix, theta: &MetricOperator) -> Result<f64> {
    let m = DEFAULT_SUBSPACE_DIM.min(q.dim());
    let sub = admissible_subspace(q, m, &ArtifactFilter::default())?;
    quasi_hermiticity_residual_on(q, theta, &sub)
}

/// Full-matrix residual ‖Q†Θ − ΘQ‖_F / (‖Q‖_F·‖Θ‖_F), no compression.
pub fn quasi_hermiticity_residual_full(q: &OperatorMatrix, theta: &MetricOperator) -> Result<f64> {
    q.check_compatible(&theta.matrix)?;
    let t = &theta.matrix.entries;
    let e = &q.entries;
    let r = e.adjoint() * t - t * e;
    Ok(linalg::fro(&r) / (linalg::fro(e) * linalg::fro(t)))
}

/// Principal positive square root: exact for Fourier-diagonal metrics,
/// by Hermitian eigendecomposition otherwise.
pub fn factor_metric(theta: &MetricOperator) -> Result<DysonMap> {
    if let Some(fe) = &theta.symbol {
        let mut d = DysonMap::from_exponential(fe.halved())?;
        let t = &theta.matrix.entries;
        d.metric_consistency = linalg::fro(&(d.metric_matrix() - t)) / linalg::fro(t);
        return Ok(d);
    }
    factor_metric_dense(theta)
}

pub fn factor_metric_dense(theta: &MetricOperator) -> Result<DysonMap> {
    let t = &theta.matrix.entries;
    let evd = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| NipError::Numerical(format!("Hermitian eigensolve failed: {e:?}")))?;
    let s: Vec<f64> = evd.S().column_vector().iter().map(|z| z.re).collect();
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 {
        return Err(NipError::NotAMetric(format!("non-positive eigenvalue {min:.3e}")));
    }
    let u = evd.U();
    let root: Vec<c64> = s.iter().map(|x| cr(x.sqrt())).collect();
    let omega = linalg::hermitian_part(&(u * linalg::diag_mul(&root, &u.adjoint().to_owned())));
    let mut d = DysonMap {
        matrix: OperatorMatrix::new(omega, Basis::PositionGrid, theta.grid())?,
        metric_consistency: 0.0,
        condition: (max / min).sqrt(),
        symbol: None,
    };
    d.metric_consistency = linalg::fro(&(d.metric_matrix() - t)) / linalg::fro(t);
    Ok(d)
}

#[derive(Debug, Clone)]
pub struct Hermitized {
    /// 𝔥 in the orthonormal basis `basis` of Ω·W.
    pub reduced: CMat,
    pub basis: CMat,
    /// basis·reduced·basis†, the operator on the grid.
    pub operator: OperatorMatrix,
    pub residual: f64,
    pub condition: f64,
}

/// 𝔥 = ΩHΩ⁻¹. With a subspace W (H-invariant, e.g. from
/// `admissible_subspace`) the image Ω·W is orthonormalized as W′R_B and
/// 𝔥 = R_B (W†HW) R_B⁻¹ in the W′ basis, so Ω⁻¹ is never formed.
pub fn hermitize(h: &OperatorMatrix, omega: &DysonMap, sub: Option<&Subspace>) -> Result<Hermitized> {
    h.check_compatible(&omega.matrix)?;
    let advice = "lower the Dyson-map exponent cap or shrink the subspace".to_string();
    let (reduced, basis, condition) = match sub {
        Some(s) => {
            let w = &s.basis;
            let hs = s.compress(&h.entries);
            let b = omega.apply_columns(w);
            let (wp, rb) = linalg::thin_qr(&b);
            let cond = linalg::condition_number(&rb)?;
            if !(cond <= MAX_CONDITION) {
                return Err(NipError::Conditioning { condition: cond, advice });
            }
            let hr = &rb * &hs * linalg::inverse(&rb);
            (hr, wp, cond)
        }
        None => {
            let o = &omega.matrix.entries;
            let cond = linalg::condition_number(o)?;
            if !(cond <= MAX_CONDITION) {
                return Err(NipError::Conditioning { condition: cond, advice });
            }
            let hr = o * &h.entries * linalg::inverse(o);
            (hr, linalg::identity(h.dim()), cond)
        }
    };
    let residual = linalg::hermiticity_residual(&reduced);
    let full = &basis * &reduced * basis.adjoint();
    Ok(Hermitized {
        operator: OperatorMatrix::new(full, h.basis, h.grid)?,
        reduced,
        basis,
        residual,
        condition,
    })
}

impl Hermitized {
    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        let mut v = self
            .reduced
            .eigenvalues()
            .map_err(|e| NipError::Numerical(format!("eigensolve failed: {e:?}")))?;
        spectra::sort_spectrum(&mut v);
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateDirection {
    ToTextbook,
    ToKetket,
}

pub fn map_state(v: &[c64], omega: &DysonMap, direction: StateDirection) -> Result<Vec<c64>> {
    if v.len() != omega.grid().n_points {
        return Err(NipError::InvalidConfig(format!(
            "state has {} components, grid has {}",
            v.len(),
            omega.grid().n_points
        )));
    }
    let w = omega.apply(v);
    Ok(match direction {
        StateDirection::ToTextbook => w,
        StateDirection::ToKetket => linalg::adjoint_mat_vec(&omega.matrix.entries, &w),
    })
}
