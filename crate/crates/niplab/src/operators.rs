//! Grids and dense matrix builders for every Hamiltonian family.
//!
//! Full-line operators live on the periodic grid x_k = −L + kΔx with a
//! Fourier kinetic term. The radial oscillator lives on the open half line
//! r_k = (k+1)·2L/(n+1) with a sine-spectral Laplacian (Dirichlet at both ends).

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{NipError, Result};
use crate::linalg::{self, cr, CMat, I, ZERO};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_points: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(n_points: usize, half_width: f64) -> Result<Self> {
        if n_points < 8 {
            return Err(NipError::InvalidConfig(format!("grid needs at least 8 points, got {n_points}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(NipError::InvalidConfig(format!("grid half-width must be positive, got {half_width}")));
        }
        Ok(GridSpec { n_points, half_width })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n_points as f64
    }

    pub fn p_max(&self) -> f64 {
        std::f64::consts::PI / self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.n_points).map(|k| -self.half_width + k as f64 * dx).collect()
    }

    /// Wavenumbers in FFT order, Nyquist positive.
    pub fn wavenumbers(&self) -> Vec<f64> {
        linalg::wavenumbers(self.n_points, self.dx())
    }

    /// Interior points of (0, 2L) for the radial problem.
    pub fn half_line_points(&self) -> Vec<f64> {
        let h = 2.0 * self.half_width / (self.n_points + 1) as f64;
        (0..self.n_points).map(|k| (k + 1) as f64 * h).collect()
    }

    pub fn require_even(&self) -> Result<()> {
        if self.n_points % 2 == 1 {
            Err(NipError::InvalidConfig(format!(
                "Fourier discretization needs an even number of points, got {}",
                self.n_points
            )))
        } else {
            Ok(())
        }
    }

    /// Index of −x_k on the periodic grid.
    pub fn reflect_index(&self, k: usize) -> usize {
        (self.n_points - k) % self.n_points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    PositionGrid,
    MomentumGrid,
    HalfLineGrid,
}

#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: CMat,
    pub basis: Basis,
    pub grid: GridSpec,
}

impl OperatorMatrix {
    pub fn new(entries: CMat, basis: Basis, grid: GridSpec) -> Result<Self> {
        if entries.nrows() != grid.n_points || entries.ncols() != grid.n_points {
            return Err(NipError::InvalidConfig(format!(
                "matrix is {}x{} but the grid has {} points",
                entries.nrows(),
                entries.ncols(),
                grid.n_points
            )));
        }
        Ok(OperatorMatrix { entries, basis, grid })
    }

    fn position(entries: CMat, grid: GridSpec) -> Self {
        OperatorMatrix { entries, basis: Basis::PositionGrid, grid }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        linalg::hermiticity_residual(&self.entries)
    }

    pub fn adjoint(&self) -> Self {
        OperatorMatrix { entries: linalg::adjoint(&self.entries), ..self.clone() }
    }

    pub fn identity(grid: GridSpec, basis: Basis) -> Self {
        OperatorMatrix { entries: linalg::identity(grid.n_points), basis, grid }
    }

    pub fn zeros(grid: GridSpec, basis: Basis) -> Self {
        OperatorMatrix { entries: CMat::zeros(grid.n_points, grid.n_points), basis, grid }
    }

    pub fn check_compatible(&self, other: &OperatorMatrix) -> Result<()> {
        if self.grid != other.grid || self.basis != other.basis {
            return Err(NipError::InvalidConfig("operators live on different grids or bases".into()));
        }
        Ok(())
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        linalg::mat_vec(&self.entries, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentumScheme {
    Fourier,
    Fd2,
    Fd4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Aho { lambda: f64, j: f64 },
    Bb { lambda: f64, delta: f64 },
    Jm { lambda: f64 },
    Bg { lambda: f64, j: f64, eps: f64 },
    Njm { g: Schedule },
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::Aho { lambda, j } => {
                check_nonneg("lambda", *lambda)?;
                check_j(*j)
            }
            ModelParams::Bb { lambda, delta } => {
                check_pos("lambda", *lambda)?;
                check_delta(*delta)
            }
            ModelParams::Jm { lambda } => check_pos("lambda", *lambda),
            ModelParams::Bg { lambda, j, eps } => {
                check_nonneg("lambda", *lambda)?;
                check_j(*j)?;
                check_eps(*eps)
            }
            ModelParams::Njm { g } => g.check_positive("g(t)"),
        }
    }
}

fn check_pos(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(NipError::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(NipError::Domain(format!("{name} must be non-negative, got {v}")))
    }
}

fn check_j(j: f64) -> Result<()> {
    if !j.is_finite() {
        return Err(NipError::Domain(format!("j must be finite, got {j}")));
    }
    if j < 1.0 {
        return Err(NipError::Unsupported(format!(
            "j = {j} < 1 gives an attractive centrifugal singularity"
        )));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_finite() && (0.0..2.0).contains(&delta) {
        Ok(())
    } else {
        Err(NipError::Domain(format!(
            "delta = {delta} is outside the real-line window [0, 2)"
        )))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if eps == 0.0 {
        return Err(NipError::SingularPotential(
            "eps = 0 puts the centrifugal pole on the real grid".into(),
        ));
    }
    check_pos("eps", eps)
}

/// Position-grid matrix of the Fourier multiplier f(k).
fn fourier_operator(grid: &GridSpec, f: impl Fn(f64) -> c64, hermitian: bool) -> Result<CMat> {
    grid.require_even()?;
    let sym: Vec<c64> = grid.wavenumbers().into_iter().map(f).collect();
    let m = linalg::symbol_matrix(&sym);
    Ok(if hermitian { linalg::hermitian_part(&m) } else { m })
}

/// Fourier kinetic term −D², symbol k².
fn neg_laplacian(grid: &GridSpec) -> Result<CMat> {
    fourier_operator(grid, |k| cr(k * k), true)
}

fn add_diag(m: &mut CMat, d: &[c64]) {
    for (i, v) in d.iter().enumerate() {
        m[(i, i)] += *v;
    }
}

pub fn build_position(grid: GridSpec) -> OperatorMatrix {
    let d: Vec<c64> = grid.points().into_iter().map(cr).collect();
    OperatorMatrix::position(linalg::diag(&d), grid)
}

pub fn build_momentum(grid: GridSpec, scheme: MomentumScheme) -> Result<OperatorMatrix> {
    let n = grid.n_points;
    let dx = grid.dx();
    let stencil: &[(usize, f64)] = match scheme {
        MomentumScheme::Fourier => {
            let m = fourier_operator(&grid, cr, true)?;
            return Ok(OperatorMatrix::position(m, grid));
        }
        MomentumScheme::Fd2 => &[(1, 0.5)],
        MomentumScheme::Fd4 => &[(1, 8.0 / 12.0), (2, -1.0 / 12.0)],
    };
    // P = −i D with a periodic antisymmetric stencil.
    let mut m = CMat::zeros(n, n);
    for j in 0..n {
        for &(off, w) in stencil {
            m[(j, (j + off) % n)] += -I * (w / dx);
            m[(j, (j + n - off) % n)] += I * (w / dx);
        }
    }
    Ok(OperatorMatrix::position(m, grid))
}

/// Sine-spectral −d²/dr² on (0, 2L) with Dirichlet ends.
fn sine_neg_laplacian(grid: &GridSpec) -> CMat {
    let n = grid.n_points;
    let len = 2.0 * grid.half_width;
    let np1 = (n + 1) as f64;
    let norm = (2.0 / np1).sqrt();
    let s = CMat::from_fn(n, n, |i, j| {
        let arg = std::f64::consts::PI * ((i + 1) * (j + 1)) as f64 / np1;
        cr(norm * arg.sin())
    });
    let eig: Vec<c64> = (1..=n)
        .map(|m| cr((std::f64::consts::PI * m as f64 / len).powi(2)))
        .collect();
    let m = &s * linalg::diag_mul(&eig, &s);
    linalg::hermitian_part(&m)
}

pub fn build_aho_radial(lambda: f64, j: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    ModelParams::Aho { lambda, j }.validate()?;
    let r = grid.half_line_points();
    let mut m = linalg::scale(&sine_neg_laplacian(&grid), cr(0.5));
    let v: Vec<c64> = r
        .iter()
        .map(|&r| cr(0.5 * ((j * j - 1.0) / (4.0 * r * r) + r * r) + lambda * lambda * r.powi(4)))
        .collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix { entries: m, basis: Basis::HalfLineGrid, grid })
}

/// One-dimensional form ½(−D² + X²) + λ²X⁴ on the full line (Fourier grid).
/// The radial form at j = 1 only carries the odd-parity states of this operator.
pub fn build_aho_line(lambda: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    check_nonneg("lambda", lambda)?;
    let mut m = linalg::scale(&neg_laplacian(&grid)?, cr(0.5));
    let v: Vec<c64> = grid.points().into_iter().map(|x| cr(0.5 * x * x + lambda * lambda * x.powi(4))).collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix::position(m, grid))
}

fn shifted_line(grid: &GridSpec, eps: f64) -> Vec<c64> {
    grid.points().into_iter().map(|x| c64::new(x, -eps)).collect()
}

pub fn build_qtilde(lambda: f64, j: f64, eps: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    check_pos("lambda", lambda)?;
    check_pos("j", j)?;
    check_eps(eps)?;
    qtilde_unchecked(lambda, j, eps, grid)
}

fn qtilde_unchecked(lambda: f64, j: f64, eps: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    let mut m = neg_laplacian(&grid)?;
    let v: Vec<c64> = shifted_line(&grid, eps)
        .into_iter()
        .map(|r| {
            cr(j / 2.0) - I * (j * lambda) * r + r * r - I * (2.0 * lambda) * r.powi(3) - cr(lambda * lambda) * r.powi(4)
        })
        .collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix::position(m, grid))
}

/// Harmonic limit of Q̃ (λ = 0, ε = 0): −D² + j/2 + X².
pub fn build_qtilde_harmonic_limit(j: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    check_nonneg("j", j)?;
    let mut m = neg_laplacian(&grid)?;
    let v: Vec<c64> = grid.points().into_iter().map(|x| cr(j / 2.0 + x * x)).collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix::position(m, grid))
}

/// Principal branch of (ix)^δ for real x.
pub fn principal_pow_ix(x: f64, delta: f64) -> c64 {
    if delta == 0.0 {
        return cr(1.0);
    }
    if x == 0.0 {
        return ZERO;
    }
    c64::from_polar(x.abs().powf(delta), delta * std::f64::consts::FRAC_PI_2 * x.signum())
}

pub fn build_bb(lambda: f64, delta: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    ModelParams::Bb { lambda, delta }.validate()?;
    let mut m = neg_laplacian(&grid)?;
    let v: Vec<c64> = grid
        .points()
        .into_iter()
        .map(|x| cr(lambda * lambda * x * x) * principal_pow_ix(x, delta))
        .collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix::position(m, grid))
}

/// Mapped kinetic operator P² − P/2 + i(XP² + P²X)/2.
pub fn jm_kinetic(grid: GridSpec) -> Result<CMat> {
    let p2 = neg_laplacian(&grid)?;
    let p = build_momentum(grid, MomentumScheme::Fourier)?.entries;
    let x = grid.points();
    Ok(CMat::from_fn(grid.n_points, grid.n_points, |a, b| {
        p2[(a, b)] - 0.5 * p[(a, b)] + I * (0.5 * (x[a] + x[b])) * p2[(a, b)]
    }))
}

/// Diagonal of 16g(x² − 1) − 32igx.
pub fn jm_potential(g: f64, grid: &GridSpec) -> Vec<c64> {
    grid.points()
        .into_iter()
        .map(|x| c64::new(16.0 * g * (x * x - 1.0), -32.0 * g * x))
        .collect()
}

fn mapped_with_g(g: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    let mut m = jm_kinetic(grid)?;
    add_diag(&mut m, &jm_potential(g, &grid));
    Ok(OperatorMatrix::position(m, grid))
}

pub fn build_jm_mapped(lambda: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    ModelParams::Jm { lambda }.validate()?;
    mapped_with_g(lambda * lambda, grid)
}

fn quartic_avatar(lin: f64, quart: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    let mut m = neg_laplacian(&grid)?;
    let v: Vec<c64> = grid
        .points()
        .into_iter()
        .map(|x| cr(-lin * x + quart * x.powi(4)))
        .collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix::position(m, grid))
}

pub fn build_jm_avatar(lambda: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    ModelParams::Jm { lambda }.validate()?;
    quartic_avatar(2.0 * lambda, 4.0 * lambda * lambda, grid)
}

pub fn build_bg(lambda: f64, j: f64, eps: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    ModelParams::Bg { lambda, j, eps }.validate()?;
    let mut m = linalg::scale(&neg_laplacian(&grid)?, cr(0.5));
    let v: Vec<c64> = shifted_line(&grid, eps)
        .into_iter()
        .map(|r| {
            let r2 = r * r;
            cr(0.5) * (cr((j * j - 1.0) / 4.0) / r2 + r2) - cr(lambda * lambda) * r2 * r2
        })
        .collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix::position(m, grid))
}

pub fn build_bg_avatar(lambda: f64, j: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    check_nonneg("lambda", lambda)?;
    check_j(j)?;
    let mut m = neg_laplacian(&grid)?;
    let v: Vec<c64> = grid
        .points()
        .into_iter()
        .map(|x| cr(j / 2.0 - j * lambda * x + x * x - 2.0 * lambda * x.powi(3) + lambda * lambda * x.powi(4)))
        .collect();
    add_diag(&mut m, &v);
    Ok(OperatorMatrix::position(m, grid))
}

pub fn build_njm_mapped(g_value: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    check_pos("g", g_value)?;
    mapped_with_g(g_value, grid)
}

pub fn build_njm_avatar(g_value: f64, grid: GridSpec) -> Result<OperatorMatrix> {
    check_pos("g", g_value)?;
    quartic_avatar(2.0 * g_value.sqrt(), 4.0 * g_value, grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellAnalysis {
    pub y_min: f64,
    pub v_min: f64,
    pub omega_sq: f64,
    pub e0_estimate: f64,
}

pub fn analyze_well(lambda: f64) -> Result<WellAnalysis> {
    check_pos("lambda", lambda)?;
    let c = lambda.cbrt();
    let y_min = 1.0 / (2.0 * c);
    let v_min = -0.75 * c * c;
    let omega_sq = 24.0 * lambda * lambda * y_min * y_min;
    let e0_estimate = v_min + 6f64.sqrt() * c * c;
    Ok(WellAnalysis { y_min, v_min, omega_sq, e0_estimate })
}

/// ‖Π M̄ Π − M‖_F / ‖M‖_F with Π the reflection x → −x.
///
/// The point x_0 = −L has no mirror image on the grid (+L is not a grid
/// point), so the comparison runs over the symmetric points x_1 … x_{n−1}.
pub fn pt_residual(m: &OperatorMatrix) -> f64 {
    let g = m.grid;
    let e = &m.entries;
    let n = g.n_points - 1;
    let sub = CMat::from_fn(n, n, |a, b| e[(a + 1, b + 1)]);
    let t = CMat::from_fn(n, n, |a, b| e[(g.reflect_index(a + 1), g.reflect_index(b + 1))].conj());
    linalg::fro(&(&t - &sub)) / linalg::fro(&sub)
}
