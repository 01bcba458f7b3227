//! Dense complex helpers shared by every module: norms, Fourier-diagonal
//! operators, thin QR, inversion and a Padé matrix exponential.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat, Scale};
use rustfft::FftPlanner;

use crate::error::{NipError, Result};

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

#[inline]
pub fn cr(x: f64) -> c64 {
    c64::new(x, 0.0)
}

pub fn fro(m: &CMat) -> f64 {
    m.norm_l2()
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn scale(m: &CMat, s: c64) -> CMat {
    Scale(s) * m
}

/// ‖M − M†‖_F / ‖M‖_F, zero for the zero matrix.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    let nm = fro(m);
    if nm == 0.0 {
        return 0.0;
    }
    fro(&(m - m.adjoint())) / nm
}

pub fn hermitian_part(m: &CMat) -> CMat {
    Scale(cr(0.5)) * (m + m.adjoint())
}

pub fn anti_hermitian_part(m: &CMat) -> CMat {
    Scale(cr(0.5)) * (m - m.adjoint())
}

pub fn diag(values: &[c64]) -> CMat {
    let n = values.len();
    let mut m = CMat::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = *v;
    }
    m
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Left multiplication by a diagonal.
pub fn diag_mul(d: &[c64], m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

pub fn mat_vec(m: &CMat, v: &[c64]) -> Vec<c64> {
    let mut out = vec![ZERO; m.nrows()];
    for j in 0..m.ncols() {
        let vj = v[j];
        if vj == ZERO {
            continue;
        }
        let col = m.col(j);
        for (o, a) in out.iter_mut().zip(col.iter()) {
            *o += a * vj;
        }
    }
    out
}

pub fn adjoint_mat_vec(m: &CMat, v: &[c64]) -> Vec<c64> {
    (0..m.ncols())
        .map(|j| m.col(j).iter().zip(v).map(|(a, b)| a.conj() * b).sum())
        .collect()
}

/// ⟨a, b⟩ = Σ conj(a_i) b_i.
pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vnorm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn column(m: &CMat, j: usize) -> Vec<c64> {
    m.col(j).iter().copied().collect()
}

pub fn from_columns(cols: &[Vec<c64>]) -> CMat {
    let n = cols.first().map_or(0, |c| c.len());
    CMat::from_fn(n, cols.len(), |i, j| cols[j][i])
}

pub fn inverse(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

pub fn solve(m: &CMat, rhs: &CMat) -> CMat {
    m.partial_piv_lu().solve(rhs)
}

/// Thin QR: returns (Q, R) with Q having orthonormal columns.
pub fn thin_qr(m: &CMat) -> (CMat, CMat) {
    let qr = m.qr();
    (qr.compute_thin_Q(), qr.thin_R().to_owned())
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &CMat) -> Result<f64> {
    let s = m
        .singular_values()
        .map_err(|e| NipError::Numerical(format!("singular value decomposition failed: {e:?}")))?;
    let max = s.first().copied().unwrap_or(0.0);
    let min = s.last().copied().unwrap_or(0.0);
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Angular wavenumbers in FFT order with the Nyquist mode taken positive,
/// so every k lies in (−p_max, p_max].
pub fn wavenumbers(n: usize, dx: f64) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI / (n as f64 * dx);
    (0..n)
        .map(|j| {
            let m = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
            base * m as f64
        })
        .collect()
}

pub fn fft(v: &[c64]) -> Vec<c64> {
    let mut buf = v.to_vec();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

pub fn ifft(v: &[c64]) -> Vec<c64> {
    let n = v.len() as f64;
    let mut buf = v.to_vec();
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf.iter_mut().for_each(|z| *z /= n);
    buf
}

/// Apply the operator with the given Fourier symbol (FFT order) to a vector.
pub fn apply_symbol(symbol: &[c64], v: &[c64]) -> Vec<c64> {
    let mut h = fft(v);
    h.iter_mut().zip(symbol).for_each(|(a, s)| *a *= s);
    ifft(&h)
}

/// Dense position-grid matrix of a Fourier multiplier. The result is
/// circulant, so only one inverse FFT is needed.
pub fn symbol_matrix(symbol: &[c64]) -> CMat {
    let n = symbol.len();
    let c = ifft(symbol);
    CMat::from_fn(n, n, |j, l| c[(j + n - l) % n])
}

/// Unitary DFT matrix, U_{κj} = e^{−2πiκj/n}/√n.
pub fn dft_matrix(n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    CMat::from_fn(n, n, |k, j| {
        let ph = -2.0 * std::f64::consts::PI * ((k * j) % n) as f64 / n as f64;
        c64::from_polar(s, ph)
    })
}

/// Matrix in the Fourier basis, U M U†.
pub fn to_momentum_basis(m: &CMat) -> CMat {
    let u = dft_matrix(m.nrows());
    &u * m * u.adjoint()
}

fn one_norm(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.col(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé core.
pub fn expm(a: &CMat) -> CMat {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = Scale(cr(0.5f64.powi(s))) * a;
    let id = identity(n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = |i: usize| Scale(cr(B[i]));
    let u_inner = &a6 * (b(13) * &a6 + b(11) * &a4 + b(9) * &a2) + b(7) * &a6 + b(5) * &a4 + b(3) * &a2 + b(1) * &id;
    let u = &a * u_inner;
    let v = &a6 * (b(12) * &a6 + b(10) * &a4 + b(8) * &a2) + b(6) * &a6 + b(4) * &a4 + b(2) * &a2 + b(0) * &id;
    let mut r = solve(&(&v - &u), &(&v + &u));
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
