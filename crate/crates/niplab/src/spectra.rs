//! Dense eigensolves with box-artifact filtering, reality classification
//! and greedy spectrum matching.

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{NipError, Result};
use crate::linalg::{self, CMat};
use crate::operators::{Basis, GridSpec, OperatorMatrix};

/// Rejects eigenvectors with too much squared weight near the box edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArtifactFilter {
    pub enabled: bool,
    /// Fraction of squared norm allowed in the edge region.
    pub threshold: f64,
    /// Total fraction of grid points counted as edge, split evenly between the ends.
    pub edge_fraction: f64,
}

impl Default for ArtifactFilter {
    fn default() -> Self {
        ArtifactFilter { enabled: true, threshold: 1e-3, edge_fraction: 0.1 }
    }
}

impl ArtifactFilter {
    pub fn disabled() -> Self {
        ArtifactFilter { enabled: false, ..Default::default() }
    }

    pub fn edge_points(&self, n: usize) -> usize {
        (self.edge_fraction * n as f64 / 2.0).ceil() as usize
    }

    /// Fraction of |v|² carried by the edge points.
    pub fn edge_mass(&self, v: &[c64]) -> f64 {
        let n = v.len();
        let m = self.edge_points(n).min(n / 2);
        let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return 1.0;
        }
        let edge: f64 = v[..m].iter().chain(&v[n - m..]).map(|z| z.norm_sqr()).sum();
        edge / total
    }

    /// Edge mass at the far end only. On a half-line grid the end next to
    /// r = 0 is a physical boundary, not an artificial one.
    pub fn far_edge_mass(&self, v: &[c64]) -> f64 {
        let n = v.len();
        let m = self.edge_points(n).min(n / 2);
        let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if total == 0.0 {
            return 1.0;
        }
        v[n - m..].iter().map(|z| z.norm_sqr()).sum::<f64>() / total
    }

    pub fn rejects(&self, v: &[c64]) -> bool {
        self.enabled && self.edge_mass(v) > self.threshold
    }

    pub fn rejects_in(&self, v: &[c64], basis: Basis) -> bool {
        match basis {
            Basis::HalfLineGrid => self.enabled && self.far_edge_mass(v) > self.threshold,
            _ => self.rejects(v),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<c64>,
    pub filtered_count: usize,
    /// Eigenvalues rejected as box artifacts (a subset of `filtered_count`).
    pub artifact_count: usize,
    pub grid: GridSpec,
    pub reality_tolerance: f64,
}

/// All retained eigenpairs, sorted, with unit-norm right eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<c64>,
    pub vectors: CMat,
    pub filtered_count: usize,
    pub grid: GridSpec,
}

impl Eigenpairs {
    pub fn lowest(&self, m: usize) -> Result<CMat> {
        if m > self.values.len() {
            return Err(NipError::Numerical(format!(
                "asked for {m} eigenvectors but only {} survived filtering",
                self.values.len()
            )));
        }
        Ok(self.vectors.subcols(0, m).to_owned())
    }
}

fn spectral_order(a: &c64, b: &c64) -> std::cmp::Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

pub fn sort_spectrum(v: &mut [c64]) {
    v.sort_by(spectral_order);
}

/// Full nonsymmetric eigendecomposition, filtered and sorted by real part.
pub fn eigenpairs(m: &OperatorMatrix, filter: &ArtifactFilter) -> Result<Eigenpairs> {
    let n = m.dim();
    let a = &m.entries;
    if a.col_iter().any(|c| c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
        return Err(NipError::Numerical("matrix has non-finite entries".into()));
    }
    let evd = a.eigen().map_err(|e| {
        let diag = linalg::condition_number(a).map(|c| format!("{c:.3e}")).unwrap_or_else(|_| "unavailable".into());
        NipError::Numerical(format!(
            "eigendecomposition failed ({e:?}); Frobenius norm {:.3e}, condition number {diag}",
            linalg::fro(a)
        ))
    })?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut kept: Vec<(c64, Vec<c64>)> = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<c64> = u.col(j).iter().copied().collect();
        if filter.rejects_in(&v, m.basis) {
            continue;
        }
        let nv = linalg::vnorm(&v);
        v.iter_mut().for_each(|z| *z /= nv);
        kept.push((s[j], v));
    }
    kept.sort_by(|a, b| spectral_order(&a.0, &b.0));
    let filtered_count = n - kept.len();
    let values: Vec<c64> = kept.iter().map(|p| p.0).collect();
    let cols: Vec<Vec<c64>> = kept.into_iter().map(|p| p.1).collect();
    let vectors = if cols.is_empty() { CMat::zeros(n, 0) } else { linalg::from_columns(&cols) };
    Ok(Eigenpairs { values, vectors, filtered_count, grid: m.grid })
}

/// The k lowest retained eigenvalues. `filtered_count` counts every
/// eigenvalue not returned, so it plus the list length is the dimension.
pub fn eigensolve(m: &OperatorMatrix, k: usize, filter: &ArtifactFilter) -> Result<Spectrum> {
    if k > m.dim() {
        return Err(NipError::InvalidConfig(format!("k = {k} exceeds the dimension {}", m.dim())));
    }
    let ep = eigenpairs(m, filter)?;
    if ep.values.len() < k {
        return Err(NipError::Numerical(format!(
            "only {} eigenvalues survived the artifact filter, {k} requested",
            ep.values.len()
        )));
    }
    let eigenvalues = ep.values[..k].to_vec();
    Ok(Spectrum {
        filtered_count: m.dim() - k,
        artifact_count: ep.filtered_count,
        eigenvalues,
        grid: m.grid,
        reality_tolerance: 1e-6,
    })
}

/// Splits eigenvalues into (real, complex) by |Im E| < τ_abs + τ_rel·|E|.
pub fn classify_reality(s: &Spectrum, tau_abs: f64, tau_rel: f64) -> Result<(Vec<c64>, Vec<c64>)> {
    if !(tau_abs > 0.0 && tau_rel > 0.0) {
        return Err(NipError::InvalidConfig("reality tolerances must be positive".into()));
    }
    Ok(s.eigenvalues
        .iter()
        .partition(|e| e.im.abs() < tau_abs + tau_rel * e.norm()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchMode {
    Bijective,
    Subset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub pairs: Vec<(usize, usize, f64)>,
    pub max_deviation: f64,
    pub max_relative_deviation: f64,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    pub tolerance: f64,
    pub mode: MatchMode,
    pub matched: bool,
}

/// Greedy nearest-real-part pairing of a's k lowest against b.
///
/// In bijective mode only b's k lowest are candidates. In subset mode all of
/// b is searched and b eigenvalues lying inside the matched energy window but
/// left unpaired are listed as surplus in `unmatched_b`.
pub fn compare_spectra(a: &Spectrum, b: &Spectrum, k: usize, tol: f64, mode: MatchMode) -> Result<MatchReport> {
    if a.eigenvalues.len() < k || (mode == MatchMode::Bijective && b.eigenvalues.len() < k) {
        return Err(NipError::InvalidConfig(format!(
            "need {k} eigenvalues, have {} and {}",
            a.eigenvalues.len(),
            b.eigenvalues.len()
        )));
    }
    let pool = match mode {
        MatchMode::Bijective => k,
        MatchMode::Subset => b.eigenvalues.len(),
    };
    let mut used = vec![false; pool];
    let mut pairs = Vec::with_capacity(k);
    let mut unmatched_a = vec![];
    for (i, ea) in a.eigenvalues[..k].iter().enumerate() {
        let best = (0..pool)
            .filter(|&j| !used[j])
            .min_by(|&x, &y| {
                let dx = (b.eigenvalues[x].re - ea.re).abs();
                let dy = (b.eigenvalues[y].re - ea.re).abs();
                dx.total_cmp(&dy)
            });
        match best {
            Some(j) => {
                used[j] = true;
                let dev = (ea - b.eigenvalues[j]).norm();
                if dev > tol {
                    unmatched_a.push(i);
                }
                pairs.push((i, j, dev));
            }
            None => unmatched_a.push(i),
        }
    }
    let max_deviation = pairs.iter().map(|p| p.2).fold(0.0, f64::max);
    let max_relative_deviation = pairs
        .iter()
        .map(|&(i, _, d)| {
            let s = a.eigenvalues[i].norm();
            if s > 0.0 { d / s } else { d }
        })
        .fold(0.0, f64::max);
    let top = pairs
        .iter()
        .map(|&(_, j, _)| b.eigenvalues[j].re)
        .fold(f64::NEG_INFINITY, f64::max);
    let unmatched_b = (0..pool)
        .filter(|&j| !used[j] && (mode == MatchMode::Bijective || b.eigenvalues[j].re <= top + tol))
        .collect();
    Ok(MatchReport {
        matched: unmatched_a.is_empty() && pairs.len() == k,
        pairs,
        max_deviation,
        max_relative_deviation,
        unmatched_a,
        unmatched_b,
        tolerance: tol,
        mode,
    })
}

/// Relative-tolerance variant: every pair must satisfy |Ea − Eb| ≤ tol·|Ea|.
pub fn compare_spectra_relative(
    a: &Spectrum,
    b: &Spectrum,
    k: usize,
    rel_tol: f64,
    mode: MatchMode,
) -> Result<MatchReport> {
    let mut r = compare_spectra(a, b, k, f64::INFINITY, mode)?;
    r.tolerance = rel_tol;
    r.unmatched_a = r
        .pairs
        .iter()
        .filter(|&&(i, _, d)| d > rel_tol * a.eigenvalues[i].norm())
        .map(|p| p.0)
        .collect();
    r.matched = r.unmatched_a.is_empty() && r.pairs.len() == k;
    Ok(r)
}
