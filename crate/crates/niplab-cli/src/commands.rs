use serde::Serialize;

use niplab::c64;
use niplab::fring_tenney::{self, CoriolisFdReport, FTParams};
use niplab::linalg;
use niplab::metric::{self, MetricOperator};
use niplab::nip::{self, AffineFamily, EvolutionSpace, EvolveOptions, InitialState, NjmFamily};
use niplab::operators::{self, GridSpec, MomentumScheme, OperatorMatrix};
use niplab::schedule::Schedule;
use niplab::spectra::{self, ArtifactFilter, MatchMode, MatchReport, Spectrum};

use crate::config::{parse_triple, Layer};
use crate::output::{header, num, Format, Sink};
use crate::{CliError, Common, EvolveArgs, FtArgs, IsospectralArgs, MetricArgs, ModelArgs, SpectrumArgs};

const DEFAULT_GRID: (usize, f64) = (512, 10.0);
const FT_GRID: (usize, f64) = (64, 10.0);
/// Largest accepted mismatch between the extrapolated difference quotient and Σ.
const FD_LIMIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
struct GridInfo {
    n: usize,
    #[serde(rename = "L")]
    l: f64,
}

impl From<GridSpec> for GridInfo {
    fn from(g: GridSpec) -> Self {
        GridInfo { n: g.n_points, l: g.half_width }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ModelValues {
    lambda: f64,
    j: f64,
    eps: f64,
    delta: f64,
    g: String,
    t: f64,
}

impl ModelValues {
    fn resolve(a: &ModelArgs, cfg: &Layer) -> Result<Self, CliError> {
        let g = cfg.get(a.g.clone(), "g", "poly:1".to_string())?;
        // parse early so a bad schedule is a configuration error
        g.parse::<Schedule>().map_err(|e| CliError::Config(format!("--g {g:?}: {e}")))?;
        Ok(ModelValues {
            lambda: cfg.get(a.lambda, "lambda", 1.0)?,
            j: cfg.get(a.j, "j", 1.0)?,
            eps: cfg.get(a.eps, "eps", 0.5)?,
            delta: cfg.get(a.delta, "delta", 1.0)?,
            g,
            t: cfg.get(a.t, "t", 0.0)?,
        })
    }

    fn g_value(&self) -> f64 {
        self.g.parse::<Schedule>().map(|s| s.value(self.t)).unwrap_or(f64::NAN)
    }
}

fn build_model(name: &str, p: &ModelValues, grid: GridSpec) -> Result<OperatorMatrix, CliError> {
    let op = match name {
        "aho" => operators::build_aho_radial(p.lambda, p.j, grid)?,
        "aho-line" => operators::build_aho_line(p.lambda, grid)?,
        "qtilde" => operators::build_qtilde(p.lambda, p.j, p.eps, grid)?,
        "bb" => operators::build_bb(p.lambda, p.delta, grid)?,
        "jm" => operators::build_jm_mapped(p.lambda, grid)?,
        "jm-avatar" => operators::build_jm_avatar(p.lambda, grid)?,
        "bg" => operators::build_bg(p.lambda, p.j, p.eps, grid)?,
        "bg-avatar" => operators::build_bg_avatar(p.lambda, p.j, grid)?,
        "njm" => operators::build_njm_mapped(p.g_value(), grid)?,
        "njm-avatar" => operators::build_njm_avatar(p.g_value(), grid)?,
        other => return Err(CliError::Config(format!("unknown model {other:?}"))),
    };
    Ok(op)
}

fn sink(common: &Common, cfg: &Layer, default: Format) -> Result<Sink, CliError> {
    let out = cfg.get_opt(common.out.clone(), "out")?;
    Ok(Sink::new(out, common.format, default))
}

fn filter(no_filter: bool, cfg: &Layer) -> Result<ArtifactFilter, CliError> {
    let off = cfg.get(no_filter.then_some(true), "no_filter", false)?;
    Ok(if off { ArtifactFilter::disabled() } else { ArtifactFilter::default() })
}

/// Up to k filtered eigenvalues, fewer if fewer survive.
fn available_spectrum(m: &OperatorMatrix, k: usize, f: &ArtifactFilter) -> Result<Spectrum, CliError> {
    let ep = spectra::eigenpairs(m, f)?;
    let take = k.min(ep.values.len());
    Ok(Spectrum {
        eigenvalues: ep.values[..take].to_vec(),
        filtered_count: m.dim() - take,
        artifact_count: ep.filtered_count,
        grid: m.grid,
        reality_tolerance: 1e-6,
    })
}

#[derive(Debug, Serialize)]
struct Eigenvalue {
    re: f64,
    im: f64,
    real: bool,
}

fn eigen_rows(v: &[c64], tau_abs: f64, tau_rel: f64) -> Vec<Eigenvalue> {
    v.iter()
        .map(|e| Eigenvalue { re: e.re, im: e.im, real: e.im.abs() < tau_abs + tau_rel * e.norm() })
        .collect()
}

#[derive(Debug, Serialize)]
struct SpectrumReport {
    model: String,
    params: ModelValues,
    grid: GridInfo,
    filter: ArtifactFilter,
    eigenvalues: Vec<Eigenvalue>,
    filtered_count: usize,
    artifact_count: usize,
}

pub fn spectrum(a: SpectrumArgs) -> Result<bool, CliError> {
    let cfg = Layer::load(a.common.config.as_deref())?;
    let grid = cfg.grid(a.common.n, a.common.l, DEFAULT_GRID)?;
    let model: String = cfg.get(a.model, "model", "jm".into())?;
    let params = ModelValues::resolve(&a.params, &cfg)?;
    let k = cfg.get(a.k, "k", 10)?;
    let tau_abs = cfg.get(a.tau_abs, "tau_abs", 1e-6)?;
    let tau_rel = cfg.get(a.tau_rel, "tau_rel", 1e-6)?;
    let f = filter(a.no_filter, &cfg)?;
    let out = sink(&a.common, &cfg, Format::Csv)?;

    let op = build_model(&model, &params, grid)?;
    let s = spectra::eigensolve(&op, k, &f)?;
    let rows: Vec<Vec<String>> = s
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let real = e.im.abs() < tau_abs + tau_rel * e.norm();
            vec![i.to_string(), num(e.re), num(e.im), real.to_string()]
        })
        .collect();
    let report = SpectrumReport {
        model,
        params,
        grid: grid.into(),
        filter: f,
        eigenvalues: eigen_rows(&s.eigenvalues, tau_abs, tau_rel),
        filtered_count: s.filtered_count,
        artifact_count: s.artifact_count,
    };
    out.write(&report, &header(&["index", "re", "im", "real"]), &rows)?;
    Ok(true)
}

#[derive(Debug, Serialize)]
struct IsospectralReport {
    pair: String,
    a: String,
    b: String,
    params: ModelValues,
    grid: GridInfo,
    relative: bool,
    a_eigenvalues: Vec<Eigenvalue>,
    b_eigenvalues: Vec<Eigenvalue>,
    report: MatchReport,
}

pub fn isospectral(a: IsospectralArgs) -> Result<bool, CliError> {
    let cfg = Layer::load(a.common.config.as_deref())?;
    let grid = cfg.grid(a.common.n, a.common.l, DEFAULT_GRID)?;
    let pair: String = cfg.get(a.pair, "pair", "jm".into())?;
    let params = ModelValues::resolve(&a.params, &cfg)?;
    let k = cfg.get(a.k, "k", 5)?;
    let tol = cfg.get(a.tol, "tol", 1e-3)?;
    let relative = cfg.get(a.relative.then_some(true), "relative", false)?;
    let (left, right, default_mode) = match pair.as_str() {
        "jm" => ("jm", "jm-avatar", MatchMode::Bijective),
        "njm" => ("njm", "njm-avatar", MatchMode::Bijective),
        "bg" => ("bg-avatar", "bg", MatchMode::Subset),
        "aho-qtilde" => ("aho", "qtilde", MatchMode::Subset),
        other => return Err(CliError::Config(format!("unknown pair {other:?}"))),
    };
    let mode = match cfg.get_opt(a.mode, "mode")?.as_deref() {
        None => default_mode,
        Some("bijective") => MatchMode::Bijective,
        Some("subset") => MatchMode::Subset,
        Some(other) => return Err(CliError::Config(format!("unknown mode {other:?}"))),
    };
    if !(tol > 0.0) {
        return Err(CliError::Config(format!("tolerance must be positive, got {tol}")));
    }
    let out = sink(&a.common, &cfg, Format::Json)?;

    let f = ArtifactFilter::default();
    let sa = spectra::eigensolve(&build_model(left, &params, grid)?, k, &f)?;
    let bop = build_model(right, &params, grid)?;
    let sb = match mode {
        MatchMode::Bijective => spectra::eigensolve(&bop, k, &f)?,
        MatchMode::Subset => available_spectrum(&bop, bop.dim(), &f)?,
    };
    let report = if relative {
        spectra::compare_spectra_relative(&sa, &sb, k, tol, mode)?
    } else {
        spectra::compare_spectra(&sa, &sb, k, tol, mode)?
    };

    let mut rows: Vec<Vec<String>> = report
        .pairs
        .iter()
        .map(|&(i, j, d)| {
            let (x, y) = (sa.eigenvalues[i], sb.eigenvalues[j]);
            vec!["pair".into(), i.to_string(), j.to_string(), num(x.re), num(x.im), num(y.re), num(y.im), num(d)]
        })
        .collect();
    for &j in &report.unmatched_b {
        let y = sb.eigenvalues[j];
        rows.push(vec![
            "surplus".into(),
            String::new(),
            j.to_string(),
            String::new(),
            String::new(),
            num(y.re),
            num(y.im),
            String::new(),
        ]);
    }
    let matched = report.matched;
    if !report.unmatched_b.is_empty() {
        eprintln!("niplab: {} surplus eigenvalue(s) of {right} inside the matched window", report.unmatched_b.len());
    }
    let doc = IsospectralReport {
        pair,
        a: left.into(),
        b: right.into(),
        params,
        grid: grid.into(),
        relative,
        a_eigenvalues: eigen_rows(&sa.eigenvalues, 1e-6, 1e-6),
        b_eigenvalues: eigen_rows(&sb.eigenvalues, 1e-6, 1e-6),
        report,
    };
    out.write(
        &doc,
        &header(&["kind", "a_index", "b_index", "a_re", "a_im", "b_re", "b_im", "deviation"]),
        &rows,
    )?;
    Ok(matched)
}

#[derive(Debug, Serialize)]
struct MetricReport {
    model: String,
    g: f64,
    theta: String,
    cap: f64,
    cutoff_pmax: f64,
    grid: GridInfo,
    subspace_dim: usize,
    residual: f64,
    tolerance: f64,
    positive: bool,
    min_eigenvalue_on_subspace: f64,
    dyson_metric_consistency: Option<f64>,
    pass: bool,
}

pub fn metric_check(a: MetricArgs) -> Result<bool, CliError> {
    let cfg = Layer::load(a.common.config.as_deref())?;
    let grid = cfg.grid(a.common.n, a.common.l, DEFAULT_GRID)?;
    let model: String = cfg.get(a.model, "model", "jm".into())?;
    let params = ModelValues::resolve(&a.params, &cfg)?;
    let theta_kind: String = cfg.get(a.theta, "theta", "closed-form".into())?;
    let cap = cfg.get(a.cap, "cap", metric::DEFAULT_METRIC_CAP)?;
    let m = cfg.get(a.m, "m", metric::DEFAULT_SUBSPACE_DIM)?;
    let tol = cfg.get(a.tol, "tol", 1e-6)?;
    let out = sink(&a.common, &cfg, Format::Json)?;

    let (h, g) = match model.as_str() {
        "jm" => {
            if !(params.lambda > 0.0) {
                return Err(CliError::Config(format!("lambda must be positive, got {}", params.lambda)));
            }
            (operators::build_jm_mapped(params.lambda, grid)?, params.lambda * params.lambda)
        }
        "njm" => {
            let g = params.g_value();
            (operators::build_njm_mapped(g, grid)?, g)
        }
        other => return Err(CliError::Config(format!("metric-check supports jm and njm, not {other:?}"))),
    };
    let (theta, consistency) = match theta_kind.as_str() {
        "closed-form" => {
            let th = metric::build_metric_for_g(g, grid, cap)?;
            let d = metric::build_njm_dyson_capped(g, grid, cap / 2.0)?;
            (th, Some(d.metric_consistency))
        }
        "identity" => (MetricOperator::identity(grid), None),
        other => return Err(CliError::Config(format!("unknown theta {other:?}"))),
    };
    let sub = metric::admissible_subspace(&h, m, &ArtifactFilter::default())?;
    let residual = metric::quasi_hermiticity_residual_on(&h, &theta, &sub)?;
    let min_eig = theta.min_eigenvalue_on(&sub)?;
    let positive = theta.positive && min_eig > 0.0;
    let pass = residual < tol && positive && consistency.map_or(true, |c| c < 1e-12);
    let report = MetricReport {
        model,
        g,
        theta: theta_kind,
        cap,
        cutoff_pmax: theta.cutoff_pmax,
        grid: grid.into(),
        subspace_dim: m,
        residual,
        tolerance: tol,
        positive,
        min_eigenvalue_on_subspace: min_eig,
        dyson_metric_consistency: consistency,
        pass,
    };
    let mut rows = vec![
        vec!["g".into(), num(g)],
        vec!["residual".into(), num(residual)],
        vec!["tolerance".into(), num(tol)],
        vec!["positive".into(), positive.to_string()],
        vec!["min_eigenvalue_on_subspace".into(), num(min_eig)],
        vec!["cutoff_pmax".into(), num(report.cutoff_pmax)],
    ];
    if let Some(c) = consistency {
        rows.push(vec!["dyson_metric_consistency".into(), num(c)]);
    }
    rows.push(vec!["pass".into(), pass.to_string()]);
    out.write(&report, &header(&["quantity", "value"]), &rows)?;
    Ok(pass)
}

#[derive(Debug, Serialize)]
struct EvolveReport {
    g: String,
    grid: GridInfo,
    space: String,
    basis: usize,
    initial: InitialState,
    dt: f64,
    drift: f64,
    drift_tolerance: f64,
    pass: bool,
    trace: nip::EvolutionTrace,
}

pub fn evolve(a: EvolveArgs) -> Result<bool, CliError> {
    let cfg = Layer::load(a.common.config.as_deref())?;
    let grid = cfg.grid(a.common.n, a.common.l, DEFAULT_GRID)?;
    let model: String = cfg.get(a.model, "model", "njm".into())?;
    if model != "njm" {
        return Err(CliError::Config(format!("evolve supports the njm model, not {model:?}")));
    }
    let g_text: String = cfg.get(a.g, "g", "sin:1,0.1,1".into())?;
    let g = cfg.schedule(Some(&g_text), "g", "")?;
    let t0 = cfg.get(a.t0, "t0", 0.0)?;
    let t1 = cfg.get(a.t1, "t1", 1.0)?;
    let dt = cfg.get(a.dt, "dt", 1e-3)?;
    let observe: Vec<String> = if a.observe.is_empty() { cfg.get(None, "observe", vec![])? } else { a.observe };
    let space: String = cfg.get(a.space, "space", "reduced".into())?;
    let basis = cfg.get(a.basis, "basis", nip::DEFAULT_REDUCED_DIM)?;
    let init: String = cfg.get(a.init, "init", "gaussian".into())?;
    let center = cfg.get_opt(a.center, "center")?;
    let width = cfg.get(a.width, "width", 0.5)?;
    let abort = cfg.get(a.abort_drift, "abort_drift", nip::DEFAULT_ABORT_DRIFT)?;
    let drift_tol = cfg.get(a.drift_tol, "drift_tol", 1e-6)?;
    let out = sink(&a.common, &cfg, Format::Csv)?;

    if !(t1 > t0) {
        return Err(CliError::Config(format!("t1 = {t1} must exceed t0 = {t0}")));
    }
    g.check_positive_on(t0, t1, "g(t)")?;
    let fam = NjmFamily::new(g, grid)?;
    let mut observables = vec![];
    for name in &observe {
        let fam_q = match name.as_str() {
            "H" => fam.hamiltonian_family(),
            "G" => fam.generator_family(),
            "X" => AffineFamily::constant(&operators::build_position(grid)),
            "P" => AffineFamily::constant(&operators::build_momentum(grid, MomentumScheme::Fourier)?),
            other => return Err(CliError::Config(format!("unknown observable {other:?}; use H, G, X or P"))),
        };
        observables.push((name.clone(), fam_q));
    }
    let initial = match init.as_str() {
        "gaussian" => match center {
            Some(c) => InitialState::Gaussian { center: c, width },
            None => match fam.default_initial(t0)? {
                InitialState::Gaussian { center, .. } => InitialState::Gaussian { center, width },
                other => other,
            },
        },
        "eigen" => InitialState::Eigenmodes([1.0, 0.6, 0.3]),
        other => return Err(CliError::Config(format!("unknown initial state {other:?}"))),
    };
    let pg = fam.reduced_basis(t0, basis)?;
    let s0 = fam.initial_state(t0, initial, &pg)?;
    let space_kind = match space.as_str() {
        "reduced" => EvolutionSpace::Reduced(pg),
        "full" => EvolutionSpace::Full,
        other => return Err(CliError::Config(format!("unknown space {other:?}"))),
    };
    let opts = EvolveOptions { space: space_kind, abort_drift: abort, observables };
    let trace = nip::evolve_pair(&fam.generator_family(), &s0, t1, dt, &opts)?;

    let n0 = trace.norms[0];
    let mut cols = vec!["t".to_string(), "norm_re".into(), "norm_im".into(), "drift".into()];
    for name in &observe {
        cols.push(format!("{name}_re"));
        cols.push(format!("{name}_im"));
    }
    let rows: Vec<Vec<String>> = (0..trace.times.len())
        .map(|i| {
            let nn = trace.norms[i];
            let mut r = vec![num(trace.times[i]), num(nn.re), num(nn.im), num((nn - n0).norm() / n0.norm())];
            for name in &observe {
                let v = trace.observables[name][i];
                r.push(num(v.re));
                r.push(num(v.im));
            }
            r
        })
        .collect();
    let pass = trace.drift < drift_tol;
    eprintln!("niplab: max drift {:.3e} (threshold {drift_tol:.1e})", trace.drift);
    let report = EvolveReport {
        g: g_text,
        grid: grid.into(),
        space,
        basis,
        initial,
        dt,
        drift: trace.drift,
        drift_tolerance: drift_tol,
        pass,
        trace,
    };
    out.write(&report, &cols, &rows)?;
    Ok(pass)
}

#[derive(Debug, Serialize)]
struct FdSection {
    sigma_zero: bool,
    report: CoriolisFdReport,
    pass: bool,
}

#[derive(Debug, Serialize)]
struct FtReport {
    grid: GridInfo,
    t: f64,
    alpha: String,
    beta: String,
    gamma: String,
    delta: String,
    kappas: (f64, f64, f64),
    coriolis_fd: FdSection,
    massless: fring_tenney::MasslessReport,
    c2: f64,
    constraints: fring_tenney::FTConstraintOutput,
    quasi_hermiticity_diagnostic: f64,
    pass: bool,
}

pub fn ft_verify(a: FtArgs) -> Result<bool, CliError> {
    let cfg = Layer::load(a.common.config.as_deref())?;
    let grid = cfg.grid(a.common.n, a.common.l, FT_GRID)?;
    let kappa_text: String = cfg.get(a.kappas, "kappas", "1,1,1".into())?;
    let kappas = parse_triple(&kappa_text).map_err(|e| CliError::Config(format!("--kappas: {e}")))?;
    let text = |flag: Option<String>, key: &str| cfg.get(flag, key, "poly:0".to_string());
    let (at, bt, gt, dtx) = (text(a.alpha, "alpha")?, text(a.beta, "beta")?, text(a.gamma, "gamma")?, text(a.delta, "delta")?);
    let h = cfg.get(a.fd, "fd", 1e-4)?;
    let t = cfg.get(a.t, "t", 0.5)?;
    let c2_flag = cfg.get_opt(a.c2, "c2")?;
    let out = sink(&a.common, &cfg, Format::Json)?;

    let parse = |s: &str, key: &str| s.parse::<Schedule>().map_err(|e| CliError::Config(format!("--{key} {s:?}: {e}")));
    let massless = fring_tenney::ft_massless_c2(kappas)?;
    let c2 = c2_flag.unwrap_or(massless.c2);
    let params = FTParams {
        alpha: parse(&at, "alpha")?,
        beta: parse(&bt, "beta")?,
        gamma: parse(&gt, "gamma")?,
        delta: parse(&dtx, "delta")?,
        c1: 0.0,
        c2,
        kappas,
    };

    let sigma = fring_tenney::ft_coriolis_analytic(&params, t, grid)?;
    let sigma_zero = linalg::fro(&sigma.entries) == 0.0;
    let report = fring_tenney::ft_coriolis_fd_convergence(&params, t, h, grid)?;
    let fd_pass = if sigma_zero {
        report.residuals[0] < 1e-10
    } else {
        report.second_order() || report.converges_to_analytic(FD_LIMIT_TOL)
    };
    if !fd_pass && report.ratios.iter().all(|r| (r - 1.0).abs() < 0.1) {
        eprintln!(
            "niplab: the Coriolis residual does not shrink with h; the grid cannot resolve Ω(t) here \
             (reduce |β|·p_max³ or |α|·L)"
        );
    }
    let sigma_t = Schedule::polynomial(&[kappas.0, kappas.1, kappas.2])?;
    let constraints = fring_tenney::ft_constraints(&sigma_t, c2, t)?;
    let ham = fring_tenney::ft_hamiltonian(&params, constraints.mass, constraints.lambda_sq, t, grid)?;
    let massless_pass = massless.max_mass < 1e-12;
    let pass = fd_pass && massless_pass;

    let mut rows = vec![vec!["sigma_zero".to_string(), sigma_zero.to_string()]];
    for (s, r) in report.steps.iter().zip(&report.residuals) {
        rows.push(vec![format!("fd_residual_h={}", num(*s)), num(*r)]);
    }
    for (i, r) in report.ratios.iter().enumerate() {
        rows.push(vec![format!("fd_ratio_{i}"), num(*r)]);
    }
    for (i, r) in report.increment_ratios.iter().enumerate() {
        rows.push(vec![format!("fd_increment_ratio_{i}"), num(*r)]);
    }
    rows.push(vec!["fd_extrapolated_residual".into(), num(report.extrapolated_residual)]);
    rows.extend([
        vec!["fd_pass".into(), fd_pass.to_string()],
        vec!["massless_c2".into(), num(massless.c2)],
        vec!["massless_max_mass".into(), num(massless.max_mass)],
        vec!["c2".into(), num(c2)],
        vec!["lambda_sq".into(), num(constraints.lambda_sq)],
        vec!["mass".into(), num(constraints.mass)],
        vec!["quasi_hermiticity_diagnostic".into(), num(ham.quasi_hermiticity_residual)],
        vec!["pass".into(), pass.to_string()],
    ]);
    let doc = FtReport {
        grid: grid.into(),
        t,
        alpha: at,
        beta: bt,
        gamma: gt,
        delta: dtx,
        kappas,
        coriolis_fd: FdSection { sigma_zero, report, pass: fd_pass },
        massless,
        c2,
        constraints,
        quasi_hermiticity_diagnostic: ham.quasi_hermiticity_residual,
        pass,
    };
    out.write(&doc, &header(&["quantity", "value"]), &rows)?;
    Ok(pass)
}
