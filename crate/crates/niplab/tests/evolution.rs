use niplab::fring_tenney::{ft_coriolis_analytic, ft_coriolis_fd_residual, ft_hamiltonian, FTParams};
use niplab::linalg;
use niplab::metric;
use niplab::nip::*;
use niplab::operators::GridSpec;
use niplab::NipError;

fn grid(n: usize, l: f64) -> GridSpec {
    GridSpec::new(n, l).unwrap()
}

fn run(fam: &NjmFamily, init: Option<InitialState>, dt: f64) -> EvolutionTrace {
    let pg = fam.reduced_basis(0.0, DEFAULT_REDUCED_DIM).unwrap();
    let init = init.unwrap_or_else(|| fam.default_initial(0.0).unwrap());
    let s0 = fam.initial_state(0.0, init, &pg).unwrap();
    let opts = EvolveOptions {
        space: EvolutionSpace::Reduced(pg),
        observables: vec![("H".into(), fam.hamiltonian_family())],
        ..EvolveOptions::default()
    };
    evolve_pair(&fam.generator_family(), &s0, 1.0, dt, &opts).unwrap()
}

#[test]
fn constant_coupling_is_stationary_evolution() {
    let fam = NjmFamily::new(Schedule::constant(1.0), grid(256, 8.0)).unwrap();
    assert_eq!(linalg::fro(&fam.coriolis(0.4).unwrap().entries), 0.0);
    let tr = run(&fam, None, 1e-3);
    assert!(tr.drift < 1e-8, "{}", tr.drift);
    let e = &tr.observables["H"];
    assert!((e[0] - e[e.len() - 1]).norm() < 1e-6 * e[0].norm(), "{} {}", e[0], e[e.len() - 1]);
}

#[test]
fn eigenmode_initial_state_conserves_the_pairing() {
    let fam = NjmFamily::new("sin:1,0.1,1".parse().unwrap(), grid(256, 8.0)).unwrap();
    let tr = run(&fam, Some(InitialState::Eigenmodes([1.0, 0.6, 0.3])), 1e-3);
    assert!(tr.drift < 1e-9, "{}", tr.drift);
    assert!((tr.norms[0].re - 1.0).abs() < 1e-12);
    assert_eq!(tr.times.len(), tr.norms.len());
    assert_eq!(tr.times.len(), tr.observables["H"].len());
}

#[test]
fn ketket_tracks_the_evolving_metric() {
    // ketket and Θ(t)·ket start equal and obey the same equation
    let fam = NjmFamily::new("sin:1,0.1,1".parse().unwrap(), grid(512, 10.0)).unwrap();
    let tr = run(&fam, None, 1e-3);
    let s = tr.final_state.unwrap();
    let theta = fam.metric(1.0).unwrap();
    let tk = linalg::column(&theta.apply_columns(&linalg::from_columns(&[s.ket.clone()])), 0);
    let pairing_via_metric = linalg::dot(&tk, &s.ket);
    let rel = (pairing_via_metric - s.pairing()).norm() / s.pairing().norm();
    assert!(rel < 1e-4, "{rel}");
}

#[test]
fn dt_halving_shows_fourth_order() {
    let fam = NjmFamily::new("sin:1,0.1,1".parse().unwrap(), grid(512, 10.0)).unwrap();
    let a = run(&fam, None, 1e-3);
    let b = run(&fam, None, 5e-4);
    let ratio = a.drift / b.drift;
    assert!((12.0..=40.0).contains(&ratio), "{ratio}");
    let (ea, eb) = (a.observables["H"].last().unwrap(), b.observables["H"].last().unwrap());
    assert!((ea - eb).norm() < 1e-6 * ea.norm(), "{ea} {eb}");
}

#[test]
fn dyson_reconstruction_on_the_linear_schedule() {
    let fam = NjmFamily::new("poly:1,0.5".parse().unwrap(), grid(256, 10.0)).unwrap();
    let r = fam.reconstruct_dyson(0.0, 1.0, 1e-3).unwrap();
    assert!(r.relative_error < 1e-6, "{}", r.relative_error);
    assert!(r.dyson.metric_consistency.is_finite());
}

#[test]
fn residual_checks_on_the_linear_schedule() {
    let fam = NjmFamily::new("poly:1,0.5".parse().unwrap(), grid(256, 10.0)).unwrap();
    let m = fam.metric_evolution_check(0.3, 1e-4, metric::DEFAULT_SUBSPACE_DIM).unwrap();
    assert!(m.coriolis_form < 1e-4 && m.generator_form < 1e-4, "{m:?}");
    let w = fam.heisenberg_window_check(0.3, 1e-4, 10.0).unwrap();
    assert!(w.position < 1e-4 && w.hamiltonian.coriolis_form < 1e-4, "{w:?}");
    assert!(w.hamiltonian.pair_gap < 1e-6);
}

#[test]
fn coriolis_fd_order() {
    let g: Schedule = "sin:1,0.1,1".parse().unwrap();
    let gr = grid(256, 10.0);
    let r1 = coriolis_fd_residual(&g, 0.5, 1e-3, gr).unwrap();
    let r2 = coriolis_fd_residual(&g, 0.5, 5e-4, gr).unwrap();
    assert!((3.5..=4.5).contains(&(r1 / r2)), "{}", r1 / r2);
}

#[test]
fn unstable_step_reports_last_stable_time() {
    let fam = NjmFamily::new("sin:1,0.1,1".parse().unwrap(), grid(256, 10.0)).unwrap();
    let s0 = fam.initial_state(0.0, InitialState::Eigenmodes([1.0, 0.0, 0.0]), &fam.reduced_basis(0.0, 20).unwrap()).unwrap();
    // the full grid carries eigenvalues far outside the RK4 stability region
    match evolve_pair(&fam.generator_family(), &s0, 1.0, 1e-2, &EvolveOptions::default()) {
        Err(NipError::Instability { step, last_stable_t, .. }) => {
            assert!(step >= 1);
            assert!((last_stable_t - (step - 1) as f64 * 1e-2).abs() < 1e-12);
        }
        other => panic!("expected instability, got {:?}", other.map(|t| t.drift)),
    }
}

#[test]
fn fring_tenney_constant_schedules() {
    let gr = grid(64, 10.0);
    let p = FTParams {
        alpha: Schedule::constant(0.1),
        beta: Schedule::constant(0.01),
        gamma: Schedule::constant(0.2),
        delta: Schedule::constant(0.3),
        ..FTParams::zero()
    };
    assert_eq!(linalg::fro(&ft_coriolis_analytic(&p, 0.5, gr).unwrap().entries), 0.0);
    assert!(ft_coriolis_fd_residual(&p, 0.5, 1e-3, gr).unwrap() < 1e-10);
    let h = ft_hamiltonian(&p, 0.0, 1.0, 0.5, gr).unwrap();
    assert_eq!(h.operator.entries, h.generator.entries);
}
