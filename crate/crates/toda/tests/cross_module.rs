use proptest::prelude::*;

use toda::darboux::{compatible_pair, correspondence_drift};
use toda::dispersion::SolitonParams;
use toda::evolution::{evolve_free_exact, evolve_ode, gaussian_packet, ModeState, Representation};
use toda::modes::{build_modes, project_secular, relative_secular_pairings};
use toda::profile::profile_multiplier;
use toda::LatticeWindow;

fn params() -> SolitonParams {
    SolitonParams::new(1.0, 0.5).unwrap()
}

fn window() -> LatticeWindow {
    LatticeWindow::new(-30, 50).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ode_matches_free_oracle(seed in 0u64..1000, eta in 0.0f64..1.5) {
        let p = params();
        let w = LatticeWindow::new(-80, 80).unwrap();
        let s = ModeState::new(eta, 0.0, Representation::QFree, gaussian_packet(w, seed));
        let ode = evolve_ode(&s, 3.0, 0.01, &p).unwrap();
        let exact = evolve_free_exact(&s, 3.0, p.alpha()).unwrap();
        let d = ode.mode.axpy((-1.0).into(), &exact.mode).unwrap();
        prop_assert!(d.weighted_norm(0.5) < 1e-7 * exact.mode.weighted_norm(0.5));
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..1000, eta in 0.05f64..1.2) {
        let p = params();
        let b = build_modes(0.0, eta, &p, window()).unwrap();
        let once = project_secular(&gaussian_packet(window(), seed), &b).unwrap();
        let twice = project_secular(&once, &b).unwrap();
        let [a, c] = relative_secular_pairings(&once, &b, p.alpha()).unwrap();
        prop_assert!(a < 1e-12 && c < 1e-12);
        let d = twice.axpy((-1.0).into(), &once).unwrap();
        prop_assert!(d.weighted_norm(0.5) < 1e-12 * once.weighted_norm(0.5).max(1.0));
    }
}

#[test]
fn exact_mode_is_an_evolution_orbit() {
    let p = params();
    let w = LatticeWindow::new(-40, 60).unwrap();
    let eta = 0.3;
    let g0 = build_modes(0.0, eta, &p, w).unwrap().signed().unwrap().g_plus.clone();
    let evolved = evolve_ode(&ModeState::new(eta, 0.0, Representation::QSoliton, g0), 2.0, 0.01, &p).unwrap();
    let exact = build_modes(2.0, eta, &p, w).unwrap();
    let d = evolved.mode.axpy((-1.0).into(), &exact.signed().unwrap().g_plus).unwrap();
    assert!(d.q.weighted_norm(0.5) < 1e-7 * evolved.mode.q.weighted_norm(0.5));
}

#[test]
fn projected_data_stays_projected() {
    let p = params();
    let w = window();
    let eta = 0.4;
    let b0 = build_modes(0.0, eta, &p, w).unwrap();
    let start = project_secular(&gaussian_packet(w, 3), &b0).unwrap();
    let later = evolve_ode(&ModeState::new(eta, 0.0, Representation::QSoliton, start), 3.0, 0.005, &p).unwrap();
    let b = build_modes(3.0, eta, &p, w).unwrap();
    let [a, c] = relative_secular_pairings(&later.mode, &b, p.alpha()).unwrap();
    assert!(a < 1e-8 && c < 1e-8, "{a:e} {c:e}");
}

#[test]
fn darboux_pair_drift_is_fourth_order() {
    let p = params();
    let w = LatticeWindow::new(-40, 80).unwrap();
    let (sol, free) = compatible_pair(&gaussian_packet(w, 11), 0.0, 0.3, &p).unwrap();
    let coarse = correspondence_drift(&sol, &free, 4.0, 1.0, 0.04, &p).unwrap();
    let fine = correspondence_drift(&sol, &free, 4.0, 1.0, 0.02, &p).unwrap();
    let order = (coarse.max_residual / fine.max_residual).log2();
    assert!(fine.max_residual < 1e-5, "{fine:?}");
    assert!(order > 3.5, "order {order}");
}

#[test]
fn replay_is_bitwise() {
    let p = params();
    let s = ModeState::new(0.7, 0.0, Representation::QSoliton, gaussian_packet(window(), 5));
    let a = evolve_ode(&s, 1.5, 0.01, &p).unwrap();
    let b = evolve_ode(&s, 1.5, 0.01, &p).unwrap();
    assert_eq!(a.mode, b.mode);
}

/// The profile multiplier is the small-η limit of the exact decay and phase
/// of the soliton branch.
#[test]
fn profile_multiplier_is_small_eta_limit_of_dispersion() {
    let p = params();
    let profile = p.profile();
    let t = 20.0;
    let error = |eta: f64| {
        let d = p.dispersion(eta).delta;
        let exact = (-d.re * t).exp() * (-d.im * t).sin() / (profile.lambda1 * eta);
        let m = profile_multiplier(eta, t, &profile);
        (m - exact).abs() / t
    };
    let (coarse, fine) = (error(0.05), error(0.025));
    assert!(fine < 1e-3, "{fine:e}");
    assert!(coarse / fine > 3.5, "{coarse:e} {fine:e}");
}
