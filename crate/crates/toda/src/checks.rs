//! End-to-end acceptance experiments. Each check returns a [`CheckOutcome`]
//! with one or more measured metrics against fixed tolerances; a library
//! error inside a check is reported as a failure, never propagated.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::darboux::{
    shift_identities, build_ops, compatible_pair, correspondence_drift, kernel_count, kernel_residuals,
};
use crate::dispersion::{free_omega, scan_dispersion, symmetric_grid, DispersionPoint, SolitonParams};
use crate::error::Result;
use crate::evolution::{
    evolve_ode, evolve_series, fit_decay, free_growth_exponent, gaussian_packet, ModeState, Representation,
};
use crate::jost::{jost_check, JostGrid};
use crate::lattice::LatticeWindow;
use crate::modes::{
    build_modes, gram_comparison, max_relative_difference, orth_relations, product_form_modes, project_secular,
    relative_secular_pairings, Mode,
};
use crate::profile::{kernel_checks, profile_run, EtaGrid, GridFn, SeparableData, YGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Self::Pass => "PASS",
            Self::Fail => "FAIL",
            Self::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// One measured quantity. `upper` metrics pass when `value < tolerance`,
/// lower-bound metrics when `value > tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub upper: bool,
}

impl Metric {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            upper: true,
        }
    }

    pub fn above(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            upper: false,
        }
    }

    pub fn passes(&self) -> bool {
        if self.upper {
            self.value < self.tolerance
        } else {
            self.value > self.tolerance
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub metrics: Vec<Metric>,
    /// Diagnostics that are reported but not asserted, such as edge masses.
    pub notes: Vec<String>,
    pub seconds: f64,
}

impl CheckOutcome {
    /// The metric that is closest to failing, or failing by the most.
    pub fn worst(&self) -> Option<&Metric> {
        let margin = |m: &Metric| {
            let (v, t) = (m.value.abs().max(1e-300), m.tolerance.abs().max(1e-300));
            if m.upper {
                (v / t).ln()
            } else {
                (t / v).ln()
            }
        };
        self.metrics.iter().max_by(|a, b| margin(a).total_cmp(&margin(b)))
    }

    /// One line for the acceptance log.
    pub fn summary(&self) -> String {
        let worst = self
            .worst()
            .map(|m| {
                format!(
                    "{} = {:.3e} ({} {:.1e})",
                    m.name,
                    m.value,
                    if m.upper { "<" } else { ">" },
                    m.tolerance
                )
            })
            .unwrap_or_else(|| self.notes.join("; "));
        format!(
            "[{:>2}] {:<12} {:<40} {}  [{:.1}s]",
            self.id,
            self.status.label(),
            self.name,
            worst,
            self.seconds
        )
    }
}

/// Identifiers and names of every check, in order.
pub const CHECKS: [(u8, &str); 14] = [
    (1, "dispersion identities"),
    (2, "profile constants vs derivatives"),
    (3, "free frequency imaginary part"),
    (4, "Jost and Lax residuals"),
    (5, "secular mode identities"),
    (6, "Gram expansions"),
    (7, "Darboux kernel structure"),
    (8, "Darboux mode identities"),
    (9, "free evolution oracle"),
    (10, "free growth bound"),
    (11, "secular mode decay"),
    (12, "projected data decay"),
    (13, "Darboux correspondence drift"),
    (14, "profile comparison"),
];

fn base_params() -> SolitonParams {
    SolitonParams::new(1.0, 0.5).expect("valid parameters")
}

type Body = fn() -> Result<(Vec<Metric>, Vec<String>)>;

fn body(id: u8) -> Option<Body> {
    let f: Body = match id {
        1 => dispersion_identities,
        2 => profile_constants,
        3 => omega_bounds,
        4 => jost_residuals,
        5 => mode_identities,
        6 => gram_expansions,
        7 => kernel_structure,
        8 => darboux_identities,
        9 => free_oracle,
        10 => free_growth,
        11 => secular_decay,
        12 => projected_decay,
        13 => correspondence,
        14 => profile_comparison,
        _ => return None,
    };
    Some(f)
}

/// Run one check by identifier; `None` for an unknown identifier.
pub fn run_check(id: u8) -> Option<CheckOutcome> {
    let (_, name) = *CHECKS.iter().find(|(i, _)| *i == id)?;
    let f = body(id)?;
    let start = Instant::now();
    let (status, metrics, notes) = match f() {
        Ok((metrics, notes)) => {
            let status = if metrics.iter().all(Metric::passes) {
                Status::Pass
            } else {
                Status::Fail
            };
            (status, metrics, notes)
        }
        Err(e) => (Status::Fail, Vec::new(), vec![format!("error: {e}")]),
    };
    Some(CheckOutcome {
        id,
        name,
        status,
        metrics,
        notes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS.iter().filter_map(|(id, _)| run_check(*id)).collect()
}

fn dispersion_identities() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let grid = symmetric_grid(2.0, 1e-3);
    let scan = scan_dispersion(&params, &grid);
    let mut threshold = 0.0f64;
    for (kappa, alpha) in [(0.5, 0.3), (1.0, 0.5), (2.0, 1.5)] {
        let p = SolitonParams::new(kappa, alpha)?;
        let modulus = DispersionPoint::new(p.eta_star(), kappa).beta_minus.norm();
        let target = (alpha + kappa).exp();
        threshold = threshold.max(((modulus - target) / target).abs());
    }
    Ok((
        vec![
            Metric::below("max |β₊β₋ - 1|", scan.max_product_error, 1e-12),
            Metric::below("max conjugate symmetry error", scan.max_conjugate_error, 1e-12),
            Metric::below("max rel error |β₋(η*)| vs e^(α+κ)", threshold, 1e-10),
        ],
        vec![format!("{} grid points, monotonicity claims hold: {}", scan.points, scan.all_claims_hold())],
    ))
}

fn profile_constants() -> Result<(Vec<Metric>, Vec<String>)> {
    let scan = scan_dispersion(&base_params(), &symmetric_grid(1.0, 1e-2));
    let slope = scan.delta_im_slope;
    let curv = scan.delta_re_curvature;
    Ok((
        vec![
            Metric::below("rel error dδ_I/dη(0) vs -λ1", slope.rel_error, 1e-5),
            Metric::below("rel error d²δ_R/dη²(0) vs 2λ2", curv.rel_error, 1e-5),
            Metric::above("order of slope estimate", slope.order, 1.9),
            Metric::above("order of curvature estimate", curv.order, 1.9),
        ],
        vec![format!("slope {:.12}, curvature {:.12}", slope.estimate, curv.estimate)],
    ))
}

fn omega_bounds() -> Result<(Vec<Metric>, Vec<String>)> {
    let count = 201;
    let mut violation = 0.0f64;
    let mut zero = 0.0f64;
    let mut symmetry = 0.0f64;
    for alpha in [0.3f64, 0.5, 1.0] {
        let bound = 2.0 * (0.5 * alpha).sinh();
        for i in 0..count {
            let xi = std::f64::consts::PI * i as f64 / (count - 1) as f64;
            for j in 0..count {
                let eta = -3.0 + 6.0 * j as f64 / (count - 1) as f64;
                let w = free_omega(xi, eta, alpha).omega;
                violation = violation.max(-w.im).max(w.im - bound);
                let mirrored = free_omega(-xi, eta, alpha).omega;
                if i > 0 && i + 1 < count {
                    // the cut of the principal root lies on ξ ∈ {0, π}
                    symmetry = symmetry.max((mirrored - w.conj()).norm());
                }
            }
        }
        for eta in [bound, -bound] {
            zero = zero.max(free_omega(0.0, eta, alpha).omega.norm());
        }
    }
    Ok((
        vec![
            Metric::below("bound violation on ξ ∈ [0, π]", violation, 1e-12),
            Metric::below("|ω(0, ±2 sinh(α/2))|", zero, 1e-12),
        ],
        vec![format!("ω(-ξ) = conj ω(ξ) to {symmetry:.1e}, so ξ < 0 mirrors the bound")],
    ))
}

fn jost_residuals() -> Result<(Vec<Metric>, Vec<String>)> {
    let r = jost_check(&base_params(), &[0.1, 0.2, 0.5], &JostGrid::default(), 1e-3)?;
    let orders: Vec<f64> = r.lax.iter().chain(&r.products).map(|x| x.order).collect();
    let min = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let max = orders.iter().copied().fold(0.0, f64::max);
    Ok((
        vec![
            Metric::below("max finite-difference residual", r.max_lax_residual(), 1e-5),
            Metric::above("min observed order", min, 1.8),
            Metric::below("max observed order", max, 2.2),
        ],
        vec![format!(
            "{} residual families; shift identities {:.1e}",
            orders.len(),
            r.updown.max()
        )],
    ))
}

fn mode_identities() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let mut product = 0.0f64;
    let mut orth_excess = 0.0f64;
    let mut tail = 0.0f64;
    for eta in [0.05, 0.1, 0.2] {
        let w = LatticeWindow::new(-30, 40)?;
        let b = build_modes(0.5, eta, &params, w)?;
        let s = b.signed()?;
        let prod = product_form_modes(0.5, eta, &params, w)?;
        for (g, pr) in [&s.g_plus, &s.g_minus, &s.g_plus_star, &s.g_minus_star].iter().zip(&prod) {
            product = product.max(max_relative_difference(&g.q, pr, 1));
        }
        let wide = build_modes(0.5, eta, &params, LatticeWindow::new(-60, 80)?)?;
        let orth = orth_relations(&wide, &params)?;
        orth_excess = orth_excess.max(orth.max_error() - orth.tail);
        tail = tail.max(orth.tail);
    }
    Ok((
        vec![
            Metric::below("difference vs product form", product, 1e-11),
            Metric::below("orthogonality error beyond tail", orth_excess, 1e-8),
        ],
        vec![format!("largest pairing tail {tail:.1e}")],
    ))
}

/// Least-squares `y ≈ c η²`; returns `c` and the RMS of `y/η² - c` over `|c|`.
fn quadratic_fit(etas: &[f64], values: &[f64]) -> (f64, f64) {
    let num: f64 = etas.iter().zip(values).map(|(e, v)| e * e * v).sum();
    let den: f64 = etas.iter().map(|e| e.powi(4)).sum();
    let c = num / den;
    let rms = (etas
        .iter()
        .zip(values)
        .map(|(e, v)| (v / (e * e) - c).powi(2))
        .sum::<f64>()
        / etas.len() as f64)
        .sqrt();
    (c, rms / c.abs())
}

fn gram_expansions() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let etas = [0.01, 0.02, 0.04];
    let w = LatticeWindow::new(-60, 80)?;
    let mut diag = Vec::new();
    let mut cross = Vec::new();
    let mut closed = 0.0f64;
    for &eta in &etas {
        let c = gram_comparison(&build_modes(0.0, eta, &params, w)?, &params);
        diag.push(c.g1_g1star + 4.0);
        cross.push(c.g1_g2star);
        closed = closed.max(((c.g1_g1star - c.diagonal_expected) / c.diagonal_expected).abs());
    }
    let (cd, rd) = quadratic_fit(&etas, &diag);
    let (cc, rc) = quadratic_fit(&etas, &cross);
    Ok((
        vec![
            Metric::below("gram(1,1) + 4 quadratic fit residual", rd, 0.1),
            Metric::below("⟨g¹, g²*⟩ quadratic fit residual", rc, 0.1),
        ],
        vec![format!(
            "coefficients {cd:.6} and {cc:.6}; diagonal vs closed form {closed:.1e}"
        )],
    ))
}

fn kernel_structure() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let w = LatticeWindow::new(-50, 70)?;
    let low = 0.2;
    let high = 2.5;
    let bundle = build_modes(0.0, low, &params, w)?;
    let ops = build_ops(0.0, low, &params, w);
    let res = kernel_residuals(&ops, &bundle)?;
    let counts = [
        kernel_count(&ops.c, params.alpha(), 1e-6),
        kernel_count(&ops.c_prime, params.alpha(), 1e-6),
    ];
    let high_ops = build_ops(0.0, high, &params, w);
    let high_counts = [
        kernel_count(&high_ops.c, params.alpha(), 1e-6),
        kernel_count(&high_ops.c_prime, params.alpha(), 1e-6),
    ];
    let miscount = |got: usize, want: usize| (got as f64 - want as f64).abs();
    Ok((
        vec![
            Metric::below("|C'g⁺| relative", res.c_prime_g_plus, 1e-9),
            Metric::below("|C* e^{-∂}g̃^{+,*}| relative", res.c_adjoint_cokernel, 1e-9),
            Metric::below("kernel count miscount, C at η=0.2", miscount(counts[0].genuine, 0), 0.5),
            Metric::below("kernel count miscount, C' at η=0.2", miscount(counts[1].genuine, 1), 0.5),
            Metric::below("kernel count miscount, C at η=2.5", miscount(high_counts[0].genuine, 0), 0.5),
            Metric::below("kernel count miscount, C' at η=2.5", miscount(high_counts[1].genuine, 0), 0.5),
        ],
        vec![format!(
            "η* = {:.4}; raw near-zero counts {} {} {} {} (edge-localised ones discarded)",
            params.eta_star(),
            counts[0].near_zero,
            counts[1].near_zero,
            high_counts[0].near_zero,
            high_counts[1].near_zero
        )],
    ))
}

fn darboux_identities() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let w = LatticeWindow::new(-50, 70)?;
    let base = shift_identities(0.0, 0.2, &params, w)?;
    let doubled = shift_identities(0.0, 0.2, &params, w.doubled())?;
    Ok((
        vec![
            Metric::below("max relative residual", base.max(), 1e-8),
            Metric::below(
                "doubled / base window mode residual",
                doubled.max_mode() / base.max_mode(),
                1.0,
            ),
        ],
        vec![format!("doubled window residual {:.1e}", doubled.max())],
    ))
}

fn free_oracle() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let alpha = params.alpha();
    let w = LatticeWindow::new(-100, 100)?;
    let worst = (0..10u64)
        .into_par_iter()
        .map(|seed| -> Result<f64> {
            let eta = ChaCha8Rng::seed_from_u64(1000 + seed).gen_range(0.0..1.5);
            let s = ModeState::new(eta, 0.0, Representation::QFree, gaussian_packet(w, seed));
            let ode = evolve_ode(&s, 10.0, 0.01, &params)?;
            let exact = crate::evolution::evolve_free_exact(&s, 10.0, alpha)?;
            let d = ode.mode.axpy((-1.0).into(), &exact.mode)?;
            Ok(d.weighted_norm(alpha) / exact.mode.weighted_norm(alpha))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok((
        vec![Metric::below("max relative ℓ²_α discrepancy at t=10", worst, 1e-6)],
        vec!["10 seeds, window [-100, 100], dt = 0.01".into()],
    ))
}

fn free_growth() -> Result<(Vec<Metric>, Vec<String>)> {
    let w = LatticeWindow::new(-60, 60)?;
    let mut metrics = Vec::new();
    let mut notes = Vec::new();
    for alpha in [0.3f64, 0.5, 1.0] {
        let bound = 2.0 * (0.5 * alpha).sinh();
        let mut worst = f64::NEG_INFINITY;
        for (j, eta) in [0.0, 0.1, 0.3, 1.0].into_iter().enumerate() {
            let s = ModeState::new(eta, 0.0, Representation::QFree, gaussian_packet(w, j as u64));
            let fit = free_growth_exponent(&s, alpha, 40.0, 40)?;
            worst = worst.max(fit.exponent);
        }
        metrics.push(Metric::below(format!("growth exponent - bound, α={alpha}"), worst - bound, 0.02));
        notes.push(format!("α={alpha}: exponent {worst:.4}, bound {bound:.4}"));
    }
    Ok((metrics, notes))
}

fn secular_decay() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let alpha = params.alpha();
    let w = LatticeWindow::new(-40, 100)?;
    let mut metrics = Vec::new();
    let mut notes = Vec::new();
    for eta in [0.1, 0.3] {
        let b = build_modes(0.0, eta, &params, w)?;
        let s = ModeState::new(eta, 0.0, Representation::QSoliton, b.signed()?.g_plus.clone());
        let mut samples = Vec::new();
        let mut tracking = 0.0f64;
        let series = evolve_series(&s, 40.0, 1.0, 0.02, &params, |st| {
            let tilde = st.mode.q.inv_backward_diff();
            let norm = (-alpha * params.speed() * st.t).exp() * tilde.weighted_norm(alpha);
            samples.push((st.t, norm));
            let exact = build_modes(st.t, eta, &params, w)?;
            let d = st.mode.q.sub(&exact.signed()?.g_plus.q)?;
            tracking = tracking.max(d.weighted_norm(alpha) / st.mode.q.weighted_norm(alpha));
            Ok(())
        })?;
        let fit = fit_decay(&samples, 5.0, 40.0)?;
        let target = params.dispersion(eta).delta.re;
        metrics.push(Metric::below(
            format!("|rate/δ_R - 1|, η={eta}"),
            (fit.rate() / target - 1.0).abs(),
            0.05,
        ));
        let edge = series.iter().map(|x| x.edge_fraction).fold(0.0, f64::max);
        notes.push(format!(
            "η={eta}: rate {:.6}, δ_R {target:.6}, fit rms {:.1e}, tracking {tracking:.1e}, edge {edge:.1e}",
            fit.rate(),
            fit.residual
        ));
    }
    Ok((metrics, notes))
}

fn projected_decay() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let w = LatticeWindow::new(-40, 99)?;
    let cases: Vec<(f64, u64)> = [0.05, 0.2, 0.4, 0.8]
        .iter()
        .flat_map(|&eta| (0..5u64).map(move |seed| (eta, seed)))
        .collect();
    let results = cases
        .par_iter()
        .map(|&(eta, seed)| -> Result<(f64, f64, f64)> {
            let b0 = build_modes(0.0, eta, &params, w)?;
            let projected = project_secular(&gaussian_packet(w, 100 + seed), &b0)?;
            let s = ModeState::new(eta, 0.0, Representation::QSoliton, projected);
            let mut pairing = 0.0f64;
            let series = evolve_series(&s, 40.0, 1.0, 0.005, &params, |st| {
                let b = build_modes(st.t, eta, &params, w)?;
                let [a, c] = relative_secular_pairings(&st.mode, &b, params.alpha())?;
                pairing = pairing.max(a).max(c);
                Ok(())
            })?;
            let samples: Vec<(f64, f64)> = series.iter().map(|x| (x.t, x.norm)).collect();
            let fit = fit_decay(&samples, 10.0, 40.0)?;
            Ok((fit.rate(), pairing, fit.residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_rate = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max_pairing = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let max_rms = results.iter().map(|r| r.2).fold(0.0, f64::max);
    let flagged = results.iter().filter(|r| r.2 >= 0.05).count();
    let per_eta: Vec<String> = [0.05, 0.2, 0.4, 0.8]
        .iter()
        .enumerate()
        .map(|(i, eta)| {
            let rates: Vec<String> = results[5 * i..5 * i + 5]
                .iter()
                .map(|r| format!("{:.3} (rms {:.3})", r.0, r.2))
                .collect();
            format!("η={eta}: b = {}", rates.join(" "))
        })
        .collect();
    Ok((
        vec![
            Metric::above("smallest fitted rate b", min_rate, 0.01),
            Metric::below("largest relative secular pairing", max_pairing, 1e-6),
        ],
        vec![
            per_eta.join("; "),
            format!(
                "largest fit rms {max_rms:.3}; {flagged} of {} fits above the 0.05 rms gate",
                results.len()
            ),
        ],
    ))
}

fn correspondence() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let w = LatticeWindow::new(-40, 90)?;
    let mut worst = 0.0f64;
    let mut min_order = f64::INFINITY;
    let mut edge = 0.0f64;
    for seed in 0..3u64 {
        let (sol, free) = compatible_pair(&gaussian_packet(w, 200 + seed), 0.0, 0.2, &params)?;
        let coarse = correspondence_drift(&sol, &free, 10.0, 1.0, 0.04, &params)?;
        let fine = correspondence_drift(&sol, &free, 10.0, 1.0, 0.02, &params)?;
        worst = worst.max(fine.max_residual);
        min_order = min_order.min((coarse.max_residual / fine.max_residual).log2());
        edge = edge.max(fine.max_edge);
    }
    Ok((
        vec![
            Metric::below("max residual over t ∈ [0, 10], dt=0.02", worst, 1e-5),
            Metric::above("observed order under dt halving", min_order, 3.5),
        ],
        vec![format!("largest edge-band residual {edge:.1e}")],
    ))
}

fn profile_comparison() -> Result<(Vec<Metric>, Vec<String>)> {
    let params = base_params();
    let horizon = 80.0;
    let times = [20.0, 40.0, 80.0];
    let w = LatticeWindow::new(-40, 41 + (params.speed() * horizon).ceil() as i64)?;
    let grid = EtaGrid::uniform(0.045, 4.0);
    let mut decreasing = 0usize;
    let mut notes = Vec::new();
    let mut edge = 0.0f64;
    for seed in 0..5u64 {
        let data = SeparableData::random(seed);
        let run = profile_run(&data, &params, w, &grid, &times, 0.02)?;
        if run.strictly_decreasing() {
            decreasing += 1;
        }
        edge = edge.max(run.edge_fraction);
        let errs: Vec<String> = run.errors.iter().map(|e| format!("{e:.4}")).collect();
        notes.push(format!("seed {seed}: {}", errs.join(" ")));
    }
    let profile = params.profile();
    let mut kernel = 0.0f64;
    let data = SeparableData::random(0);
    let ygrid = YGrid::for_horizon(&profile, horizon, data.support_radius(), 0.1);
    let f = ygrid.sample(|y| (-(y * y) / 8.0).exp());
    for &t in &times {
        kernel = kernel.max(kernel_checks(t, &profile, &f)?.max());
    }
    kernel = kernel.max(kernel_checks(20.0, &profile, &GridFn::point_mass(0.1))?.max());
    notes.push(format!("largest edge fraction {edge:.1e}"));
    Ok((
        vec![
            Metric::below("seeds without strict decrease", (5 - decreasing) as f64, 0.5),
            Metric::below("kernel mass, semigroup and path errors", kernel, 1e-8),
        ],
        notes,
    ))
}

/// Modes used by command-line experiments: a projected random packet or a
/// raw one.
pub fn initial_mode(
    eta: f64,
    seed: u64,
    params: &SolitonParams,
    window: LatticeWindow,
    project: bool,
) -> Result<Mode> {
    let packet = gaussian_packet(window, seed);
    if project {
        let bundle = build_modes(0.0, eta, params, window)?;
        project_secular(&packet, &bundle)
    } else {
        Ok(packet)
    }
}

/// Relative secular pairings of a state against the duals at its own time.
pub fn pairings_at(state: &ModeState, params: &SolitonParams) -> Result<[Complex64; 2]> {
    let b = build_modes(state.t, state.eta, params, state.window())?;
    let [a, c] = relative_secular_pairings(&state.mode, &b, params.alpha())?;
    Ok([a.into(), c.into()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_directions() {
        assert!(Metric::below("x", 1.0, 2.0).passes());
        assert!(!Metric::below("x", 3.0, 2.0).passes());
        assert!(Metric::above("x", 3.0, 2.0).passes());
    }

    #[test]
    fn quadratic_fit_is_exact_on_parabola() {
        let etas = [0.01, 0.02, 0.04];
        let values: Vec<f64> = etas.iter().map(|e| 3.0 * e * e).collect();
        let (c, r) = quadratic_fit(&etas, &values);
        assert!((c - 3.0).abs() < 1e-12 && r < 1e-12);
        let linear: Vec<f64> = etas.to_vec();
        assert!(quadratic_fit(&etas, &linear).1 > 0.1);
    }

    #[test]
    fn unknown_check_is_none() {
        assert!(run_check(0).is_none());
        assert!(run_check(15).is_none());
    }

    #[test]
    fn fast_checks_pass() {
        for id in [1, 2, 3, 6, 8] {
            let o = run_check(id).unwrap();
            assert_eq!(o.status, Status::Pass, "{}", o.summary());
        }
    }

    #[test]
    fn worst_metric_is_the_failing_one() {
        let o = CheckOutcome {
            id: 1,
            name: "x",
            status: Status::Fail,
            metrics: vec![Metric::below("ok", 1e-9, 1e-6), Metric::above("bad", 0.0, 0.01)],
            notes: Vec::new(),
            seconds: 0.0,
        };
        assert_eq!(o.worst().unwrap().name, "bad");
        assert!(o.summary().contains("FAIL"));
    }
}
