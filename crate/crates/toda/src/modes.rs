//! Secular modes of the linearised equation around the soliton, their real
//! combinations, the Gram matrix and the projection that removes them.
//!
//! Everything is stored at `y = 0`: the factor `e^{iyη}` is carried
//! analytically, so each transverse frequency is an independent lattice problem.

use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::{DispersionPoint, SolitonParams};
use crate::error::{Result, TodaError};
use crate::jost::{phi, phi0, phi0_star, phi_at_pole, phi_star, tau};
use crate::lattice::{ComplexSeq, LatticeWindow};
use crate::soliton::{comoving, log_cosh};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// A lattice sequence together with its time derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub q: ComplexSeq,
    pub p: ComplexSeq,
}

impl Mode {
    pub fn zeros(window: LatticeWindow) -> Self {
        Self {
            q: ComplexSeq::zeros(window),
            p: ComplexSeq::zeros(window),
        }
    }

    pub fn window(&self) -> LatticeWindow {
        self.q.window()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            q: self.q.scale(factor),
            p: self.p.scale(factor),
        }
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: Complex64, other: &Self) -> Result<Self> {
        Ok(Self {
            q: self.q.axpy(factor, &other.q)?,
            p: self.p.axpy(factor, &other.p)?,
        })
    }

    pub fn backward_diff(&self) -> Self {
        Self {
            q: self.q.backward_diff(),
            p: self.p.backward_diff(),
        }
    }

    pub fn forward_diff(&self) -> Self {
        Self {
            q: self.q.forward_diff(),
            p: self.p.forward_diff(),
        }
    }

    /// Sum of the `ℓ²_α` norms of both components.
    pub fn weighted_norm(&self, alpha: f64) -> f64 {
        self.q.weighted_norm(alpha) + self.p.weighted_norm(alpha)
    }

    pub fn max_imag(&self) -> f64 {
        self.q
            .values()
            .iter()
            .chain(self.p.values())
            .fold(0.0, |m, v| m.max(v.im.abs()))
    }
}

/// `⟨q, ∂ₜg*⟩ - ⟨∂ₜq, g*⟩`, the pairing between a solution and a dual solution.
pub fn bold_pairing(state: &Mode, dual: &Mode) -> Result<Complex64> {
    Ok(state.q.pairing(&dual.p)? - state.p.pairing(&dual.q)?)
}

/// The four signed secular modes `g^±`, `g^{±,*}` and their antecedents.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedModes {
    pub tg_plus: Mode,
    pub tg_minus: Mode,
    pub tg_plus_star: Mode,
    pub tg_minus_star: Mode,
    pub g_plus: Mode,
    pub g_minus: Mode,
    pub g_plus_star: Mode,
    pub g_minus_star: Mode,
}

/// Secular modes at one `(t, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBundle {
    pub t: f64,
    pub eta: f64,
    /// Absent at `η = 0`, where `g^-` has a `1/η` singularity.
    pub signed: Option<SignedModes>,
    pub tg1: Mode,
    pub tg2: Mode,
    pub tg1_star: Mode,
    pub tg2_star: Mode,
    pub g1: Mode,
    pub g2: Mode,
    pub g1_star: Mode,
    pub g2_star: Mode,
    /// `gram[j][i] = P(g^i, g^{j,*})`.
    pub gram: [[Complex64; 2]; 2],
}

/// `coef · e^{σ(tδ(ζ) + γ(ζ)z)} sech κz` and its time derivative.
fn signed_tilde(
    window: LatticeWindow,
    t: f64,
    disp: &DispersionPoint,
    sigma: f64,
    coef: Complex64,
    params: &SolitonParams,
) -> Mode {
    let k = params.kappa();
    let kc = k * params.speed();
    let mut q = Vec::with_capacity(window.len());
    let mut p = Vec::with_capacity(window.len());
    for n in window.sites() {
        let z = comoving(n, t, params);
        let exponent = sigma * (disp.delta * t + disp.gamma * z) - log_cosh(k * z);
        let v = coef * exponent.exp();
        q.push(v);
        p.push(v * (-sigma * disp.mu + kc * (k * z).tanh()));
    }
    Mode {
        q: ComplexSeq::from_values(window, q).expect("length matches window"),
        p: ComplexSeq::from_values(window, p).expect("length matches window"),
    }
}

fn signed_modes(t: f64, eta: f64, params: &SolitonParams, window: LatticeWindow) -> SignedModes {
    let sh = params.sinh_k();
    let plus = params.dispersion(-eta);
    let minus = params.dispersion(eta);
    let half = Complex64::new(0.5, 0.0);
    let scaled = -sh / (2.0 * I * eta);
    let tg_plus = signed_tilde(window, t, &plus, -1.0, half, params);
    let tg_plus_star = signed_tilde(window, t, &plus, 1.0, half, params);
    let tg_minus = signed_tilde(window, t, &minus, -1.0, scaled, params);
    let tg_minus_star = signed_tilde(window, t, &minus, 1.0, scaled, params);
    SignedModes {
        g_plus: tg_plus.backward_diff(),
        g_minus: tg_minus.backward_diff(),
        g_plus_star: tg_plus_star.backward_diff(),
        g_minus_star: tg_minus_star.backward_diff(),
        tg_plus,
        tg_minus,
        tg_plus_star,
        tg_minus_star,
    }
}

/// Real antecedents `g̃^1, g̃^2, g̃^{1,*}, g̃^{2,*}` with `sin θ_I/η` and
/// `Im μ/η` replaced by their limits at `η = 0`.
fn real_tildes(t: f64, eta: f64, params: &SolitonParams, window: LatticeWindow) -> [Mode; 4] {
    let k = params.kappa();
    let kc = k * params.speed();
    let d = params.dispersion(eta);
    let lambda1 = params.profile().lambda1;
    let csch = 1.0 / params.sinh_k();
    let mu_r = d.mu.re;
    let mu_i_over_eta = if eta == 0.0 {
        params.cosh_k() * csch
    } else {
        d.mu.im / eta
    };
    let mut out: [(Vec<Complex64>, Vec<Complex64>); 4] = Default::default();
    for n in window.sites() {
        let z = comoving(n, t, params);
        let theta_r = t * d.delta.re + d.gamma.re * z;
        let theta_i = t * d.delta.im + d.gamma.im * z;
        let (sin, cos) = theta_i.sin_cos();
        let sin_over_eta = if eta == 0.0 {
            -lambda1 * t + z * csch
        } else {
            sin / eta
        };
        let slope = kc * (k * z).tanh();
        let decaying = (-theta_r - log_cosh(k * z)).exp();
        let growing = (theta_r - log_cosh(k * z)).exp();
        let entries = [
            (
                decaying * cos,
                decaying * ((mu_r + slope) * cos + d.mu.im * sin),
            ),
            (
                decaying * sin_over_eta,
                decaying * ((mu_r + slope) * sin_over_eta - mu_i_over_eta * cos),
            ),
            (
                -growing * sin_over_eta,
                -growing * ((-mu_r + slope) * sin_over_eta - mu_i_over_eta * cos),
            ),
            (
                growing * cos,
                growing * ((-mu_r + slope) * cos + d.mu.im * sin),
            ),
        ];
        for (slot, (q, p)) in out.iter_mut().zip(entries) {
            slot.0.push(q.into());
            slot.1.push(p.into());
        }
    }
    out.map(|(q, p)| Mode {
        q: ComplexSeq::from_values(window, q).expect("length matches window"),
        p: ComplexSeq::from_values(window, p).expect("length matches window"),
    })
}

fn assemble(t: f64, eta: f64, params: &SolitonParams, window: LatticeWindow, signed: Option<SignedModes>) -> Result<ModeBundle> {
    let [tg1, tg2, tg1_star, tg2_star] = real_tildes(t, eta, params, window);
    let (g1, g2, g1_star, g2_star) = (
        tg1.backward_diff(),
        tg2.backward_diff(),
        tg1_star.backward_diff(),
        tg2_star.backward_diff(),
    );
    let gram = [
        [bold_pairing(&g1, &g1_star)?, bold_pairing(&g2, &g1_star)?],
        [bold_pairing(&g1, &g2_star)?, bold_pairing(&g2, &g2_star)?],
    ];
    Ok(ModeBundle {
        t,
        eta,
        signed,
        tg1,
        tg2,
        tg1_star,
        tg2_star,
        g1,
        g2,
        g1_star,
        g2_star,
        gram,
    })
}

/// Secular modes at `(t, η)` for `η ≠ 0`.
pub fn build_modes(t: f64, eta: f64, params: &SolitonParams, window: LatticeWindow) -> Result<ModeBundle> {
    if eta == 0.0 {
        return Err(TodaError::EtaZero);
    }
    let signed = signed_modes(t, eta, params, window);
    assemble(t, eta, params, window, Some(signed))
}

/// Secular modes at `η = 0` through the analytic limits of the real combinations.
pub fn eta_zero_modes(t: f64, params: &SolitonParams, window: LatticeWindow) -> Result<ModeBundle> {
    assemble(t, 0.0, params, window, None)
}

impl ModeBundle {
    pub fn signed(&self) -> Result<&SignedModes> {
        self.signed.as_ref().ok_or(TodaError::EtaZero)
    }

    pub fn gram_det(&self) -> Complex64 {
        self.gram[0][0] * self.gram[1][1] - self.gram[0][1] * self.gram[1][0]
    }

    /// Ratio of the largest to the smallest singular value of the Gram matrix.
    pub fn gram_condition(&self) -> f64 {
        let m = nalgebra::Matrix2::new(self.gram[0][0], self.gram[0][1], self.gram[1][0], self.gram[1][1]);
        let sv = m.singular_values();
        sv.max() / sv.min()
    }
}

/// Secular modes in product form built directly from the Jost functions at
/// `s = x = t/2`: `[g^+, g^-, g^{+,*}, g^{-,*}]`.
pub fn product_form_modes(
    t: f64,
    eta: f64,
    params: &SolitonParams,
    window: LatticeWindow,
) -> Result<[ComplexSeq; 4]> {
    let (s, x) = (0.5 * t, 0.5 * t);
    let plus = params.dispersion(-eta);
    let minus = params.dispersion(eta);
    let pa = |m: i64| phi_at_pole(m, s, x, params);
    let build = |f: &dyn Fn(i64) -> Result<Complex64>| -> Result<ComplexSeq> {
        let values = window.sites().map(f).collect::<Result<Vec<_>>>()?;
        ComplexSeq::from_values(window, values)
    };
    Ok([
        build(&|n| Ok(phi(plus.beta_plus, n - 1, s, x, params)? / tau(n, s, x, params)))?,
        build(&|n| Ok(pa(n - 1) * phi_star(minus.beta_minus, n - 1, s, x, params)?))?,
        build(&|n| Ok(phi(plus.beta_minus, n - 1, s, x, params)? / tau(n, s, x, params)))?,
        build(&|n| Ok(pa(n - 1) * phi_star(minus.beta_plus, n - 1, s, x, params)?))?,
    ])
}

/// Antecedents in product form: `[g̃^+, g̃^-, g̃^{+,*}, g̃^{-,*}]`.
pub fn product_form_tildes(
    t: f64,
    eta: f64,
    params: &SolitonParams,
    window: LatticeWindow,
) -> Result<[ComplexSeq; 4]> {
    if eta == 0.0 {
        return Err(TodaError::EtaZero);
    }
    let (s, x) = (0.5 * t, 0.5 * t);
    let plus = params.dispersion(-eta);
    let minus = params.dispersion(eta);
    let inv = 1.0 / (2.0 * I * eta);
    let pa = |m: i64| phi_at_pole(m, s, x, params);
    let build = |f: &dyn Fn(i64) -> Result<Complex64>| -> Result<ComplexSeq> {
        let values = window.sites().map(f).collect::<Result<Vec<_>>>()?;
        ComplexSeq::from_values(window, values)
    };
    Ok([
        build(&|n| Ok(phi0(plus.beta_plus, n, s, x)? / tau(n, s, x, params)))?,
        build(&|n| Ok(inv * pa(n) * phi0_star(minus.beta_minus, n, s, x)?))?,
        build(&|n| Ok(phi0(plus.beta_minus, n, s, x)? / tau(n, s, x, params)))?,
        build(&|n| Ok(inv * pa(n) * phi0_star(minus.beta_plus, n, s, x)?))?,
    ])
}

/// Largest per-site relative difference, skipping the first `skip` sites.
pub fn max_relative_difference(a: &ComplexSeq, b: &ComplexSeq, skip: usize) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .skip(skip)
        .map(|(x, y)| {
            let scale = x.norm().max(y.norm());
            if scale == 0.0 {
                0.0
            } else {
                (x - y).norm() / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Norms of a sequence in `ℓ²_α` with a truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedNormReport {
    pub l2_alpha: f64,
    /// Mode version of the `ℓ²_α H¹` norm: `⟨η⟩ ‖f‖_{ℓ²_α}`.
    pub l2_alpha_h1: f64,
    /// Geometric extrapolation of the weighted mass beyond both edges.
    pub tail_bound: f64,
}

/// Weighted mass beyond one edge, extrapolated from the last five sites
/// (ordered towards the edge). Infinite when the sequence is not decaying.
fn edge_tail(logs: &[f64]) -> f64 {
    let m = logs.len();
    if m < 5 {
        return f64::INFINITY;
    }
    let last = &logs[m - 5..];
    if last.iter().any(|l| !l.is_finite()) {
        // exact zeros at the edge: nothing to extrapolate
        return 0.0;
    }
    let log_ratio = (last[4] - last[0]) / 4.0;
    if log_ratio >= 0.0 {
        return f64::INFINITY;
    }
    let r = log_ratio.exp();
    last[4].exp() * r / (1.0 - r * r).sqrt()
}

pub fn weighted_norm(f: &ComplexSeq, alpha: f64, eta: f64) -> WeightedNormReport {
    let l2 = f.weighted_norm(alpha);
    let logs: Vec<f64> = f
        .iter()
        .map(|(n, v)| alpha * n as f64 + v.norm().ln())
        .collect();
    let right = edge_tail(&logs);
    let left_logs: Vec<f64> = logs.iter().rev().copied().collect();
    let left = edge_tail(&left_logs);
    WeightedNormReport {
        l2_alpha: l2,
        l2_alpha_h1: (1.0 + eta * eta).sqrt() * l2,
        tail_bound: (right * right + left * left).sqrt(),
    }
}

/// Remove the `g^1, g^2` component of `state` with the dual pairings.
pub fn project_secular(state: &Mode, bundle: &ModeBundle) -> Result<Mode> {
    let det = bundle.gram_det();
    if det.norm() < 1e-8 {
        return Err(TodaError::DegenerateGram(det.norm()));
    }
    let b1 = bold_pairing(state, &bundle.g1_star)?;
    let b2 = bold_pairing(state, &bundle.g2_star)?;
    let g = &bundle.gram;
    let a1 = (g[1][1] * b1 - g[0][1] * b2) / det;
    let a2 = (g[0][0] * b2 - g[1][0] * b1) / det;
    state.axpy(-a1, &bundle.g1)?.axpy(-a2, &bundle.g2)
}

/// The two pairings of a state in the `R'` representation against
/// `g̃^{+,*}` and `g̃^{-,*}`, whose vanishing removes the secular terms.
pub fn secular_condition(state_r: &Mode, bundle: &ModeBundle) -> Result<[Complex64; 2]> {
    let signed = bundle.signed()?;
    Ok([
        bold_pairing(state_r, &signed.tg_plus_star)?,
        bold_pairing(state_r, &signed.tg_minus_star)?,
    ])
}

/// Secular pairings of a `Q'`-representation state against `g^{±,*}`,
/// divided by `‖(q, p)‖_α ‖(g*, ∂ₜg*)‖_{-α}`.
pub fn relative_secular_pairings(state: &Mode, bundle: &ModeBundle, alpha: f64) -> Result<[f64; 2]> {
    let signed = bundle.signed()?;
    let scale = state.weighted_norm(alpha);
    let rel = |dual: &Mode| -> Result<f64> {
        let denom = scale * dual.weighted_norm(-alpha);
        let p = bold_pairing(state, dual)?.norm();
        Ok(if denom == 0.0 { 0.0 } else { p / denom })
    };
    Ok([rel(&signed.g_plus_star)?, rel(&signed.g_minus_star)?])
}

/// Pairings of the signed modes with the edge-band contribution as a
/// truncation estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrthReport {
    pub plus_plus: Complex64,
    pub minus_minus: Complex64,
    pub minus_plus: Complex64,
    pub plus_minus: Complex64,
    pub expected_minus_plus: Complex64,
    pub expected_plus_minus: Complex64,
    pub tail: f64,
}

impl OrthReport {
    pub fn max_error(&self) -> f64 {
        [
            self.plus_plus.norm(),
            self.minus_minus.norm(),
            (self.minus_plus - self.expected_minus_plus).norm(),
            (self.plus_minus - self.expected_plus_minus).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn edge_pairing_mass(state: &Mode, dual: &Mode, band: usize) -> f64 {
    let len = state.q.len();
    (0..len)
        .filter(|&i| i < band || i + band >= len)
        .map(|i| {
            (state.q.values()[i] * dual.p.values()[i].conj()).norm()
                + (state.p.values()[i] * dual.q.values()[i].conj()).norm()
        })
        .sum()
}

pub fn orth_relations(bundle: &ModeBundle, params: &SolitonParams) -> Result<OrthReport> {
    let s = bundle.signed()?;
    let eta = bundle.eta;
    let pairs = [
        (&s.g_plus, &s.g_plus_star),
        (&s.g_minus, &s.g_minus_star),
        (&s.g_minus, &s.g_plus_star),
        (&s.g_plus, &s.g_minus_star),
    ];
    let tail = pairs
        .iter()
        .map(|(a, b)| edge_pairing_mass(a, b, 5))
        .fold(0.0, f64::max);
    Ok(OrthReport {
        plus_plus: bold_pairing(&s.g_plus, &s.g_plus_star)?,
        minus_minus: bold_pairing(&s.g_minus, &s.g_minus_star)?,
        minus_plus: bold_pairing(&s.g_minus, &s.g_plus_star)?,
        plus_minus: bold_pairing(&s.g_plus, &s.g_minus_star)?,
        expected_minus_plus: -2.0 * params.dispersion(eta).mu,
        expected_plus_minus: -2.0 * params.dispersion(-eta).mu,
        tail,
    })
}

/// The four Gram entries next to their closed-form expansions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GramComparison {
    pub eta: f64,
    pub g1_g1star: f64,
    pub g2_g2star: f64,
    pub g1_g2star: f64,
    pub g2_g1star: f64,
    /// `-4 csch κ Re μ`.
    pub diagonal_expected: f64,
    /// `-4 η csch κ Im μ`.
    pub g1_g2star_expected: f64,
    /// `4 Im μ / (η sinh κ)`.
    pub g2_g1star_expected: f64,
}

pub fn gram_comparison(bundle: &ModeBundle, params: &SolitonParams) -> GramComparison {
    let d = params.dispersion(bundle.eta);
    let sh = params.sinh_k();
    let eta = bundle.eta;
    let g2_g1star_expected = if eta == 0.0 {
        4.0 * params.cosh_k() / (sh * sh)
    } else {
        4.0 * d.mu.im / (eta * sh)
    };
    GramComparison {
        eta,
        g1_g1star: bundle.gram[0][0].re,
        g2_g2star: bundle.gram[1][1].re,
        g1_g2star: bundle.gram[1][0].re,
        g2_g1star: bundle.gram[0][1].re,
        diagonal_expected: -4.0 * d.mu.re / sh,
        g1_g2star_expected: -4.0 * eta * d.mu.im / sh,
        g2_g1star_expected,
    }
}
