//! The line-soliton background and the lattice fields derived from it.
//!
//! The full tau function carries a sign `(-1)^n` and a factor `2e^{-y cosh κ}`.
//! Samples store only the reduced `cosh κz_n`; the prefactors are restored
//! by [`log_tau`] and [`tau_ratio`] where a formula needs them.

use serde::Serialize;

use crate::dispersion::SolitonParams;
use crate::lattice::LatticeWindow;

/// `ln cosh x` without overflow.
pub fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `sech x` without overflow.
pub fn sech(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

/// Comoving coordinate `z_n(t) = n - t sinh κ/κ`, with one rounding.
pub fn comoving(n: i64, t: f64, params: &SolitonParams) -> f64 {
    (-params.speed()).mul_add(t, n as f64)
}

/// All background fields at one site and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BackgroundSample {
    pub n: i64,
    pub t: f64,
    pub z: f64,
    /// Reduced tau, `cosh κz_n`.
    pub tau: f64,
    pub v_field: f64,
    /// `ln(1 + V_n)`.
    pub r: f64,
    /// `ln cosh κz_n - ln cosh κz_{n-1}`.
    pub q: f64,
    pub u: f64,
    pub v: f64,
}

pub fn background(n: i64, t: f64, params: &SolitonParams) -> BackgroundSample {
    let k = params.kappa();
    let (sh, ch) = (params.sinh_k(), params.cosh_k());
    let z = comoving(n, t, params);
    let zm = comoving(n - 1, t, params);
    let s = sh * sech(k * z);
    let v_field = s * s;
    BackgroundSample {
        n,
        t,
        z,
        tau: (k * z).cosh(),
        v_field,
        r: v_field.ln_1p(),
        q: log_cosh(k * z) - log_cosh(k * zm),
        u: -ch + sh * (k * z).tanh(),
        v: -ch - sh * (k * zm).tanh(),
    }
}

pub fn background_row(window: LatticeWindow, t: f64, params: &SolitonParams) -> Vec<BackgroundSample> {
    window.sites().map(|n| background(n, t, params)).collect()
}

/// `∂ₜQ_n = -sinh²κ sech κz_n sech κz_{n-1}`.
pub fn dt_q(n: i64, t: f64, params: &SolitonParams) -> f64 {
    let k = params.kappa();
    let sh = params.sinh_k();
    -sh * sh * sech(k * comoving(n, t, params)) * sech(k * comoving(n - 1, t, params))
}

/// `∂ₜ²Q_n = sinh²κ (sech² κz_n - sech² κz_{n-1})`.
pub fn dt2_q(n: i64, t: f64, params: &SolitonParams) -> f64 {
    let k = params.kappa();
    let sh = params.sinh_k();
    let a = sech(k * comoving(n, t, params));
    let b = sech(k * comoving(n - 1, t, params));
    sh * sh * (a - b) * (a + b)
}

/// `∂ₜR_n = ∂ₜQ_{n+1} - ∂ₜQ_n`.
pub fn dt_r(n: i64, t: f64, params: &SolitonParams) -> f64 {
    dt_q(n + 1, t, params) - dt_q(n, t, params)
}

pub fn dt2_r(n: i64, t: f64, params: &SolitonParams) -> f64 {
    dt2_q(n + 1, t, params) - dt2_q(n, t, params)
}

/// Derivative of `Q_n` with respect to `κ` at fixed `(n, t)`.
pub fn d_kappa_q(n: i64, t: f64, params: &SolitonParams) -> f64 {
    let k = params.kappa();
    let ch = params.cosh_k();
    let arm = |m: i64| (k * comoving(m, t, params)).tanh() * (m as f64 - t * ch);
    arm(n) - arm(n - 1)
}

/// Sign and logarithm of the modulus of the full tau function at `(n, t, y)`.
pub fn log_tau(n: i64, t: f64, y: f64, params: &SolitonParams) -> (f64, f64) {
    let sign = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let log_abs = std::f64::consts::LN_2 - y * params.cosh_k()
        + log_cosh(params.kappa() * comoving(n, t, params));
    (sign, log_abs)
}

/// `τ_{n+1} / τ_n` of the full tau function; independent of `y`.
pub fn tau_ratio(n: i64, t: f64, params: &SolitonParams) -> f64 {
    let k = params.kappa();
    -(log_cosh(k * comoving(n + 1, t, params)) - log_cosh(k * comoving(n, t, params))).exp()
}
