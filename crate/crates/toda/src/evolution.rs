//! Per-mode time integration of the free and around-soliton linearised
//! equations, the exact Fourier propagator of the free equation and
//! weighted-norm decay fits.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dispersion::{free_omega_sq, principal_sqrt, SolitonParams};
use crate::error::{Result, TodaError};
use crate::lattice::{ComplexSeq, LatticeWindow};
use crate::modes::Mode;
use crate::soliton::{comoving, sech};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Which unknown a state carries. `R = (e^∂ - 1)Q` in both settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Representation {
    QFree,
    QSoliton,
    RFree,
    RSoliton,
}

impl Representation {
    pub fn label(self) -> &'static str {
        match self {
            Self::QFree => "Q-free",
            Self::QSoliton => "Q'-soliton",
            Self::RFree => "R-free",
            Self::RSoliton => "R'-soliton",
        }
    }

    pub fn is_soliton(self) -> bool {
        matches!(self, Self::QSoliton | Self::RSoliton)
    }

    pub fn is_difference(self) -> bool {
        matches!(self, Self::RFree | Self::RSoliton)
    }

    fn toggled(self) -> Self {
        match self {
            Self::QFree => Self::RFree,
            Self::RFree => Self::QFree,
            Self::QSoliton => Self::RSoliton,
            Self::RSoliton => Self::QSoliton,
        }
    }
}

/// One transverse mode `(q, ∂ₜq)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub eta: f64,
    pub t: f64,
    pub representation: Representation,
    pub mode: Mode,
}

impl ModeState {
    pub fn new(eta: f64, t: f64, representation: Representation, mode: Mode) -> Self {
        Self {
            eta,
            t,
            representation,
            mode,
        }
    }

    pub fn window(&self) -> LatticeWindow {
        self.mode.window()
    }

    /// `R = (e^∂ - 1)Q`.
    pub fn to_difference(&self) -> Result<Self> {
        if self.representation.is_difference() {
            return Err(TodaError::Representation {
                expected: "Q form",
                found: self.representation.label(),
            });
        }
        Ok(Self {
            representation: self.representation.toggled(),
            mode: self.mode.forward_diff(),
            ..self.clone()
        })
    }

    /// `Q = (e^∂ - 1)^{-1} R`, bounded on `ℓ²_α` for `α > 0` only.
    pub fn to_potential(&self, alpha: f64) -> Result<Self> {
        if !self.representation.is_difference() {
            return Err(TodaError::Representation {
                expected: "R form",
                found: self.representation.label(),
            });
        }
        if alpha <= 0.0 {
            return Err(TodaError::NonPositiveAlpha(alpha));
        }
        Ok(Self {
            representation: self.representation.toggled(),
            mode: Mode {
                q: self.mode.q.inv_forward_diff(),
                p: self.mode.p.inv_forward_diff(),
            },
            ..self.clone()
        })
    }

    /// `e^{-αct}(⟨η⟩‖q‖_α + ‖p‖_α)`, the quantity whose decay is measured.
    pub fn comoving_norm(&self, params: &SolitonParams) -> f64 {
        let alpha = params.alpha();
        let bracket = (1.0 + self.eta * self.eta).sqrt() * self.mode.q.weighted_norm(alpha)
            + self.mode.p.weighted_norm(alpha);
        (-alpha * params.speed() * self.t).exp() * bracket
    }

    /// Share of the weighted norm carried by the edge bands.
    pub fn edge_fraction(&self, alpha: f64, band: usize) -> f64 {
        let total = self.mode.weighted_norm(alpha);
        if total == 0.0 {
            return 0.0;
        }
        (self.mode.q.edge_weighted_norm(alpha, band) + self.mode.p.edge_weighted_norm(alpha, band)) / total
    }

    /// `‖p‖² + Σ|q_n - q_{n-1}|² + η²‖q‖²` with zeros beyond the window;
    /// conserved by the free equation in `Q` form.
    pub fn free_energy(&self) -> f64 {
        let q = self.mode.q.values();
        let p: f64 = self.mode.p.values().iter().map(|v| v.norm_sqr()).sum();
        let mut grad = 0.0;
        let mut prev = ZERO;
        for v in q.iter().chain(std::iter::once(&ZERO)) {
            grad += (v - prev).norm_sqr();
            prev = *v;
        }
        let mass: f64 = q.iter().map(|v| v.norm_sqr()).sum();
        p + grad + self.eta * self.eta * mass
    }
}

/// `1 + V_n(t)` over the window, or ones for the free equation.
fn coupling(window: LatticeWindow, t: f64, params: &SolitonParams, soliton: bool) -> Vec<f64> {
    let k = params.kappa();
    let sh2 = params.sinh_k().powi(2);
    window
        .sites()
        .map(|n| {
            if soliton {
                let s = sech(k * comoving(n, t, params));
                1.0 + sh2 * s * s
            } else {
                1.0
            }
        })
        .collect()
}

/// The acceleration `∂ₜ²q` for a state in any representation, with zero
/// Dirichlet data beyond the window. `weights` carries `1 + V` at the sites
/// of the window and at the site left of it.
fn acceleration(q: &[Complex64], weights: &[f64], eta2: f64, difference: bool, out: &mut [Complex64]) {
    let len = q.len();
    let at = |i: isize| -> Complex64 {
        if i < 0 || i as usize >= len {
            ZERO
        } else {
            q[i as usize]
        }
    };
    // weights[0] is the site left of the window
    let w = |i: isize| weights[(i + 1) as usize];
    for i in 0..len as isize {
        let o = if difference {
            // (e^∂ - 2 + e^{-∂}) ((1 + V) r), zero ghosts
            let b = |j: isize| if j < 0 || j as usize >= len { ZERO } else { w(j) * at(j) };
            b(i + 1) - 2.0 * b(i) + b(i - 1)
        } else {
            // (1 - e^{-∂}) (1 + V) (e^∂ - 1) q
            w(i) * (at(i + 1) - at(i)) - w(i - 1) * (at(i) - at(i - 1))
        };
        out[i as usize] = o - eta2 * at(i);
    }
}

fn coupling_with_ghost(window: LatticeWindow, t: f64, params: &SolitonParams, soliton: bool) -> Vec<f64> {
    let wide = LatticeWindow::new(window.n_min() - 1, window.n_max()).expect("non-empty");
    coupling(wide, t, params, soliton)
}

/// Largest admissible step, `dt (2 + |η|) < 0.5`.
pub fn step_bound(eta: f64) -> f64 {
    0.5 / (2.0 + eta.abs())
}

/// Advance by classical fourth-order Runge-Kutta with step `dt`; the last
/// step is shortened to land on `t_target`. The soliton background is
/// sampled at the stage times.
pub fn evolve_ode(state: &ModeState, t_target: f64, dt: f64, params: &SolitonParams) -> Result<ModeState> {
    let bound = step_bound(state.eta);
    if !(dt > 0.0 && dt < bound) {
        return Err(TodaError::StepTooLarge { dt, bound });
    }
    let span = t_target - state.t;
    if span < 0.0 {
        return Err(TodaError::NonPositiveTime(span));
    }
    let steps = ((span / dt) - 1e-9).ceil().max(0.0) as usize;
    let window = state.window();
    let soliton = state.representation.is_soliton();
    let difference = state.representation.is_difference();
    let eta2 = state.eta * state.eta;
    let mut q = state.mode.q.values().to_vec();
    let mut p = state.mode.p.values().to_vec();
    let len = q.len();
    let scale0 = q.iter().chain(&p).fold(0.0f64, |m, v| m.max(v.norm()));
    let (mut k1q, mut k1p) = (vec![ZERO; len], vec![ZERO; len]);
    let (mut k2q, mut k2p) = (vec![ZERO; len], vec![ZERO; len]);
    let (mut k3q, mut k3p) = (vec![ZERO; len], vec![ZERO; len]);
    let (mut k4q, mut k4p) = (vec![ZERO; len], vec![ZERO; len]);
    let mut tq = vec![ZERO; len];
    let mut t = state.t;
    let static_weights = (!soliton).then(|| coupling_with_ghost(window, 0.0, params, false));
    let weights_at = |time: f64| -> Vec<f64> {
        match &static_weights {
            Some(w) => w.clone(),
            None => coupling_with_ghost(window, time, params, true),
        }
    };
    for step in 0..steps {
        let h = if step + 1 == steps { t_target - t } else { dt };
        let w0 = weights_at(t);
        let wh = weights_at(t + 0.5 * h);
        let w1 = weights_at(t + h);

        k1q.copy_from_slice(&p);
        acceleration(&q, &w0, eta2, difference, &mut k1p);

        for i in 0..len {
            tq[i] = q[i] + 0.5 * h * k1q[i];
            k2q[i] = p[i] + 0.5 * h * k1p[i];
        }
        acceleration(&tq, &wh, eta2, difference, &mut k2p);

        for i in 0..len {
            tq[i] = q[i] + 0.5 * h * k2q[i];
            k3q[i] = p[i] + 0.5 * h * k2p[i];
        }
        acceleration(&tq, &wh, eta2, difference, &mut k3p);

        for i in 0..len {
            tq[i] = q[i] + h * k3q[i];
            k4q[i] = p[i] + h * k3p[i];
        }
        acceleration(&tq, &w1, eta2, difference, &mut k4p);

        let sixth = h / 6.0;
        let mut scale = 0.0f64;
        for i in 0..len {
            q[i] += sixth * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
            p[i] += sixth * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i]);
            scale = scale.max(q[i].norm()).max(p[i].norm());
        }
        t = if step + 1 == steps { t_target } else { t + h };
        if !scale.is_finite() || (scale0 > 0.0 && scale > scale0 * 10f64.exp()) {
            return Err(TodaError::Unstable { t });
        }
    }
    Ok(ModeState {
        t: if steps == 0 { state.t } else { t_target },
        mode: Mode {
            q: ComplexSeq::from_values(window, q)?,
            p: ComplexSeq::from_values(window, p)?,
        },
        ..state.clone()
    })
}

/// `(cos tω, sin(tω)/ω)` as functions of `ω²`, with a series near `ω = 0`.
fn rotation(t: f64, omega_sq: Complex64) -> (Complex64, Complex64) {
    let z = omega_sq * t * t;
    if z.norm() < 1e-2 {
        let (mut c, mut s) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        let (mut tc, mut ts) = (c, s);
        for k in 1..8 {
            let kf = k as f64;
            tc *= -z / ((2.0 * kf - 1.0) * (2.0 * kf));
            ts *= -z / ((2.0 * kf) * (2.0 * kf + 1.0));
            c += tc;
            s += ts;
        }
        (c, s * t)
    } else {
        let omega = principal_sqrt(omega_sq);
        ((omega * t).cos(), (omega * t).sin() / omega)
    }
}

/// Propagate a free-equation state exactly by rotating each Fourier mode of
/// the weighted sequence `e^{α(n - n_ref)}q`, zero-padded to at least four
/// times the window length.
pub fn evolve_free_exact(state: &ModeState, t_target: f64, alpha: f64) -> Result<ModeState> {
    if state.representation.is_soliton() {
        return Err(TodaError::Representation {
            expected: "free form",
            found: state.representation.label(),
        });
    }
    let window = state.window();
    let len = window.len();
    let size = (4 * len).next_power_of_two();
    let n_ref = window.n_min() + (len / 2) as i64;
    let weight = |n: i64| (alpha * (n - n_ref) as f64).exp();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);
    let lift = |seq: &ComplexSeq| {
        let mut buf = vec![ZERO; size];
        for (slot, (n, v)) in buf.iter_mut().zip(seq.iter()) {
            *slot = v * weight(n);
        }
        forward.process(&mut buf);
        buf
    };
    let mut q_hat = lift(&state.mode.q);
    let mut p_hat = lift(&state.mode.p);
    let dt = t_target - state.t;
    for k in 0..size {
        let xi = 2.0 * std::f64::consts::PI * k as f64 / size as f64;
        let omega_sq = free_omega_sq(xi, state.eta, alpha);
        let (c, s) = rotation(dt, omega_sq);
        let (q0, p0) = (q_hat[k], p_hat[k]);
        q_hat[k] = c * q0 + s * p0;
        p_hat[k] = -omega_sq * s * q0 + c * p0;
    }
    let lower = |mut buf: Vec<Complex64>| -> Result<ComplexSeq> {
        inverse.process(&mut buf);
        let norm = 1.0 / size as f64;
        let values = window
            .sites()
            .zip(buf)
            .map(|(n, v)| v * norm / weight(n))
            .collect();
        ComplexSeq::from_values(window, values)
    };
    Ok(ModeState {
        t: t_target,
        mode: Mode {
            q: lower(q_hat)?,
            p: lower(p_hat)?,
        },
        ..state.clone()
    })
}

/// Two complex Gaussian bumps in each component, centred within eight
/// sites of the origin.
pub fn gaussian_packet(window: LatticeWindow, seed: u64) -> Mode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bump = || {
        let c = rng.gen_range(-8.0..8.0);
        let width = rng.gen_range(1.5..3.0);
        let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        ComplexSeq::from_fn(window, move |n| amp * (-((n as f64 - c) / width).powi(2)).exp())
    };
    let (q1, q2, p1, p2) = (bump(), bump(), bump(), bump());
    Mode {
        q: q1.add(&q2).expect("same window"),
        p: p1.add(&p2).expect("same window"),
    }
}

/// Evolve every mode of a planar state independently; the result does not
/// depend on scheduling.
pub fn planar_evolve(
    modes: &[ModeState],
    t_target: f64,
    dt: f64,
    params: &SolitonParams,
) -> Result<Vec<ModeState>> {
    modes
        .par_iter()
        .map(|m| evolve_ode(m, t_target, dt, params))
        .collect()
}

/// Least-squares line through `(t, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    /// Fitted slope of `ln value`; `-b` in the exponential bound.
    pub exponent: f64,
    /// Fitted `ln value` at `t_lo`; `ln K` in the exponential bound.
    pub offset: f64,
    /// Root-mean-square residual of the fit in `ln value`.
    pub residual: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    /// `residual` stays below 5%.
    pub conclusive: bool,
}

impl DecayReport {
    /// `b` of the bound `K e^{-b(t - t₀)}`.
    pub fn rate(&self) -> f64 {
        -self.exponent
    }
}

/// Fit `ln value = offset + exponent (t - t_lo)` over samples with `t ∈ [t_lo, t_hi]`.
pub fn fit_decay(samples: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Result<DecayReport> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(t, v)| *t >= t_lo - 1e-9 && *t <= t_hi + 1e-9 && *v > 0.0)
        .map(|&(t, v)| (t - t_lo, v.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(TodaError::GridMismatch(format!(
            "need two positive samples in [{t_lo}, {t_hi}], got {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mean_t = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_v = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_v)).sum();
    let exponent = sxy / sxx;
    let offset = mean_v - exponent * mean_t;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - offset - exponent * p.0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayReport {
        exponent,
        offset,
        residual,
        t_lo,
        t_hi,
        conclusive: residual < 0.05,
    })
}

/// One row of an evolution series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSample {
    pub t: f64,
    /// [`ModeState::comoving_norm`].
    pub norm: f64,
    pub edge_fraction: f64,
}

/// Evolve and record the comoving norm every `sample_every` time units,
/// calling `observe` on each sampled state.
pub fn evolve_series(
    initial: &ModeState,
    t_end: f64,
    sample_every: f64,
    dt: f64,
    params: &SolitonParams,
    mut observe: impl FnMut(&ModeState) -> Result<()>,
) -> Result<Vec<SeriesSample>> {
    let sample = |s: &ModeState| SeriesSample {
        t: s.t,
        norm: s.comoving_norm(params),
        edge_fraction: s.edge_fraction(params.alpha(), 10),
    };
    let mut state = initial.clone();
    observe(&state)?;
    let mut out = vec![sample(&state)];
    let count = ((t_end - initial.t) / sample_every).round() as usize;
    for j in 1..=count {
        let target = initial.t + j as f64 * sample_every;
        state = evolve_ode(&state, target, dt, params)?;
        observe(&state)?;
        out.push(sample(&state));
    }
    Ok(out)
}

/// Largest fitted growth exponent of `‖q‖_α + ‖p‖_α` under the exact free
/// propagator, fitted on `[horizon/4, horizon]`.
pub fn free_growth_exponent(state: &ModeState, alpha: f64, horizon: f64, samples: usize) -> Result<DecayReport> {
    let mut series = Vec::with_capacity(samples + 1);
    for j in 0..=samples {
        let t = state.t + horizon * j as f64 / samples as f64;
        let s = evolve_free_exact(state, t, alpha)?;
        series.push((t, s.mode.weighted_norm(alpha)));
    }
    fit_decay(&series, state.t + 0.25 * horizon, state.t + horizon)
}
