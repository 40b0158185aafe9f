//! The damped-wave profile: transverse amplitude extraction, heat kernel and
//! transport window on a uniform `y` grid, and the weighted comparison of an
//! evolved planar state with the profile.
//!
//! The amplitude at time `t` is `t (H_t * W_t * f)(y)` with both kernels of
//! unit mass; in the transverse Fourier variable this is the multiplier
//! `e^{-λ₂η²t} sin(λ₁tη)/(λ₁η)` applied to `f̂`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dispersion::{ProfileParams, SolitonParams};
use crate::error::{Result, TodaError};
use crate::evolution::{planar_evolve, ModeState, Representation};
use crate::lattice::{ComplexSeq, LatticeWindow};
use crate::modes::{bold_pairing, eta_zero_modes, Mode};
use crate::soliton::{dt2_r, dt_r};

/// Samples `values[j]` at `y = (start + j) · spacing`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFn {
    pub start: i64,
    pub spacing: f64,
    pub values: Vec<f64>,
}

impl GridFn {
    pub fn from_fn(spacing: f64, start: i64, end: i64, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            start,
            spacing,
            values: (start..=end).map(|i| f(i as f64 * spacing)).collect(),
        }
    }

    /// Discrete unit mass at `y = 0`.
    pub fn point_mass(spacing: f64) -> Self {
        Self {
            start: 0,
            spacing,
            values: vec![1.0 / spacing],
        }
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn get(&self, i: i64) -> f64 {
        if i < self.start || i > self.end() {
            0.0
        } else {
            self.values[(i - self.start) as usize]
        }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| ((self.start + j as i64) as f64 * self.spacing, *v))
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spacing
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.spacing
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Largest pointwise difference over the union of both supports.
    pub fn max_difference(&self, other: &Self) -> f64 {
        (self.start.min(other.start)..=self.end().max(other.end()))
            .map(|i| (self.get(i) - other.get(i)).abs())
            .fold(0.0, f64::max)
    }

    /// `∫ g(y) e^{-iηy} dy` by the rectangle rule.
    pub fn transform(&self, eta: f64) -> Complex64 {
        self.points()
            .map(|(y, v)| Complex64::from_polar(v, -eta * y))
            .sum::<Complex64>()
            * self.spacing
    }
}

fn same_spacing(a: &GridFn, b: &GridFn) -> Result<()> {
    if (a.spacing - b.spacing).abs() > 1e-15 * a.spacing {
        return Err(TodaError::GridMismatch(format!(
            "spacings {} and {}",
            a.spacing, b.spacing
        )));
    }
    Ok(())
}

/// Full linear convolution by direct summation.
pub fn convolve_direct(a: &GridFn, b: &GridFn) -> Result<GridFn> {
    same_spacing(a, b)?;
    let mut values = vec![0.0; a.values.len() + b.values.len() - 1];
    for (i, x) in a.values.iter().enumerate() {
        for (j, y) in b.values.iter().enumerate() {
            values[i + j] += x * y;
        }
    }
    Ok(GridFn {
        start: a.start + b.start,
        spacing: a.spacing,
        values: values.into_iter().map(|v| v * a.spacing).collect(),
    })
}

/// Full linear convolution through zero-padded transforms.
pub fn convolve_fft(a: &GridFn, b: &GridFn) -> Result<GridFn> {
    same_spacing(a, b)?;
    let len = a.values.len() + b.values.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let lift = |v: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); size];
        for (slot, x) in buf.iter_mut().zip(v) {
            *slot = x.into();
        }
        forward.process(&mut buf);
        buf
    };
    let mut prod: Vec<Complex64> = lift(&a.values)
        .into_iter()
        .zip(lift(&b.values))
        .map(|(x, y)| x * y)
        .collect();
    planner.plan_fft_inverse(size).process(&mut prod);
    let norm = a.spacing / size as f64;
    Ok(GridFn {
        start: a.start + b.start,
        spacing: a.spacing,
        values: prod[..len].iter().map(|v| v.re * norm).collect(),
    })
}

/// `H_t(y) = (4πλ₂t)^{-1/2} e^{-y²/4λ₂t}`, sampled out to twelve standard
/// deviations.
pub fn heat_kernel(t: f64, lambda2: f64, spacing: f64) -> Result<GridFn> {
    if t <= 0.0 {
        return Err(TodaError::NonPositiveTime(t));
    }
    let var = 2.0 * lambda2 * t;
    let reach = (12.0 * var.sqrt() / spacing).ceil() as i64;
    let norm = (2.0 * std::f64::consts::PI * var).sqrt().recip();
    Ok(GridFn::from_fn(spacing, -reach, reach, |y| {
        norm * (-y * y / (2.0 * var)).exp()
    }))
}

/// Uniform density on `[-λ₁t, λ₁t]`, averaged over the grid cells so that
/// the discrete mass is exactly one.
pub fn window_kernel(t: f64, lambda1: f64, spacing: f64) -> Result<GridFn> {
    if t <= 0.0 {
        return Err(TodaError::NonPositiveTime(t));
    }
    let half = lambda1 * t;
    let reach = (half / spacing).ceil() as i64 + 1;
    Ok(GridFn::from_fn(spacing, -reach, reach, |y| {
        let lo = (y - 0.5 * spacing).max(-half);
        let hi = (y + 0.5 * spacing).min(half);
        (hi - lo).max(0.0) / (2.0 * half * spacing)
    }))
}

/// How `H_t * W_t * f` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConvolutionPath {
    /// `H * (W * f)` by direct sums.
    Direct,
    /// Product of transforms.
    Transform,
    /// `W * (H * f)` by direct sums.
    Reordered,
}

pub fn smoothed(f: &GridFn, t: f64, profile: &ProfileParams, path: ConvolutionPath) -> Result<GridFn> {
    let heat = heat_kernel(t, profile.lambda2, f.spacing)?;
    let window = window_kernel(t, profile.lambda1, f.spacing)?;
    match path {
        ConvolutionPath::Direct => convolve_direct(&heat, &convolve_direct(&window, f)?),
        ConvolutionPath::Transform => convolve_fft(&heat, &convolve_fft(&window, f)?),
        ConvolutionPath::Reordered => convolve_direct(&window, &convolve_direct(&heat, f)?),
    }
}

/// Quadrature diagnostics of the two kernels at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelChecks {
    pub t: f64,
    pub heat_mass_error: f64,
    pub window_mass_error: f64,
    /// `max|H_t * H_t - H_{2t}| / max H_{2t}`.
    pub semigroup_error: f64,
    /// Largest disagreement among the three convolution paths, relative to
    /// the largest value.
    pub path_spread: f64,
}

impl KernelChecks {
    pub fn max(&self) -> f64 {
        self.heat_mass_error
            .max(self.window_mass_error)
            .max(self.semigroup_error)
            .max(self.path_spread)
    }
}

pub fn kernel_checks(t: f64, profile: &ProfileParams, f: &GridFn) -> Result<KernelChecks> {
    let dy = f.spacing;
    let heat = heat_kernel(t, profile.lambda2, dy)?;
    let window = window_kernel(t, profile.lambda1, dy)?;
    let twice = heat_kernel(2.0 * t, profile.lambda2, dy)?;
    let composed = convolve_direct(&heat, &heat)?;
    let paths: Vec<GridFn> = [ConvolutionPath::Direct, ConvolutionPath::Transform, ConvolutionPath::Reordered]
        .iter()
        .map(|&p| smoothed(f, t, profile, p))
        .collect::<Result<_>>()?;
    let scale = paths[0].max_abs().max(f64::MIN_POSITIVE);
    Ok(KernelChecks {
        t,
        heat_mass_error: (heat.integral() - 1.0).abs(),
        window_mass_error: (window.integral() - 1.0).abs(),
        semigroup_error: composed.max_difference(&twice) / twice.max_abs(),
        path_spread: paths[0]
            .max_difference(&paths[1])
            .max(paths[0].max_difference(&paths[2]))
            / scale,
    })
}

/// Pairings of a state at `t = 0` with the two dual modes at `η = 0`,
/// scaled to profile amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplitudeCoefficients {
    /// `λ₁ P(state, g^{2,*}) / (4 sinh κ)`, the coefficient of the `∂ₜR`
    /// direction used by the profile.
    pub principal: Complex64,
    /// `P(state, g^{1,*})`, recorded alongside.
    pub alternative: Complex64,
}

/// Dual modes at `(t, η) = (0, 0)` on a window.
#[derive(Debug, Clone)]
pub struct AmplitudeDuals {
    g1_star: Mode,
    g2_star: Mode,
    scale: f64,
}

impl AmplitudeDuals {
    pub fn new(params: &SolitonParams, window: LatticeWindow) -> Result<Self> {
        let bundle = eta_zero_modes(0.0, params, window)?;
        Ok(Self {
            g1_star: bundle.g1_star,
            g2_star: bundle.g2_star,
            scale: params.profile().lambda1 / (4.0 * params.sinh_k()),
        })
    }

    pub fn coefficients(&self, state: &Mode) -> Result<AmplitudeCoefficients> {
        Ok(AmplitudeCoefficients {
            principal: bold_pairing(state, &self.g2_star)? * self.scale,
            alternative: bold_pairing(state, &self.g1_star)?,
        })
    }
}

/// A lattice Gaussian `amplitude · e^{-((n - centre)/width)²}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeBump {
    pub amplitude: f64,
    pub centre: f64,
    pub width: f64,
}

/// One separable term `L(n) G(y)` of the initial data, with
/// `G(y) = e^{-(y - y_centre)²/2 y_width²}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparableTerm {
    /// Term of `∂ₜQ'` rather than `Q'`.
    pub velocity: bool,
    pub lattice: Vec<LatticeBump>,
    pub y_centre: f64,
    pub y_width: f64,
}

impl SeparableTerm {
    fn lattice_seq(&self, window: LatticeWindow) -> ComplexSeq {
        ComplexSeq::from_real(window, |n| {
            self.lattice
                .iter()
                .map(|b| b.amplitude * (-((n as f64 - b.centre) / b.width).powi(2)).exp())
                .sum()
        })
    }

    fn y_value(&self, y: f64) -> f64 {
        (-(y - self.y_centre).powi(2) / (2.0 * self.y_width * self.y_width)).exp()
    }

    fn y_transform(&self, eta: f64) -> Complex64 {
        let s = self.y_width;
        Complex64::from_polar(
            s * (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * s * s * eta * eta).exp(),
            -eta * self.y_centre,
        )
    }
}

/// Real planar initial data `Σ L_j(n) G_j(y)` for `(Q', ∂ₜQ')` at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparableData {
    pub terms: Vec<SeparableTerm>,
}

impl SeparableData {
    /// Two terms in each component, each with three lattice bumps near the
    /// soliton and a transverse Gaussian near `y = 0`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::with_capacity(4);
        for velocity in [false, false, true, true] {
            let lattice = (0..3)
                .map(|_| LatticeBump {
                    amplitude: rng.gen_range(-1.5..1.5),
                    centre: rng.gen_range(-6.0..6.0),
                    width: rng.gen_range(1.0..3.0),
                })
                .collect();
            terms.push(SeparableTerm {
                velocity,
                lattice,
                y_centre: rng.gen_range(-5.0..5.0),
                y_width: rng.gen_range(1.0..2.5),
            });
        }
        Self { terms }
    }

    /// Distance beyond which every transverse factor is below `e^{-32}`.
    pub fn support_radius(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.y_centre.abs() + 8.0 * t.y_width)
            .fold(0.0, f64::max)
    }

    fn combine(&self, window: LatticeWindow, weight: impl Fn(&SeparableTerm) -> Complex64) -> Result<Mode> {
        let mut mode = Mode::zeros(window);
        for term in &self.terms {
            let seq = term.lattice_seq(window).scale(weight(term));
            if term.velocity {
                mode.p = mode.p.add(&seq)?;
            } else {
                mode.q = mode.q.add(&seq)?;
            }
        }
        Ok(mode)
    }

    /// The lattice state on the line `y`.
    pub fn slice(&self, y: f64, window: LatticeWindow) -> Result<Mode> {
        self.combine(window, |t| t.y_value(y).into())
    }

    /// The transverse Fourier mode at `η`.
    pub fn mode(&self, eta: f64, window: LatticeWindow) -> Result<ModeState> {
        let mode = self.combine(window, |t| t.y_transform(eta))?;
        Ok(ModeState::new(eta, 0.0, Representation::QSoliton, mode))
    }
}

/// Uniform `y` grid `i · spacing`, `|i| ≤ half_count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YGrid {
    pub spacing: f64,
    pub half_count: i64,
}

impl YGrid {
    pub fn new(spacing: f64, extent: f64) -> Self {
        Self {
            spacing,
            half_count: (extent / spacing).ceil() as i64,
        }
    }

    /// Covers the transport cone and the diffusive spread up to `horizon`
    /// plus the support of the data.
    pub fn for_horizon(profile: &ProfileParams, horizon: f64, support: f64, spacing: f64) -> Self {
        let extent = profile.lambda1 * horizon + 8.0 * (profile.lambda2 * horizon).sqrt() + support;
        Self::new(spacing, extent)
    }

    pub fn sample(&self, f: impl FnMut(f64) -> f64) -> GridFn {
        GridFn::from_fn(self.spacing, -self.half_count, self.half_count, f)
    }
}

/// The initial data together with its transverse amplitudes on a `y` grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileData {
    pub params: ProfileParams,
    /// Amplitude of the `∂ₜR` direction; the profile uses this one.
    pub f: GridFn,
    /// Pairing with the other dual mode at each `y`.
    pub f_alt: GridFn,
}

/// Pair each `y`-slice of the data with the dual modes at `(0, 0)`.
pub fn extract_amplitude(
    data: &SeparableData,
    grid: &YGrid,
    params: &SolitonParams,
    window: LatticeWindow,
) -> Result<ProfileData> {
    let duals = AmplitudeDuals::new(params, window)?;
    let coefs: Vec<AmplitudeCoefficients> = (-grid.half_count..=grid.half_count)
        .map(|i| duals.coefficients(&data.slice(i as f64 * grid.spacing, window)?))
        .collect::<Result<_>>()?;
    let start = -grid.half_count;
    Ok(ProfileData {
        params: params.profile(),
        f: GridFn {
            start,
            spacing: grid.spacing,
            values: coefs.iter().map(|c| c.principal.re).collect(),
        },
        f_alt: GridFn {
            start,
            spacing: grid.spacing,
            values: coefs.iter().map(|c| c.alternative.re).collect(),
        },
    })
}

/// Amplitude `t (H_t * W_t * f)` and the lattice directions it multiplies.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileField {
    pub t: f64,
    pub amplitude: GridFn,
    pub dt_r: ComplexSeq,
    pub dt2_r: ComplexSeq,
}

pub fn profile_field(f: &GridFn, t: f64, params: &SolitonParams, window: LatticeWindow) -> Result<ProfileField> {
    if t <= 0.0 {
        return Err(TodaError::NonPositiveTime(t));
    }
    let amplitude = smoothed(f, t, &params.profile(), ConvolutionPath::Direct)?.scale(t);
    Ok(ProfileField {
        t,
        amplitude,
        dt_r: ComplexSeq::from_real(window, |n| dt_r(n, t, params)),
        dt2_r: ComplexSeq::from_real(window, |n| dt2_r(n, t, params)),
    })
}

/// `e^{-λ₂η²t} sin(λ₁tη)/(λ₁η)`, the transform of `t H_t * W_t`.
pub fn profile_multiplier(eta: f64, t: f64, profile: &ProfileParams) -> f64 {
    let transport = if eta == 0.0 {
        t
    } else {
        (profile.lambda1 * t * eta).sin() / (profile.lambda1 * eta)
    };
    (-profile.lambda2 * eta * eta * t).exp() * transport
}

/// Nonnegative transverse frequencies with half-open trapezoid weights; real
/// data is recovered from these by conjugate symmetry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaGrid {
    pub etas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EtaGrid {
    pub fn uniform(step: f64, eta_max: f64) -> Self {
        let count = (eta_max / step - 1e-9).ceil() as usize;
        let etas: Vec<f64> = (0..count).map(|j| j as f64 * step).collect();
        let weights = (0..count).map(|j| if j == 0 { 0.5 * step } else { step }).collect();
        Self { etas, weights }
    }

    /// `‖g‖_{L²(ℝ_y)}²` from per-mode squared norms of a real field.
    pub fn plancherel(&self, squared: &[f64]) -> f64 {
        let sum: f64 = self.weights.iter().zip(squared).map(|(w, s)| w * s).sum();
        sum / std::f64::consts::PI
    }
}

/// Squared mode-level norm `⟨η⟩²‖e₁‖²_α + ‖e₂‖²_α` of the difference of the
/// `R`-form state and `f̂ m(η) (∂ₜR, ∂ₜ²R)`.
fn mode_error_sq(
    state: &ModeState,
    coef: Complex64,
    field: &ProfileField,
    alpha: f64,
) -> Result<f64> {
    let r = state.mode.q.forward_diff();
    let dr = state.mode.p.forward_diff();
    let e1 = r.axpy(-coef, &field.dt_r)?;
    let e2 = dr.axpy(-coef, &field.dt2_r)?;
    let eta2 = state.eta * state.eta;
    Ok((1.0 + eta2) * e1.weighted_norm(alpha).powi(2) + e2.weighted_norm(alpha).powi(2))
}

/// `e^{-αct}` times the planar norm of `(R - A ∂ₜR, ∂ₜR - A ∂ₜ²R)` at the
/// common time of `states`, with `f̂(η)` the amplitude transform per mode.
/// Passing zero amplitudes gives the norm of the state itself.
pub fn compare_profile(
    states: &[ModeState],
    f_hat: &[Complex64],
    grid: &EtaGrid,
    params: &SolitonParams,
) -> Result<f64> {
    if states.len() != grid.etas.len() || f_hat.len() != grid.etas.len() {
        return Err(TodaError::GridMismatch(format!(
            "{} states, {} amplitudes, {} frequencies",
            states.len(),
            f_hat.len(),
            grid.etas.len()
        )));
    }
    let t = states.first().map_or(0.0, |s| s.t);
    if let Some(s) = states.iter().find(|s| s.t != t || s.representation != Representation::QSoliton) {
        return Err(TodaError::GridMismatch(format!(
            "mode at η = {} has t = {} and form {}",
            s.eta,
            s.t,
            s.representation.label()
        )));
    }
    let alpha = params.alpha();
    let window = states.first().map(|s| s.window()).ok_or(TodaError::GridMismatch("no modes".into()))?;
    let field = ProfileField {
        t,
        amplitude: GridFn::point_mass(1.0),
        dt_r: ComplexSeq::from_real(window, |n| dt_r(n, t, params)),
        dt2_r: ComplexSeq::from_real(window, |n| dt2_r(n, t, params)),
    };
    let profile = params.profile();
    let squared: Vec<f64> = states
        .par_iter()
        .zip(f_hat)
        .map(|(s, fh)| {
            let coef = if t > 0.0 { *fh * profile_multiplier(s.eta, t, &profile) } else { Complex64::new(0.0, 0.0) };
            mode_error_sq(s, coef, &field, alpha)
        })
        .collect::<Result<_>>()?;
    Ok((-alpha * params.speed() * t).exp() * grid.plancherel(&squared).sqrt())
}

/// Normalised comparison errors of one initial datum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRun {
    pub times: Vec<f64>,
    /// Comparison error divided by the norm of the initial state.
    pub errors: Vec<f64>,
    pub initial_norm: f64,
    /// Largest edge fraction of any mode at any sampled time.
    pub edge_fraction: f64,
}

impl ProfileRun {
    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

/// Evolve every transverse mode of `data` and compare with the profile at
/// each of `times`.
pub fn profile_run(
    data: &SeparableData,
    params: &SolitonParams,
    window: LatticeWindow,
    grid: &EtaGrid,
    times: &[f64],
    dt: f64,
) -> Result<ProfileRun> {
    let duals = AmplitudeDuals::new(params, window)?;
    let mut states: Vec<ModeState> = grid
        .etas
        .iter()
        .map(|&eta| data.mode(eta, window))
        .collect::<Result<_>>()?;
    let f_hat: Vec<Complex64> = states
        .iter()
        .map(|s| Ok(duals.coefficients(&s.mode)?.principal))
        .collect::<Result<_>>()?;
    let zero = vec![Complex64::new(0.0, 0.0); states.len()];
    let initial_norm = compare_profile(&states, &zero, grid, params)?;
    let mut errors = Vec::with_capacity(times.len());
    let mut edge_fraction = 0.0f64;
    for &t in times {
        states = planar_evolve(&states, t, dt, params)?;
        let raw = compare_profile(&states, &f_hat, grid, params)?;
        errors.push(if initial_norm > 0.0 { raw / initial_norm } else { raw });
        edge_fraction = states
            .iter()
            .map(|s| s.edge_fraction(params.alpha(), 10))
            .fold(edge_fraction, f64::max);
    }
    Ok(ProfileRun {
        times: times.to_vec(),
        errors,
        initial_norm,
        edge_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> SolitonParams {
        SolitonParams::new(1.0, 0.5).unwrap()
    }

    fn bump(dy: f64) -> GridFn {
        GridFn::from_fn(dy, -60, 60, |y| (-(y - 0.7) * (y - 0.7) / 2.0).exp() * (1.0 + 0.3 * y))
    }

    #[test]
    fn kernels_have_unit_mass() {
        let pp = params().profile();
        for t in [1.0, 20.0, 80.0] {
            assert!((heat_kernel(t, pp.lambda2, 0.1).unwrap().integral() - 1.0).abs() < 1e-12);
            assert!((window_kernel(t, pp.lambda1, 0.1).unwrap().integral() - 1.0).abs() < 1e-12);
        }
        assert!(heat_kernel(0.0, pp.lambda2, 0.1).is_err());
    }

    #[test]
    fn window_kernel_is_flat_inside() {
        let pp = params().profile();
        let w = window_kernel(10.0, pp.lambda1, 0.1).unwrap();
        assert_relative_eq!(w.get(0), 1.0 / (2.0 * pp.lambda1 * 10.0), max_relative = 1e-12);
        assert_eq!(w.get(w.end()), 0.0);
    }

    #[test]
    fn heat_semigroup() {
        let pp = params().profile();
        let f = GridFn::point_mass(0.1);
        let c = kernel_checks(5.0, &pp, &f).unwrap();
        assert!(c.semigroup_error < 1e-10, "{c:?}");
    }

    #[test]
    fn three_convolution_paths_agree() {
        let pp = params().profile();
        let c = kernel_checks(20.0, &pp, &bump(0.1)).unwrap();
        assert!(c.path_spread < 1e-12, "{c:?}");
        assert!(c.max() < 1e-8);
    }

    #[test]
    fn smoothing_preserves_mass() {
        let pp = params().profile();
        let f = bump(0.1);
        for t in [5.0, 40.0] {
            let g = smoothed(&f, t, &pp, ConvolutionPath::Direct).unwrap();
            assert_relative_eq!(g.integral(), f.integral(), max_relative = 1e-12);
        }
    }

    #[test]
    fn point_mass_plateau_decays_like_inverse_time() {
        let pp = params().profile();
        let f = GridFn::point_mass(0.1);
        let peaks: Vec<(f64, f64)> = [40.0, 80.0, 160.0]
            .iter()
            .map(|&t| (t, smoothed(&f, t, &pp, ConvolutionPath::Transform).unwrap().max_abs()))
            .collect();
        let slope = (peaks[2].1 / peaks[0].1).ln() / (peaks[2].0 / peaks[0].0).ln();
        assert!((slope + 1.0).abs() < 0.1, "{slope}");
        assert_relative_eq!(peaks[2].1, 1.0 / (2.0 * pp.lambda1 * 160.0), max_relative = 0.02);
    }

    #[test]
    fn multiplier_is_transform_of_field() {
        let p = params();
        let pp = p.profile();
        let f = bump(0.05);
        let t = 10.0;
        let g = smoothed(&f, t, &pp, ConvolutionPath::Transform).unwrap().scale(t);
        for eta in [0.0, 0.2, 0.7] {
            let expect = f.transform(eta) * profile_multiplier(eta, t, &pp);
            assert!((g.transform(eta) - expect).norm() < 1e-3 * f.l1_norm() * t, "{eta}");
        }
    }

    #[test]
    fn amplitude_of_tangent_direction() {
        // data along (∂ₜQ, ∂ₜ²Q) pairs with the dual through a lattice sum
        let p = params();
        let w = LatticeWindow::new(-40, 40).unwrap();
        let duals = AmplitudeDuals::new(&p, w).unwrap();
        let state = Mode {
            q: ComplexSeq::from_real(w, |n| crate::soliton::dt_q(n, 0.0, &p)),
            p: ComplexSeq::from_real(w, |n| crate::soliton::dt2_q(n, 0.0, &p)),
        };
        let c = duals.coefficients(&state).unwrap();
        let csch = 1.0 / p.sinh_k();
        let direct: f64 = w
            .sites()
            .map(|n| {
                let (a, b) = (crate::soliton::dt_q(n, 0.0, &p), crate::soliton::dt2_q(n, 0.0, &p));
                a * (-csch * b) - b * (-csch * a)
            })
            .sum();
        assert!((c.principal.re - direct * duals.scale).abs() < 1e-12);
        let zero = duals.coefficients(&Mode::zeros(w)).unwrap();
        assert_eq!(zero.principal, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn amplitude_transform_matches_mode_pairing() {
        let p = params();
        let w = LatticeWindow::new(-40, 60).unwrap();
        let data = SeparableData::random(3);
        let grid = YGrid::new(0.1, data.support_radius());
        let pd = extract_amplitude(&data, &grid, &p, w).unwrap();
        let duals = AmplitudeDuals::new(&p, w).unwrap();
        for eta in [0.0, 0.3, 1.1] {
            let m = data.mode(eta, w).unwrap();
            let direct = duals.coefficients(&m.mode).unwrap().principal;
            assert!((pd.f.transform(eta) - direct).norm() < 1e-9 * pd.f.l1_norm().max(1e-300));
        }
    }

    #[test]
    fn amplitude_is_integrable_and_refinement_stable() {
        let p = params();
        let w = LatticeWindow::new(-40, 60).unwrap();
        let data = SeparableData::random(4);
        let r = data.support_radius();
        let coarse = extract_amplitude(&data, &YGrid::new(0.1, r), &p, w).unwrap().f.l1_norm();
        let fine = extract_amplitude(&data, &YGrid::new(0.05, r), &p, w).unwrap().f.l1_norm();
        assert!(coarse.is_finite() && (coarse - fine).abs() < 0.01 * fine);
    }

    #[test]
    fn profile_field_rejects_nonpositive_time() {
        let p = params();
        let w = LatticeWindow::new(-10, 10).unwrap();
        assert!(profile_field(&bump(0.1), 0.0, &p, w).is_err());
        let f = profile_field(&bump(0.1), 2.0, &p, w).unwrap();
        assert_relative_eq!(f.amplitude.integral(), 2.0 * bump(0.1).integral(), max_relative = 1e-12);
    }

    #[test]
    fn zero_data_gives_zero_error() {
        let p = params();
        let w = LatticeWindow::new(-20, 30).unwrap();
        let grid = EtaGrid::uniform(0.5, 2.0);
        let data = SeparableData { terms: Vec::new() };
        let run = profile_run(&data, &p, w, &grid, &[1.0], 0.05).unwrap();
        assert_eq!(run.errors, vec![0.0]);
    }

    #[test]
    fn compare_rejects_mismatch() {
        let p = params();
        let w = LatticeWindow::new(-20, 30).unwrap();
        let grid = EtaGrid::uniform(0.5, 2.0);
        let states = vec![SeparableData::random(0).mode(0.0, w).unwrap()];
        assert!(compare_profile(&states, &[Complex64::new(0.0, 0.0)], &grid, &p).is_err());
    }
}
