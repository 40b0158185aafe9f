//! Spectral scalars of the line soliton: the dispersion point at a transverse
//! frequency, the threshold frequency for a given weight, the free lattice
//! dispersion and the constants of the asymptotic profile.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, TodaError};

/// Soliton amplitude `kappa` together with the weight exponent `alpha` of
/// `ℓ²_α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolitonParams {
    kappa: f64,
    alpha: f64,
    speed: f64,
    eta_star: f64,
}

impl SolitonParams {
    pub fn new(kappa: f64, alpha: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(TodaError::InvalidKappa(kappa));
        }
        let eta_star = eta_star(alpha, kappa)?;
        Ok(Self {
            kappa,
            alpha,
            speed: kappa.sinh() / kappa,
            eta_star,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Soliton speed `sinh κ / κ`.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn eta_star(&self) -> f64 {
        self.eta_star
    }

    pub fn sinh_k(&self) -> f64 {
        self.kappa.sinh()
    }

    pub fn cosh_k(&self) -> f64 {
        self.kappa.cosh()
    }

    /// The pole `a = -e^κ` of the dual Jost function.
    pub fn pole(&self) -> f64 {
        -self.kappa.exp()
    }

    pub fn dispersion(&self, eta: f64) -> DispersionPoint {
        DispersionPoint::new(eta, self.kappa)
    }

    pub fn profile(&self) -> ProfileParams {
        ProfileParams::new(self.kappa)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.kappa, alpha)
    }
}

/// Threshold frequency below which the secular modes stay in `ℓ²_α`.
pub fn eta_star(alpha: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(TodaError::InvalidKappa(kappa));
    }
    if !(alpha > 0.0 && alpha < 2.0 * kappa) {
        return Err(TodaError::AlphaOutOfRange { alpha, kappa });
    }
    Ok((kappa + alpha).tanh() * (alpha.sinh() * (2.0 * kappa + alpha).sinh()).sqrt())
}

/// All spectral quantities at one transverse frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub eta: f64,
    pub w: Complex64,
    pub mu: Complex64,
    pub beta_plus: Complex64,
    pub beta_minus: Complex64,
    pub gamma: Complex64,
    pub delta: Complex64,
}

impl DispersionPoint {
    pub fn new(eta: f64, kappa: f64) -> Self {
        let (sh, ch) = (kappa.sinh(), kappa.cosh());
        let w = Complex64::new(ch, eta);
        // w² - 1 written without the cancellation in ch² - 1
        let mu = Complex64::new(sh * sh - eta * eta, 2.0 * ch * eta).sqrt();
        let beta_plus = -w + mu;
        let beta_minus = -w - mu;
        let gamma = (-beta_minus).ln();
        let delta = gamma * (sh / kappa) - mu;
        Self {
            eta,
            w,
            mu,
            beta_plus,
            beta_minus,
            gamma,
            delta,
        }
    }
}

/// Constants of the damped-wave profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileParams {
    /// Transport speed in `y`.
    pub lambda1: f64,
    /// Diffusion coefficient in `y`.
    pub lambda2: f64,
}

impl ProfileParams {
    pub fn new(kappa: f64) -> Self {
        let sh = kappa.sinh();
        Self {
            lambda1: 1.0 / kappa.tanh() - 1.0 / kappa,
            lambda2: ((2.0 * kappa).sinh() / (2.0 * kappa) - 1.0) / (2.0 * sh * sh * sh),
        }
    }
}

/// Dispersion of the free equation conjugated by the weight `e^{αn}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeDispersionPoint {
    pub xi: f64,
    pub eta: f64,
    pub alpha: f64,
    pub omega: Complex64,
}

/// `ω = (η² + 4 sin²((ξ+iα)/2))^{1/2}` with `arg ω ∈ (-π/2, π/2]`.
pub fn free_omega(xi: f64, eta: f64, alpha: f64) -> FreeDispersionPoint {
    FreeDispersionPoint {
        xi,
        eta,
        alpha,
        omega: principal_sqrt(free_omega_sq(xi, eta, alpha)),
    }
}

/// `ω²`, with the real part factored so that `ω(0, 2 sinh(α/2)) = 0` exactly.
pub fn free_omega_sq(xi: f64, eta: f64, alpha: f64) -> Complex64 {
    let (s, c) = (0.5 * xi).sin_cos();
    let damped = 2.0 * c * (0.5 * alpha).sinh();
    let oscill = 2.0 * s * (0.5 * alpha).cosh();
    let re = (eta - damped) * (eta + damped) + oscill * oscill;
    let im = 2.0 * xi.sin() * alpha.sinh();
    Complex64::new(re, im)
}

pub(crate) fn principal_sqrt(z: Complex64) -> Complex64 {
    let r = z.sqrt();
    if r.re < 0.0 || (r.re == 0.0 && r.im < 0.0) {
        -r
    } else {
        r
    }
}

/// A finite-difference estimate compared against a closed-form target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeCheck {
    /// Richardson-combined estimate from steps `h` and `h/2`.
    pub estimate: f64,
    pub target: f64,
    pub rel_error: f64,
    /// Observed order of the raw differences under step halving.
    pub order: f64,
    pub step: f64,
    pub conclusive: bool,
}

impl DerivativeCheck {
    fn from_stencil(stencil: impl Fn(f64) -> f64, target: f64, step: f64, conclusive: bool) -> Self {
        let (d1, d2, d4) = (stencil(step), stencil(step / 2.0), stencil(step / 4.0));
        let order = ((d1 - d2).abs() / (d2 - d4).abs()).log2();
        let estimate = (4.0 * d2 - d1) / 3.0;
        Self {
            estimate,
            target,
            rel_error: ((estimate - target) / target).abs(),
            order,
            step,
            conclusive,
        }
    }

    pub fn passes(&self, tol: f64, min_order: f64) -> bool {
        self.conclusive && self.rel_error < tol && self.order >= min_order
    }
}

/// Outcome of the monotonicity, symmetry and derivative claims on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionScan {
    pub points: usize,
    pub max_product_error: f64,
    pub max_conjugate_error: f64,
    pub beta_minus_increasing: bool,
    pub beta_bounds_hold: bool,
    pub delta_re_even: bool,
    pub delta_re_increasing: bool,
    pub delta_re_positive: bool,
    pub delta_im_odd: bool,
    pub mu_continuous: bool,
    pub delta_im_slope: DerivativeCheck,
    pub delta_re_curvature: DerivativeCheck,
}

impl DispersionScan {
    pub fn all_claims_hold(&self) -> bool {
        self.beta_minus_increasing
            && self.beta_bounds_hold
            && self.delta_re_even
            && self.delta_re_increasing
            && self.delta_re_positive
            && self.delta_im_odd
            && self.mu_continuous
    }
}

/// Uniform grid with step `step` on `[-eta_max, eta_max]`, symmetric about 0.
pub fn symmetric_grid(eta_max: f64, step: f64) -> Vec<f64> {
    let k = (eta_max / step).round() as i64;
    (-k..=k).map(|j| j as f64 * step).collect()
}

/// Evaluate the dispersion claims on a sorted grid symmetric about 0.
pub fn scan_dispersion(params: &SolitonParams, grid: &[f64]) -> DispersionScan {
    let kappa = params.kappa();
    let points: Vec<DispersionPoint> = grid.iter().map(|&e| params.dispersion(e)).collect();
    let sym_tol = 1e-12;

    let mut max_product_error: f64 = 0.0;
    let mut max_conjugate_error: f64 = 0.0;
    let mut delta_re_even = true;
    let mut delta_im_odd = true;
    let mut beta_bounds_hold = true;
    let mut delta_re_positive = true;
    for p in &points {
        max_product_error =
            max_product_error.max((p.beta_plus * p.beta_minus - 1.0).norm());
        let m = params.dispersion(-p.eta);
        let conj_err = [
            (m.mu - p.mu.conj()).norm(),
            (m.beta_plus - p.beta_plus.conj()).norm(),
            (m.beta_minus - p.beta_minus.conj()).norm(),
            (m.gamma - p.gamma.conj()).norm(),
            (m.delta - p.delta.conj()).norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        max_conjugate_error = max_conjugate_error.max(conj_err);
        delta_re_even &= (m.delta.re - p.delta.re).abs() <= sym_tol;
        delta_im_odd &= (m.delta.im + p.delta.im).abs() <= sym_tol;
        if p.eta != 0.0 {
            beta_bounds_hold &=
                p.beta_plus.norm() < (-kappa).exp() && p.beta_minus.norm() > kappa.exp();
            delta_re_positive &= p.delta.re > 0.0;
        }
    }

    let positive: Vec<&DispersionPoint> = points.iter().filter(|p| p.eta >= 0.0).collect();
    let increasing = |f: &dyn Fn(&DispersionPoint) -> f64| {
        positive.windows(2).all(|w| f(w[1]) > f(w[0]))
    };
    let beta_minus_increasing = increasing(&|p| p.beta_minus.norm());
    let delta_re_increasing = increasing(&|p| p.delta.re);

    // |dμ/dη| = |w/μ|; a jump beyond twice the largest slope is a branch flip
    let mu_continuous = points.windows(2).all(|w| {
        let slope = (w[0].w / w[0].mu).norm().max((w[1].w / w[1].mu).norm());
        (w[1].mu - w[0].mu).norm() <= 2.0 * slope * (w[1].eta - w[0].eta)
    });

    let grid_step = positive
        .windows(2)
        .map(|w| w[1].eta - w[0].eta)
        .fold(f64::INFINITY, f64::min);
    let conclusive = grid_step.is_finite() && grid_step <= 0.05;
    let h = if grid_step.is_finite() {
        grid_step.clamp(1e-4, 0.05)
    } else {
        1e-3
    };
    let prof = params.profile();
    let delta_at = |e: f64| params.dispersion(e).delta;
    let delta_im_slope = DerivativeCheck::from_stencil(
        |h| (delta_at(h).im - delta_at(-h).im) / (2.0 * h),
        -prof.lambda1,
        h,
        conclusive,
    );
    let delta_re_curvature = DerivativeCheck::from_stencil(
        |h| (delta_at(h).re - 2.0 * delta_at(0.0).re + delta_at(-h).re) / (h * h),
        2.0 * prof.lambda2,
        h,
        conclusive,
    );

    DispersionScan {
        points: points.len(),
        max_product_error,
        max_conjugate_error,
        beta_minus_increasing,
        beta_bounds_hold,
        delta_re_even,
        delta_re_increasing,
        delta_re_positive,
        delta_im_odd,
        mu_continuous,
        delta_im_slope,
        delta_re_curvature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Independent oracle: bisection on `γ_R(η) = κ + α`.
    fn eta_star_bisection(alpha: f64, kappa: f64) -> f64 {
        let target = kappa + alpha;
        let f = |e: f64| DispersionPoint::new(e, kappa).gamma.re - target;
        let (mut lo, mut hi) = (0.0, 1.0);
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn values_at_zero_frequency() {
        let p = DispersionPoint::new(0.0, 1.0);
        assert_relative_eq!(p.beta_minus.re, -std::f64::consts::E, epsilon = 1e-14);
        assert_relative_eq!(p.beta_plus.re, -1.0 / std::f64::consts::E, epsilon = 1e-14);
        assert_relative_eq!(p.mu.re, 1f64.sinh(), epsilon = 1e-14);
        assert_relative_eq!(p.gamma.re, 1.0, epsilon = 1e-14);
        assert!(p.delta.norm() < 1e-15);
    }

    #[test]
    fn threshold_closed_form_matches_bisection() {
        let es = eta_star(0.5, 1.0).unwrap();
        assert_relative_eq!(es, eta_star_bisection(0.5, 1.0), epsilon = 1e-10);
        assert!((es - 1.607).abs() < 1e-3);
        let b = DispersionPoint::new(es, 1.0).beta_minus.norm();
        assert_relative_eq!(b, 1.5f64.exp(), max_relative = 1e-10);
    }

    #[test]
    fn threshold_rejects_bad_alpha() {
        assert!(eta_star(0.0, 1.0).is_err());
        assert!(eta_star(2.0, 1.0).is_err());
        assert!(SolitonParams::new(-1.0, 0.5).is_err());
    }

    #[test]
    fn free_omega_special_values() {
        let a: f64 = 0.6;
        let z = free_omega(0.0, 2.0 * (a / 2.0).sinh(), a).omega;
        assert!(z.norm() < 1e-12);
        let pi = free_omega(std::f64::consts::PI, 0.0, a).omega;
        assert_relative_eq!(pi.re, 2.0 * (a / 2.0).cosh(), epsilon = 1e-12);
        let im = free_omega(0.0, 0.0, a).omega;
        assert!(im.re.abs() < 1e-15);
        assert_relative_eq!(im.im, 2.0 * 0.3f64.sinh(), epsilon = 1e-14);
    }

    #[test]
    fn profile_constants_positive() {
        for k in [0.1, 0.5, 1.0, 3.0] {
            let p = ProfileParams::new(k);
            assert!(p.lambda1 > 0.0 && p.lambda2 > 0.0);
        }
    }

    #[test]
    fn scan_holds_on_fine_grid() {
        let params = SolitonParams::new(1.0, 0.5).unwrap();
        let scan = scan_dispersion(&params, &symmetric_grid(1.0, 1e-3));
        assert!(scan.all_claims_hold(), "{scan:?}");
        assert!(scan.delta_im_slope.passes(1e-5, 1.9), "{:?}", scan.delta_im_slope);
        assert!(scan.delta_re_curvature.passes(1e-5, 1.9), "{:?}", scan.delta_re_curvature);
    }

    #[test]
    fn scan_flags_coarse_grid() {
        let params = SolitonParams::new(1.0, 0.5).unwrap();
        let scan = scan_dispersion(&params, &symmetric_grid(1.0, 0.25));
        assert!(!scan.delta_im_slope.conclusive);
    }

    proptest! {
        #[test]
        fn beta_product_and_conjugation(eta in -5.0f64..5.0, kappa in 0.1f64..3.0) {
            let p = DispersionPoint::new(eta, kappa);
            let m = DispersionPoint::new(-eta, kappa);
            prop_assert!((p.beta_plus * p.beta_minus - 1.0).norm() < 1e-12);
            prop_assert!((m.delta - p.delta.conj()).norm() < 1e-12);
            prop_assert!((m.gamma - p.gamma.conj()).norm() < 1e-12);
        }

        #[test]
        fn beta_bounds_off_zero(eta in 1e-3f64..5.0, kappa in 0.1f64..3.0) {
            let p = DispersionPoint::new(eta, kappa);
            prop_assert!(p.beta_plus.norm() < (-kappa).exp());
            prop_assert!(p.beta_minus.norm() > kappa.exp());
            prop_assert!(p.delta.re > 0.0);
        }

        #[test]
        fn free_omega_imaginary_bounds(xi in 0.0f64..std::f64::consts::PI, eta in -3.0f64..3.0, alpha in 0.01f64..2.0) {
            let w = free_omega(xi, eta, alpha).omega;
            prop_assert!(w.im >= -1e-12);
            prop_assert!(w.im <= 2.0 * (alpha / 2.0).sinh() + 1e-12);
            prop_assert!(w.im <= 2.0 * (xi / 2.0).cos() * (alpha / 2.0).sinh() + 1e-12);
            let back = free_omega(-xi, eta, alpha).omega;
            prop_assert!((back.im + w.im).abs() < 1e-12);
        }
    }
}
