//! Darboux operators between the free and the around-soliton linearised
//! equations at one transverse frequency, the Green kernel of
//! `D(η) = e^∂ + e^{-∂} + 2iη + 2cosh κ` and the solvers built on it.
//!
//! A state is a [`Mode`] `(Q, ∂ₜQ)`. The slots `∂_s`, `∂_x` of the operators
//! are frozen at `-iη + ∂ₜ` and `iη + ∂ₜ`; the `∂ₜ` part acts on the stored
//! time derivative, so both rows of the correspondence are algebraic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::SolitonParams;
use crate::error::{Result, TodaError};
use crate::evolution::{evolve_ode, ModeState, Representation};
use crate::jost::{phi0, phi0_star};
use crate::lattice::{ComplexSeq, LatticeWindow, Tridiag};
use crate::modes::{bold_pairing, build_modes, Mode, ModeBundle};
use crate::soliton::{background, comoving, log_cosh, tau_ratio};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sites next to either edge left out of interior residuals.
pub const EDGE_BAND: usize = 10;

/// Largest relative orthogonality defect accepted by the solvers.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ShiftOp {
    /// `e^∂`
    Up,
    /// `e^{-∂}`
    Down,
    /// `(e^∂ - 1)^{-1}`
    InvForwardDiff,
    /// `(1 - e^{-∂})^{-1}`
    InvBackwardDiff,
}

/// Apply a shift with zero extension. The inverse differences are only
/// bounded on `ℓ²_α` for `α > 0`.
pub fn apply_shift(op: ShiftOp, f: &ComplexSeq, alpha: f64) -> Result<ComplexSeq> {
    match op {
        ShiftOp::Up => Ok(f.shift_up()),
        ShiftOp::Down => Ok(f.shift_down()),
        _ if alpha <= 0.0 => Err(TodaError::NonPositiveAlpha(alpha)),
        ShiftOp::InvForwardDiff => Ok(f.inv_forward_diff()),
        ShiftOp::InvBackwardDiff => Ok(f.inv_backward_diff()),
    }
}

/// `1/(1 - e^{-α})`, the `ℓ²_α` bound on both inverse differences.
pub fn inverse_shift_bound(alpha: f64) -> f64 {
    1.0 / (1.0 - (-alpha).exp())
}

/// Norm of `f` in `ℓ²_α` relative to a scale, zero when the scale is.
fn relative(num: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        num / scale
    }
}

/// The six Darboux operators at fixed `(t, η)`, plus the two combinations
/// that enter the correspondence.
#[derive(Debug, Clone)]
pub struct DarbouxOps {
    t: f64,
    eta: f64,
    params: SolitonParams,
    /// `A(-iη)`
    pub a: Tridiag,
    /// `B(iη)`
    pub b: Tridiag,
    /// `A'(-iη)`
    pub a_prime: Tridiag,
    /// `B'(iη)`
    pub b_prime: Tridiag,
    /// `C(η) = A(-iη) - B(iη)`
    pub c: Tridiag,
    /// `C'(η) = e^∂B'(iη) - A'(-iη)`
    pub c_prime: Tridiag,
    /// `A'(-iη) - B'(iη)`
    pub a_prime_minus_b_prime: Tridiag,
    /// `e^∂B(iη) - A(-iη)`
    pub shifted_b_minus_a: Tridiag,
}

pub fn build_ops(t: f64, eta: f64, params: &SolitonParams, window: LatticeWindow) -> DarbouxOps {
    let field = |n: i64| {
        let b = background(n, t, params);
        (Complex64::from(b.u), Complex64::from(b.v))
    };
    let ie = I * eta;
    let op = |f: &dyn Fn(i64) -> (Complex64, Complex64, Complex64)| Tridiag::from_fn(window, f);
    let a = op(&|n| {
        let (u, _) = field(n);
        let (um, _) = field(n - 1);
        (ZERO, -ie + um, -u)
    });
    let b = op(&|n| {
        let (_, v) = field(n);
        let (_, vm) = field(n - 1);
        (vm, ie - v, ZERO)
    });
    let a_prime = op(&|n| {
        let (u, _) = field(n);
        let (um, _) = field(n - 1);
        (um, -ie - u, ZERO)
    });
    let b_prime = op(&|n| {
        let (_, v) = field(n);
        let (_, vm) = field(n - 1);
        (ie + vm, -v, ZERO)
    });
    let c_prime = op(&|n| {
        let (u, v) = field(n);
        let (um, _) = field(n - 1);
        let (_, vp) = field(n + 1);
        (-um, 2.0 * ie + v + u, -vp)
    });
    let shifted_b_minus_a = op(&|n| {
        let (u, v) = field(n);
        let (um, _) = field(n - 1);
        let (_, vp) = field(n + 1);
        (ZERO, v + ie - um, ie - vp + u)
    });
    DarbouxOps {
        t,
        eta,
        params: *params,
        c: a.sub_op(&b).expect("same window"),
        a_prime_minus_b_prime: a_prime.sub_op(&b_prime).expect("same window"),
        a,
        b,
        a_prime,
        b_prime,
        c_prime,
        shifted_b_minus_a,
    }
}

impl DarbouxOps {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn window(&self) -> LatticeWindow {
        self.c.window()
    }

    pub fn params(&self) -> &SolitonParams {
        &self.params
    }

    /// `(τ' D(±η) τ'^{-1} g)` when `inverse` is false, `τ'^{-1} D(±η) τ' g`
    /// otherwise, through ratios of the signed tau function.
    fn conjugated_d(&self, g: &ComplexSeq, sign: f64, inverse: bool) -> ComplexSeq {
        let centre = Complex64::new(2.0 * self.params.cosh_k(), 2.0 * sign * self.eta);
        g.map(|n, v| {
            let up = tau_ratio(n, self.t, &self.params);
            let down = tau_ratio(n - 1, self.t, &self.params);
            let (to_next, to_prev) = if inverse { (up, 1.0 / down) } else { (1.0 / up, down) };
            g.get(n + 1) * to_next + g.get(n - 1) * to_prev + centre * v
        })
    }

    /// `-e^{-∂} τ' D(η) τ'^{-1} e^∂ f`, which equals `C(η) f`.
    pub fn c_factored(&self, f: &ComplexSeq) -> ComplexSeq {
        self.conjugated_d(&f.shift_up(), 1.0, false)
            .shift_down()
            .scale((-1.0).into())
    }

    /// `-(1 - e^{-∂}) τ'^{-1} D(-η) τ' e^∂ f`, which equals `C'(η)(e^∂ - 1) f`
    /// since `C'(η) = -(1 - e^{-∂}) τ'^{-1} D(-η) τ' (1 - e^{-∂})^{-1}`.
    pub fn c_prime_forward_diff_factored(&self, f: &ComplexSeq) -> ComplexSeq {
        self.conjugated_d(&f.shift_up(), -1.0, true)
            .backward_diff()
            .scale((-1.0).into())
    }

    /// `e^{-∂} g̃^{+,*}(η)` from the closed form, exact at the left edge.
    pub fn cokernel_vector(&self) -> ComplexSeq {
        let d = self.params.dispersion(-self.eta);
        let k = self.params.kappa();
        ComplexSeq::from_fn(self.window(), |n| {
            let z = comoving(n - 1, self.t, &self.params);
            0.5 * (self.t * d.delta + d.gamma * z - log_cosh(k * z)).exp()
        })
    }

    /// `|⟨f, e^{-∂}g̃^{+,*}⟩|` relative to `‖f‖_α ‖e^{-∂}g̃^{+,*}‖_{-α}`.
    pub fn orthogonality_defect(&self, f: &ComplexSeq) -> Result<f64> {
        let alpha = self.params.alpha();
        let g = self.cokernel_vector();
        Ok(relative(
            f.pairing(&g)?.norm(),
            f.weighted_norm(alpha) * g.weighted_norm(-alpha),
        ))
    }

    /// Solve `C(η) u = f` through the Green kernel of `D(η)`.
    ///
    /// Right of the soliton the direct formula cancels catastrophically in
    /// `ℓ²_α`; there the orthogonality condition is used to rewrite the sum
    /// over `m < n` as minus the sum over `m ≥ n`.
    pub fn solve_c(&self, f: &ComplexSeq) -> Result<ComplexSeq> {
        if f.window() != self.window() {
            return Err(TodaError::WindowMismatch);
        }
        let defect = self.orthogonality_defect(f)?;
        if defect > ORTHOGONALITY_TOL {
            return Err(TodaError::OrthogonalityDefect {
                defect,
                tol: ORTHOGONALITY_TOL,
            });
        }
        let kernel = GreenKernel::new(self.eta, &self.params)?;
        let k = self.params.kappa();
        let w = self.window();
        let log_tau: Vec<f64> = w
            .sites()
            .map(|n| log_cosh(k * comoving(n - 1, self.t, &self.params)))
            .collect();
        let lb = kernel.log_beta_minus;
        let inv_two_mu = 1.0 / (2.0 * kernel.mu);
        let switch = (1.0 + self.params.speed() * self.t).ceil() as i64;
        let fv = f.values();
        let values = w
            .sites()
            .enumerate()
            .map(|(i, n)| {
                let term = |j: usize, power: Complex64| {
                    let m = w.site(j);
                    let sign = if (n - m).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    sign * (power + (log_tau[i] - log_tau[j])).exp() * fv[j]
                };
                let mut acc = ZERO;
                if n < switch {
                    for j in 0..fv.len() {
                        let gap = (i as i64 - j as i64).abs() as f64;
                        acc += term(j, -gap * lb);
                    }
                } else {
                    for j in i..fv.len() {
                        let gap = (j - i) as f64;
                        acc += term(j, -gap * lb) - term(j, gap * lb);
                    }
                }
                -acc * inv_two_mu
            })
            .collect();
        ComplexSeq::from_values(w, values)
    }

    /// Minimum-norm solution of `C(η) u = f` in `ℓ²_α` through a truncated
    /// singular-value decomposition; a cross-check for [`Self::solve_c`].
    pub fn solve_c_pinv(&self, f: &ComplexSeq) -> Result<ComplexSeq> {
        let alpha = self.params.alpha();
        let m = self.c.weighted_dense(alpha);
        let rhs = weighted_vector(f, alpha);
        let svd = m.svd(true, true);
        let cutoff = 1e-8 * svd.singular_values.max();
        let x = svd
            .solve(&rhs, cutoff)
            .map_err(|e| TodaError::NonFinite(e.to_string()))?;
        unweighted_seq(f.window(), &x, alpha)
    }

    /// Least-squares solution of `C'(η) u = f` in `ℓ²_α` with `u` pinned to
    /// zero at site `pin`.
    pub fn solve_c_prime_pinned(&self, f: &ComplexSeq, pin: i64) -> Result<ComplexSeq> {
        let w = self.window();
        let pin_idx = w.index_of(pin).ok_or(TodaError::SiteOutsideWindow(pin))?;
        let alpha = self.params.alpha();
        let m = self.c_prime.weighted_dense(alpha).remove_column(pin_idx);
        let rhs = weighted_vector(f, alpha);
        let svd = m.svd(true, true);
        let cutoff = 1e-14 * svd.singular_values.max();
        let y = svd
            .solve(&rhs, cutoff)
            .map_err(|e| TodaError::NonFinite(e.to_string()))?;
        let full = y.clone().insert_row(pin_idx, ZERO);
        unweighted_seq(w, &full, alpha)
    }
}

fn weighted_vector(f: &ComplexSeq, alpha: f64) -> DVector<Complex64> {
    DVector::from_iterator(
        f.len(),
        f.iter().map(|(n, v)| v * (alpha * n as f64).exp()),
    )
}

fn unweighted_seq(window: LatticeWindow, x: &DVector<Complex64>, alpha: f64) -> Result<ComplexSeq> {
    let values = window
        .sites()
        .zip(x.iter())
        .map(|(n, v)| v * (-alpha * n as f64).exp())
        .collect();
    ComplexSeq::from_values(window, values)
}

/// `k_n(η) = β₋(η)^{-|n|} / 2μ(η)`, the decaying fundamental solution of `D(η)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenKernel {
    pub eta: f64,
    pub mu: Complex64,
    pub beta_minus: Complex64,
    log_beta_minus: Complex64,
    cosh_k: f64,
}

impl GreenKernel {
    pub fn new(eta: f64, params: &SolitonParams) -> Result<Self> {
        let d = params.dispersion(eta);
        if d.mu.norm() < 1e-10 {
            return Err(TodaError::NearBranchPoint(d.mu.norm()));
        }
        Ok(Self {
            eta,
            mu: d.mu,
            beta_minus: d.beta_minus,
            log_beta_minus: d.beta_minus.ln(),
            cosh_k: params.cosh_k(),
        })
    }

    pub fn value(&self, n: i64) -> Complex64 {
        (-(n.unsigned_abs() as f64) * self.log_beta_minus).exp() / (2.0 * self.mu)
    }

    pub fn sequence(&self, window: LatticeWindow) -> ComplexSeq {
        ComplexSeq::from_fn(window, |n| self.value(n))
    }

    /// `(D(η) k)_n` evaluated with the exact kernel at every neighbour.
    pub fn apply_d_exact(&self, n: i64) -> Complex64 {
        let centre = Complex64::new(2.0 * self.cosh_k, 2.0 * self.eta);
        self.value(n + 1) + self.value(n - 1) + centre * self.value(n)
    }

    /// `‖k‖_{ℓ¹} = (1/|2μ|)(1/(1 - |β₊|) + 1/(|β₋| - 1))`.
    pub fn l1_norm(&self) -> f64 {
        let b = self.beta_minus.norm();
        (1.0 / (1.0 - 1.0 / b) + 1.0 / (b - 1.0)) / (2.0 * self.mu.norm())
    }
}

/// `D(±η)` with zero extension, for residual checks.
pub fn d_operator(eta: f64, params: &SolitonParams, window: LatticeWindow) -> Tridiag {
    let one = Complex64::new(1.0, 0.0);
    let centre = Complex64::new(2.0 * params.cosh_k(), 2.0 * eta);
    Tridiag::from_fn(window, |_| (one, centre, one))
}

/// Which conjugation of `D(η)` to invert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TauConjugation {
    /// Solve `τ' D(η) τ'^{-1} u = f`, i.e. `u = τ' k ∗ (f/τ')`.
    Tau,
    /// Solve `τ'^{-1} D(η) τ' u = f`, i.e. `u = τ'^{-1} k ∗ (τ' f)`.
    InverseTau,
    /// Solve `D(η) u = f`.
    None,
}

/// Convolution with the Green kernel under a tau conjugation at time `t`.
pub fn solve_d(
    eta: f64,
    f: &ComplexSeq,
    conjugation: TauConjugation,
    t: f64,
    params: &SolitonParams,
) -> Result<ComplexSeq> {
    let kernel = GreenKernel::new(eta, params)?;
    let w = f.window();
    let k = params.kappa();
    let side = match conjugation {
        TauConjugation::Tau => 1.0,
        TauConjugation::InverseTau => -1.0,
        TauConjugation::None => 0.0,
    };
    let log_tau: Vec<f64> = w
        .sites()
        .map(|n| side * log_cosh(k * comoving(n, t, params)))
        .collect();
    let fv = f.values();
    let inv_two_mu = 1.0 / (2.0 * kernel.mu);
    let values = (0..fv.len())
        .map(|i| {
            let mut acc = ZERO;
            for (j, fj) in fv.iter().enumerate() {
                let gap = (i as i64 - j as i64).abs();
                let sign = if side == 0.0 || gap % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * (-(gap as f64) * kernel.log_beta_minus + (log_tau[i] - log_tau[j])).exp() * fj;
            }
            acc * inv_two_mu
        })
        .collect();
    ComplexSeq::from_values(w, values)
}

/// Near-kernel directions of a truncated operator seen from `ℓ²_α`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelCount {
    /// Directions with `σ/σ_max` below the threshold.
    pub near_zero: usize,
    /// Near-zero directions whose singular vector lives away from the edges.
    pub genuine: usize,
    pub smallest_ratio: f64,
    /// Edge-band mass of each near-zero right singular vector.
    pub edge_masses: Vec<f64>,
}

/// Count near-zero singular values of `W A W^{-1}`. A direction counts as a
/// genuine kernel element when less than half of its right singular vector
/// sits within [`EDGE_BAND`] sites of an edge; the rest are truncation artefacts.
pub fn kernel_count(op: &Tridiag, alpha: f64, threshold: f64) -> KernelCount {
    let m: DMatrix<Complex64> = op.weighted_dense(alpha);
    let len = m.nrows();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right vectors");
    let top = svd.singular_values.max();
    let mut edge_masses = Vec::new();
    let mut smallest_ratio = f64::INFINITY;
    for (i, s) in svd.singular_values.iter().enumerate() {
        let ratio = s / top;
        smallest_ratio = smallest_ratio.min(ratio);
        if ratio < threshold {
            let row = v_t.row(i);
            let mass: f64 = (0..len)
                .filter(|&j| j < EDGE_BAND || j + EDGE_BAND >= len)
                .map(|j| row[j].norm_sqr())
                .sum();
            edge_masses.push(mass);
        }
    }
    KernelCount {
        near_zero: edge_masses.len(),
        genuine: edge_masses.iter().filter(|&&m| m < 0.5).count(),
        smallest_ratio,
        edge_masses,
    }
}

/// `‖C'(η)g⁺‖_α / ‖g⁺‖_α` and `‖C(η)^* e^{-∂}g̃^{+,*}‖_{-α} / ‖e^{-∂}g̃^{+,*}‖_{-α}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelResiduals {
    pub c_prime_g_plus: f64,
    pub c_adjoint_cokernel: f64,
}

pub fn kernel_residuals(ops: &DarbouxOps, bundle: &ModeBundle) -> Result<KernelResiduals> {
    let alpha = ops.params.alpha();
    let g = &bundle.signed()?.g_plus.q;
    let co = ops.cokernel_vector();
    Ok(KernelResiduals {
        c_prime_g_plus: relative(ops.c_prime.apply(g)?.weighted_norm(alpha), g.weighted_norm(alpha)),
        c_adjoint_cokernel: relative(
            ops.c.adjoint().apply(&co)?.weighted_norm(-alpha),
            co.weighted_norm(-alpha),
        ),
    })
}

/// Residuals of the two rows of the correspondence between a free state `Q`
/// and a soliton state `Q'`, each relative to `‖Q'‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DarbouxResidual {
    /// Interior weighted residual of `C Q₁ - (A'-B')Q'₁ - (1-e^{-∂})Q'₂`.
    pub row1: f64,
    /// Interior weighted residual of `(e^∂B-A)Q₁ + (e^∂-1)Q₂ - C'Q'₁`.
    pub row2: f64,
    /// Weighted residual within the edge band, same normalisation.
    pub edge: f64,
}

impl DarbouxResidual {
    pub fn interior(&self) -> f64 {
        self.row1 + self.row2
    }
}

pub fn darboux_residual(free: &Mode, soliton: &Mode, ops: &DarbouxOps) -> Result<DarbouxResidual> {
    let alpha = ops.params.alpha();
    let r1 = ops
        .c
        .apply(&free.q)?
        .sub(&ops.a_prime_minus_b_prime.apply(&soliton.q)?)?
        .sub(&soliton.p.backward_diff())?;
    let r2 = ops
        .shifted_b_minus_a
        .apply(&free.q)?
        .add(&free.p.forward_diff())?
        .sub(&ops.c_prime.apply(&soliton.q)?)?;
    let mut scale = soliton.weighted_norm(alpha);
    if scale == 0.0 {
        scale = free.weighted_norm(alpha);
    }
    let edge = r1.edge_weighted_norm(alpha, EDGE_BAND).hypot(r2.edge_weighted_norm(alpha, EDGE_BAND));
    Ok(DarbouxResidual {
        row1: relative(r1.interior_weighted_norm(alpha, EDGE_BAND), scale),
        row2: relative(r2.interior_weighted_norm(alpha, EDGE_BAND), scale),
        edge: relative(edge, scale),
    })
}

/// Remove the `(g⁻, ∂ₜg⁻)` component that obstructs the forward map, so that
/// the pairing with `(∂ₜg^{+,*}, -g^{+,*})` vanishes.
pub fn make_compatible(soliton: &Mode, bundle: &ModeBundle) -> Result<Mode> {
    let s = bundle.signed()?;
    let cross = bold_pairing(&s.g_minus, &s.g_plus_star)?;
    if cross.norm() < 1e-12 {
        return Err(TodaError::DegenerateGram(cross.norm()));
    }
    let coef = bold_pairing(soliton, &s.g_plus_star)? / cross;
    soliton.axpy(-coef, &s.g_minus)
}

/// A free state with its amplification `‖Q‖_α / ‖Q'‖_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct DarbouxImage {
    pub state: Mode,
    pub amplification: f64,
}

/// Map a soliton state `Q'` to the free state `Q` solving both rows.
pub fn darboux_forward(soliton: &Mode, bundle: &ModeBundle, ops: &DarbouxOps) -> Result<DarbouxImage> {
    let alpha = ops.params.alpha();
    let dual = &bundle.signed()?.g_plus_star;
    let defect = relative(
        bold_pairing(soliton, dual)?.norm(),
        soliton.weighted_norm(alpha) * dual.weighted_norm(-alpha),
    );
    if defect > ORTHOGONALITY_TOL {
        return Err(TodaError::OrthogonalityDefect {
            defect,
            tol: ORTHOGONALITY_TOL,
        });
    }
    let rhs1 = ops
        .a_prime_minus_b_prime
        .apply(&soliton.q)?
        .add(&soliton.p.backward_diff())?;
    let q1 = ops.solve_c(&rhs1)?;
    let q2 = ops
        .c_prime
        .apply(&soliton.q)?
        .sub(&ops.shifted_b_minus_a.apply(&q1)?)?
        .inv_forward_diff();
    let state = Mode { q: q1, p: q2 };
    Ok(DarbouxImage {
        amplification: relative(state.weighted_norm(alpha), soliton.weighted_norm(alpha)),
        state,
    })
}

/// Map a free state `Q` back to the soliton state `Q'` normalised so that its
/// pairing with `(∂ₜg^{-,*}, -g^{-,*})` vanishes.
pub fn darboux_inverse(free: &Mode, bundle: &ModeBundle, ops: &DarbouxOps, pin: i64) -> Result<Mode> {
    let rhs2 = ops
        .shifted_b_minus_a
        .apply(&free.q)?
        .add(&free.p.forward_diff())?;
    let q1 = ops.solve_c_prime_pinned(&rhs2, pin)?;
    let q2 = ops
        .c
        .apply(&free.q)?
        .sub(&ops.a_prime_minus_b_prime.apply(&q1)?)?
        .inv_backward_diff();
    let particular = Mode { q: q1, p: q2 };
    let s = bundle.signed()?;
    let norm = bold_pairing(&s.g_plus, &s.g_minus_star)?;
    if norm.norm() < 1e-12 {
        return Err(TodaError::DegenerateGram(norm.norm()));
    }
    let coef = -bold_pairing(&particular, &s.g_minus_star)? / norm;
    particular.axpy(coef, &s.g_plus)
}

/// A soliton state made compatible at `(t, η)` together with its free image.
pub fn compatible_pair(
    soliton: &Mode,
    t: f64,
    eta: f64,
    params: &SolitonParams,
) -> Result<(ModeState, ModeState)> {
    let window = soliton.window();
    let bundle = build_modes(t, eta, params, window)?;
    let ops = build_ops(t, eta, params, window);
    let sol = make_compatible(soliton, &bundle)?;
    let image = darboux_forward(&sol, &bundle, &ops)?;
    Ok((
        ModeState::new(eta, t, Representation::QSoliton, sol),
        ModeState::new(eta, t, Representation::QFree, image.state),
    ))
}

/// Largest interior correspondence residual along a joint evolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub max_residual: f64,
    /// Largest edge-band residual seen, same normalisation.
    pub max_edge: f64,
    /// `(t, interior residual)` at each sample time.
    pub series: Vec<(f64, f64)>,
}

/// Evolve a soliton state and a free state side by side with step `dt` and
/// record the correspondence residual every `sample_every` up to `horizon`.
pub fn correspondence_drift(
    soliton: &ModeState,
    free: &ModeState,
    horizon: f64,
    sample_every: f64,
    dt: f64,
    params: &SolitonParams,
) -> Result<DriftReport> {
    if soliton.representation != Representation::QSoliton {
        return Err(TodaError::Representation {
            expected: "Q'-soliton",
            found: soliton.representation.label(),
        });
    }
    if free.representation != Representation::QFree {
        return Err(TodaError::Representation {
            expected: "Q-free",
            found: free.representation.label(),
        });
    }
    if soliton.window() != free.window() {
        return Err(TodaError::WindowMismatch);
    }
    let window = soliton.window();
    let (mut sol, mut fr) = (soliton.clone(), free.clone());
    let mut report = DriftReport {
        max_residual: 0.0,
        max_edge: 0.0,
        series: Vec::new(),
    };
    let count = (horizon / sample_every).round() as usize;
    for j in 0..=count {
        let target = soliton.t + j as f64 * sample_every;
        if j > 0 {
            sol = evolve_ode(&sol, target, dt, params)?;
            fr = evolve_ode(&fr, target, dt, params)?;
        }
        let ops = build_ops(target, soliton.eta, params, window);
        let res = darboux_residual(&fr.mode, &sol.mode, &ops)?;
        report.max_residual = report.max_residual.max(res.interior());
        report.max_edge = report.max_edge.max(res.edge);
        report.series.push((target, res.interior()));
    }
    Ok(report)
}

/// Relative residuals of the identities linking the Darboux operators to the
/// secular modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShiftIdentityReport {
    pub eta: f64,
    pub t: f64,
    /// `(A'-B')g⁺ + (1-e^{-∂})∂ₜg⁺ = 0`, weight `α`.
    pub plus_mode: f64,
    /// `∂ₜg^{+,*} = (A'-B')^* e^{-∂}g̃^{+,*}`, weight `-α`.
    pub plus_dual: f64,
    /// `(A'-B')g⁻ + (1-e^{-∂})∂ₜg⁻ = -2iη(1-e^{-2∂})g̃⁻`, weight `α`.
    pub minus_mode: f64,
    /// `∂ₜg^{-,*} = (A'-B')^* e^{-∂}g̃^{-,*} - 2iη(1+e^{-∂})g̃^{-,*}`, weight `-α`.
    pub minus_dual: f64,
    /// `e^∂Ce^{-∂}{Φ⁰(a)Φ⁰*(β₋)} = -2iη(e^∂-e^{-∂})g̃⁻`, pointwise.
    pub vacuum_minus: f64,
    /// `e^∂Ce^{-∂}{Φ⁰(a)Φ⁰*(β₊)} = -2iη(e^∂-e^{-∂})g̃^{-,*}`, pointwise.
    pub vacuum_plus: f64,
}

impl ShiftIdentityReport {
    /// Largest of the four mode identities, which carry the truncation error.
    pub fn max_mode(&self) -> f64 {
        [self.plus_mode, self.plus_dual, self.minus_mode, self.minus_dual]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.max_mode().max(self.vacuum_minus).max(self.vacuum_plus)
    }
}

fn weighted_identity(terms: &[ComplexSeq], alpha: f64) -> Result<f64> {
    let mut sum = terms[0].clone();
    for t in &terms[1..] {
        sum = sum.add(t)?;
    }
    let scale = terms.iter().map(|t| t.weighted_norm(alpha)).fold(0.0, f64::max);
    Ok(relative(sum.weighted_norm(alpha), scale))
}

/// Evaluate the six identities on `window`. The four mode identities use
/// zero extension, so their residual is pure truncation and shrinks as the
/// window grows. The vacuum products grow towards one edge in every weighted
/// space, so those two are compared site by site with exact neighbours.
pub fn shift_identities(
    t: f64,
    eta: f64,
    params: &SolitonParams,
    window: LatticeWindow,
) -> Result<ShiftIdentityReport> {
    let alpha = params.alpha();
    let ops = build_ops(t, eta, params, window);
    let bundle = build_modes(t, eta, params, window)?;
    let s = bundle.signed()?;
    let apb = &ops.a_prime_minus_b_prime;
    let apb_adj = apb.adjoint();
    let two_ie = 2.0 * I * eta;

    let plus_mode = weighted_identity(
        &[apb.apply(&s.g_plus.q)?, s.g_plus.p.backward_diff()],
        alpha,
    )?;
    let plus_dual = weighted_identity(
        &[
            apb_adj.apply(&s.tg_plus_star.q.shift_down())?,
            s.g_plus_star.p.scale((-1.0).into()),
        ],
        -alpha,
    )?;
    let tgm = &s.tg_minus.q;
    let minus_mode = weighted_identity(
        &[
            apb.apply(&s.g_minus.q)?,
            s.g_minus.p.backward_diff(),
            tgm.sub(&tgm.shifted(-2))?.scale(two_ie),
        ],
        alpha,
    )?;
    let tgms = &s.tg_minus_star.q;
    let minus_dual = weighted_identity(
        &[
            apb_adj.apply(&tgms.shift_down())?,
            tgms.add(&tgms.shift_down())?.scale(-two_ie),
            s.g_minus_star.p.scale((-1.0).into()),
        ],
        -alpha,
    )?;

    let wide = window.widened(1);
    let wide_bundle = build_modes(t, eta, params, wide)?;
    let ws = wide_bundle.signed()?;
    let d = params.dispersion(eta);
    let vacuum_minus = vacuum_identity(t, eta, params, window, d.beta_minus, &ws.tg_minus.q)?;
    let vacuum_plus = vacuum_identity(t, eta, params, window, d.beta_plus, &ws.tg_minus_star.q)?;

    Ok(ShiftIdentityReport {
        eta,
        t,
        plus_mode,
        plus_dual,
        minus_mode,
        minus_dual,
        vacuum_minus,
        vacuum_plus,
    })
}

/// Site-wise relative residual of
/// `e^∂Ce^{-∂}{Φ⁰(a)Φ⁰*(β)} + 2iη(e^∂-e^{-∂})h` on `window`, with `h`
/// given on the window widened by one site.
fn vacuum_identity(
    t: f64,
    eta: f64,
    params: &SolitonParams,
    window: LatticeWindow,
    beta: Complex64,
    h: &ComplexSeq,
) -> Result<f64> {
    let (s, x) = (0.5 * t, 0.5 * t);
    let a = Complex64::from(params.pole());
    let f = |n: i64| -> Result<Complex64> { Ok(phi0(a, n, s, x)? * phi0_star(beta, n, s, x)?) };
    let two_ie = 2.0 * I * eta;
    let mut worst = 0.0f64;
    for n in window.sites() {
        let here = background(n, t, params);
        let next = background(n + 1, t, params);
        let terms = [
            (-two_ie + here.u + next.v) * f(n)?,
            -next.u * f(n + 1)?,
            -here.v * f(n - 1)?,
            two_ie * h.get(n + 1),
            -two_ie * h.get(n - 1),
        ];
        let sum: Complex64 = terms.iter().sum();
        let scale = terms.iter().map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(relative(sum.norm(), scale));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> SolitonParams {
        SolitonParams::new(1.0, 0.5).unwrap()
    }

    fn window() -> LatticeWindow {
        LatticeWindow::new(-50, 70).unwrap()
    }

    fn random_compact(w: LatticeWindow, rng: &mut ChaCha8Rng, half: i64) -> ComplexSeq {
        ComplexSeq::from_fn(w, |n| {
            if n.abs() <= half {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                ZERO
            }
        })
    }

    fn bump_mode(w: LatticeWindow, rng: &mut ChaCha8Rng) -> Mode {
        let mut gauss = || {
            let c = rng.gen_range(-8.0..8.0);
            let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            ComplexSeq::from_fn(w, move |n| amp * (-((n as f64 - c) / 3.0).powi(2)).exp())
        };
        let q = gauss().add(&gauss()).unwrap();
        let p = gauss().add(&gauss()).unwrap();
        Mode { q, p }
    }

    #[test]
    fn shifts_follow_convention() {
        let w = window();
        let spike = ComplexSeq::spike(w, 0).unwrap();
        let up = apply_shift(ShiftOp::Up, &spike, 0.5).unwrap();
        assert_eq!(up.get(-1), Complex64::new(1.0, 0.0));
        assert!(apply_shift(ShiftOp::InvForwardDiff, &spike, 0.0).is_err());
        let inv = apply_shift(ShiftOp::InvForwardDiff, &spike, 0.5).unwrap();
        let back = inv.forward_diff();
        assert!(back.sub(&spike).unwrap().max_abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn inverse_shift_bound_holds(seed in 0u64..200, alpha in 0.1f64..1.5) {
            let w = LatticeWindow::new(-30, 30).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_compact(w, &mut rng, 20);
            let bound = inverse_shift_bound(alpha) * f.weighted_norm(alpha);
            for op in [ShiftOp::InvForwardDiff, ShiftOp::InvBackwardDiff] {
                let g = apply_shift(op, &f, alpha).unwrap();
                prop_assert!(g.weighted_norm(alpha) <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn operator_combinations_match_definitions() {
        let p = params();
        let w = window();
        let ops = build_ops(0.7, 0.3, &p, w);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = random_compact(w, &mut rng, 30);
        let c_prime = ops
            .b_prime
            .apply(&f)
            .unwrap()
            .shift_up()
            .sub(&ops.a_prime.apply(&f).unwrap())
            .unwrap();
        let direct = ops.c_prime.apply(&f).unwrap();
        assert!(c_prime.sub(&direct).unwrap().max_abs() < 1e-13);
        let sbma = ops
            .b
            .apply(&f)
            .unwrap()
            .shift_up()
            .sub(&ops.a.apply(&f).unwrap())
            .unwrap();
        assert!(sbma.sub(&ops.shifted_b_minus_a.apply(&f).unwrap()).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn adjoints_of_a_and_b() {
        let p = params();
        let w = window();
        let eta = 0.4;
        let ops = build_ops(0.3, eta, &p, w);
        let u = |n: i64| Complex64::from(background(n, 0.3, &p).u);
        let v = |n: i64| Complex64::from(background(n, 0.3, &p).v);
        // A* = iη + e^{-∂}u(e^∂ - 1), B* = -iη + v(e^∂ - 1)
        let a_adj = Tridiag::from_fn(w, |n| (-u(n - 1), I * eta + u(n - 1), ZERO));
        let b_adj = Tridiag::from_fn(w, |n| (ZERO, -I * eta - v(n), v(n)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let f = random_compact(w, &mut rng, 40);
            let g = random_compact(w, &mut rng, 40);
            let lhs = ops.a.apply(&f).unwrap().pairing(&g).unwrap();
            let rhs = f.pairing(&a_adj.apply(&g).unwrap()).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
            let lhs = ops.b.apply(&f).unwrap().pairing(&g).unwrap();
            let rhs = f.pairing(&b_adj.apply(&g).unwrap()).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn factorizations_on_random_vectors() {
        let p = params();
        let w = LatticeWindow::new(-40, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (t, eta) in [(0.0, 0.2), (1.3, -0.7), (4.0, 1.9)] {
            let ops = build_ops(t, eta, &p, w);
            for _ in 0..50 {
                let f = random_compact(w, &mut rng, 25);
                let c = ops.c.apply(&f).unwrap();
                let err = ops.c_factored(&f).sub(&c).unwrap();
                assert!(err.max_abs() < 1e-10 * c.max_abs());
                let cp = ops.c_prime.apply(&f.forward_diff()).unwrap();
                let err = ops.c_prime_forward_diff_factored(&f).sub(&cp).unwrap();
                assert!(err.max_abs() < 1e-10 * cp.max_abs());
            }
        }
    }

    #[test]
    fn green_kernel_is_fundamental_solution() {
        let p = params();
        for eta in [0.0, 0.2, -1.1, 3.0] {
            let k = GreenKernel::new(eta, &p).unwrap();
            for n in -20..=20 {
                let expected = if n == 0 { 1.0 } else { 0.0 };
                assert!((k.apply_d_exact(n) - expected).norm() < 1e-14);
            }
            let summed: f64 = (-400..=400).map(|n| k.value(n).norm()).sum();
            assert_relative_eq!(summed, k.l1_norm(), max_relative = 1e-12);
        }
    }

    #[test]
    fn solve_d_spike_and_residual() {
        let p = params();
        let w = LatticeWindow::new(-40, 40).unwrap();
        let spike = ComplexSeq::spike(w, 0).unwrap();
        let u = solve_d(0.3, &spike, TauConjugation::None, 0.0, &p).unwrap();
        let k = GreenKernel::new(0.3, &p).unwrap().sequence(w);
        assert!(u.sub(&k).unwrap().max_abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_compact(w, &mut rng, 10);
        for conj in [TauConjugation::Tau, TauConjugation::InverseTau, TauConjugation::None] {
            let u = solve_d(0.3, &f, conj, 0.5, &p).unwrap();
            let ops = build_ops(0.5, 0.3, &p, w);
            let applied = match conj {
                TauConjugation::Tau => ops.conjugated_d(&u, 1.0, false),
                TauConjugation::InverseTau => ops.conjugated_d(&u, 1.0, true),
                TauConjugation::None => d_operator(0.3, &p, w).apply(&u).unwrap(),
            };
            let r = applied.sub(&f).unwrap();
            assert!(r.interior_weighted_norm(0.0, EDGE_BAND) < 1e-10 * f.weighted_norm(0.0), "{conj:?}");
        }
    }

    #[test]
    fn solve_c_round_trip_and_pinv_agree() {
        let p = params();
        let w = window();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (t, eta) in [(0.0, 0.1), (2.0, 0.3)] {
            let ops = build_ops(t, eta, &p, w);
            let u0 = random_compact(w, &mut rng, 15);
            let f = ops.c.apply(&u0).unwrap();
            assert!(ops.orthogonality_defect(&f).unwrap() < 1e-12);
            let u = ops.solve_c(&f).unwrap();
            let r = ops.c.apply(&u).unwrap().sub(&f).unwrap();
            assert!(r.interior_weighted_norm(0.5, EDGE_BAND) < 1e-9 * f.weighted_norm(0.5));
            assert!(u.sub(&u0).unwrap().interior_weighted_norm(0.5, EDGE_BAND) < 1e-9 * u0.weighted_norm(0.5));
            let v = ops.solve_c_pinv(&f).unwrap();
            assert!(v.sub(&u).unwrap().interior_weighted_norm(0.5, EDGE_BAND) < 1e-7 * u.weighted_norm(0.5));
        }
    }

    #[test]
    fn solve_c_rejects_defect_and_maps_zero() {
        let p = params();
        let w = window();
        let ops = build_ops(0.0, 0.2, &p, w);
        let zero = ComplexSeq::zeros(w);
        assert_eq!(ops.solve_c(&zero).unwrap().max_abs(), 0.0);
        let spike = ComplexSeq::spike(w, 1).unwrap();
        assert!(matches!(ops.solve_c(&spike), Err(TodaError::OrthogonalityDefect { .. })));
    }

    #[test]
    fn solve_c_after_projection() {
        let p = params();
        let w = window();
        let ops = build_ops(0.5, 0.2, &p, w);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_compact(w, &mut rng, 12);
        let g = ops.cokernel_vector();
        // project along a compact direction that is not orthogonal to g
        let e = ComplexSeq::spike(w, 1).unwrap();
        let coef = f.pairing(&g).unwrap() / e.pairing(&g).unwrap();
        let f = f.axpy(-coef, &e).unwrap();
        let u = ops.solve_c(&f).unwrap();
        let r = ops.c.apply(&u).unwrap().sub(&f).unwrap();
        assert!(r.interior_weighted_norm(0.5, EDGE_BAND) < 1e-9 * f.weighted_norm(0.5));
    }

    #[test]
    fn kernel_structure() {
        let p = params();
        let w = window();
        let bundle = build_modes(0.0, 0.2, &p, w).unwrap();
        let ops = build_ops(0.0, 0.2, &p, w);
        let res = kernel_residuals(&ops, &bundle).unwrap();
        assert!(res.c_prime_g_plus < 1e-9 && res.c_adjoint_cokernel < 1e-9, "{res:?}");
        assert_eq!(kernel_count(&ops.c, 0.5, 1e-6).genuine, 0);
        assert_eq!(kernel_count(&ops.c_prime, 0.5, 1e-6).genuine, 1);
        let high = build_ops(0.0, 2.5, &p, w);
        assert_eq!(kernel_count(&high.c, 0.5, 1e-6).genuine, 0);
        assert_eq!(kernel_count(&high.c_prime, 0.5, 1e-6).genuine, 0);
    }

    #[test]
    fn forward_and_inverse_round_trip() {
        let p = params();
        let w = window();
        let eta = 0.1;
        let bundle = build_modes(0.0, eta, &p, w).unwrap();
        let ops = build_ops(0.0, eta, &p, w);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = make_compatible(&bump_mode(w, &mut rng), &bundle).unwrap();
        let image = darboux_forward(&sol, &bundle, &ops).unwrap();
        let r = darboux_residual(&image.state, &sol, &ops).unwrap();
        assert!(r.row1 < 1e-8 && r.row2 < 1e-8, "{r:?}");
        let back = darboux_inverse(&image.state, &bundle, &ops, 0).unwrap();
        let r = darboux_residual(&image.state, &back, &ops).unwrap();
        assert!(r.row1 < 1e-8 && r.row2 < 1e-8, "{r:?}");
        let s = bundle.signed().unwrap();
        let norm = bold_pairing(&back, &s.g_minus_star).unwrap().norm();
        assert!(norm < 1e-9 * back.weighted_norm(0.5).max(1.0));
        // the two differ by a multiple of (g⁺, ∂ₜg⁺)
        let diff = back.axpy((-1.0).into(), &sol).unwrap();
        let coef = bold_pairing(&diff, &s.g_minus_star).unwrap() / bold_pairing(&s.g_plus, &s.g_minus_star).unwrap();
        let rest = diff.axpy(-coef, &s.g_plus).unwrap();
        assert!(rest.q.interior_weighted_norm(0.5, EDGE_BAND) < 1e-7 * sol.weighted_norm(0.5));
        assert!(rest.p.interior_weighted_norm(0.5, EDGE_BAND) < 1e-7 * sol.weighted_norm(0.5));
    }

    #[test]
    fn zero_maps_to_zero() {
        let p = params();
        let w = window();
        let bundle = build_modes(0.0, 0.1, &p, w).unwrap();
        let ops = build_ops(0.0, 0.1, &p, w);
        let zero = Mode::zeros(w);
        assert_eq!(darboux_forward(&zero, &bundle, &ops).unwrap().state.weighted_norm(0.5), 0.0);
        assert_eq!(darboux_inverse(&zero, &bundle, &ops, 0).unwrap().weighted_norm(0.5), 0.0);
    }

    #[test]
    fn forward_rejects_secular_data() {
        let p = params();
        let w = window();
        let bundle = build_modes(0.0, 0.1, &p, w).unwrap();
        let ops = build_ops(0.0, 0.1, &p, w);
        let g_minus = bundle.signed().unwrap().g_minus.clone();
        assert!(matches!(
            darboux_forward(&g_minus, &bundle, &ops),
            Err(TodaError::OrthogonalityDefect { .. })
        ));
    }

    #[test]
    fn shift_identities_small_and_shrinking() {
        let p = params();
        let w = LatticeWindow::new(-40, 60).unwrap();
        let r = shift_identities(0.6, 0.2, &p, w).unwrap();
        assert!(r.max() < 1e-8, "{r:?}");
        let wide = shift_identities(0.6, 0.2, &p, w.doubled()).unwrap();
        assert!(wide.max_mode() < r.max_mode(), "{wide:?} vs {r:?}");
    }

    #[test]
    fn correspondence_survives_evolution() {
        let p = params();
        let w = LatticeWindow::new(-40, 90).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (sol, free) = compatible_pair(&bump_mode(w, &mut rng), 0.0, 0.2, &p).unwrap();
        let coarse = correspondence_drift(&sol, &free, 10.0, 1.0, 0.04, &p).unwrap();
        let fine = correspondence_drift(&sol, &free, 10.0, 1.0, 0.02, &p).unwrap();
        assert!(fine.max_residual < 1e-5, "{fine:?}");
        assert!(coarse.max_residual > 8.0 * fine.max_residual, "{coarse:?} {fine:?}");
        assert_eq!(fine.series.len(), 11);
    }

    #[test]
    fn broken_pair_drifts() {
        let p = params();
        let w = LatticeWindow::new(-40, 90).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (sol, mut free) = compatible_pair(&bump_mode(w, &mut rng), 0.0, 0.2, &p).unwrap();
        let kick = ComplexSeq::spike(w, 5).unwrap().scale(free.mode.q.max_abs().into());
        free.mode.q = free.mode.q.add(&kick).unwrap();
        let r = correspondence_drift(&sol, &free, 2.0, 1.0, 0.04, &p).unwrap();
        assert!(r.max_residual > 1e-2, "{r:?}");
    }

    #[test]
    fn secular_mode_pairs_with_zero() {
        let p = params();
        let w = LatticeWindow::new(-40, 90).unwrap();
        let eta = 0.2;
        let bundle = build_modes(0.0, eta, &p, w).unwrap();
        let sol = ModeState::new(eta, 0.0, Representation::QSoliton, bundle.signed().unwrap().g_plus.clone());
        let free = ModeState::new(eta, 0.0, Representation::QFree, Mode::zeros(w));
        let r = correspondence_drift(&sol, &free, 10.0, 2.0, 0.02, &p).unwrap();
        assert!(r.max_residual < 1e-5, "{r:?}");
    }
}
