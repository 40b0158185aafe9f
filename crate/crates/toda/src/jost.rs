//! Jost and dual Jost functions of the vacuum and one-soliton Lax pairs.
//!
//! Points are given in light-cone coordinates `(s, x)`, with `t = x + s` and
//! `y = x - s`. Derivatives are never taken symbolically here: every Lax or
//! product identity is checked by central differences with step halving.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::dispersion::SolitonParams;
use crate::error::{Result, TodaError};
use crate::soliton::{comoving, dt_q, log_tau, sech, tau_ratio};

/// Distance to a pole of the dual Jost function below which evaluation is refused.
pub const POLE_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JostPoint {
    pub n: i64,
    pub s: f64,
    pub x: f64,
}

impl JostPoint {
    pub fn t(&self) -> f64 {
        self.x + self.s
    }

    pub fn y(&self) -> f64 {
        self.x - self.s
    }
}

fn nonzero(beta: Complex64) -> Result<()> {
    if beta.norm() == 0.0 {
        Err(TodaError::ZeroBeta)
    } else {
        Ok(())
    }
}

/// `βⁿ e^{βx - s/β}`.
pub fn phi0(beta: Complex64, n: i64, s: f64, x: f64) -> Result<Complex64> {
    nonzero(beta)?;
    Ok((beta.ln() * n as f64 + beta * x - s / beta).exp())
}

/// `β^{-n} e^{-βx + s/β}`.
pub fn phi0_star(beta: Complex64, n: i64, s: f64, x: f64) -> Result<Complex64> {
    nonzero(beta)?;
    Ok((-beta.ln() * n as f64 - beta * x + s / beta).exp())
}

/// Full tau function at a light-cone point.
pub fn tau(n: i64, s: f64, x: f64, params: &SolitonParams) -> f64 {
    let (sign, log_abs) = log_tau(n, x + s, x - s, params);
    sign * log_abs.exp()
}

/// Jost function of the soliton Lax pair.
pub fn phi(beta: Complex64, n: i64, s: f64, x: f64, params: &SolitonParams) -> Result<Complex64> {
    Ok(phi0(beta, n, s, x)? * (beta - tau_ratio(n, x + s, params)))
}

/// `Φ_n(a)` in closed form. The generic formula loses every digit to
/// cancellation near `β = a` once `n` is large.
pub fn phi_at_pole(n: i64, s: f64, x: f64, params: &SolitonParams) -> f64 {
    let sign = if n.rem_euclid(2) == 0 { -1.0 } else { 1.0 };
    let k = params.kappa();
    sign * (-(x - s) * params.cosh_k()).exp()
        * params.sinh_k()
        * sech(k * comoving(n, x + s, params))
}

fn pole_check(beta: Complex64, params: &SolitonParams) -> Result<(Complex64, Complex64)> {
    let a = params.pole();
    let da = beta - a;
    let db = beta - 1.0 / a;
    let distance = da.norm().min(db.norm());
    if distance < POLE_GUARD {
        return Err(TodaError::NearPole { beta, distance });
    }
    Ok((da, db))
}

/// Dual Jost function of the soliton Lax pair.
pub fn phi_star(beta: Complex64, n: i64, s: f64, x: f64, params: &SolitonParams) -> Result<Complex64> {
    let (da, db) = pole_check(beta, params)?;
    let ratio = 1.0 / tau_ratio(n, x + s, params);
    Ok(phi0_star(beta, n, s, x)? * (beta - ratio) / (da * db))
}

/// Dual Jost function through `(β - ∂_x)^{-1}` acting on the two
/// exponentials of the tau function.
pub fn phi_star_resolvent(
    beta: Complex64,
    n: i64,
    s: f64,
    x: f64,
    params: &SolitonParams,
) -> Result<Complex64> {
    let (da, db) = pole_check(beta, params)?;
    // ratio of the two exponentials of τ_{n+1}: e^{-2κ z_{n+1}}
    let log_r = -2.0 * params.kappa() * comoving(n + 1, x + s, params);
    let weighted = if log_r <= 0.0 {
        let r = log_r.exp();
        (1.0 / da + r / db) / (1.0 + r)
    } else {
        let r = (-log_r).exp();
        (r / da + 1.0 / db) / (1.0 + r)
    };
    Ok(phi0_star(beta, n, s, x)? * weighted)
}

/// Background entering the Lax pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaxBackground {
    Vacuum,
    Soliton(SolitonParams),
}

impl LaxBackground {
    fn one_plus_v(&self, n: i64, t: f64) -> f64 {
        match self {
            Self::Vacuum => 1.0,
            Self::Soliton(p) => {
                let v = p.sinh_k() * sech(p.kappa() * comoving(n, t, p));
                1.0 + v * v
            }
        }
    }

    /// `∂_x q_{n+1}`.
    fn dx_q_next(&self, n: i64, t: f64) -> f64 {
        match self {
            Self::Vacuum => 0.0,
            Self::Soliton(p) => dt_q(n + 1, t, p),
        }
    }

    fn is_soliton(&self) -> bool {
        matches!(self, Self::Soliton(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LaxOperator {
    L1,
    L2,
    L1Adjoint,
    L2Adjoint,
}

impl LaxOperator {
    pub const ALL: [LaxOperator; 4] = [Self::L1, Self::L2, Self::L1Adjoint, Self::L2Adjoint];

    pub fn label(&self, soliton: bool) -> String {
        let base = match self {
            Self::L1 => "L1",
            Self::L2 => "L2",
            Self::L1Adjoint => "L1*",
            Self::L2Adjoint => "L2*",
        };
        if soliton {
            base.replacen('L', "L'", 1).replace("'1", "1'").replace("'2", "2'")
        } else {
            base.to_string()
        }
    }
}

/// Relative residual of one Lax equation at one point, `∂` by central differences.
fn lax_point_residual(
    op: LaxOperator,
    bg: &LaxBackground,
    field: &dyn Fn(i64, f64, f64) -> Complex64,
    p: JostPoint,
    h: f64,
) -> f64 {
    let JostPoint { n, s, x } = p;
    let t = p.t();
    let ds = (field(n, s + h, x) - field(n, s - h, x)) / (2.0 * h);
    let dx = (field(n, s, x + h) - field(n, s, x - h)) / (2.0 * h);
    let here = field(n, s, x);
    let terms: Vec<Complex64> = match op {
        LaxOperator::L1 => vec![ds, bg.one_plus_v(n, t) * field(n - 1, s, x)],
        LaxOperator::L2 => vec![dx, -field(n + 1, s, x), -bg.dx_q_next(n, t) * here],
        LaxOperator::L1Adjoint => vec![ds, -bg.one_plus_v(n + 1, t) * field(n + 1, s, x)],
        LaxOperator::L2Adjoint => vec![dx, field(n - 1, s, x), bg.dx_q_next(n, t) * here],
    };
    let total: Complex64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|z| z.norm()).sum();
    if scale == 0.0 {
        0.0
    } else {
        total.norm() / scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaxResidualReport {
    pub operator: String,
    pub subject: String,
    pub max_residual: f64,
    pub step: f64,
    pub order: f64,
}

impl LaxResidualReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_residual < tol && (1.8..=2.2).contains(&self.order)
    }
}

fn max_over(points: &[JostPoint], f: impl Fn(JostPoint) -> f64) -> f64 {
    points.iter().map(|&p| f(p)).fold(0.0, f64::max)
}

/// Residual of one Lax equation at step `h`; the order compares `2h` with `h`
/// so the finer residual stays clear of roundoff.
pub fn lax_residual(
    op: LaxOperator,
    bg: &LaxBackground,
    subject: &str,
    field: &dyn Fn(i64, f64, f64) -> Complex64,
    points: &[JostPoint],
    h: f64,
) -> LaxResidualReport {
    let r1 = max_over(points, |p| lax_point_residual(op, bg, field, p, h));
    let r2 = max_over(points, |p| lax_point_residual(op, bg, field, p, 2.0 * h));
    LaxResidualReport {
        operator: op.label(bg.is_soliton()),
        subject: subject.to_string(),
        max_residual: r1,
        step: h,
        order: (r2 / r1).log2(),
    }
}

/// Residual of `∂_x∂_s P = (e^∂-1)(1+V)(1-e^{-∂})P` for a product field `P`.
pub fn product_solution_residual(
    bg: &LaxBackground,
    subject: &str,
    product: &dyn Fn(i64, f64, f64) -> Complex64,
    points: &[JostPoint],
    h: f64,
) -> LaxResidualReport {
    let at = |p: JostPoint, h: f64| {
        let JostPoint { n, s, x } = p;
        let t = p.t();
        let mixed = (product(n, s + h, x + h) - product(n, s + h, x - h) - product(n, s - h, x + h)
            + product(n, s - h, x - h))
            / (4.0 * h * h);
        let up = bg.one_plus_v(n + 1, t) * (product(n + 1, s, x) - product(n, s, x));
        let down = bg.one_plus_v(n, t) * (product(n, s, x) - product(n - 1, s, x));
        let scale = mixed.norm() + up.norm() + down.norm();
        if scale == 0.0 {
            0.0
        } else {
            (mixed - up + down).norm() / scale
        }
    };
    let r1 = max_over(points, |p| at(p, h));
    let r2 = max_over(points, |p| at(p, 2.0 * h));
    LaxResidualReport {
        operator: if bg.is_soliton() { "prod'" } else { "prod" }.to_string(),
        subject: subject.to_string(),
        max_residual: r1,
        step: h,
        order: (r2 / r1).log2(),
    }
}

/// Grid of `(n, s, x)` points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JostGrid {
    pub n_values: Vec<i64>,
    pub s_values: Vec<f64>,
    pub x_values: Vec<f64>,
}

impl Default for JostGrid {
    fn default() -> Self {
        Self {
            n_values: (-5..=5).collect(),
            s_values: vec![-0.5, 0.0, 0.4],
            x_values: vec![-0.3, 0.0, 0.6],
        }
    }
}

impl JostGrid {
    /// `n_count` sites centred on 0 and `s_count`, `x_count` values in `[-0.5, 0.5]`.
    pub fn uniform(n_count: usize, s_count: usize, x_count: usize) -> Self {
        let half = (n_count as i64 - 1) / 2;
        let spread = |m: usize| -> Vec<f64> {
            if m <= 1 {
                vec![0.1]
            } else {
                (0..m).map(|i| -0.5 + i as f64 / (m - 1) as f64).collect()
            }
        };
        Self {
            n_values: (-half..=(n_count as i64 - 1 - half)).collect(),
            s_values: spread(s_count),
            x_values: spread(x_count),
        }
    }

    pub fn points(&self) -> Vec<JostPoint> {
        let mut out = Vec::new();
        for &n in &self.n_values {
            for &s in &self.s_values {
                for &x in &self.x_values {
                    out.push(JostPoint { n, s, x });
                }
            }
        }
        out
    }
}

/// Twelve points on `|β| = e^{κ/2}` plus `β±(η)` for each `η`.
pub fn beta_test_set(params: &SolitonParams, etas: &[f64]) -> Vec<Complex64> {
    let radius = (0.5 * params.kappa()).exp();
    let mut out: Vec<Complex64> = (0..12)
        .map(|k| Complex64::from_polar(radius, PI / 12.0 + 2.0 * PI * k as f64 / 12.0))
        .collect();
    for &eta in etas {
        let d = params.dispersion(eta);
        out.push(d.beta_plus);
        out.push(d.beta_minus);
    }
    out
}

/// Largest relative mismatch in the up/down shift identities between the
/// vacuum and soliton Jost functions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpdownReport {
    pub pole_value_shift_down: f64,
    pub pole_value_shift_up: f64,
    pub pole_value_closed_form: f64,
    pub vacuum_to_soliton: f64,
    pub quotient_difference: f64,
    pub dual_from_vacuum: f64,
    pub dual_to_vacuum: f64,
    pub dual_product_difference: f64,
    pub mode_products: f64,
}

impl UpdownReport {
    pub fn max(&self) -> f64 {
        [
            self.pole_value_shift_down,
            self.pole_value_shift_up,
            self.pole_value_closed_form,
            self.vacuum_to_soliton,
            self.quotient_difference,
            self.dual_from_vacuum,
            self.dual_to_vacuum,
            self.dual_product_difference,
            self.mode_products,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

pub fn updown_identities(
    params: &SolitonParams,
    betas: &[Complex64],
    etas: &[f64],
    points: &[JostPoint],
) -> Result<UpdownReport> {
    let a = params.pole();
    let ac = Complex64::new(a, 0.0);
    let mut r = UpdownReport {
        pole_value_shift_down: 0.0,
        pole_value_shift_up: 0.0,
        pole_value_closed_form: 0.0,
        vacuum_to_soliton: 0.0,
        quotient_difference: 0.0,
        dual_from_vacuum: 0.0,
        dual_to_vacuum: 0.0,
        dual_product_difference: 0.0,
        mode_products: 0.0,
    };
    let bump = |slot: &mut f64, v: f64| *slot = slot.max(v);
    for &p in points {
        let JostPoint { n, s, x } = p;
        let t = p.t();
        let uv = |m: i64| crate::soliton::background(m, t, params);
        let pa = |m: i64| Complex64::new(phi_at_pole(m, s, x, params), 0.0);
        bump(&mut r.pole_value_shift_down, rel(pa(n), uv(n).u * pa(n - 1)));
        bump(&mut r.pole_value_shift_up, rel(pa(n), uv(n + 1).v * pa(n + 1)));
        let closed = (a - 1.0 / a) * ((a + 1.0 / a) * (x - s)).exp() / tau(n, s, x, params);
        bump(&mut r.pole_value_closed_form, rel(pa(n), closed.into()));
        for &b in betas {
            let lhs = phi0(b, n, s, x)? - uv(n).v * phi0(b, n - 1, s, x)?;
            bump(&mut r.vacuum_to_soliton, rel(lhs, phi(b, n - 1, s, x, params)?));
            let lhs = phi0(b, n + 1, s, x)? / tau(n + 1, s, x, params)
                - phi0(b, n, s, x)? / tau(n, s, x, params);
            bump(
                &mut r.quotient_difference,
                rel(lhs, phi(b, n, s, x, params)? / tau(n + 1, s, x, params)),
            );
            // this identity holds for the dual function without its
            // 1/((β-a)(β-1/a)) normalisation
            let norm = (b - ac) * (b - 1.0 / ac);
            let rhs = phi0_star(b, n - 1, s, x)? - uv(n + 1).u * phi0_star(b, n, s, x)?;
            bump(&mut r.dual_from_vacuum, rel(phi_star(b, n, s, x, params)? * norm, rhs));
            let lhs = phi_star(b, n - 1, s, x, params)? - uv(n + 1).v * phi_star(b, n, s, x, params)?;
            bump(&mut r.dual_to_vacuum, rel(lhs, phi0_star(b, n, s, x)?));
            let lhs = pa(n) * phi_star(b, n, s, x, params)?;
            let rhs = -(pa(n + 1) * phi0_star(b, n, s, x)? - pa(n) * phi0_star(b, n - 1, s, x)?) / norm;
            bump(&mut r.dual_product_difference, rel(lhs, rhs));
        }
        for &eta in etas {
            let d = params.dispersion(eta);
            for bpm in [d.beta_plus, d.beta_minus] {
                let lhs = pa(n) * phi_star(bpm, n, s, x, params)?;
                let rhs = (pa(n + 1) * phi0_star(bpm, n + 1, s, x)? - pa(n) * phi0_star(bpm, n, s, x)?)
                    / Complex64::new(0.0, 2.0 * eta);
                bump(&mut r.mode_products, rel(lhs, rhs));
            }
        }
    }
    Ok(r)
}

/// Residues of the dual Jost function at `a` and `1/a`, by a trapezoid
/// contour integral, compared with `1/τ_{n+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidueReport {
    pub at_pole: f64,
    pub at_inverse_pole: f64,
}

pub fn residue_check(params: &SolitonParams, points: &[JostPoint]) -> Result<ResidueReport> {
    let a = params.pole();
    let nodes = 128;
    let contour = |centre: f64, radius: f64, p: JostPoint| -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..nodes {
            let e = Complex64::from_polar(1.0, 2.0 * PI * j as f64 / nodes as f64);
            let beta = centre + radius * e;
            // dβ/(2πi) = radius e dθ / 2π
            acc += phi_star(beta, p.n, p.s, p.x, params)? * radius * e;
        }
        Ok(acc / nodes as f64)
    };
    let gap = (a - 1.0 / a).abs();
    let mut out = ResidueReport {
        at_pole: 0.0,
        at_inverse_pole: 0.0,
    };
    for &p in points {
        let target = Complex64::new(1.0 / tau(p.n + 1, p.s, p.x, params), 0.0);
        let r_a = contour(a, 0.25 * gap, p)? / a;
        let r_inv = contour(1.0 / a, 0.25 / a.abs(), p)? * a;
        out.at_pole = out.at_pole.max(rel(r_a, target));
        out.at_inverse_pole = out.at_inverse_pole.max(rel(r_inv, target));
    }
    Ok(out)
}

/// Every Lax, product, shift and residue check at one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JostReport {
    pub lax: Vec<LaxResidualReport>,
    pub products: Vec<LaxResidualReport>,
    pub updown: UpdownReport,
    pub residue: ResidueReport,
    pub resolvent_mismatch: f64,
}

impl JostReport {
    pub fn max_lax_residual(&self) -> f64 {
        self.lax
            .iter()
            .chain(&self.products)
            .map(|r| r.max_residual)
            .fold(0.0, f64::max)
    }

    pub fn orders_in_range(&self) -> bool {
        self.lax
            .iter()
            .chain(&self.products)
            .all(|r| (1.8..=2.2).contains(&r.order))
    }
}

pub fn jost_check(params: &SolitonParams, etas: &[f64], grid: &JostGrid, h: f64) -> Result<JostReport> {
    let points = grid.points();
    let betas = beta_test_set(params, etas);
    let sol = LaxBackground::Soliton(*params);
    let vac = LaxBackground::Vacuum;
    let p = *params;
    let mut lax = Vec::new();
    let mut products = Vec::new();
    for (i, &b) in betas.iter().enumerate() {
        let label = format!("beta[{i}]={:.6}{:+.6}i", b.re, b.im);
        let f0 = move |n: i64, s: f64, x: f64| phi0(b, n, s, x).unwrap_or_default();
        let f0s = move |n: i64, s: f64, x: f64| phi0_star(b, n, s, x).unwrap_or_default();
        let f = move |n: i64, s: f64, x: f64| phi(b, n, s, x, &p).unwrap_or_default();
        let fs = move |n: i64, s: f64, x: f64| phi_star(b, n, s, x, &p).unwrap_or_default();
        lax.push(lax_residual(LaxOperator::L1, &vac, &label, &f0, &points, h));
        lax.push(lax_residual(LaxOperator::L2, &vac, &label, &f0, &points, h));
        lax.push(lax_residual(LaxOperator::L1Adjoint, &vac, &label, &f0s, &points, h));
        lax.push(lax_residual(LaxOperator::L2Adjoint, &vac, &label, &f0s, &points, h));
        lax.push(lax_residual(LaxOperator::L1, &sol, &label, &f, &points, h));
        lax.push(lax_residual(LaxOperator::L2, &sol, &label, &f, &points, h));
        lax.push(lax_residual(LaxOperator::L1Adjoint, &sol, &label, &fs, &points, h));
        lax.push(lax_residual(LaxOperator::L2Adjoint, &sol, &label, &fs, &points, h));

        let b2 = betas[(i + 1) % betas.len()];
        let pair_label = format!("{label} x beta[{}]", (i + 1) % betas.len());
        let prod0 = move |n: i64, s: f64, x: f64| {
            phi0(b, n, s, x).unwrap_or_default() * phi0_star(b2, n, s, x).unwrap_or_default()
        };
        let prod = move |n: i64, s: f64, x: f64| {
            phi(b, n, s, x, &p).unwrap_or_default() * phi_star(b2, n, s, x, &p).unwrap_or_default()
        };
        products.push(product_solution_residual(&vac, &pair_label, &prod0, &points, h));
        products.push(product_solution_residual(&sol, &pair_label, &prod, &points, h));
    }
    let inv_tau = move |n: i64, s: f64, x: f64| Complex64::new(1.0 / tau(n + 1, s, x, &p), 0.0);
    // 1/τ_{n+1} is the residue of the dual function and solves the adjoint pair
    lax.push(lax_residual(LaxOperator::L1Adjoint, &sol, "1/tau_(n+1)", &inv_tau, &points, h));
    lax.push(lax_residual(LaxOperator::L2Adjoint, &sol, "1/tau_(n+1)", &inv_tau, &points, h));

    let mut resolvent_mismatch: f64 = 0.0;
    for &pt in &points {
        for &b in &betas {
            let direct = phi_star(b, pt.n, pt.s, pt.x, params)?;
            let other = phi_star_resolvent(b, pt.n, pt.s, pt.x, params)?;
            resolvent_mismatch = resolvent_mismatch.max(rel(direct, other));
        }
    }

    Ok(JostReport {
        lax,
        products,
        updown: updown_identities(params, &betas, etas, &points)?,
        residue: residue_check(params, &points)?,
        resolvent_mismatch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> SolitonParams {
        SolitonParams::new(1.0, 0.5).unwrap()
    }

    #[test]
    fn unit_beta_reduces_to_exponential() {
        let v = phi0(Complex64::new(1.0, 0.0), 7, 0.3, -0.2).unwrap();
        assert_relative_eq!(v.re, (-0.5f64).exp(), epsilon = 1e-14);
        let w = phi0_star(Complex64::new(1.0, 0.0), 7, 0.3, -0.2).unwrap();
        assert_relative_eq!(w.re, 0.5f64.exp(), epsilon = 1e-14);
    }

    #[test]
    fn vacuum_product_is_power() {
        let b = Complex64::new(0.7, -1.1);
        let prod = phi0(b, 4, 0.2, 0.9).unwrap() * phi0_star(b, 1, 0.2, 0.9).unwrap();
        assert!((prod - b.powi(3)).norm() < 1e-13);
    }

    #[test]
    fn zero_beta_rejected() {
        assert_eq!(phi0(Complex64::new(0.0, 0.0), 0, 0.0, 0.0), Err(TodaError::ZeroBeta));
    }

    #[test]
    fn pole_guard() {
        let p = params();
        let a = Complex64::new(p.pole() + 1e-10, 0.0);
        assert!(matches!(phi_star(a, 0, 0.0, 0.0, &p), Err(TodaError::NearPole { .. })));
    }

    #[test]
    fn pole_value_matches_generic_formula_at_small_n() {
        let p = params();
        let a = Complex64::new(p.pole(), 0.0);
        for n in -3..=3 {
            let generic = phi(a, n, 0.2, -0.1, &p).unwrap();
            assert_relative_eq!(generic.re, phi_at_pole(n, 0.2, -0.1, &p), max_relative = 1e-10);
            let inv = phi(1.0 / a, n, 0.2, -0.1, &p).unwrap();
            assert_relative_eq!(inv.re, -phi_at_pole(n, 0.2, -0.1, &p), max_relative = 1e-10);
        }
    }

    #[test]
    fn resolvent_form_agrees() {
        let p = params();
        for n in -20..20 {
            let b = Complex64::new(0.4, 1.3);
            let a = phi_star(b, n, 0.1, 0.7, &p).unwrap();
            let r = phi_star_resolvent(b, n, 0.1, 0.7, &p).unwrap();
            assert!(rel(a, r) < 1e-12);
        }
    }

    #[test]
    fn residues_match_inverse_tau() {
        let grid = JostGrid::uniform(5, 2, 2);
        let r = residue_check(&params(), &grid.points()).unwrap();
        assert!(r.at_pole < 1e-10 && r.at_inverse_pole < 1e-10, "{r:?}");
    }

    #[test]
    fn operator_labels() {
        assert_eq!(LaxOperator::L1Adjoint.label(true), "L1'*");
        assert_eq!(LaxOperator::L2.label(false), "L2");
    }

    #[test]
    fn vacuum_lax_second_order() {
        let b = Complex64::new(1.2, 0.5);
        let f = move |n: i64, s: f64, x: f64| phi0(b, n, s, x).unwrap();
        let pts = JostGrid::default().points();
        let r = lax_residual(LaxOperator::L2, &LaxBackground::Vacuum, "b", &f, &pts, 1e-3);
        assert!(r.passes(1e-5), "{r:?}");
    }

    #[test]
    fn broken_field_is_detected() {
        let b = Complex64::new(1.2, 0.5);
        let f = move |n: i64, s: f64, x: f64| phi0(b, n, s, x).unwrap() * (1.0 + 0.1 * n as f64);
        let pts = JostGrid::default().points();
        let r = lax_residual(LaxOperator::L1, &LaxBackground::Vacuum, "b", &f, &pts, 1e-3);
        assert!(r.max_residual > 1e-2);
    }

    #[test]
    fn full_check_at_default_grid() {
        let r = jost_check(&params(), &[0.1, 0.2, 0.5], &JostGrid::default(), 1e-3).unwrap();
        let worst = r.lax.iter().chain(&r.products).fold(0.0, |m: f64, x| m.max(x.max_residual));
        let orders: Vec<f64> = r.lax.iter().chain(&r.products).map(|x| x.order).collect();
        let bad: Vec<_> = r.lax.iter().chain(&r.products).filter(|x| x.max_residual > 1e-6).collect();
        assert!(worst < 1e-5, "{bad:#?}");
        assert!(r.orders_in_range(), "{orders:?}");
        assert!(r.updown.max() < 1e-11, "{:?}", r.updown);
        assert!(r.resolvent_mismatch < 1e-11);
    }
}
