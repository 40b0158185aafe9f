//! Truncated lattice windows, complex sequences on them and banded operators.
//!
//! Sequences are zero-extended beyond the window. Every shift and difference
//! below follows that convention, so an operator applied near an edge sees
//! zeros rather than wrapped values.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, TodaError};

/// A finite stretch of sites `n_min..=n_max` of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatticeWindow {
    n_min: i64,
    n_max: i64,
}

impl LatticeWindow {
    pub fn new(n_min: i64, n_max: i64) -> Result<Self> {
        if n_min >= n_max {
            return Err(TodaError::InvalidWindow { n_min, n_max });
        }
        Ok(Self { n_min, n_max })
    }

    /// Window `[-half_width, half_width + ceil(speed * horizon)]`, long enough
    /// that a soliton moving at `speed` stays inside until `horizon`.
    pub fn for_horizon(half_width: i64, speed: f64, horizon: f64) -> Result<Self> {
        let ahead = (speed * horizon.max(0.0)).ceil() as i64;
        Self::new(-half_width, half_width + ahead)
    }

    pub fn n_min(&self) -> i64 {
        self.n_min
    }

    pub fn n_max(&self) -> i64 {
        self.n_max
    }

    pub fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn site(&self, index: usize) -> i64 {
        self.n_min + index as i64
    }

    pub fn index_of(&self, n: i64) -> Option<usize> {
        (self.n_min..=self.n_max)
            .contains(&n)
            .then(|| (n - self.n_min) as usize)
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.n_min..=self.n_max
    }

    /// The window extended by `by` sites on each side.
    pub fn widened(&self, by: i64) -> Self {
        Self {
            n_min: self.n_min - by,
            n_max: self.n_max + by,
        }
    }

    pub fn contains(&self, other: &Self) -> bool {
        self.n_min <= other.n_min && other.n_max <= self.n_max
    }

    /// Double the width, keeping the left edge's distance to the origin
    /// proportional.
    pub fn doubled(&self) -> Self {
        Self {
            n_min: 2 * self.n_min,
            n_max: 2 * self.n_max + 1,
        }
    }
}

/// Complex values on a [`LatticeWindow`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeq {
    window: LatticeWindow,
    values: Vec<Complex64>,
}

impl ComplexSeq {
    pub fn zeros(window: LatticeWindow) -> Self {
        Self {
            window,
            values: vec![Complex64::new(0.0, 0.0); window.len()],
        }
    }

    pub fn from_fn(window: LatticeWindow, mut f: impl FnMut(i64) -> Complex64) -> Self {
        Self {
            window,
            values: window.sites().map(&mut f).collect(),
        }
    }

    pub fn from_real(window: LatticeWindow, mut f: impl FnMut(i64) -> f64) -> Self {
        Self::from_fn(window, |n| Complex64::new(f(n), 0.0))
    }

    pub fn from_values(window: LatticeWindow, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(TodaError::WindowMismatch);
        }
        Ok(Self { window, values })
    }

    /// Unit spike at site `n`.
    pub fn spike(window: LatticeWindow, n: i64) -> Result<Self> {
        let i = window.index_of(n).ok_or(TodaError::SiteOutsideWindow(n))?;
        let mut s = Self::zeros(window);
        s.values[i] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at site `n`, zero outside the window.
    pub fn get(&self, n: i64) -> Complex64 {
        self.window
            .index_of(n)
            .map_or(Complex64::new(0.0, 0.0), |i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        self.window.sites().zip(self.values.iter().copied())
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.window != other.window {
            return Err(TodaError::WindowMismatch);
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(i64, Complex64) -> Complex64) -> Self {
        Self {
            window: self.window,
            values: self.iter().map(|(n, v)| f(n, v)).collect(),
        }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        self.map(|_, v| v * factor)
    }

    pub fn conj(&self) -> Self {
        self.map(|_, v| v.conj())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip_with(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip_with(other, |a, b| a - b))
    }

    /// `self + factor * other`.
    pub fn axpy(&self, factor: Complex64, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip_with(other, |a, b| a + factor * b))
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        Ok(self.zip_with(other, |a, b| a * b))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        Self {
            window: self.window,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `(e^∂ f)_n = f_{n+1}`.
    pub fn shift_up(&self) -> Self {
        self.shifted(1)
    }

    /// `(e^{-∂} f)_n = f_{n-1}`.
    pub fn shift_down(&self) -> Self {
        self.shifted(-1)
    }

    pub fn shifted(&self, by: i64) -> Self {
        self.map(|n, _| self.get(n + by))
    }

    /// `(e^∂ - 1) f`.
    pub fn forward_diff(&self) -> Self {
        self.map(|n, v| self.get(n + 1) - v)
    }

    /// `(1 - e^{-∂}) f`.
    pub fn backward_diff(&self) -> Self {
        self.map(|n, v| v - self.get(n - 1))
    }

    /// `(e^∂ - 1)^{-1} f = -Σ_{k≥0} f_{n+k}`, truncated at the window.
    pub fn inv_forward_diff(&self) -> Self {
        let mut out = self.values.clone();
        let mut acc = Complex64::new(0.0, 0.0);
        for (o, v) in out.iter_mut().zip(&self.values).rev() {
            acc += v;
            *o = -acc;
        }
        Self {
            window: self.window,
            values: out,
        }
    }

    /// `(1 - e^{-∂})^{-1} f = -Σ_{k≥1} f_{n+k}`, truncated at the window.
    pub fn inv_backward_diff(&self) -> Self {
        let mut out = self.values.clone();
        let mut acc = Complex64::new(0.0, 0.0);
        for (o, v) in out.iter_mut().zip(&self.values).rev() {
            *o = -acc;
            acc += v;
        }
        Self {
            window: self.window,
            values: out,
        }
    }

    /// The values on a sub-window.
    pub fn restrict(&self, window: LatticeWindow) -> Result<Self> {
        if !self.window.contains(&window) {
            let n = if window.n_min < self.window.n_min {
                window.n_min
            } else {
                window.n_max
            };
            return Err(TodaError::SiteOutsideWindow(n));
        }
        let start = (window.n_min - self.window.n_min) as usize;
        Ok(Self {
            window,
            values: self.values[start..start + window.len()].to_vec(),
        })
    }

    /// Lattice pairing `Σ f_n conj(g_n)`.
    pub fn pairing(&self, other: &Self) -> Result<Complex64> {
        self.check(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `ln` of `(Σ e^{2αn}|f_n|²)^{1/2}` over the sites accepted by `keep`,
    /// evaluated with a running maximum so large weights never overflow.
    fn log_weighted_norm_where(&self, alpha: f64, keep: impl Fn(usize) -> bool) -> f64 {
        let logs: Vec<f64> = self
            .iter()
            .enumerate()
            .filter(|(i, (_, v))| keep(*i) && v.norm() > 0.0)
            .map(|(_, (n, v))| alpha * n as f64 + v.norm().ln())
            .collect();
        let Some(top) = logs.iter().copied().reduce(f64::max) else {
            return f64::NEG_INFINITY;
        };
        let sum: f64 = logs.iter().map(|l| (2.0 * (l - top)).exp()).sum();
        top + 0.5 * sum.ln()
    }

    pub fn log_weighted_norm(&self, alpha: f64) -> f64 {
        self.log_weighted_norm_where(alpha, |_| true)
    }

    /// `‖f‖` in `ℓ²_α`, weight `e^{αn}`.
    pub fn weighted_norm(&self, alpha: f64) -> f64 {
        self.log_weighted_norm(alpha).exp()
    }

    /// Weighted norm restricted to the sites at least `band` away from both edges.
    pub fn interior_weighted_norm(&self, alpha: f64, band: usize) -> f64 {
        let len = self.len();
        self.log_weighted_norm_where(alpha, |i| i >= band && i + band < len)
            .exp()
    }

    /// Weighted norm of the `band` sites nearest to either edge.
    pub fn edge_weighted_norm(&self, alpha: f64, band: usize) -> f64 {
        let len = self.len();
        self.log_weighted_norm_where(alpha, |i| i < band || i + band >= len)
            .exp()
    }
}

/// Banded operator `(Af)_n = sub_n f_{n-1} + diag_n f_n + sup_n f_{n+1}`
/// acting with zero extension.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiag {
    window: LatticeWindow,
    pub sub: Vec<Complex64>,
    pub diag: Vec<Complex64>,
    pub sup: Vec<Complex64>,
}

impl Tridiag {
    pub fn from_fn(
        window: LatticeWindow,
        mut coeffs: impl FnMut(i64) -> (Complex64, Complex64, Complex64),
    ) -> Self {
        let len = window.len();
        let (mut sub, mut diag, mut sup) =
            (Vec::with_capacity(len), Vec::with_capacity(len), Vec::with_capacity(len));
        for n in window.sites() {
            let (a, b, c) = coeffs(n);
            sub.push(a);
            diag.push(b);
            sup.push(c);
        }
        Self {
            window,
            sub,
            diag,
            sup,
        }
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    pub fn apply(&self, f: &ComplexSeq) -> Result<ComplexSeq> {
        if f.window() != self.window {
            return Err(TodaError::WindowMismatch);
        }
        let v = f.values();
        let len = v.len();
        let zero = Complex64::new(0.0, 0.0);
        let values = (0..len)
            .map(|i| {
                let left = if i > 0 { v[i - 1] } else { zero };
                let right = if i + 1 < len { v[i + 1] } else { zero };
                self.sub[i] * left + self.diag[i] * v[i] + self.sup[i] * right
            })
            .collect();
        ComplexSeq::from_values(self.window, values)
    }

    /// Conjugate transpose with respect to the unweighted pairing.
    pub fn adjoint(&self) -> Self {
        let len = self.diag.len();
        let zero = Complex64::new(0.0, 0.0);
        let sub = (0..len)
            .map(|i| if i > 0 { self.sup[i - 1].conj() } else { zero })
            .collect();
        let sup = (0..len)
            .map(|i| if i + 1 < len { self.sub[i + 1].conj() } else { zero })
            .collect();
        Self {
            window: self.window,
            sub,
            diag: self.diag.iter().map(|d| d.conj()).collect(),
            sup,
        }
    }

    pub fn sub_op(&self, other: &Self) -> Result<Self> {
        if other.window != self.window {
            return Err(TodaError::WindowMismatch);
        }
        let d = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Ok(Self {
            window: self.window,
            sub: d(&self.sub, &other.sub),
            diag: d(&self.diag, &other.diag),
            sup: d(&self.sup, &other.sup),
        })
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        self.weighted_dense(0.0)
    }

    /// Dense matrix of `W A W^{-1}` with `W = diag(e^{αn})`, i.e. the operator
    /// as seen from `ℓ²_α`.
    pub fn weighted_dense(&self, alpha: f64) -> DMatrix<Complex64> {
        let len = self.diag.len();
        let up = alpha.exp();
        let mut m = DMatrix::zeros(len, len);
        for i in 0..len {
            m[(i, i)] = self.diag[i];
            if i > 0 {
                m[(i, i - 1)] = self.sub[i] * up;
            }
            if i + 1 < len {
                m[(i, i + 1)] = self.sup[i] / up;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn win() -> LatticeWindow {
        LatticeWindow::new(-5, 5).unwrap()
    }

    #[test]
    fn rejects_reversed_window() {
        assert!(LatticeWindow::new(3, 1).is_err());
    }

    #[test]
    fn horizon_window_covers_soliton_path() {
        let w = LatticeWindow::for_horizon(40, 1.1752, 80.0).unwrap();
        assert_eq!(w.n_min(), -40);
        assert_eq!(w.n_max(), 40 + 95);
    }

    #[test]
    fn shift_up_moves_spike_left() {
        let s = ComplexSeq::spike(win(), 0).unwrap();
        let up = s.shift_up();
        assert_eq!(up.get(-1), c(1.0));
        assert_eq!(up.get(0), c(0.0));
    }

    #[test]
    fn inverse_differences_telescope() {
        let f = ComplexSeq::from_real(win(), |n| if n.abs() < 3 { n as f64 + 0.5 } else { 0.0 });
        let back = f.inv_forward_diff().forward_diff();
        let back2 = f.inv_backward_diff().backward_diff();
        for n in -4..=4 {
            assert!((back.get(n) - f.get(n)).norm() < 1e-14);
            assert!((back2.get(n) - f.get(n)).norm() < 1e-14);
        }
    }

    #[test]
    fn weighted_norm_of_spike() {
        let s = ComplexSeq::spike(win(), 0).unwrap();
        assert!((s.weighted_norm(0.5) - 1.0).abs() < 1e-15);
        let s2 = ComplexSeq::spike(win(), 2).unwrap();
        assert!((s2.weighted_norm(0.5) - 1f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn log_norm_survives_huge_weights() {
        let w = LatticeWindow::new(0, 2000).unwrap();
        let f = ComplexSeq::from_real(w, |_| 1.0);
        let l = f.log_weighted_norm(1.0);
        assert!(l.is_finite() && (l - 2000.0).abs() < 1.0);
    }

    #[test]
    fn tridiag_adjoint_matches_pairing() {
        let w = win();
        let a = Tridiag::from_fn(w, |n| {
            let x = n as f64;
            (
                Complex64::new(x, 1.0),
                Complex64::new(1.0, x),
                Complex64::new(-x, 0.3),
            )
        });
        let f = ComplexSeq::from_fn(w, |n| Complex64::new(n as f64, 1.0));
        let g = ComplexSeq::from_fn(w, |n| Complex64::new(1.0, -(n as f64)));
        let lhs = a.apply(&f).unwrap().pairing(&g).unwrap();
        let rhs = f.pairing(&a.adjoint().apply(&g).unwrap()).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn dense_agrees_with_apply() {
        let w = win();
        let a = Tridiag::from_fn(w, |n| (c(1.0), c(n as f64), c(2.0)));
        let f = ComplexSeq::from_real(w, |n| (n * n) as f64);
        let applied = a.apply(&f).unwrap();
        let dense = a.to_dense() * nalgebra::DVector::from_column_slice(f.values());
        for (x, y) in applied.values().iter().zip(dense.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }
}
