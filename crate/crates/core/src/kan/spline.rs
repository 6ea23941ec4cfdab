//! Uniform B-spline grids and basis evaluation.
//!
//! The grid covers `[lo, hi]` with `G` equal intervals and is extended by
//! `k` knots on both sides, giving `G + 2k + 1` knots and `G + k` basis
//! functions of degree `k`. Inputs are clamped into `[lo, hi]` before
//! evaluation, so every evaluation point lies where the basis forms a
//! partition of unity.

use crate::error::{Error, Result};

/// Largest supported polynomial degree.
pub const MAX_ORDER: usize = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct SplineGrid {
    lo: f64,
    hi: f64,
    intervals: usize,
    order: usize,
    step: f64,
    knots: Vec<f64>,
}

impl SplineGrid {
    pub fn new(lo: f64, hi: f64, intervals: usize, order: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "spline domain [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        if intervals == 0 {
            return Err(Error::Config("spline grid needs at least one interval".into()));
        }
        if order > MAX_ORDER {
            return Err(Error::Config(format!(
                "spline order {order} exceeds the supported maximum {MAX_ORDER}"
            )));
        }
        let step = (hi - lo) / intervals as f64;
        let knots = (0..=intervals + 2 * order)
            .map(|j| lo + (j as f64 - order as f64) * step)
            .collect();
        Ok(Self {
            lo,
            hi,
            intervals,
            order,
            step,
            knots,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions, `G + k`.
    pub fn basis_count(&self) -> usize {
        self.intervals + self.order
    }

    /// Greville abscissae: coefficients equal to these reproduce `f(x) = x`
    /// on `[lo, hi]`.
    pub fn greville(&self) -> Vec<f64> {
        let t = &self.knots;
        (0..self.basis_count())
            .map(|j| match self.order {
                0 => 0.5 * (t[j] + t[j + 1]),
                k => t[j + 1..=j + k].iter().sum::<f64>() / k as f64,
            })
            .collect()
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Knot span `i` with `t_i <= x < t_{i+1}`, restricted to the domain
    /// spans `k..G+k`; the right boundary belongs to the last span.
    fn span(&self, x: f64) -> usize {
        let rel = ((x - self.lo) / self.step).floor();
        let cell = if rel <= 0.0 {
            0
        } else {
            (rel as usize).min(self.intervals - 1)
        };
        cell + self.order
    }

    /// Writes the `k + 1` basis values that can be nonzero at `x` into
    /// `out[..=k]` and returns the index of the first of them.
    pub fn nonzero_basis(&self, x: f64, out: &mut [f64]) -> usize {
        let x = self.clamp(x);
        let span = self.span(x);
        self.fill_basis(x, span, self.order, out);
        span - self.order
    }

    /// Like [`nonzero_basis`](Self::nonzero_basis) but also writes the
    /// derivatives with respect to the (clamped) input into `ders[..=k]`.
    pub fn nonzero_basis_with_derivative(
        &self,
        x: f64,
        vals: &mut [f64],
        ders: &mut [f64],
    ) -> usize {
        let x = self.clamp(x);
        let span = self.span(x);
        let k = self.order;
        self.fill_basis(x, span, k, vals);
        if k == 0 {
            ders[0] = 0.0;
            return span;
        }
        // degree k-1 functions nonzero on this span start at span-k+1
        let mut lower = [0.0; MAX_ORDER + 1];
        self.fill_basis(x, span, k - 1, &mut lower);
        let inv = 1.0 / self.step;
        for m in 0..=k {
            let left = if m >= 1 { lower[m - 1] } else { 0.0 };
            let right = if m < k { lower[m] } else { 0.0 };
            ders[m] = (left - right) * inv;
        }
        span - k
    }

    /// Nonzero degree-`p` basis values on `span` (de Boor's triangular scheme).
    fn fill_basis(&self, x: f64, span: usize, p: usize, out: &mut [f64]) {
        let t = &self.knots;
        let mut left = [0.0; MAX_ORDER + 1];
        let mut right = [0.0; MAX_ORDER + 1];
        out[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = out[r] / (right[r + 1] + left[j - r]);
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
    }

    /// Full basis vector of length `G + k` at the clamped input.
    pub fn basis(&self, x: f64) -> Vec<f64> {
        let mut local = [0.0; MAX_ORDER + 1];
        let start = self.nonzero_basis(x, &mut local);
        let mut full = vec![0.0; self.basis_count()];
        full[start..=start + self.order].copy_from_slice(&local[..=self.order]);
        full
    }
}

/// Evaluates all `G + k` basis functions of `grid` at `x`.
pub fn bspline_basis(x: f64, grid: &SplineGrid) -> Vec<f64> {
    grid.basis(x)
}
