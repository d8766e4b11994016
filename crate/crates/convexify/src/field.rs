//! Flat tensor grids and the discrete calculus used everywhere else:
//! first/second differences per axis, the two-sided Volterra accumulation,
//! and the exact transposes of all of these.
//!
//! Every operator here is linear in the field values, and every `_t` variant
//! is the exact matrix transpose of its forward counterpart. Gradient
//! assembly relies on that pairing being exact to rounding.

use crate::error::{ConvexifyError, Result};

/// A uniform tensor-product grid. Axes are ordered spatial-first with time
/// last, so time loops run over contiguous memory.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    pub axes: Vec<Vec<f64>>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
    pub strides: Vec<usize>,
    pub len: usize,
}

impl TensorGrid {
    /// Uniform grid from per-axis ranges and node counts.
    pub fn new(ranges: &[(f64, f64)], counts: &[usize]) -> Result<Self> {
        if ranges.len() != counts.len() {
            return Err(ConvexifyError::Config(
                "axis ranges and counts disagree".into(),
            ));
        }
        let mut axes = Vec::with_capacity(counts.len());
        let mut spacing = Vec::with_capacity(counts.len());
        for (&(lo, hi), &n) in ranges.iter().zip(counts) {
            if n < 5 {
                return Err(ConvexifyError::Config(format!(
                    "axis needs at least 5 nodes, got {n}"
                )));
            }
            if !(hi > lo) {
                return Err(ConvexifyError::Config(format!(
                    "degenerate axis range [{lo}, {hi}]"
                )));
            }
            let h = (hi - lo) / (n - 1) as f64;
            axes.push((0..n).map(|i| lo + h * i as f64).collect());
            spacing.push(h);
        }
        let shape: Vec<usize> = counts.to_vec();
        let mut strides = vec![1usize; shape.len()];
        for k in (0..shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * shape[k + 1];
        }
        let len = shape.iter().product();
        Ok(Self {
            axes,
            spacing,
            shape,
            strides,
            len,
        })
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Multi-index of a flat index.
    pub fn unravel(&self, flat: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.ndim());
        let mut rem = flat;
        for k in 0..self.ndim() {
            idx.push(rem / self.strides[k]);
            rem %= self.strides[k];
        }
        idx
    }

    /// Physical coordinates of a flat index.
    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.axes[k][i])
            .collect()
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Trapezoidal quadrature weights over the full box (tensor product of
    /// per-axis trapezoid weights).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self
            .shape
            .iter()
            .zip(&self.spacing)
            .map(|(&n, &h)| {
                (0..n)
                    .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
                    .collect()
            })
            .collect();
        let mut w = vec![1.0; self.len];
        for (p, wp) in w.iter_mut().enumerate() {
            let idx = self.unravel(p);
            for (k, &i) in idx.iter().enumerate() {
                *wp *= per_axis[k][i];
            }
        }
        w
    }
}

/// Scalar values at every node of a [`TensorGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Field {
    pub fn zeros(grid: &TensorGrid) -> Self {
        Self {
            data: vec![0.0; grid.len],
            shape: grid.shape.clone(),
        }
    }

    pub fn from_fn(grid: &TensorGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.len).map(|p| f(&grid.coords(p))).collect();
        Self {
            data,
            shape: grid.shape.clone(),
        }
    }

    pub fn constant(grid: &TensorGrid, v: f64) -> Self {
        Self {
            data: vec![v; grid.len],
            shape: grid.shape.clone(),
        }
    }

    pub fn check_shape(&self, other: &Field) -> Result<()> {
        if self.shape != other.shape {
            return Err(ConvexifyError::GridMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn dot(&self, other: &Field) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn mul_pointwise(&mut self, other: &[f64]) {
        for (a, b) in self.data.iter_mut().zip(other) {
            *a *= b;
        }
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// Calls `f(base, stride, n)` once per 1D line of the grid along `axis`;
/// `base` is the flat index of the line's first node.
fn for_each_line(grid: &TensorGrid, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let n = grid.shape[axis];
    let stride = grid.strides[axis];
    let total = grid.len;
    let mut p = 0;
    while p < total {
        let i_axis = (p / stride) % n;
        if i_axis == 0 {
            f(p, stride, n);
        }
        // skip whole line when stride == 1 (time axis): lines are contiguous
        p += if stride == 1 && i_axis == 0 { n } else { 1 };
    }
}

/// Second-order first derivative along `axis` (central interior, one-sided
/// second-order at the two faces).
pub fn d1(grid: &TensorGrid, u: &Field, axis: usize) -> Field {
    let h = grid.spacing[axis];
    let mut out = Field {
        data: vec![0.0; grid.len],
        shape: grid.shape.clone(),
    };
    for_each_line(grid, axis, |base, s, n| {
        let g = |i: usize| u.data[base + i * s];
        out.data[base] = (-3.0 * g(0) + 4.0 * g(1) - g(2)) / (2.0 * h);
        for i in 1..n - 1 {
            out.data[base + i * s] = (g(i + 1) - g(i - 1)) / (2.0 * h);
        }
        out.data[base + (n - 1) * s] = (3.0 * g(n - 1) - 4.0 * g(n - 2) + g(n - 3)) / (2.0 * h);
    });
    out
}

/// Exact transpose of [`d1`].
pub fn d1_t(grid: &TensorGrid, y: &Field, axis: usize) -> Field {
    let h = grid.spacing[axis];
    let mut out = Field {
        data: vec![0.0; grid.len],
        shape: grid.shape.clone(),
    };
    for_each_line(grid, axis, |base, s, n| {
        let g = |i: usize| y.data[base + i * s];
        let mut acc = vec![0.0f64; n];
        // row 0: (-3, 4, -1)/(2h) at columns 0,1,2
        acc[0] += -3.0 * g(0) / (2.0 * h);
        acc[1] += 4.0 * g(0) / (2.0 * h);
        acc[2] += -g(0) / (2.0 * h);
        for i in 1..n - 1 {
            acc[i + 1] += g(i) / (2.0 * h);
            acc[i - 1] -= g(i) / (2.0 * h);
        }
        acc[n - 1] += 3.0 * g(n - 1) / (2.0 * h);
        acc[n - 2] += -4.0 * g(n - 1) / (2.0 * h);
        acc[n - 3] += g(n - 1) / (2.0 * h);
        for (i, v) in acc.into_iter().enumerate() {
            out.data[base + i * s] += v;
        }
    });
    out
}

/// Standard 3-point second derivative along `axis` (one-sided second-order
/// 4-point stencil at the two faces).
pub fn d2(grid: &TensorGrid, u: &Field, axis: usize) -> Field {
    let h2 = grid.spacing[axis] * grid.spacing[axis];
    let mut out = Field {
        data: vec![0.0; grid.len],
        shape: grid.shape.clone(),
    };
    for_each_line(grid, axis, |base, s, n| {
        let g = |i: usize| u.data[base + i * s];
        out.data[base] = (2.0 * g(0) - 5.0 * g(1) + 4.0 * g(2) - g(3)) / h2;
        for i in 1..n - 1 {
            out.data[base + i * s] = (g(i + 1) - 2.0 * g(i) + g(i - 1)) / h2;
        }
        out.data[base + (n - 1) * s] =
            (2.0 * g(n - 1) - 5.0 * g(n - 2) + 4.0 * g(n - 3) - g(n - 4)) / h2;
    });
    out
}

/// Exact transpose of [`d2`].
pub fn d2_t(grid: &TensorGrid, y: &Field, axis: usize) -> Field {
    let h2 = grid.spacing[axis] * grid.spacing[axis];
    let mut out = Field {
        data: vec![0.0; grid.len],
        shape: grid.shape.clone(),
    };
    for_each_line(grid, axis, |base, s, n| {
        let g = |i: usize| y.data[base + i * s];
        let mut acc = vec![0.0f64; n];
        acc[0] += 2.0 * g(0) / h2;
        acc[1] += -5.0 * g(0) / h2;
        acc[2] += 4.0 * g(0) / h2;
        acc[3] += -g(0) / h2;
        for i in 1..n - 1 {
            acc[i + 1] += g(i) / h2;
            acc[i] += -2.0 * g(i) / h2;
            acc[i - 1] += g(i) / h2;
        }
        acc[n - 1] += 2.0 * g(n - 1) / h2;
        acc[n - 2] += -5.0 * g(n - 1) / h2;
        acc[n - 3] += 4.0 * g(n - 1) / h2;
        acc[n - 4] += -g(n - 1) / h2;
        for (i, v) in acc.into_iter().enumerate() {
            out.data[base + i * s] += v;
        }
    });
    out
}

/// Trapezoidal accumulation `t -> integral from 0 to t` along `axis`, with
/// `zero_index` the node where the axis coordinate is 0. The result is 0
/// there, and for nodes below it the signed integral is negative of the
/// backward accumulation.
pub fn volterra(grid: &TensorGrid, u: &Field, axis: usize, zero_index: usize) -> Field {
    let h = grid.spacing[axis];
    let mut out = Field {
        data: vec![0.0; grid.len],
        shape: grid.shape.clone(),
    };
    for_each_line(grid, axis, |base, s, n| {
        let g = |i: usize| u.data[base + i * s];
        out.data[base + zero_index * s] = 0.0;
        let mut acc = 0.0;
        for k in zero_index + 1..n {
            acc += (g(k - 1) + g(k)) * h / 2.0;
            out.data[base + k * s] = acc;
        }
        acc = 0.0;
        for k in (0..zero_index).rev() {
            acc -= (g(k) + g(k + 1)) * h / 2.0;
            out.data[base + k * s] = acc;
        }
    });
    out
}

/// Exact transpose of [`volterra`].
pub fn volterra_t(grid: &TensorGrid, y: &Field, axis: usize, zero_index: usize) -> Field {
    let h = grid.spacing[axis];
    let mut out = Field {
        data: vec![0.0; grid.len],
        shape: grid.shape.clone(),
    };
    for_each_line(grid, axis, |base, s, n| {
        let g = |i: usize| y.data[base + i * s];
        let mut acc = vec![0.0f64; n];
        // columns j > zero_index: h/2*y_j + h * sum_{k>j} y_k
        let mut suffix = 0.0;
        for j in (zero_index + 1..n).rev() {
            acc[j] = h / 2.0 * g(j) + h * suffix;
            suffix += g(j);
        }
        // column zero_index: h/2*(sum_{k>i0} y_k) - h/2*(sum_{k<i0} y_k)
        let upper: f64 = (zero_index + 1..n).map(g).sum();
        let lower: f64 = (0..zero_index).map(g).sum();
        acc[zero_index] = h / 2.0 * upper - h / 2.0 * lower;
        // columns j < zero_index: -h/2*y_j - h * sum_{k<j} y_k
        let mut prefix = 0.0;
        for (j, a) in acc.iter_mut().enumerate().take(zero_index) {
            *a = -h / 2.0 * g(j) - h * prefix;
            prefix += g(j);
        }
        for (i, v) in acc.into_iter().enumerate() {
            out.data[base + i * s] += v;
        }
    });
    out
}

/// Applies `d1` along each axis `beta[k]` times, ascending axis order.
pub fn compose_d(grid: &TensorGrid, u: &Field, beta: &[usize]) -> Field {
    let mut cur = u.clone();
    for (axis, &count) in beta.iter().enumerate() {
        for _ in 0..count {
            cur = d1(grid, &cur, axis);
        }
    }
    cur
}

/// Exact transpose of [`compose_d`] (descending axis order, transposed ops).
pub fn compose_d_t(grid: &TensorGrid, y: &Field, beta: &[usize]) -> Field {
    let mut cur = y.clone();
    for (axis, &count) in beta.iter().enumerate().rev() {
        for _ in 0..count {
            cur = d1_t(grid, &cur, axis);
        }
    }
    cur
}

/// All multi-indices over `ndim` axes with total order at most `max_order`,
/// in a fixed deterministic order.
pub fn multi_indices(ndim: usize, max_order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; ndim];
    fn rec(k: usize, remaining: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=remaining {
            cur[k] = b;
            rec(k + 1, remaining - b, cur, out);
        }
    }
    rec(0, max_order, &mut cur, &mut out);
    out
}
