//! The space-time domain family, the Carleman weight, grids, masks and
//! quadrature.
//!
//! The region of interest is the paraboloid-bounded set
//! `G = { x1 > 0, x1 + |xbar|^2 + t^2/T^2 + a < d }` inside the tensor
//! bounding box. Fields live on the full box; integrals over `G` use
//! indicator-weighted trapezoidal cell weights.

use crate::error::{ConvexifyError, Result};
use crate::field::TensorGrid;

/// Grid and domain parameters. Axis order is `x1, xbar..., t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n_space: usize,
    pub a: f64,
    pub d: f64,
    pub t_horizon: f64,
    pub epsilon: f64,
    pub n_x1: usize,
    pub n_xbar: usize,
    pub n_t: usize,
    pub fine_factor: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.n_space) {
            return Err(ConvexifyError::Config(format!(
                "n_space must be 1, 2 or 3, got {}",
                self.n_space
            )));
        }
        if !(self.a > 0.0 && self.a < self.d && self.d < 1.0) {
            return Err(ConvexifyError::Config(format!(
                "need 0 < a < d < 1, got a={}, d={}",
                self.a, self.d
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < self.d - self.a) {
            return Err(ConvexifyError::Config(format!(
                "need epsilon in (0, d-a), got epsilon={}, d-a={}",
                self.epsilon,
                self.d - self.a
            )));
        }
        if self.t_horizon <= 0.0 {
            return Err(ConvexifyError::Config("T must be positive".into()));
        }
        for (name, n) in [("n_x1", self.n_x1), ("n_xbar", self.n_xbar), ("n_t", self.n_t)] {
            if n < 5 {
                return Err(ConvexifyError::Config(format!(
                    "{name} must be at least 5, got {n}"
                )));
            }
        }
        if self.n_t % 2 == 0 {
            return Err(ConvexifyError::Config(format!(
                "n_t must be odd so that t = 0 is a grid node, got {}",
                self.n_t
            )));
        }
        if self.fine_factor < 1 {
            return Err(ConvexifyError::Config("fine_factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Default epsilon when a config leaves it unset.
    pub fn default_epsilon(a: f64, d: f64) -> f64 {
        0.1 * (d - a)
    }

    pub fn ndim(&self) -> usize {
        self.n_space + 1
    }

    /// Per-axis ranges of the bounding box of `G`.
    pub fn box_ranges(&self) -> Vec<(f64, f64)> {
        let s = (self.d - self.a).sqrt();
        let mut ranges = vec![(0.0, self.d - self.a)];
        for _ in 1..self.n_space {
            ranges.push((-s, s));
        }
        ranges.push((-self.t_horizon * s, self.t_horizon * s));
        ranges
    }

    pub fn axis_counts(&self) -> Vec<usize> {
        let mut counts = vec![self.n_x1];
        for _ in 1..self.n_space {
            counts.push(self.n_xbar);
        }
        counts.push(self.n_t);
        counts
    }
}

/// The level function `psi = x1 + |xbar|^2 + t^2/T^2 + a`; `coords` is
/// ordered `x1, xbar..., t` with time last.
pub fn psi_value(coords: &[f64], spec: &GridSpec) -> f64 {
    let x1 = coords[0];
    let t = coords[coords.len() - 1];
    let xbar_sq: f64 = coords[1..coords.len() - 1].iter().map(|v| v * v).sum();
    x1 + xbar_sq + t * t / (spec.t_horizon * spec.t_horizon) + spec.a
}

/// Normalization of the squared Carleman weight: `Reference` carries the
/// classical exp(-3*lambda*d^-nu) prefactor of the cost functional; `Max`
/// shifts the exponent by -2*lambda*a^-nu so the combined weight never
/// exceeds 1. The two differ by a fixed positive constant, so minimizers
/// and all convexity inequalities are unaffected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Reference,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanParams {
    pub lambda: f64,
    pub nu: f64,
    pub normalization: Normalization,
}

impl CarlemanParams {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(ConvexifyError::Config("lambda must be >= 0".into()));
        }
        if self.nu < 1.0 {
            return Err(ConvexifyError::Config("nu must be >= 1".into()));
        }
        Ok(())
    }

    /// Additive shift of the combined exponent per the normalization.
    pub fn exponent_shift(&self, spec: &GridSpec) -> f64 {
        match self.normalization {
            Normalization::Reference => -3.0 * self.lambda * spec.d.powf(-self.nu),
            Normalization::Max => -2.0 * self.lambda * spec.a.powf(-self.nu),
        }
    }
}

/// Squared Carleman weight including the normalization shift, computed as a
/// single exponential of the combined exponent.
pub fn carleman_weight_sq(coords: &[f64], params: &CarlemanParams, spec: &GridSpec) -> Result<f64> {
    let psi = psi_value(coords, spec);
    let exponent = 2.0 * params.lambda * psi.powf(-params.nu) + params.exponent_shift(spec);
    if exponent > 700.0 {
        return Err(ConvexifyError::WeightOverflow {
            lambda: params.lambda,
            nu: params.nu,
            a: spec.a,
            exponent,
        });
    }
    Ok(exponent.exp())
}

/// Space-time tensor grid over the bounding box with membership masks and
/// masked quadrature. Immutable after construction.
#[derive(Debug, Clone)]
pub struct DomainGrid {
    pub spec: GridSpec,
    pub grid: TensorGrid,
    pub inside_g: Vec<bool>,
    pub inside_g_eps: Vec<bool>,
    pub on_gamma: Vec<bool>,
    pub near_xi: Vec<bool>,
    /// Quadrature weights for integrals over `G`; zero outside `inside_g`.
    pub quad_g: Vec<f64>,
    /// Full-box trapezoidal weights (used by the H4 inner product).
    pub quad_box: Vec<f64>,
    /// Index of the t = 0 node along the time axis.
    pub t_zero: usize,
}

impl DomainGrid {
    pub fn t_axis(&self) -> usize {
        self.grid.ndim() - 1
    }

    /// The spatial grid underlying the t = 0 slice.
    pub fn spatial_grid(&self) -> TensorGrid {
        let nd = self.grid.ndim();
        let ranges: Vec<(f64, f64)> = (0..nd - 1)
            .map(|k| (self.grid.axes[k][0], *self.grid.axes[k].last().unwrap()))
            .collect();
        let counts: Vec<usize> = self.grid.shape[..nd - 1].to_vec();
        TensorGrid::new(&ranges, &counts).expect("spatial grid from a valid domain grid")
    }
}

/// Builds the grid, masks and quadrature for a validated [`GridSpec`].
pub fn build_domain(spec: &GridSpec) -> Result<DomainGrid> {
    spec.validate()?;
    let grid = TensorGrid::new(&spec.box_ranges(), &spec.axis_counts())?;
    let nd = grid.ndim();
    let t_zero = (grid.shape[nd - 1] - 1) / 2;
    debug_assert!(grid.axes[nd - 1][t_zero].abs() < 1e-12);

    let mut inside_g = vec![false; grid.len];
    let mut inside_g_eps = vec![false; grid.len];
    let mut on_gamma = vec![false; grid.len];
    for p in 0..grid.len {
        let c = grid.coords(p);
        let psi = psi_value(&c, spec);
        inside_g[p] = c[0] > 0.0 && psi < spec.d;
        inside_g_eps[p] = c[0] > 0.0 && psi < spec.d - spec.epsilon;
        if c[0] == 0.0 {
            // psi on the x1 = 0 face is |xbar|^2 + t^2/T^2 + a
            on_gamma[p] = psi - spec.a < spec.d - spec.a;
        }
    }
    if !inside_g.iter().any(|&b| b) {
        return Err(ConvexifyError::Config("mask of G is empty".into()));
    }
    if !on_gamma.iter().any(|&b| b) {
        return Err(ConvexifyError::Config("Gamma mask is empty".into()));
    }

    // Cell-based masked quadrature: each cell contributes frac * volume,
    // where frac is the fraction of its corners inside G, distributed
    // equally among its inside corners.
    let mut quad_g = vec![0.0; grid.len];
    let mut near_xi = vec![false; grid.len];
    let cell_vol: f64 = grid.spacing.iter().product();
    let n_corners = 1usize << nd;
    let cell_counts: Vec<usize> = grid.shape.iter().map(|&n| n - 1).collect();
    let n_cells: usize = cell_counts.iter().product();
    let mut cell_idx = vec![0usize; nd];
    for _ in 0..n_cells {
        let base: usize = cell_idx
            .iter()
            .zip(&grid.strides)
            .map(|(i, s)| i * s)
            .sum();
        let mut inside_corners: Vec<usize> = Vec::with_capacity(n_corners);
        for mask in 0..n_corners {
            let mut p = base;
            for (k, s) in grid.strides.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    p += s;
                }
            }
            if inside_g[p] {
                inside_corners.push(p);
            }
        }
        let k_in = inside_corners.len();
        if k_in > 0 && k_in < n_corners {
            for mask in 0..n_corners {
                let mut p = base;
                for (k, s) in grid.strides.iter().enumerate() {
                    if mask & (1 << k) != 0 {
                        p += s;
                    }
                }
                near_xi[p] = true;
            }
        }
        if k_in > 0 {
            let frac = k_in as f64 / n_corners as f64;
            let share = frac * cell_vol / k_in as f64;
            for &p in &inside_corners {
                quad_g[p] += share;
            }
        }
        // odometer
        for k in (0..nd).rev() {
            cell_idx[k] += 1;
            if cell_idx[k] < cell_counts[k] {
                break;
            }
            cell_idx[k] = 0;
        }
    }

    let quad_box = grid.trapezoid_weights();

    Ok(DomainGrid {
        spec: spec.clone(),
        grid,
        inside_g,
        inside_g_eps,
        on_gamma,
        near_xi,
        quad_g,
        quad_box,
        t_zero,
    })
}

/// Carleman weight field (squared, normalization included) at every node.
pub fn weight_field(domain: &DomainGrid, params: &CarlemanParams) -> Result<Vec<f64>> {
    params.validate()?;
    (0..domain.grid.len)
        .map(|p| carleman_weight_sq(&domain.grid.coords(p), params, &domain.spec))
        .collect()
}
