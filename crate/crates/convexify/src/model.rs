//! Problem coefficients, validation of the structural assumptions
//! (symmetry, ellipticity, positivity of the initial data), and
//! manufactured-solution oracles with known ground-truth `c(x)`.
//!
//! Both oracles produce solutions of the form `u(x,t) = sum_k profile_k(x)
//! exp(rate_k * t)`, which are exact for both t > 0 and t < 0. A generic
//! backward-in-time solve would be unstable, so data generation only uses
//! these closed forms.

use crate::error::{ConvexifyError, Result};
use crate::field::{d1, d2, Field, TensorGrid};
use nalgebra::{DMatrix, SymmetricEigen};

/// Coefficient fields sampled on a spatial grid.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub grid: TensorGrid,
    /// `a[i * n + j]` is the spatial field of the diffusion entry `a_ij`.
    pub a: Vec<Vec<f64>>,
    /// `b[j]` is the spatial field of the drift entry `b_j`.
    pub b: Vec<Vec<f64>>,
    pub c_true: Vec<f64>,
    pub f: Vec<f64>,
    /// The positivity constant: `f >= 2 * b_lower > 0` is required.
    pub b_lower: f64,
}

impl CoefficientSet {
    pub fn n_space(&self) -> usize {
        self.grid.ndim()
    }

    /// Identity diffusion, zero drift, zero `c`, with `f` and `c` left to the
    /// caller to fill.
    pub fn isotropic(grid: &TensorGrid) -> Self {
        let n = grid.ndim();
        let len = grid.len;
        let mut a = vec![vec![0.0; len]; n * n];
        for i in 0..n {
            a[i * n + i] = vec![1.0; len];
        }
        Self {
            grid: grid.clone(),
            a,
            b: vec![vec![0.0; len]; n],
            c_true: vec![0.0; len],
            f: vec![1.0; len],
            b_lower: 0.25,
        }
    }

    pub fn with_f(mut self, f: impl Fn(&[f64]) -> f64) -> Self {
        self.f = (0..self.grid.len).map(|p| f(&self.grid.coords(p))).collect();
        // auto b_lower: 0.25 * min f
        let fmin = self.f.iter().cloned().fold(f64::INFINITY, f64::min);
        self.b_lower = 0.25 * fmin;
        self
    }

    pub fn with_c(mut self, c: impl Fn(&[f64]) -> f64) -> Self {
        self.c_true = (0..self.grid.len).map(|p| c(&self.grid.coords(p))).collect();
        self
    }

    pub fn f_field(&self) -> Field {
        Field {
            data: self.f.clone(),
            shape: self.grid.shape.clone(),
        }
    }
}

/// Empirical ellipticity bounds and positivity check.
///
/// Returns `(mu1, mu2)`: the extreme Rayleigh quotients of `a_ij` over all
/// nodes (eigenvalue bounds of each nodal matrix, cross-checked on canonical
/// test vectors).
pub fn validate_coefficients(coeffs: &CoefficientSet) -> Result<(f64, f64)> {
    let n = coeffs.n_space();
    let len = coeffs.grid.len;
    for i in 0..n {
        for j in 0..n {
            for p in 0..len {
                if coeffs.a[i * n + j][p] != coeffs.a[j * n + i][p] {
                    return Err(ConvexifyError::Ellipticity(format!(
                        "a_{i}{j} != a_{j}{i} at node {p}"
                    )));
                }
            }
        }
    }
    let mut mu1 = f64::INFINITY;
    let mut mu2 = f64::NEG_INFINITY;
    for p in 0..len {
        let m = DMatrix::from_fn(n, n, |i, j| coeffs.a[i * n + j][p]);
        let eig = SymmetricEigen::new(m);
        for &ev in eig.eigenvalues.iter() {
            mu1 = mu1.min(ev);
            mu2 = mu2.max(ev);
        }
    }
    if mu1 <= 0.0 {
        return Err(ConvexifyError::Ellipticity(format!(
            "smallest Rayleigh quotient {mu1} is not positive"
        )));
    }
    let fmin = coeffs.f.iter().cloned().fold(f64::INFINITY, f64::min);
    if fmin < 2.0 * coeffs.b_lower || coeffs.b_lower <= 0.0 {
        return Err(ConvexifyError::Positivity(format!(
            "min f = {fmin} < 2 * b_lower = {}",
            2.0 * coeffs.b_lower
        )));
    }
    Ok((mu1, mu2))
}

/// Tikhonov parameters of the cost functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TikhonovParams {
    pub alpha: f64,
    pub radius: f64,
}

impl TikhonovParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConvexifyError::Config(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.radius <= 0.0 {
            return Err(ConvexifyError::Config("R must be positive".into()));
        }
        Ok(())
    }

    /// Lower edge of the admissible alpha window for the strict-convexity
    /// guarantee; alpha below it only triggers a warning.
    pub fn alpha_window_low(lambda: f64, nu: f64, d: f64) -> f64 {
        (-lambda / (2.0 * d.powf(nu))).exp()
    }
}

/// Exact solutions of the form `u(x,t) = sum_k profile_k(x) exp(rate_k t)`.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub spatial: TensorGrid,
    /// `(rate, spatial profile)` pairs.
    pub modes: Vec<(f64, Vec<f64>)>,
    pub c_true: Vec<f64>,
    pub f: Vec<f64>,
    pub b_lower: f64,
}

impl OracleSolution {
    pub fn value(&self, node: usize, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|(rate, prof)| prof[node] * (rate * t).exp())
            .sum()
    }

    pub fn dt(&self, node: usize, t: f64) -> f64 {
        self.modes
            .iter()
            .map(|(rate, prof)| rate * prof[node] * (rate * t).exp())
            .sum()
    }

    /// `w_true = (ln u)_t = u_t / u`.
    pub fn w_true(&self, node: usize, t: f64) -> f64 {
        self.dt(node, t) / self.value(node, t)
    }
}

/// Apply the principal part plus drift, `L_0 g + sum_j b_j g_{x_j}`, with the
/// standard stencils on the coefficient grid.
pub fn apply_l0_drift(coeffs: &CoefficientSet, g: &Field) -> Field {
    let n = coeffs.n_space();
    let grid = &coeffs.grid;
    let mut out = Field::zeros(grid);
    let firsts: Vec<Field> = (0..n).map(|k| d1(grid, g, k)).collect();
    for i in 0..n {
        for j in 0..n {
            let second = if i == j {
                d2(grid, g, i)
            } else {
                d1(grid, &firsts[i], j)
            };
            for p in 0..grid.len {
                out.data[p] += coeffs.a[i * n + j][p] * second.data[p];
            }
        }
    }
    for (j, fj) in firsts.iter().enumerate() {
        for p in 0..grid.len {
            out.data[p] += coeffs.b[j][p] * fj.data[p];
        }
    }
    out
}

/// Separable oracle `u = f(x) exp(mu t)` with `c_true` chosen so the
/// discrete equation `u_t = L u` holds identically at the nodes:
/// `c_true = mu - (L_0 f + sum_j b_j f_{x_j}) / f`.
pub fn oracle_separable(coeffs: &CoefficientSet, mu: f64) -> Result<OracleSolution> {
    let fmin = coeffs.f.iter().cloned().fold(f64::INFINITY, f64::min);
    if fmin <= 0.0 {
        return Err(ConvexifyError::Positivity(format!(
            "separable oracle needs f > 0, min f = {fmin}"
        )));
    }
    let lf = apply_l0_drift(coeffs, &coeffs.f_field());
    let c_true: Vec<f64> = coeffs
        .f
        .iter()
        .zip(&lf.data)
        .map(|(&f, &l)| mu - l / f)
        .collect();
    Ok(OracleSolution {
        spatial: coeffs.grid.clone(),
        modes: vec![(mu, coeffs.f.clone())],
        c_true,
        f: coeffs.f.clone(),
        b_lower: coeffs.b_lower,
    })
}

/// Discrete Neumann operator `L_h = sum_k a_kk d^2/dx_k^2 + c(x)` on the
/// coefficient grid, in generalized symmetric form `W^-1 M` with `W` the
/// per-node weight product (half weights at faces) and `M` symmetric.
fn assemble_neumann(coeffs: &CoefficientSet) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = coeffs.n_space();
    let grid = &coeffs.grid;
    // only symmetric generators are supported: zero drift, constant diagonal a
    for j in 0..n {
        if coeffs.b[j].iter().any(|&v| v != 0.0) {
            return Err(ConvexifyError::UnsupportedGenerator(
                "eigenmode oracle requires b_j = 0".into(),
            ));
        }
    }
    let mut diag_a = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let fld = &coeffs.a[i * n + j];
            if i == j {
                diag_a[i] = fld[0];
                if fld.iter().any(|&v| v != fld[0]) {
                    return Err(ConvexifyError::UnsupportedGenerator(
                        "eigenmode oracle requires spatially constant diagonal a_ii".into(),
                    ));
                }
            } else if fld.iter().any(|&v| v != 0.0) {
                return Err(ConvexifyError::UnsupportedGenerator(
                    "eigenmode oracle requires diagonal a_ij".into(),
                ));
            }
        }
    }
    let len = grid.len;
    let w: Vec<f64> = (0..len)
        .map(|p| {
            grid.unravel(p)
                .iter()
                .enumerate()
                .map(|(k, &i)| {
                    if i == 0 || i == grid.shape[k] - 1 {
                        0.5
                    } else {
                        1.0
                    }
                })
                .product()
        })
        .collect();
    let mut m = DMatrix::zeros(len, len);
    for axis in 0..n {
        let h2 = grid.spacing[axis] * grid.spacing[axis];
        let nk = grid.shape[axis];
        for p in 0..len {
            let idx = grid.unravel(p);
            let i = idx[axis];
            // transverse weight product
            let wt: f64 = idx
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != axis)
                .map(|(k, &ik)| {
                    if ik == 0 || ik == grid.shape[k] - 1 {
                        0.5
                    } else {
                        1.0
                    }
                })
                .product();
            let s = grid.strides[axis];
            let scale = diag_a[axis] * wt / h2;
            if i == 0 {
                m[(p, p)] += -scale;
                m[(p, p + s)] += scale;
            } else if i == nk - 1 {
                m[(p, p)] += -scale;
                m[(p, p - s)] += scale;
            } else {
                m[(p, p - s)] += scale;
                m[(p, p)] += -2.0 * scale;
                m[(p, p + s)] += scale;
            }
        }
    }
    for p in 0..len {
        m[(p, p)] += w[p] * coeffs.c_true[p];
    }
    Ok((m, w))
}

/// Spectral oracle: discrete Neumann eigenpairs of `L_h = L_0 + c` on an
/// enlarged box, truncated to the `num_modes` least-decaying modes.
///
/// `u(x,t) = sum_k gamma_k v_k(x) exp(lambda_k t)` solves the semi-discrete
/// equation exactly for t of either sign; `f = u(.,0)`.
pub fn oracle_eigenmode(
    coeffs: &CoefficientSet,
    num_modes: usize,
    gammas: &[f64],
    exponent_cap: f64,
    t_max: f64,
) -> Result<OracleSolution> {
    if num_modes == 0 || gammas.len() < num_modes {
        return Err(ConvexifyError::Config(format!(
            "need at least {num_modes} mode weights, got {}",
            gammas.len()
        )));
    }
    let (m, w) = assemble_neumann(coeffs)?;
    let len = coeffs.grid.len;
    // B = W^-1/2 M W^-1/2 is symmetric and similar to W^-1 M
    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let b = DMatrix::from_fn(len, len, |p, q| m[(p, q)] / (sqrt_w[p] * sqrt_w[q]));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());

    let mut modes = Vec::with_capacity(num_modes);
    for (k, &col) in order.iter().take(num_modes).enumerate() {
        let lam = eig.eigenvalues[col];
        if lam.abs() * t_max > exponent_cap {
            return Err(ConvexifyError::ExponentCap {
                value: lam.abs() * t_max,
                cap: exponent_cap,
            });
        }
        let mut v: Vec<f64> = (0..len)
            .map(|p| eig.eigenvectors[(p, col)] / sqrt_w[p])
            .collect();
        // deterministic normalization: max-abs entry is +1
        let (imax, vmax) = v
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |(im, vm), (i, &x)| {
                if x.abs() > vm.abs() {
                    (i, x)
                } else {
                    (im, vm)
                }
            });
        let _ = imax;
        for x in &mut v {
            *x /= vmax;
        }
        modes.push((lam, v, gammas[k]));
    }
    let f: Vec<f64> = (0..len)
        .map(|p| modes.iter().map(|(_, v, g)| g * v[p]).sum())
        .collect();
    let fmin = f.iter().cloned().fold(f64::INFINITY, f64::min);
    if fmin < 2.0 * coeffs.b_lower {
        return Err(ConvexifyError::Positivity(format!(
            "eigenmode f has min {fmin} < 2 * b_lower = {}",
            2.0 * coeffs.b_lower
        )));
    }
    Ok(OracleSolution {
        spatial: coeffs.grid.clone(),
        modes: modes
            .into_iter()
            .map(|(lam, v, g)| (lam, v.iter().map(|x| g * x).collect()))
            .collect(),
        c_true: coeffs.c_true.clone(),
        f,
        b_lower: coeffs.b_lower,
    })
}

/// Matrix application of the assembled Neumann operator, for residual
/// cross-checks.
pub fn apply_neumann(coeffs: &CoefficientSet, g: &[f64]) -> Result<Vec<f64>> {
    let (m, w) = assemble_neumann(coeffs)?;
    let len = coeffs.grid.len;
    Ok((0..len)
        .map(|p| (0..len).map(|q| m[(p, q)] * g[q]).sum::<f64>() / w[p])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(n: usize, lo: f64, hi: f64) -> TensorGrid {
        TensorGrid::new(&[(lo, hi)], &[n]).unwrap()
    }

    #[test]
    fn identity_matrix_bounds() {
        let grid = grid_1d(11, 0.0, 1.0);
        let coeffs = CoefficientSet::isotropic(&grid);
        let (m1, m2) = validate_coefficients(&coeffs).unwrap();
        assert!((m1 - 1.0).abs() < 1e-12 && (m2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matrix_bounds_2d() {
        let grid = TensorGrid::new(&[(0.0, 1.0), (0.0, 1.0)], &[6, 6]).unwrap();
        let mut coeffs = CoefficientSet::isotropic(&grid);
        coeffs.a[3] = vec![2.0; grid.len]; // a_22 = 2
        let (m1, m2) = validate_coefficients(&coeffs).unwrap();
        assert!((m1 - 1.0).abs() < 1e-12 && (m2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn positivity_failure() {
        let grid = grid_1d(11, 0.0, 1.0);
        let mut coeffs = CoefficientSet::isotropic(&grid);
        coeffs.b_lower = 0.6; // f = 1 < 1.2
        assert!(matches!(
            validate_coefficients(&coeffs),
            Err(ConvexifyError::Positivity(_))
        ));
    }

    #[test]
    fn asymmetric_a_rejected() {
        let grid = TensorGrid::new(&[(0.0, 1.0), (0.0, 1.0)], &[6, 6]).unwrap();
        let mut coeffs = CoefficientSet::isotropic(&grid);
        coeffs.a[1] = vec![0.5; grid.len]; // a_12 != a_21
        assert!(validate_coefficients(&coeffs).is_err());
    }

    #[test]
    fn separable_constant_f() {
        // f = 1, a = I, b = 0, mu = 1: c_true = 1, u = e^t
        let grid = grid_1d(11, 0.0, 1.0);
        let coeffs = CoefficientSet::isotropic(&grid);
        let oracle = oracle_separable(&coeffs, 1.0).unwrap();
        for p in 0..grid.len {
            assert!((oracle.c_true[p] - 1.0).abs() < 1e-10);
        }
        assert!((oracle.value(3, 0.5) - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn separable_exponential_f() {
        // f = e^x, mu = 0: c_true = -1 within O(h^2)
        let grid = grid_1d(41, 0.0, 0.5);
        let coeffs = CoefficientSet::isotropic(&grid).with_f(|c| c[0].exp());
        let oracle = oracle_separable(&coeffs, 0.0).unwrap();
        let h = grid.spacing[0];
        for p in 0..grid.len {
            assert!(
                (oracle.c_true[p] + 1.0).abs() < 2.0 * h * h,
                "c_true {} at node {p}",
                oracle.c_true[p]
            );
        }
    }

    #[test]
    fn separable_sine_f() {
        // f = 2 + sin(x), mu = 0: c_true = sin(x)/(2+sin(x)) within O(h^2)
        let grid = grid_1d(81, 0.0, 0.5);
        let coeffs = CoefficientSet::isotropic(&grid).with_f(|c| 2.0 + c[0].sin());
        let oracle = oracle_separable(&coeffs, 0.0).unwrap();
        let h = grid.spacing[0];
        for p in 0..grid.len {
            let x = grid.coords(p)[0];
            let expected = x.sin() / (2.0 + x.sin());
            assert!((oracle.c_true[p] - expected).abs() < 2.0 * h * h);
        }
    }

    #[test]
    fn eigenmode_neumann_spectrum() {
        // c = 0, a = I: eigenvalues -(k pi / L)^2 within O(h^2)
        let grid = grid_1d(81, -0.5, 0.5);
        let coeffs = CoefficientSet::isotropic(&grid).with_f(|_| 1.0);
        let oracle = oracle_eigenmode(&coeffs, 3, &[2.0, 0.0, 0.0], 100.0, 1.0).unwrap();
        let h = grid.spacing[0];
        for (k, (lam, _)) in oracle.modes.iter().enumerate() {
            let exact = -(k as f64 * std::f64::consts::PI / 1.0).powi(2);
            assert!(
                (lam - exact).abs() < 10.0 * h * h * (1.0 + exact.abs()),
                "mode {k}: {lam} vs {exact}"
            );
        }
    }

    #[test]
    fn eigenmode_single_mode_degenerates_to_separable() {
        // K = 1 on the constant ground mode of c = const: u = gamma * e^{ct}
        let grid = grid_1d(41, -0.5, 0.5);
        let coeffs = CoefficientSet::isotropic(&grid)
            .with_f(|_| 1.0)
            .with_c(|_| 0.7);
        let oracle = oracle_eigenmode(&coeffs, 1, &[2.0], 100.0, 1.0).unwrap();
        assert!((oracle.modes[0].0 - 0.7).abs() < 1e-8);
        for p in 0..grid.len {
            assert!((oracle.f[p] - 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn eigenmode_residual_is_zero() {
        // u_t - L_h u = 0 at every node and time, to relative machine precision
        // (fast modes reach huge magnitudes at negative t)
        let grid = grid_1d(31, -0.4, 0.4);
        let coeffs = CoefficientSet::isotropic(&grid)
            .with_f(|_| 1.0)
            .with_c(|c| 0.3 * c[0].cos());
        let oracle = oracle_eigenmode(&coeffs, 3, &[2.0, 0.1, 0.05], 100.0, 0.6).unwrap();
        for &t in &[-0.5, -0.2, 0.0, 0.3, 0.55] {
            let u: Vec<f64> = (0..grid.len).map(|p| oracle.value(p, t)).collect();
            let ut: Vec<f64> = (0..grid.len).map(|p| oracle.dt(p, t)).collect();
            let lu = apply_neumann(&coeffs, &u).unwrap();
            let scale = ut.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for p in 0..grid.len {
                assert!(
                    (ut[p] - lu[p]).abs() < 1e-9 * scale,
                    "residual {} at node {p}, t {t}, scale {scale}",
                    ut[p] - lu[p]
                );
            }
        }
    }

    #[test]
    fn eigenmode_rejects_drift() {
        let grid = grid_1d(21, 0.0, 1.0);
        let mut coeffs = CoefficientSet::isotropic(&grid);
        coeffs.b[0] = vec![1.0; grid.len];
        assert!(matches!(
            oracle_eigenmode(&coeffs, 1, &[1.0], 100.0, 1.0),
            Err(ConvexifyError::UnsupportedGenerator(_))
        ));
    }

    #[test]
    fn eigenmode_exponent_cap() {
        let grid = grid_1d(41, -0.5, 0.5);
        let coeffs = CoefficientSet::isotropic(&grid).with_f(|_| 1.0);
        assert!(matches!(
            oracle_eigenmode(&coeffs, 5, &[2.0, 0.1, 0.1, 0.1, 0.1], 1.0, 10.0),
            Err(ConvexifyError::ExponentCap { .. })
        ));
    }
}
