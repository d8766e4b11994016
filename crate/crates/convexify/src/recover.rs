//! Reading the coefficient and the state back out of a minimizer `w`.
//!
//! At `t = 0` the substitution gives `c(x) = w(x, 0) - L_c ln f - sum_ij
//! a_ij (ln f)_{x_i} (ln f)_{x_j}`, and the state is `u = exp(ln f +
//! int_0^t w)`.

use crate::error::{ConvexifyError, Result};
use crate::field::{d1, Field};
use crate::forward::EllipticOps;
use crate::geometry::{psi_value, DomainGrid};
use crate::model::CoefficientSet;
use crate::transform::volterra_integrate;

/// Zeroth-order coefficient on the spatial grid, from the `t = 0` slice of
/// `w`. `coeffs.f` must be positive.
pub fn recover_coefficient(
    domain: &DomainGrid,
    coeffs: &CoefficientSet,
    w: &Field,
) -> Result<Vec<f64>> {
    if coeffs.f.iter().any(|&v| v <= 0.0) {
        return Err(ConvexifyError::Positivity("f must be positive".into()));
    }
    let spatial = &coeffs.grid;
    let n = coeffs.n_space();
    let lf = Field {
        data: coeffs.f.iter().map(|v| v.ln()).collect(),
        shape: spatial.shape.clone(),
    };
    let ops = EllipticOps::new(coeffs);
    let lc = ops.l_c(&lf);
    let grads: Vec<Field> = (0..n).map(|k| d1(spatial, &lf, k)).collect();
    let n_t = domain.grid.shape[domain.t_axis()];
    let mut c = Vec::with_capacity(spatial.len);
    for s in 0..spatial.len {
        let w0 = w.data[s * n_t + domain.t_zero];
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += coeffs.a[i * n + j][s] * grads[i].data[s] * grads[j].data[s];
            }
        }
        c.push(w0 - lc.data[s] - quad);
    }
    Ok(c)
}

/// `u = exp(ln f + int_0^t w)` on the space-time box; errors when the
/// exponent leaves the representable range.
pub fn reconstruct_state(
    domain: &DomainGrid,
    coeffs: &CoefficientSet,
    w: &Field,
) -> Result<Field> {
    if coeffs.f.iter().any(|&v| v <= 0.0) {
        return Err(ConvexifyError::Positivity("f must be positive".into()));
    }
    let iv = volterra_integrate(domain, w)?;
    let n_t = domain.grid.shape[domain.t_axis()];
    let mut u = Field::zeros(&domain.grid);
    for p in 0..domain.grid.len {
        let v = coeffs.f[p / n_t].ln() + iv.data[p];
        if v > 700.0 {
            return Err(ConvexifyError::Overflow(format!(
                "state exponent {v:.1} at node {p} exceeds the floating-point range"
            )));
        }
        u.data[p] = v.exp();
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorMetrics {
    pub l2: f64,
    pub linf: f64,
    /// True when the truth is (numerically) zero and the errors above are
    /// absolute instead of relative.
    pub absolute: bool,
    /// Number of spatial nodes in the comparison region.
    pub nodes: usize,
}

/// Compares a recovered coefficient to the truth over the spatial nodes whose
/// `t = 0` column lies well inside the domain (`psi < d - epsilon`).
pub fn error_metrics(domain: &DomainGrid, c_rec: &[f64], c_true: &[f64]) -> Result<ErrorMetrics> {
    if c_rec.len() != c_true.len() {
        return Err(ConvexifyError::GridMismatch(format!(
            "coefficient lengths {} vs {}",
            c_rec.len(),
            c_true.len()
        )));
    }
    let spatial = domain.spatial_grid();
    if c_rec.len() != spatial.len {
        return Err(ConvexifyError::GridMismatch(format!(
            "expected {} spatial nodes, got {}",
            spatial.len,
            c_rec.len()
        )));
    }
    let spec = &domain.spec;
    let mut num2 = 0.0;
    let mut den2 = 0.0;
    let mut num_inf = 0.0f64;
    let mut den_inf = 0.0f64;
    let mut nodes = 0;
    for s in 0..spatial.len {
        let mut coords = spatial.coords(s);
        coords.push(0.0);
        if coords[0] > 0.0 && psi_value(&coords, spec) < spec.d - spec.epsilon {
            let e = c_rec[s] - c_true[s];
            num2 += e * e;
            den2 += c_true[s] * c_true[s];
            num_inf = num_inf.max(e.abs());
            den_inf = den_inf.max(c_true[s].abs());
            nodes += 1;
        }
    }
    if nodes == 0 {
        return Err(ConvexifyError::Config(
            "comparison region is empty".into(),
        ));
    }
    let absolute = den2.sqrt() < 1e-12;
    let (l2, linf) = if absolute {
        (num2.sqrt(), num_inf)
    } else {
        (num2.sqrt() / den2.sqrt(), num_inf / den_inf)
    };
    Ok(ErrorMetrics {
        l2,
        linf,
        absolute,
        nodes,
    })
}
