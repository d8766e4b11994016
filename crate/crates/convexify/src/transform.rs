//! The change of variables `v = ln u`, `w = v_t`: transformed traces, the
//! two-sided Volterra integral, the nonlinear operator `Ltilde` and its
//! exact split `Ltilde(w1 + h) = Ltilde(w1) + S(h, w1) + Q(h)` into a part
//! linear in `h` and a pure quadratic remainder.
//!
//! `s_linear_t` is the exact transpose of `h -> S(h, w1)`; the functional
//! module builds the discrete gradient from it.

use crate::error::{ConvexifyError, Result};
use crate::field::{d1, d1_t, d2, d2_t, volterra, volterra_t, Field, TensorGrid};
use crate::forward::CauchyTraces;
use crate::geometry::DomainGrid;
use crate::model::CoefficientSet;
use nalgebra::{DMatrix, DVector};

/// Time-derivative regularization for noisy traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// Plain central differences (one-sided second order at the ends).
    Off,
    /// Local least-squares polynomial fit; derivative of the fit.
    SavGol { degree: usize, window: usize },
}

/// Transformed lateral data `g~1 = d/dt ln g1`,
/// `g~2 = g2'/g1 - g1' g2 / g1^2` on the face grid.
#[derive(Debug, Clone)]
pub struct TransformedTraces {
    pub face: TensorGrid,
    pub g1t: Vec<f64>,
    pub g2t: Vec<f64>,
    pub smoothing: Smoothing,
}

/// Nodewise time series smoother/differentiator along the last axis of
/// `grid`. Returns `(values, derivatives)`.
fn series_fit(grid: &TensorGrid, data: &[f64], smoothing: Smoothing) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_axis = grid.ndim() - 1;
    let field = Field {
        data: data.to_vec(),
        shape: grid.shape.clone(),
    };
    match smoothing {
        Smoothing::Off => {
            let deriv = d1(grid, &field, t_axis);
            Ok((data.to_vec(), deriv.data))
        }
        Smoothing::SavGol { degree, window } => {
            let n = grid.shape[t_axis];
            if window > n {
                return Err(ConvexifyError::Config(format!(
                    "smoothing window {window} exceeds time axis length {n}"
                )));
            }
            if degree + 1 > window || window % 2 == 0 {
                return Err(ConvexifyError::Config(format!(
                    "smoothing needs an odd window > degree, got degree {degree}, window {window}"
                )));
            }
            let h = grid.spacing[t_axis];
            // pseudo-inverse per in-window offset of the evaluation node
            let mut pinvs: Vec<DMatrix<f64>> = Vec::with_capacity(window);
            for offset in 0..window {
                let x = DMatrix::from_fn(window, degree + 1, |r, k| {
                    ((r as f64) - (offset as f64)).powi(k as i32)
                });
                let xtx = x.transpose() * &x;
                let inv = xtx.try_inverse().ok_or_else(|| {
                    ConvexifyError::Config("singular smoothing design matrix".into())
                })?;
                pinvs.push(inv * x.transpose());
            }
            let mut values = vec![0.0; grid.len];
            let mut derivs = vec![0.0; grid.len];
            let stride = grid.strides[t_axis];
            let half = window / 2;
            for base in 0..grid.len / n {
                // lines along the last axis are contiguous
                let line = base * n * stride..;
                let _ = line;
                let start_of_line = base * n;
                for i in 0..n {
                    let start = i.saturating_sub(half).min(n - window);
                    let offset = i - start;
                    let vals =
                        DVector::from_fn(window, |r, _| data[start_of_line + start + r]);
                    let coefs = &pinvs[offset] * vals;
                    values[start_of_line + i] = coefs[0];
                    derivs[start_of_line + i] = coefs[1] / h;
                }
            }
            Ok((values, derivs))
        }
    }
}

/// Differentiates the measured traces in time and applies the trace
/// transformation formulas nodewise.
pub fn derive_transformed_traces(
    traces: &CauchyTraces,
    smoothing: Smoothing,
) -> Result<TransformedTraces> {
    if traces.g1.iter().any(|&v| v <= 0.0) {
        return Err(ConvexifyError::Positivity(
            "g1 must be positive for the logarithmic transformation".into(),
        ));
    }
    let ln_g1: Vec<f64> = traces.g1.iter().map(|v| v.ln()).collect();
    let (_, g1_tilde) = series_fit(&traces.face, &ln_g1, smoothing)?;
    let (g1v, g1d) = series_fit(&traces.face, &traces.g1, smoothing)?;
    let (g2v, g2d) = series_fit(&traces.face, &traces.g2, smoothing)?;
    let g2_tilde: Vec<f64> = (0..traces.face.len)
        .map(|q| g2d[q] / g1v[q] - g1d[q] * g2v[q] / (g1v[q] * g1v[q]))
        .collect();
    Ok(TransformedTraces {
        face: traces.face.clone(),
        g1t: g1_tilde,
        g2t: g2_tilde,
        smoothing,
    })
}

/// Two-sided Volterra integral from the `t = 0` plane of the domain box.
pub fn volterra_integrate(domain: &DomainGrid, field: &Field) -> Result<Field> {
    let t_axis = domain.t_axis();
    if domain.grid.axes[t_axis][domain.t_zero].abs() > 1e-12 {
        return Err(ConvexifyError::Config(
            "grid has no t = 0 node for the Volterra integral".into(),
        ));
    }
    Ok(volterra(&domain.grid, field, t_axis, domain.t_zero))
}

/// Gradient of `ln f` on the spatial grid; errors when `f` is not positive.
pub fn ln_f_gradient(spatial: &TensorGrid, f: &[f64]) -> Result<Vec<Vec<f64>>> {
    if f.iter().any(|&v| v <= 0.0) {
        return Err(ConvexifyError::Positivity(
            "f must be positive for ln f".into(),
        ));
    }
    let lf = Field {
        data: f.iter().map(|v| v.ln()).collect(),
        shape: spatial.shape.clone(),
    };
    Ok((0..spatial.ndim())
        .map(|k| d1(spatial, &lf, k).data)
        .collect())
}

#[inline]
fn sp(p: usize, n_t: usize) -> usize {
    p / n_t
}

fn n_t_of(domain: &DomainGrid) -> usize {
    domain.grid.shape[domain.t_axis()]
}

/// `L_c` applied to a space-time field (spatial derivatives only, drift
/// included, no zeroth-order term); coefficients broadcast over time.
pub fn lc_spacetime(domain: &DomainGrid, coeffs: &CoefficientSet, w: &Field) -> Field {
    let grid = &domain.grid;
    let n = domain.spec.n_space;
    let n_t = n_t_of(domain);
    let mut out = Field::zeros(grid);
    let firsts: Vec<Field> = (0..n).map(|k| d1(grid, w, k)).collect();
    for i in 0..n {
        for j in 0..n {
            let second = if i == j {
                d2(grid, w, i)
            } else {
                d1(grid, &firsts[i], j)
            };
            let aij = &coeffs.a[i * n + j];
            for p in 0..grid.len {
                out.data[p] += aij[sp(p, n_t)] * second.data[p];
            }
        }
    }
    for (j, fj) in firsts.iter().enumerate() {
        let bj = &coeffs.b[j];
        for p in 0..grid.len {
            out.data[p] += bj[sp(p, n_t)] * fj.data[p];
        }
    }
    out
}

/// Transpose of [`lc_spacetime`].
fn lc_spacetime_t(domain: &DomainGrid, coeffs: &CoefficientSet, y: &Field) -> Field {
    let grid = &domain.grid;
    let n = domain.spec.n_space;
    let n_t = n_t_of(domain);
    let mut out = Field::zeros(grid);
    for i in 0..n {
        for j in 0..n {
            let aij = &coeffs.a[i * n + j];
            let mut ay = y.clone();
            for p in 0..grid.len {
                ay.data[p] *= aij[sp(p, n_t)];
            }
            let contrib = if i == j {
                d2_t(grid, &ay, i)
            } else {
                // forward was d1_j(d1_i h); transpose applies d1_j^T first
                d1_t(grid, &d1_t(grid, &ay, j), i)
            };
            out.axpy(1.0, &contrib);
        }
    }
    for j in 0..n {
        let bj = &coeffs.b[j];
        let mut by = y.clone();
        for p in 0..grid.len {
            by.data[p] *= bj[sp(p, n_t)];
        }
        out.axpy(1.0, &d1_t(grid, &by, j));
    }
    out
}

fn spatial_gradients(domain: &DomainGrid, w: &Field) -> Vec<Field> {
    (0..domain.spec.n_space)
        .map(|k| d1(&domain.grid, w, k))
        .collect()
}

fn volterra_of(domain: &DomainGrid, fields: &[Field]) -> Vec<Field> {
    fields
        .iter()
        .map(|f| volterra(&domain.grid, f, domain.t_axis(), domain.t_zero))
        .collect()
}

/// The nonlinear operator: `-w_t + L_c w + sum_ij a_ij [ w_xi (F_j + Iw_xj)
/// + w_xj (F_i + Iw_xi) ]` with `F = grad ln f` and `I` the Volterra
/// accumulation.
pub fn apply_ltilde(
    domain: &DomainGrid,
    coeffs: &CoefficientSet,
    ln_f_grad: &[Vec<f64>],
    w: &Field,
) -> Field {
    let grid = &domain.grid;
    let n = domain.spec.n_space;
    let n_t = n_t_of(domain);
    let mut out = lc_spacetime(domain, coeffs, w);
    out.axpy(-1.0, &d1(grid, w, domain.t_axis()));
    let wx = spatial_gradients(domain, w);
    let iw = volterra_of(domain, &wx);
    for i in 0..n {
        for j in 0..n {
            let aij = &coeffs.a[i * n + j];
            for p in 0..grid.len {
                let s = sp(p, n_t);
                out.data[p] += aij[s]
                    * (wx[i].data[p] * (ln_f_grad[j][s] + iw[j].data[p])
                        + wx[j].data[p] * (ln_f_grad[i][s] + iw[i].data[p]));
            }
        }
    }
    out
}

/// The part of `Ltilde(w1 + h) - Ltilde(w1)` that is linear in `h`.
pub fn apply_s_linear(
    domain: &DomainGrid,
    coeffs: &CoefficientSet,
    ln_f_grad: &[Vec<f64>],
    h: &Field,
    w1: &Field,
) -> Field {
    let grid = &domain.grid;
    let n = domain.spec.n_space;
    let n_t = n_t_of(domain);
    let mut out = lc_spacetime(domain, coeffs, h);
    out.axpy(-1.0, &d1(grid, h, domain.t_axis()));
    let hx = spatial_gradients(domain, h);
    let ih = volterra_of(domain, &hx);
    let w1x = spatial_gradients(domain, w1);
    let iw1 = volterra_of(domain, &w1x);
    for i in 0..n {
        for j in 0..n {
            let aij = &coeffs.a[i * n + j];
            for p in 0..grid.len {
                let s = sp(p, n_t);
                out.data[p] += aij[s]
                    * (hx[i].data[p] * (ln_f_grad[j][s] + iw1[j].data[p])
                        + hx[j].data[p] * (ln_f_grad[i][s] + iw1[i].data[p])
                        + w1x[i].data[p] * ih[j].data[p]
                        + w1x[j].data[p] * ih[i].data[p]);
            }
        }
    }
    out
}

/// Pure quadratic remainder `Q(h) = sum_ij a_ij (h_xi I h_xj + h_xj I h_xi)`.
pub fn apply_q_quadratic(domain: &DomainGrid, coeffs: &CoefficientSet, h: &Field) -> Field {
    let grid = &domain.grid;
    let n = domain.spec.n_space;
    let n_t = n_t_of(domain);
    let hx = spatial_gradients(domain, h);
    let ih = volterra_of(domain, &hx);
    let mut out = Field::zeros(grid);
    for i in 0..n {
        for j in 0..n {
            let aij = &coeffs.a[i * n + j];
            for p in 0..grid.len {
                let s = sp(p, n_t);
                out.data[p] += aij[s]
                    * (hx[i].data[p] * ih[j].data[p] + hx[j].data[p] * ih[i].data[p]);
            }
        }
    }
    out
}

/// Exact transpose of `h -> apply_s_linear(..., h, w1)`.
pub fn s_linear_t(
    domain: &DomainGrid,
    coeffs: &CoefficientSet,
    ln_f_grad: &[Vec<f64>],
    y: &Field,
    w1: &Field,
) -> Field {
    let grid = &domain.grid;
    let n = domain.spec.n_space;
    let n_t = n_t_of(domain);
    let t_axis = domain.t_axis();
    let mut out = lc_spacetime_t(domain, coeffs, y);
    out.axpy(-1.0, &d1_t(grid, y, t_axis));
    let w1x = spatial_gradients(domain, w1);
    let iw1 = volterra_of(domain, &w1x);
    for i in 0..n {
        for j in 0..n {
            let aij = &coeffs.a[i * n + j];
            // terms a_ij (F_j + Iw1_j) D_i h  and  a_ij (F_i + Iw1_i) D_j h
            let mut yi = Field::zeros(grid);
            let mut yj = Field::zeros(grid);
            for p in 0..grid.len {
                let s = sp(p, n_t);
                yi.data[p] = aij[s] * (ln_f_grad[j][s] + iw1[j].data[p]) * y.data[p];
                yj.data[p] = aij[s] * (ln_f_grad[i][s] + iw1[i].data[p]) * y.data[p];
            }
            out.axpy(1.0, &d1_t(grid, &yi, i));
            out.axpy(1.0, &d1_t(grid, &yj, j));
            // terms a_ij w1_xi I(D_j h)  and  a_ij w1_xj I(D_i h)
            let mut zi = Field::zeros(grid);
            let mut zj = Field::zeros(grid);
            for p in 0..grid.len {
                let s = sp(p, n_t);
                zi.data[p] = aij[s] * w1x[i].data[p] * y.data[p];
                zj.data[p] = aij[s] * w1x[j].data[p] * y.data[p];
            }
            let vi = volterra_t(grid, &zi, t_axis, domain.t_zero);
            let vj = volterra_t(grid, &zj, t_axis, domain.t_zero);
            out.axpy(1.0, &d1_t(grid, &vi, j));
            out.axpy(1.0, &d1_t(grid, &vj, i));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_domain, GridSpec};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn domain_1d() -> DomainGrid {
        build_domain(&GridSpec {
            n_space: 1,
            a: 0.2,
            d: 0.5,
            t_horizon: 1.0,
            epsilon: 0.03,
            n_x1: 17,
            n_xbar: 17,
            n_t: 17,
            fine_factor: 1,
        })
        .unwrap()
    }

    fn setup(domain: &DomainGrid) -> (CoefficientSet, Vec<Vec<f64>>) {
        let spatial = domain.spatial_grid();
        let coeffs = CoefficientSet::isotropic(&spatial).with_f(|c| 2.0 + c[0].sin());
        let lnf = ln_f_gradient(&spatial, &coeffs.f).unwrap();
        (coeffs, lnf)
    }

    fn random_field(grid: &TensorGrid, rng: &mut ChaCha8Rng) -> Field {
        // smooth-ish: sums of separable trig products
        let mut f = Field::zeros(grid);
        for _ in 0..4 {
            let amp: f64 = rng.gen_range(-1.0..1.0);
            let freqs: Vec<f64> = (0..grid.ndim()).map(|_| rng.gen_range(0.5..3.0)).collect();
            let phases: Vec<f64> = (0..grid.ndim()).map(|_| rng.gen_range(0.0..6.28)).collect();
            for p in 0..grid.len {
                let c = grid.coords(p);
                let mut v = amp;
                for (k, x) in c.iter().enumerate() {
                    v *= (freqs[k] * x * 6.0 + phases[k]).cos();
                }
                f.data[p] += v;
            }
        }
        f
    }

    #[test]
    fn transformed_traces_of_exponential() {
        // g1 = e^t, g2 = 0: g~1 = 1 exactly (derivative of a linear ln), g~2 = 0
        let domain = domain_1d();
        let face = crate::forward::face_grid(&domain).unwrap();
        let g1: Vec<f64> = (0..face.len).map(|q| face.coords(q)[0].exp()).collect();
        let traces = CauchyTraces {
            face: face.clone(),
            g1,
            g2: vec![0.0; face.len],
            delta: 0.0,
            seed: 0,
        };
        let tt = derive_transformed_traces(&traces, Smoothing::Off).unwrap();
        for q in 0..face.len {
            assert!((tt.g1t[q] - 1.0).abs() < 1e-12);
            assert!(tt.g2t[q].abs() < 1e-12);
        }
    }

    #[test]
    fn transformed_g2_cancels_for_proportional_traces() {
        // g1 = g2 = e^{2t}: the g~2 formula cancels to 0
        let domain = domain_1d();
        let face = crate::forward::face_grid(&domain).unwrap();
        let g: Vec<f64> = (0..face.len).map(|q| (2.0 * face.coords(q)[0]).exp()).collect();
        let traces = CauchyTraces {
            face: face.clone(),
            g1: g.clone(),
            g2: g,
            delta: 0.0,
            seed: 0,
        };
        let tt = derive_transformed_traces(&traces, Smoothing::Off).unwrap();
        for q in 0..face.len {
            assert!(tt.g2t[q].abs() < 1e-10);
        }
    }

    #[test]
    fn smoothing_reduces_noise_amplification() {
        let domain = domain_1d();
        let face = crate::forward::face_grid(&domain).unwrap();
        let g1: Vec<f64> = (0..face.len).map(|q| face.coords(q)[0].exp()).collect();
        let clean = CauchyTraces {
            face: face.clone(),
            g1,
            g2: vec![0.0; face.len],
            delta: 0.0,
            seed: 0,
        };
        let noisy = crate::forward::add_noise(&clean, 0.05, 3).unwrap();
        let raw = derive_transformed_traces(&noisy, Smoothing::Off).unwrap();
        let smooth = derive_transformed_traces(
            &noisy,
            Smoothing::SavGol {
                degree: 2,
                window: 9,
            },
        )
        .unwrap();
        // RMS deviation from the exact g~1 = 1
        let dev = |g: &[f64]| {
            (g.iter().map(|v| (v - 1.0) * (v - 1.0)).sum::<f64>() / g.len() as f64).sqrt()
        };
        assert!(
            dev(&smooth.g1t) < 0.6 * dev(&raw.g1t),
            "smoothed {} vs raw {}",
            dev(&smooth.g1t),
            dev(&raw.g1t)
        );
    }

    #[test]
    fn savgol_exact_on_quartics() {
        // degree-4 fit reproduces a quartic and its derivative exactly
        let domain = domain_1d();
        let face = crate::forward::face_grid(&domain).unwrap();
        let data: Vec<f64> = (0..face.len)
            .map(|q| {
                let t = face.coords(q)[0];
                1.0 + t + t.powi(4)
            })
            .collect();
        let (vals, ders) = series_fit(
            &face,
            &data,
            Smoothing::SavGol {
                degree: 4,
                window: 9,
            },
        )
        .unwrap();
        for q in 0..face.len {
            let t = face.coords(q)[0];
            assert!((vals[q] - (1.0 + t + t.powi(4))).abs() < 1e-9);
            assert!((ders[q] - (1.0 + 4.0 * t.powi(3))).abs() < 1e-8);
        }
    }

    #[test]
    fn ltilde_annihilates_constants() {
        let domain = domain_1d();
        let (coeffs, lnf) = setup(&domain);
        let w = Field::constant(&domain.grid, 4.2);
        let lw = apply_ltilde(&domain, &coeffs, &lnf, &w);
        assert!(lw.max_abs() < 1e-9);
    }

    #[test]
    fn ltilde_on_linear_time_field() {
        // w = t, f const, a = I, b = 0: only -w_t = -1 survives
        let domain = domain_1d();
        let spatial = domain.spatial_grid();
        let coeffs = CoefficientSet::isotropic(&spatial).with_f(|_| 2.0);
        let lnf = ln_f_gradient(&spatial, &coeffs.f).unwrap();
        let w = Field::from_fn(&domain.grid, |c| c[1]);
        let lw = apply_ltilde(&domain, &coeffs, &lnf, &w);
        for v in &lw.data {
            assert!((v + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn expansion_identity_is_exact() {
        let domain = domain_1d();
        let (coeffs, lnf) = setup(&domain);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let w1 = random_field(&domain.grid, &mut rng);
            let h = random_field(&domain.grid, &mut rng);
            let mut wh = w1.clone();
            wh.axpy(1.0, &h);
            let lhs = apply_ltilde(&domain, &coeffs, &lnf, &wh);
            let mut rhs = apply_ltilde(&domain, &coeffs, &lnf, &w1);
            rhs.axpy(1.0, &apply_s_linear(&domain, &coeffs, &lnf, &h, &w1));
            rhs.axpy(1.0, &apply_q_quadratic(&domain, &coeffs, &h));
            let scale = lhs.max_abs().max(1.0);
            for p in 0..domain.grid.len {
                assert!(
                    (lhs.data[p] - rhs.data[p]).abs() < 1e-11 * scale,
                    "node {p}: {} vs {}",
                    lhs.data[p],
                    rhs.data[p]
                );
            }
        }
    }

    #[test]
    fn s_is_linear_and_q_is_quadratic() {
        let domain = domain_1d();
        let (coeffs, lnf) = setup(&domain);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w1 = random_field(&domain.grid, &mut rng);
        let h = random_field(&domain.grid, &mut rng);
        let s1 = apply_s_linear(&domain, &coeffs, &lnf, &h, &w1);
        let mut h2 = h.clone();
        h2.scale(2.0);
        let s2 = apply_s_linear(&domain, &coeffs, &lnf, &h2, &w1);
        let q1 = apply_q_quadratic(&domain, &coeffs, &h);
        let q2 = apply_q_quadratic(&domain, &coeffs, &h2);
        for p in 0..domain.grid.len {
            assert!((s2.data[p] - 2.0 * s1.data[p]).abs() < 1e-10 * (1.0 + s1.data[p].abs()));
            assert!((q2.data[p] - 4.0 * q1.data[p]).abs() < 1e-10 * (1.0 + q1.data[p].abs()));
        }
        // S(0) = 0, Q(const) = 0
        let zero = Field::zeros(&domain.grid);
        assert!(apply_s_linear(&domain, &coeffs, &lnf, &zero, &w1).max_abs() == 0.0);
        let c = Field::constant(&domain.grid, 3.0);
        assert!(apply_q_quadratic(&domain, &coeffs, &c).max_abs() < 1e-10);
    }

    #[test]
    fn s_transpose_is_exact_adjoint() {
        let domain = domain_1d();
        let (coeffs, lnf) = setup(&domain);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..4 {
            let w1 = random_field(&domain.grid, &mut rng);
            let h = random_field(&domain.grid, &mut rng);
            let y = random_field(&domain.grid, &mut rng);
            let lhs = apply_s_linear(&domain, &coeffs, &lnf, &h, &w1).dot(&y);
            let rhs = h.dot(&s_linear_t(&domain, &coeffs, &lnf, &y, &w1));
            assert!(
                (lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn q_closed_form_1d() {
        // h = x1 * t, a = I: Q = 2 t * (t^2/2) = t^3 (trapezoid exact on linear)
        let domain = domain_1d();
        let spatial = domain.spatial_grid();
        let coeffs = CoefficientSet::isotropic(&spatial).with_f(|_| 2.0);
        let h = Field::from_fn(&domain.grid, |c| c[0] * c[1]);
        let q = apply_q_quadratic(&domain, &coeffs, &h);
        for p in 0..domain.grid.len {
            let t = domain.grid.coords(p)[1];
            assert!((q.data[p] - t.powi(3)).abs() < 1e-10, "{} vs {}", q.data[p], t.powi(3));
        }
    }

    #[test]
    fn volterra_sign_property() {
        let domain = domain_1d();
        let f = Field::from_fn(&domain.grid, |c| 1.0 + c[0] * c[0]);
        let v = volterra_integrate(&domain, &f).unwrap();
        for p in 0..domain.grid.len {
            let t = domain.grid.coords(p)[1];
            if t >= 0.0 {
                assert!(v.data[p] >= 0.0);
            } else {
                assert!(v.data[p] <= 0.0);
            }
        }
    }

    #[test]
    fn ltilde_closed_form_with_drift_of_ln_f() {
        // 1D, a = 1, b = 0, f = e^x so that ln f and its difference are exact.
        // w = x t: w_t = x, w_xx = 0, w_x = t, int_0^t w_x = t^2/2 (trapezoid
        // exact on a linear integrand), so
        //   Ltilde w = -x + 2 t (1 + t^2/2) = -x + 2t + t^3  exactly.
        let domain = domain_1d();
        let spatial = domain.spatial_grid();
        let coeffs = CoefficientSet::isotropic(&spatial).with_f(|c| c[0].exp());
        let lnf = ln_f_gradient(&spatial, &coeffs.f).unwrap();
        let w = Field::from_fn(&domain.grid, |c| c[0] * c[1]);
        let lw = apply_ltilde(&domain, &coeffs, &lnf, &w);
        for p in 0..domain.grid.len {
            let c = domain.grid.coords(p);
            let expected = -c[0] + 2.0 * c[1] + c[1].powi(3);
            assert!(
                (lw.data[p] - expected).abs() < 1e-10,
                "node {p}: {} vs {expected}",
                lw.data[p]
            );
        }
    }
}
