//! Synthetic data production: evolve an oracle solution on a refined
//! generator grid, read off the lateral Cauchy traces `g1 = u` and
//! `g2 = du/dx1` on the measurement face, and optionally contaminate them
//! with multiplicative uniform noise.

use crate::error::{ConvexifyError, Result};
use crate::field::{d1, d2, Field, TensorGrid};
use crate::geometry::{psi_value, DomainGrid};
use crate::model::{apply_l0_drift, CoefficientSet, OracleSolution};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stencil application of the elliptic operator on a spatial grid.
pub struct EllipticOps<'a> {
    pub coeffs: &'a CoefficientSet,
}

impl<'a> EllipticOps<'a> {
    pub fn new(coeffs: &'a CoefficientSet) -> Self {
        Self { coeffs }
    }

    /// Principal part `L_0 g = sum a_ij g_{x_i x_j}`.
    pub fn principal(&self, g: &Field) -> Field {
        let n = self.coeffs.n_space();
        let grid = &self.coeffs.grid;
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
                    out.data[p] += self.coeffs.a[i * n + j][p] * second.data[p];
                }
            }
        }
        out
    }

    /// `L_c g = L g - c g` (principal part plus drift, no zeroth-order term).
    pub fn l_c(&self, g: &Field) -> Field {
        apply_l0_drift(self.coeffs, g)
    }

    /// Full operator with a supplied zeroth-order coefficient.
    pub fn full(&self, g: &Field, c: &[f64]) -> Field {
        let mut out = self.l_c(g);
        for p in 0..out.data.len() {
            out.data[p] += c[p] * g.data[p];
        }
        out
    }
}

/// Generator spatial grid refined by `fine_factor`, optionally extended
/// beyond the inversion box on every axis (so the measurement face sits in
/// the interior). Returns the grid and the per-axis index offset of the
/// inversion box origin.
pub fn fine_spatial_grid(
    domain: &DomainGrid,
    extend: bool,
) -> Result<(TensorGrid, Vec<usize>)> {
    let spatial = domain.spatial_grid();
    let ff = domain.spec.fine_factor;
    let nd = spatial.ndim();
    let mut ranges = Vec::with_capacity(nd);
    let mut counts = Vec::with_capacity(nd);
    let mut offsets = Vec::with_capacity(nd);
    for k in 0..nd {
        let n_fine = (spatial.shape[k] - 1) * ff + 1;
        let h_fine = spatial.spacing[k] / ff as f64;
        let (lo, hi) = (spatial.axes[k][0], *spatial.axes[k].last().unwrap());
        if extend {
            let ext = (n_fine - 1).div_ceil(2);
            ranges.push((lo - ext as f64 * h_fine, hi + ext as f64 * h_fine));
            counts.push(n_fine + 2 * ext);
            offsets.push(ext);
        } else {
            ranges.push((lo, hi));
            counts.push(n_fine);
            offsets.push(0);
        }
    }
    Ok((TensorGrid::new(&ranges, &counts)?, offsets))
}

/// Index map from inversion spatial nodes into a fine generator grid.
pub fn restriction_map(
    coarse: &TensorGrid,
    fine: &TensorGrid,
    offsets: &[usize],
    fine_factor: usize,
) -> Result<Vec<usize>> {
    let mut map = Vec::with_capacity(coarse.len);
    for p in 0..coarse.len {
        let idx = coarse.unravel(p);
        let fine_idx: Vec<usize> = idx
            .iter()
            .zip(offsets)
            .map(|(&i, &off)| off + i * fine_factor)
            .collect();
        let q = fine.ravel(&fine_idx);
        let (cc, fc) = (coarse.coords(p), fine.coords(q));
        for (x, y) in cc.iter().zip(&fc) {
            if (x - y).abs() > 1e-9 {
                return Err(ConvexifyError::GridMismatch(format!(
                    "fine grid node {fc:?} does not align with coarse node {cc:?}"
                )));
            }
        }
        map.push(q);
    }
    Ok(map)
}

/// Lateral Cauchy traces on the `x1 = 0` face of the inversion box. Values
/// cover the full face grid; the measured region is the subset inside the
/// Gamma mask.
#[derive(Debug, Clone)]
pub struct CauchyTraces {
    /// Face grid: `xbar` axes (if any) plus time, matching the inversion box.
    pub face: TensorGrid,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
}

/// Face grid of the inversion box (all axes except x1).
pub fn face_grid(domain: &DomainGrid) -> Result<TensorGrid> {
    let g = &domain.grid;
    let ranges: Vec<(f64, f64)> = (1..g.ndim())
        .map(|k| (g.axes[k][0], *g.axes[k].last().unwrap()))
        .collect();
    let counts: Vec<usize> = g.shape[1..].to_vec();
    TensorGrid::new(&ranges, &counts)
}

/// Samples the oracle on the refined space-time grid and aborts if `u`
/// loses positivity anywhere on the closure of `G`.
pub fn evolve_two_sided(
    domain: &DomainGrid,
    oracle: &OracleSolution,
    fine: &TensorGrid,
) -> Result<()> {
    let spec = &domain.spec;
    let ff = spec.fine_factor;
    let n_t_fine = (spec.n_t - 1) * ff + 1;
    let t_axis = &domain.grid.axes[domain.t_axis()];
    let (t_lo, t_hi) = (t_axis[0], *t_axis.last().unwrap());
    let h_t = (t_hi - t_lo) / (n_t_fine - 1) as f64;
    for node in 0..fine.len {
        let xc = fine.coords(node);
        for m in 0..n_t_fine {
            let t = t_lo + m as f64 * h_t;
            let mut coords = xc.clone();
            coords.push(t);
            if psi_value(&coords, spec) <= spec.d + 1e-12 && coords[0] >= -1e-12 {
                let u = oracle.value(node, t);
                if u <= 0.0 {
                    return Err(ConvexifyError::Positivity(format!(
                        "u = {u:.6e} at x = {xc:?}, t = {t:.4}: the solution must stay \
                         positive on the closure of G"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Reads `g1 = u` and `g2 = du/dx1` off the `x1 = 0` plane of the fine
/// generator grid, at the inversion face nodes. The normal derivative uses a
/// centered difference when the generator box extends below `x1 = 0`, and a
/// one-sided second-order stencil otherwise.
pub fn extract_traces(
    domain: &DomainGrid,
    oracle: &OracleSolution,
    fine: &TensorGrid,
    offsets: &[usize],
) -> Result<CauchyTraces> {
    let face = face_grid(domain)?;
    let ff = domain.spec.fine_factor;
    let x1_zero = offsets[0];
    let h1 = fine.spacing[0];
    let s1 = fine.strides[0];
    let mut g1 = Vec::with_capacity(face.len);
    let mut g2 = Vec::with_capacity(face.len);
    let nd_face = face.ndim();
    for q in 0..face.len {
        let fidx = face.unravel(q);
        // spatial part of the face index maps into the fine grid
        let mut fine_idx = vec![x1_zero];
        for k in 0..nd_face - 1 {
            fine_idx.push(offsets[k + 1] + fidx[k] * ff);
        }
        let node = fine.ravel(&fine_idx);
        let t = face.axes[nd_face - 1][fidx[nd_face - 1]];
        let u0 = oracle.value(node, t);
        let du = if x1_zero > 0 {
            (oracle.value(node + s1, t) - oracle.value(node - s1, t)) / (2.0 * h1)
        } else {
            (-3.0 * u0 + 4.0 * oracle.value(node + s1, t) - oracle.value(node + 2 * s1, t))
                / (2.0 * h1)
        };
        if !u0.is_finite() || !du.is_finite() {
            return Err(ConvexifyError::Overflow("trace values not finite".into()));
        }
        g1.push(u0);
        g2.push(du);
    }
    Ok(CauchyTraces {
        face,
        g1,
        g2,
        delta: 0.0,
        seed: 0,
    })
}

/// Multiplicative-relative noise `g <- g (1 + delta eta)`, `eta` i.i.d.
/// uniform on [-1, 1], drawn in a fixed node order for determinism.
pub fn add_noise(traces: &CauchyTraces, delta: f64, seed: u64) -> Result<CauchyTraces> {
    if delta < 0.0 {
        return Err(ConvexifyError::Config("noise level must be >= 0".into()));
    }
    let mut out = traces.clone();
    out.delta = delta;
    out.seed = seed;
    if delta == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut out.g1 {
        *v *= 1.0 + delta * rng.gen_range(-1.0..=1.0);
    }
    for v in &mut out.g2 {
        *v *= 1.0 + delta * rng.gen_range(-1.0..=1.0);
    }
    if out.g1.iter().any(|&v| v <= 0.0) {
        return Err(ConvexifyError::Positivity(
            "noisy g1 lost positivity; delta too large".into(),
        ));
    }
    Ok(out)
}

/// Samples `w_true = (ln u)_t` of the oracle on the inversion space-time box.
pub fn w_true_field(
    domain: &DomainGrid,
    oracle: &OracleSolution,
    fine: &TensorGrid,
    offsets: &[usize],
) -> Result<Field> {
    let spatial = domain.spatial_grid();
    let map = restriction_map(&spatial, fine, offsets, domain.spec.fine_factor)?;
    let n_t = domain.grid.shape[domain.t_axis()];
    let mut out = Field::zeros(&domain.grid);
    for p in 0..domain.grid.len {
        let ps = p / n_t;
        let t = domain.grid.axes[domain.t_axis()][p % n_t];
        out.data[p] = oracle.w_true(map[ps], t);
    }
    Ok(out)
}

/// Ground-truth coefficient restricted to the inversion spatial grid.
pub fn c_true_slice(
    domain: &DomainGrid,
    oracle: &OracleSolution,
    fine: &TensorGrid,
    offsets: &[usize],
) -> Result<Vec<f64>> {
    let spatial = domain.spatial_grid();
    let map = restriction_map(&spatial, fine, offsets, domain.spec.fine_factor)?;
    Ok(map.iter().map(|&q| oracle.c_true[q]).collect())
}

/// Initial data restricted to the inversion spatial grid.
pub fn f_slice(
    domain: &DomainGrid,
    oracle: &OracleSolution,
    fine: &TensorGrid,
    offsets: &[usize],
) -> Result<Vec<f64>> {
    let spatial = domain.spatial_grid();
    let map = restriction_map(&spatial, fine, offsets, domain.spec.fine_factor)?;
    Ok(map.iter().map(|&q| oracle.f[q]).collect())
}
