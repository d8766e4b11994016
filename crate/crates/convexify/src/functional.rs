//! The weighted least-squares cost `J(w) = int_G m (Ltilde w)^2 + alpha
//! |w|_{H4}^2` with `m` the masked quadrature times the squared Carleman
//! weight, its exact discrete gradient, and the Bregman gap
//! `J(w2) - J(w1) - <J'(w1), w2 - w1>` evaluated through an algebraically
//! equivalent form that avoids catastrophic cancellation.

use crate::error::Result;
use crate::field::{compose_d, compose_d_t, multi_indices, Field};
use crate::geometry::{weight_field, CarlemanParams, DomainGrid};
use crate::model::{validate_coefficients, CoefficientSet, TikhonovParams};
use crate::transform::{
    apply_ltilde, apply_q_quadratic, apply_s_linear, ln_f_gradient, s_linear_t,
};

/// Everything that stays fixed while the functional is evaluated many times.
pub struct FunctionalContext {
    pub domain: DomainGrid,
    pub coeffs: CoefficientSet,
    pub carleman: CarlemanParams,
    pub tikhonov: TikhonovParams,
    /// Squared Carleman weight at every node.
    pub weight: Vec<f64>,
    /// `quad_g * weight`: the full measure of the data-fit term.
    pub mass: Vec<f64>,
    pub ln_f_grad: Vec<Vec<f64>>,
    pub betas: Vec<Vec<usize>>,
    /// Ellipticity bounds of the diffusion matrix.
    pub mu: (f64, f64),
    /// False when alpha is below the admissibility window for the chosen
    /// lambda; evaluation still proceeds, callers may warn.
    pub alpha_in_window: bool,
}

impl FunctionalContext {
    pub fn new(
        domain: DomainGrid,
        coeffs: CoefficientSet,
        carleman: CarlemanParams,
        tikhonov: TikhonovParams,
    ) -> Result<Self> {
        carleman.validate()?;
        tikhonov.validate()?;
        let mu = validate_coefficients(&coeffs)?;
        let weight = weight_field(&domain, &carleman)?;
        let mass: Vec<f64> = domain
            .quad_g
            .iter()
            .zip(&weight)
            .map(|(q, w)| q * w)
            .collect();
        let ln_f_grad = ln_f_gradient(&coeffs.grid, &coeffs.f)?;
        let betas = multi_indices(domain.grid.ndim(), 4);
        let low =
            TikhonovParams::alpha_window_low(carleman.lambda, carleman.nu, domain.spec.d);
        let alpha_in_window = tikhonov.alpha >= low && tikhonov.alpha < 1.0;
        Ok(Self {
            domain,
            coeffs,
            carleman,
            tikhonov,
            weight,
            mass,
            ln_f_grad,
            betas,
            mu,
            alpha_in_window,
        })
    }

    /// Lower edge of the alpha admissibility window for this context.
    pub fn alpha_window_low(&self) -> f64 {
        TikhonovParams::alpha_window_low(self.carleman.lambda, self.carleman.nu, self.domain.spec.d)
    }
}

/// Discrete H4 inner product over the full box: sum over all mixed
/// difference stencils of order at most 4 of their weighted L2 pairing.
pub fn h4_inner(ctx: &FunctionalContext, u: &Field, v: &Field) -> f64 {
    let grid = &ctx.domain.grid;
    let mut total = 0.0;
    for beta in &ctx.betas {
        let du = compose_d(grid, u, beta);
        let dv = compose_d(grid, v, beta);
        total += (0..grid.len)
            .map(|p| ctx.domain.quad_box[p] * du.data[p] * dv.data[p])
            .sum::<f64>();
    }
    total
}

/// The Gram operator of [`h4_inner`]: `<u, gram_apply(v)> = h4_inner(u, v)`
/// in the plain nodal dot product.
pub fn gram_apply(ctx: &FunctionalContext, v: &Field) -> Field {
    let grid = &ctx.domain.grid;
    let mut out = Field::zeros(grid);
    for beta in &ctx.betas {
        let mut dv = compose_d(grid, v, beta);
        dv.mul_pointwise(&ctx.domain.quad_box);
        out.axpy(1.0, &compose_d_t(grid, &dv, beta));
    }
    out
}

/// Nodes the optimizer may move: everything except the two `x1` layers that
/// carry the Dirichlet and Neumann boundary data.
pub fn free_mask(domain: &DomainGrid) -> Vec<bool> {
    (0..domain.grid.len)
        .map(|p| domain.grid.unravel(p)[0] >= 2)
        .collect()
}

/// Cost value at `w`.
pub fn evaluate_j(ctx: &FunctionalContext, w: &Field) -> f64 {
    let r = apply_ltilde(&ctx.domain, &ctx.coeffs, &ctx.ln_f_grad, w);
    let fit: f64 = (0..ctx.domain.grid.len)
        .map(|p| ctx.mass[p] * r.data[p] * r.data[p])
        .sum();
    fit + ctx.tikhonov.alpha * h4_inner(ctx, w, w)
}

/// Exact gradient of [`evaluate_j`] with respect to the nodal values. With
/// `clamp` the entries at non-free nodes are zeroed.
pub fn gradient_j(ctx: &FunctionalContext, w: &Field, clamp: bool) -> Field {
    let r = apply_ltilde(&ctx.domain, &ctx.coeffs, &ctx.ln_f_grad, w);
    let mut y = r;
    for p in 0..ctx.domain.grid.len {
        y.data[p] *= 2.0 * ctx.mass[p];
    }
    let mut g = s_linear_t(&ctx.domain, &ctx.coeffs, &ctx.ln_f_grad, &y, w);
    g.axpy(2.0 * ctx.tikhonov.alpha, &gram_apply(ctx, w));
    if clamp {
        let free = free_mask(&ctx.domain);
        for p in 0..ctx.domain.grid.len {
            if !free[p] {
                g.data[p] = 0.0;
            }
        }
    }
    g
}

/// Bregman gap between two iterates, plus the two norms entering the
/// strict-convexity statement.
#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    /// `J(w2) - J(w1) - <J'(w1), w2 - w1>`, computed without cancellation.
    pub gap: f64,
    /// `(alpha / 2) |h|_{H4}^2` for `h = w2 - w1`.
    pub half_alpha_h4: f64,
    /// `int_{G_eps} (|grad h|^2 + h^2)` with the masked quadrature.
    pub h1_eps_sq: f64,
}

/// Evaluates the gap through the identity
/// `gap = int m [2 (Ltilde w1) Q(h) + (S(h) + Q(h))^2] + alpha h4(h, h)`,
/// which follows from expanding the square of `Ltilde w2 = Ltilde w1 + S + Q`.
pub fn bregman_gap(ctx: &FunctionalContext, w1: &Field, w2: &Field) -> GapReport {
    let grid = &ctx.domain.grid;
    let mut h = w2.clone();
    h.axpy(-1.0, w1);
    let l1 = apply_ltilde(&ctx.domain, &ctx.coeffs, &ctx.ln_f_grad, w1);
    let s = apply_s_linear(&ctx.domain, &ctx.coeffs, &ctx.ln_f_grad, &h, w1);
    let q = apply_q_quadratic(&ctx.domain, &ctx.coeffs, &h);
    let mut gap = 0.0;
    for p in 0..grid.len {
        let sq = s.data[p] + q.data[p];
        gap += ctx.mass[p] * (2.0 * l1.data[p] * q.data[p] + sq * sq);
    }
    let h4_hh = h4_inner(ctx, &h, &h);
    gap += ctx.tikhonov.alpha * h4_hh;

    let mut h1 = 0.0;
    let grads: Vec<Field> = (0..ctx.domain.spec.n_space)
        .map(|k| crate::field::d1(grid, &h, k))
        .collect();
    for p in 0..grid.len {
        if ctx.domain.inside_g_eps[p] {
            let mut v = h.data[p] * h.data[p];
            for g in &grads {
                v += g.data[p] * g.data[p];
            }
            h1 += ctx.domain.quad_g[p] * v;
        }
    }
    GapReport {
        gap,
        half_alpha_h4: 0.5 * ctx.tikhonov.alpha * h4_hh,
        h1_eps_sq: h1,
    }
}

/// The two closed forms of the convexity rate constant, as a function of the
/// domain parameters: the first keeps the `d^-nu` scale of the level sets,
/// the second keeps a `(2d)^-nu` scale.
pub fn convexity_rate_constants(d: f64, epsilon: f64, nu: f64) -> (f64, f64) {
    let base = (d - epsilon).powf(-nu);
    let derived = base - 1.5 * d.powf(-nu);
    let alt = base - 3.0 * (2.0 * d).powf(-nu);
    (derived, alt)
}
