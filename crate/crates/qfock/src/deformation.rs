//! The deformation operator `Ξ_q = Σ q^n P_n`, Hilbert–Schmidt elements of
//! `L²(M) ⊗ L²(M^op)`, their left and right actions on the doubled space, the norm
//! constants `C_q`, `ν(q,N)`, `ρ(q,N)` and the Neumann series for `Ξ_q^{-1}`.
//!
//! An [`HSElement`] `T` stores coefficients `T_{uv}` of `Σ ψ_u ⊗ ψ_v`, i.e. of the tensor
//! whose legs have vacuum vectors `e_u` and `e_v`. As an operator on `L²(M)` it is
//! `x ↦ Σ T_{uv} e_u τ(ψ_v x)`, which in word coordinates is `T J G` with `J` the word
//! reversal and `G` the Gram matrix.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{Ctx, GradedVector, Metric};
use crate::linalg::{self, Extremes, LanczosOptions};
use crate::operators::{c_q, FockOperator};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Element of the truncated `L²(M) ⊗ L²(M^op)` in word coordinates.
#[derive(Debug, Clone)]
pub struct HSElement {
    ctx: Ctx,
    coeffs: DMatrix<Complex64>,
}

impl HSElement {
    pub fn zeros(ctx: &Ctx) -> Self {
        HSElement {
            ctx: ctx.clone(),
            coeffs: DMatrix::from_element(ctx.dim(), ctx.dim(), ZERO),
        }
    }

    /// `1 ⊗ 1`.
    pub fn one(ctx: &Ctx) -> Self {
        let mut t = Self::zeros(ctx);
        t.coeffs[(0, 0)] = Complex64::new(1.0, 0.0);
        t
    }

    pub fn from_complex(ctx: &Ctx, coeffs: DMatrix<Complex64>) -> Result<Self> {
        if coeffs.nrows() != ctx.dim() || coeffs.ncols() != ctx.dim() {
            return Err(Error::Invalid(format!("HS coefficients must be {0}x{0}", ctx.dim())));
        }
        Ok(HSElement { ctx: ctx.clone(), coeffs })
    }

    pub fn from_real(ctx: &Ctx, coeffs: &DMatrix<f64>) -> Result<Self> {
        Self::from_complex(ctx, coeffs.map(|x| Complex64::new(x, 0.0)))
    }

    /// `a ⊗ b` for vectors `a = aΩ`, `b = bΩ`.
    pub fn outer(a: &GradedVector, b: &GradedVector) -> Result<Self> {
        a.check_same(b)?;
        let ctx = a.ctx();
        let (x, y) = (a.coeffs(), b.coeffs());
        Ok(HSElement {
            ctx: ctx.clone(),
            coeffs: DMatrix::from_fn(ctx.dim(), ctx.dim(), |u, v| x[u] * y[v]),
        })
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn coeffs(&self) -> &DMatrix<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.coeffs
    }

    pub fn re(&self) -> DMatrix<f64> {
        self.coeffs.map(|z| z.re)
    }

    pub fn im(&self) -> DMatrix<f64> {
        self.coeffs.map(|z| z.im)
    }

    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|z| z.im == 0.0)
    }

    fn check_same(&self, other: &HSElement) -> Result<()> {
        if self.ctx.same_space(&other.ctx) {
            Ok(())
        } else {
            Err(Error::ContextMismatch)
        }
    }

    pub fn add(&self, other: &HSElement) -> Result<Self> {
        self.check_same(other)?;
        Ok(HSElement {
            ctx: self.ctx.clone(),
            coeffs: &self.coeffs + &other.coeffs,
        })
    }

    pub fn sub(&self, other: &HSElement) -> Result<Self> {
        self.check_same(other)?;
        Ok(HSElement {
            ctx: self.ctx.clone(),
            coeffs: &self.coeffs - &other.coeffs,
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        HSElement {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.map(|z| z * s),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// `(1 ⊗ τ)(T)`: only the vacuum component of the right leg survives the trace.
    pub fn partial_trace_right(&self) -> GradedVector {
        let col: Vec<Complex64> = self.coeffs.column(0).iter().copied().collect();
        GradedVector::from_coeffs(&self.ctx, col).expect("dimension matches context")
    }

    /// The real structure `𝒥(a ⊗ b) = b* ⊗ a*`.
    pub fn real_structure(&self) -> Self {
        let rev = self.ctx.reversal();
        let d = self.ctx.dim();
        HSElement {
            ctx: self.ctx.clone(),
            coeffs: DMatrix::from_fn(d, d, |u, v| self.coeffs[(rev[v], rev[u])].conj()),
        }
    }

    /// The Hilbert–Schmidt operator `x ↦ Σ T_{uv} e_u τ(ψ_v x)` on the truncated space.
    pub fn as_operator(&self) -> Result<FockOperator> {
        let metric = self.ctx.metric()?;
        let rev = self.ctx.reversal();
        let d = self.ctx.dim();
        let tj = DMatrix::from_fn(d, d, |u, x| self.coeffs[(u, rev[x])]);
        let re = tj.map(|z| z.re) * &metric.g;
        let im = tj.map(|z| z.im) * &metric.g;
        let im = (im.amax() > 0.0).then_some(im);
        FockOperator::new(&self.ctx, re, im, None)
    }
}

/// `⟨S, T⟩ = tr(S^H G T G)`, conjugate-linear in `S`.
pub fn hs_inner(s: &HSElement, t: &HSElement) -> Result<Complex64> {
    s.check_same(t)?;
    let g = s.ctx.metric()?.g.map(|x| Complex64::new(x, 0.0));
    let gtg = &g * &t.coeffs * &g;
    Ok(s.coeffs.iter().zip(gtg.iter()).map(|(a, b)| a.conj() * b).sum())
}

pub fn hs_norm(t: &HSElement) -> Result<f64> {
    Ok(hs_inner(t, t)?.re.max(0.0).sqrt())
}

/// `Ξ_q^Q` as a multiplier: `q^n` on level `n ≤ Q`, zero above.
pub fn xi_multiplier(ctx: &Ctx, trunc: usize) -> Result<FockOperator> {
    check_trunc(ctx, trunc)?;
    let d = ctx.dim();
    let mut m = DMatrix::zeros(d, d);
    for n in 0..=trunc {
        let w = ctx.q().powi(n as i32);
        for k in 0..ctx.level_dim(n) {
            let p = ctx.offset(n) + k;
            m[(p, p)] = w;
        }
    }
    FockOperator::new(ctx, m, None, Some(0))
}

fn check_trunc(ctx: &Ctx, trunc: usize) -> Result<()> {
    if trunc > ctx.level() {
        return Err(Error::LevelOutOfRange {
            level: trunc,
            max: ctx.level(),
        });
    }
    Ok(())
}

/// `Σ_{n ≤ Q} q^n Σ_{|i|=n} p_i ⊗ p_i*` with `p_i` the columns of `B_n = Γ_n^{-1/2}`.
pub fn xi_as_hs(ctx: &Ctx, trunc: usize) -> Result<HSElement> {
    check_trunc(ctx, trunc)?;
    let mut t = HSElement::zeros(ctx);
    for n in 0..=trunc {
        let block = xi_level_block(ctx, n)?;
        let (o, k) = (ctx.offset(n), ctx.level_dim(n));
        t.coeffs.view_mut((o, o), (k, k)).copy_from(&block.map(|x| Complex64::new(x, 0.0)));
    }
    Ok(t)
}

/// Level-`n` coefficients `q^n B_n (J_n B_n)^T`.
fn xi_level_block(ctx: &Ctx, n: usize) -> Result<DMatrix<f64>> {
    let gb = ctx.gram(n)?;
    let b = &gb.b.entries;
    let k = b.nrows();
    let rev: Vec<usize> = (0..k).map(|i| crate::word::reverse_index(i, n, ctx.alphabet())).collect();
    let jb = DMatrix::from_fn(k, k, |r, c| b[(rev[r], c)]);
    Ok(b * jb.transpose() * ctx.q().powi(n as i32))
}

/// Real coefficients of the untruncated `Ξ_q` on levels `≤ top`, which may exceed `L`.
/// Level `n` is `q^n Γ_n^{-1} J_n`, equal to the orthonormal-basis sum of [`xi_as_hs`].
pub(crate) fn xi_extended(ctx: &Ctx, top: usize, trunc: Option<usize>) -> Result<DMatrix<f64>> {
    let na = ctx.alphabet();
    let d = crate::word::checked_total_dim(na, top).unwrap_or(usize::MAX);
    ctx.cap().check_dim("extended deformation coefficients", d)?;
    let mut m = DMatrix::zeros(d, d);
    for n in 0..=top.min(trunc.unwrap_or(top)) {
        let gb = ctx.gram_any(n)?;
        let k = crate::word::level_dim(na, n);
        let o = crate::word::offset(na, n);
        let w = ctx.q().powi(n as i32);
        for c in 0..k {
            let rc = crate::word::reverse_index(c, n, na);
            for r in 0..k {
                m[(o + r, o + c)] = w * gb.inverse[(r, rc)];
            }
        }
    }
    Ok(m)
}

/// Which side of `M ⊗ M^op` multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `x ⊗ y ↦ Σ a_k x ⊗ y b_k`, left multiplication by `T = Σ a_k ⊗ b_k`.
    Left,
    /// `x ⊗ y ↦ Σ x a_k ⊗ b_k y`, right multiplication by `T`.
    Right,
}

/// One real coefficient matrix turned into stacked factors: the action on the doubled
/// space is `X ↦ Σ_u O_u X S_u` in the orthonormal frame.
#[derive(Debug, Clone)]
struct Stacks {
    rows: usize,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

impl Stacks {
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = x.nrows();
        if self.rows == 0 {
            return DMatrix::zeros(d, d);
        }
        let z = &self.left * x;
        let mut zh = DMatrix::zeros(d, self.rows * d);
        for u in 0..self.rows {
            zh.columns_mut(u * d, d).copy_from(&z.rows(u * d, d));
        }
        zh * &self.right
    }

    fn apply_t(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let d = y.nrows();
        if self.rows == 0 {
            return DMatrix::zeros(d, d);
        }
        let p = y * self.right.transpose();
        let mut pv = DMatrix::zeros(self.rows * d, d);
        for u in 0..self.rows {
            pv.rows_mut(u * d, d).copy_from(&p.columns(u * d, d));
        }
        self.left.transpose() * pv
    }
}

/// Left or right action of an HS element on the doubled space `F_{≤L} ⊗ F_{≤L}`, held in
/// factored form so products cost `O(dim^4)` instead of `O(dim^6)`.
///
/// Internally everything lives in the orthonormal frame `X̃ = G^{1/2} X G^{1/2}`, where the
/// tensor q-inner product becomes the Frobenius one.
#[derive(Debug, Clone)]
pub struct LrAction {
    ctx: Ctx,
    side: Side,
    metric: Arc<Metric>,
    re: Stacks,
    im: Option<Stacks>,
}

impl LrAction {
    pub fn new(t: &HSElement, side: Side) -> Result<Self> {
        let ctx = t.ctx.clone();
        let d = ctx.dim();
        ctx.cap().check_doubled("doubled space", d)?;
        let metric = ctx.metric()?;
        let table = ctx.wick_table()?;
        let rev = ctx.reversal();
        let s = &metric.g_sqrt;
        let s_inv = &metric.g_inv_sqrt;
        let lefts: Vec<DMatrix<f64>> = (0..d).map(|u| table.matrix(u)).collect();
        // Right multiplication by ψ_v is J ψ_{rev v} J.
        let rights: Vec<DMatrix<f64>> = (0..d)
            .map(|v| {
                let m = &lefts[rev[v]];
                DMatrix::from_fn(d, d, |r, c| m[(rev[r], rev[c])])
            })
            .collect();
        let (outer, inner) = match side {
            Side::Left => (&lefts, &rights),
            Side::Right => (&rights, &lefts),
        };
        let tilde = |m: &DMatrix<f64>| s * m * s_inv;
        let build = |coeffs: DMatrix<f64>| -> Result<Stacks> {
            let used: Vec<usize> = (0..d).filter(|&u| coeffs.row(u).iter().any(|&x| x != 0.0)).collect();
            let rows = used.len();
            crate::cap::check("left-right action factors", rows * d * d, ctx.cap().max_table_entries)?;
            let mut left = DMatrix::zeros(rows * d, d);
            for (k, &u) in used.iter().enumerate() {
                left.rows_mut(k * d, d).copy_from(&tilde(&outer[u]));
            }
            // Column v of `w` is the column-major flattening of Õ'_v^T.
            let mut w = DMatrix::zeros(d * d, d);
            for v in 0..d {
                let ot = tilde(&inner[v]).transpose();
                w.column_mut(v).copy_from_slice(ot.as_slice());
            }
            let tu = DMatrix::from_fn(rows, d, |k, v| coeffs[(used[k], v)]);
            let su = w * tu.transpose();
            let mut right = DMatrix::zeros(rows * d, d);
            for k in 0..rows {
                right
                    .rows_mut(k * d, d)
                    .copy_from(&DMatrix::from_column_slice(d, d, su.column(k).as_slice()));
            }
            Ok(Stacks { rows, left, right })
        };
        let re = build(t.re())?;
        let im = if t.is_real() { None } else { Some(build(t.im())?) };
        Ok(LrAction {
            ctx,
            side,
            metric,
            re,
            im,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    fn to_tilde(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.metric.g_sqrt * x * &self.metric.g_sqrt
    }

    fn from_tilde(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        &self.metric.g_inv_sqrt * x * &self.metric.g_inv_sqrt
    }

    fn apply_tilde(&self, xr: &DMatrix<f64>, xi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (mut yr, mut yi) = (self.re.apply(xr), self.re.apply(xi));
        if let Some(b) = &self.im {
            yr -= b.apply(xi);
            yi += b.apply(xr);
        }
        (yr, yi)
    }

    fn apply_tilde_t(&self, yr: &DMatrix<f64>, yi: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (mut xr, mut xi) = (self.re.apply_t(yr), self.re.apply_t(yi));
        if let Some(b) = &self.im {
            xr += b.apply_t(yi);
            xi -= b.apply_t(yr);
        }
        (xr, xi)
    }

    /// Applies the action to an element of the doubled space, in word coordinates.
    pub fn apply(&self, x: &HSElement) -> Result<HSElement> {
        if !self.ctx.same_space(&x.ctx) {
            return Err(Error::ContextMismatch);
        }
        let (yr, yi) = self.apply_tilde(&self.to_tilde(&x.re()), &self.to_tilde(&x.im()));
        let (yr, yi) = (self.from_tilde(&yr), self.from_tilde(&yi));
        let d = self.ctx.dim();
        HSElement::from_complex(&self.ctx, DMatrix::from_fn(d, d, |r, c| Complex64::new(yr[(r, c)], yi[(r, c)])))
    }

    fn real_dim(&self) -> usize {
        let d = self.ctx.dim();
        if self.im.is_some() {
            2 * d * d
        } else {
            d * d
        }
    }

    fn split(&self, v: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.ctx.dim();
        let xr = DMatrix::from_column_slice(d, d, &v.as_slice()[..d * d]);
        let xi = if self.im.is_some() {
            DMatrix::from_column_slice(d, d, &v.as_slice()[d * d..])
        } else {
            DMatrix::zeros(d, d)
        };
        (xr, xi)
    }

    fn join(&self, xr: DMatrix<f64>, xi: DMatrix<f64>) -> DVector<f64> {
        let mut out = Vec::with_capacity(self.real_dim());
        out.extend_from_slice(xr.as_slice());
        if self.im.is_some() {
            out.extend_from_slice(xi.as_slice());
        }
        DVector::from_vec(out)
    }

    /// Operator norm on the doubled space with its tensor q-inner product.
    pub fn op_norm(&self) -> f64 {
        self.op_norm_from(None).0
    }

    /// [`Self::op_norm`] started from a previous top singular vector, which it also returns.
    pub(crate) fn op_norm_from(&self, start: Option<&DVector<f64>>) -> (f64, DVector<f64>) {
        let f = |v: &DVector<f64>| {
            let (xr, xi) = self.split(v);
            let (yr, yi) = self.apply_tilde(&xr, &xi);
            self.join(yr, yi)
        };
        let ft = |v: &DVector<f64>| {
            let (yr, yi) = self.split(v);
            let (xr, xi) = self.apply_tilde_t(&yr, &yi);
            self.join(xr, xi)
        };
        let opts = LanczosOptions {
            tol: 1e-7,
            ..LanczosOptions::default()
        };
        linalg::top_singular_pair(self.real_dim(), f, ft, opts, start)
    }

    /// Extreme eigenvalues of the symmetric part of a real action.
    pub fn extremes(&self) -> Result<Extremes> {
        if self.im.is_some() {
            return Err(Error::Invalid("spectrum requested for a complex action".into()));
        }
        let d = self.ctx.dim();
        let f = |v: &DVector<f64>| {
            let x = DMatrix::from_column_slice(d, d, v.as_slice());
            let y = (self.re.apply(&x) + self.re.apply_t(&x)) * 0.5;
            DVector::from_column_slice(y.as_slice())
        };
        Ok(linalg::extremes(d * d, f, LanczosOptions::default()))
    }

    /// Largest asymmetry `|⟨X, MY⟩ − ⟨MX, Y⟩|` over a few fixed probes, relative to `‖M‖`.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.ctx.dim();
        let probe = |s: f64| DMatrix::from_fn(d, d, |r, c| ((r * 31 + c * 17) as f64 * s).sin());
        let (x, y) = (probe(0.37), probe(1.13));
        let z = DMatrix::zeros(d, d);
        let (mx, _) = self.apply_tilde(&x, &z);
        let (my, _) = self.apply_tilde(&y, &z);
        let a = x.dot(&my);
        let b = mx.dot(&y);
        (a - b).abs() / (x.norm() * y.norm() * self.op_norm().max(1e-300))
    }

    /// `M^{1/2} X` for a real positive action, applied to the real and imaginary parts of `X`.
    pub fn sqrt_apply(&self, x: &HSElement) -> Result<HSElement> {
        if self.im.is_some() {
            return Err(Error::Invalid("square root requested for a complex action".into()));
        }
        let d = self.ctx.dim();
        let f = |v: &DVector<f64>| {
            let m = DMatrix::from_column_slice(d, d, v.as_slice());
            DVector::from_column_slice(self.re.apply(&m).as_slice())
        };
        let opts = LanczosOptions {
            max_iter: 400,
            tol: 1e-13,
        };
        let mut parts = Vec::with_capacity(2);
        for part in [x.re(), x.im()] {
            let b = DVector::from_column_slice(self.to_tilde(&part).as_slice());
            let r = linalg::sqrt_apply(f, &b, opts);
            if r.min_ritz < 0.0 && r.min_ritz < -1e-10 * self.op_norm().max(1.0) {
                return Err(Error::SqrtUnavailable { min_ritz: r.min_ritz });
            }
            parts.push(self.from_tilde(&DMatrix::from_column_slice(d, d, r.value.as_slice())));
        }
        HSElement::from_complex(
            &self.ctx,
            DMatrix::from_fn(d, d, |r, c| Complex64::new(parts[0][(r, c)], parts[1][(r, c)])),
        )
    }
}

/// `C_q` together with the closed forms `ν(q,N)` and `ρ(q,N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsReport {
    pub q: f64,
    pub n: usize,
    pub c_q: f64,
    pub nu: f64,
    pub rho: f64,
    pub nu_lt_1: bool,
    pub rho_lt_1: bool,
}

fn bracket(x: f64) -> f64 {
    if x >= 1.0 {
        return f64::INFINITY;
    }
    let r = x / (1.0 - x);
    4.0 * r + 5.0 * r * r + 2.0 * r * r * r
}

/// `ν = C_{|q|}^3 [4x/(1−x) + 5x²/(1−x)² + 2x³/(1−x)³]` with `x = |q|N`, and `ρ` likewise
/// with `x = |q|√N`. Values at or past the pole are `+∞`.
pub fn constants(q: f64, n: usize) -> Result<ConstantsReport> {
    if n == 0 {
        return Err(Error::ZeroAlphabet);
    }
    let c = c_q(q)?;
    let c3 = c_q(q.abs())?.powi(3);
    let nu = c3 * bracket(q.abs() * n as f64);
    let rho = c3 * bracket(q.abs() * (n as f64).sqrt());
    Ok(ConstantsReport {
        q,
        n,
        c_q: c,
        nu,
        rho,
        nu_lt_1: nu < 1.0,
        rho_lt_1: rho < 1.0,
    })
}

/// Partial sums `U_n = Σ_{i ≤ n} (−1)^i (Ξ_q − 1⊗1)^i` with their residuals.
#[derive(Debug, Clone)]
pub struct NeumannSeries {
    /// `U_0, …, U_{n_terms}`.
    pub partial_sums: Vec<HSElement>,
    /// Doubled-space operator norm of `Ξ_q U_n − 1⊗1` for each partial sum.
    pub residuals: Vec<f64>,
    pub rho_lt_1: bool,
    /// Residual grew on three consecutive terms.
    pub diverging: bool,
}

impl NeumannSeries {
    pub fn last(&self) -> &HSElement {
        self.partial_sums.last().expect("at least U_0")
    }
}

/// Neumann series for `Ξ_q^{-1}` in the truncated `M ⊗ M^op`. Powers are products in
/// `M ⊗ M^op` taken through the left action.
///
/// Since `Ξ U_n − 1⊗1 = (−1)^n (Ξ − 1⊗1)^{n+1}` exactly, the residual is computed from the
/// next power directly; subtracting `1⊗1` from `Ξ U_n` would cap the attainable precision
/// at rounding level.
pub fn xi_inverse_neumann(ctx: &Ctx, n_terms: usize) -> Result<NeumannSeries> {
    let xi = xi_as_hs(ctx, ctx.level())?;
    let delta = xi.sub(&HSElement::one(ctx))?;
    let act = LrAction::new(&delta, Side::Left)?;
    let mut power = HSElement::one(ctx);
    let mut sum = power.clone();
    let mut partial_sums = Vec::with_capacity(n_terms + 1);
    let mut residuals = Vec::with_capacity(n_terms + 1);
    let mut top: Option<DVector<f64>> = None;
    for n in 0..=n_terms {
        if n > 0 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            sum = sum.add(&power.scale(Complex64::new(sign, 0.0)))?;
        }
        partial_sums.push(sum.clone());
        power = act.apply(&power)?;
        // Consecutive powers share their top singular vectors closely.
        let (r, v) = LrAction::new(&power, Side::Left)?.op_norm_from(top.as_ref());
        residuals.push(r);
        top = Some(v);
    }
    let diverging = residuals.windows(4).any(|w| w[0] < w[1] && w[1] < w[2] && w[2] < w[3]);
    if diverging {
        log::warn!("Neumann residual grew over three consecutive terms at q = {}, N = {}", ctx.q(), ctx.alphabet());
    }
    Ok(NeumannSeries {
        partial_sums,
        residuals,
        rho_lt_1: constants(ctx.q(), ctx.alphabet())?.rho_lt_1,
        diverging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::make_context;
    use crate::operators::{self, wick_word};
    use proptest::prelude::*;

    fn c(n: usize, q: f64, l: usize) -> Ctx {
        make_context(n, q, l).unwrap()
    }

    /// Dense oracle in word coordinates: `vec(A X B^T) = (B ⊗ A) vec(X)` summed over terms.
    fn dense_action(t: &HSElement, side: Side) -> DMatrix<f64> {
        let ctx = t.ctx();
        let d = ctx.dim();
        let rev = ctx.reversal();
        let left = |u: usize| wick_word(&crate::word::all_words(ctx.alphabet(), ctx.level())[u], ctx).unwrap().re().clone();
        let right = |v: usize| {
            let m = left(rev[v]);
            DMatrix::from_fn(d, d, |r, c| m[(rev[r], rev[c])])
        };
        let mut out = DMatrix::zeros(d * d, d * d);
        for u in 0..d {
            for v in 0..d {
                let x = t.coeffs()[(u, v)].re;
                if x == 0.0 {
                    continue;
                }
                let (a, b) = match side {
                    Side::Left => (left(u), right(v)),
                    Side::Right => (right(u), left(v)),
                };
                out += b.kronecker(&a) * x;
            }
        }
        out
    }

    fn random_hs(ctx: &Ctx, seed: u64) -> HSElement {
        let d = ctx.dim();
        let m = DMatrix::from_fn(d, d, |r, c| (((r * 13 + c * 7) as u64 + seed) as f64 * 0.618).sin());
        HSElement::from_real(ctx, &m).unwrap()
    }

    #[test]
    fn structured_action_matches_dense_oracle() {
        let ctx = c(2, 0.3, 2);
        for side in [Side::Left, Side::Right] {
            let t = random_hs(&ctx, 3);
            let x = random_hs(&ctx, 11);
            let act = LrAction::new(&t, side).unwrap();
            let got = act.apply(&x).unwrap().re();
            let dense = dense_action(&t, side);
            let want = &dense * DVector::from_column_slice(x.re().as_slice());
            let want = DMatrix::from_column_slice(ctx.dim(), ctx.dim(), want.as_slice());
            assert!((got - want).amax() < 1e-12, "{side:?}");
        }
    }

    #[test]
    fn action_norm_matches_dense_in_metric_frame() {
        let ctx = c(2, 0.4, 2);
        let t = random_hs(&ctx, 5);
        let m = ctx.metric().unwrap();
        let dense = dense_action(&t, Side::Left);
        let s = m.g_sqrt.kronecker(&m.g_sqrt);
        let si = m.g_inv_sqrt.kronecker(&m.g_inv_sqrt);
        let want = (&s * dense * si).singular_values().max();
        let got = LrAction::new(&t, Side::Left).unwrap().op_norm();
        assert!((got - want).abs() < 1e-9 * want);
        let z = t.scale(Complex64::new(0.6, 0.8));
        assert!((LrAction::new(&z, Side::Left).unwrap().op_norm() - want).abs() < 1e-9 * want);
    }

    #[test]
    fn unit_and_single_tensor_actions() {
        let ctx = c(2, 0.25, 3);
        let x = random_hs(&ctx, 1);
        let id = LrAction::new(&HSElement::one(&ctx), Side::Left).unwrap();
        assert!(id.apply(&x).unwrap().sub(&x).unwrap().max_abs() < 1e-12);
        assert!((id.op_norm() - 1.0).abs() < 1e-12);
        let mut t = HSElement::zeros(&ctx);
        t.coeffs_mut()[(1, 0)] = Complex64::new(1.0, 0.0);
        let got = LrAction::new(&t, Side::Left).unwrap().apply(&x).unwrap().re();
        let want = operators::gaussian(0, &ctx).unwrap().re() * x.re();
        assert!((got - want).amax() < 1e-12);
    }

    #[test]
    fn xi_examples() {
        let ctx = c(2, 0.0, 3);
        let m = xi_multiplier(&ctx, 3).unwrap();
        assert_eq!(m.re()[(0, 0)], 1.0);
        assert_eq!(m.re().amax(), 1.0);
        assert_eq!(m.re().iter().filter(|&&x| x != 0.0).count(), 1);
        let ctx = c(1, 0.6, 2);
        let t = xi_as_hs(&ctx, 2).unwrap();
        // N = 1: p_{(1,1)} = e_{11}/sqrt(1+q), so the coefficient in the p-basis is q².
        let coef = t.coeffs()[(2, 2)].re * (1.0 + 0.6);
        assert!((coef - 0.36).abs() < 1e-14);
        let t0 = xi_as_hs(&c(2, 0.3, 3), 0).unwrap();
        assert!(t0.sub(&HSElement::one(t0.ctx())).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn xi_hs_contracts_to_multiplier() {
        for &q in &[-0.5, 0.2, 0.7] {
            let ctx = c(2, q, 3);
            for trunc in 0..=3 {
                let op = xi_as_hs(&ctx, trunc).unwrap().as_operator().unwrap();
                let m = xi_multiplier(&ctx, trunc).unwrap();
                assert!(op.max_abs_diff(&m).unwrap() < 1e-10);
                // HS norm² = Σ q^{2n} N^n
                let want: f64 = (0..=trunc).map(|n| q.powi(2 * n as i32) * 2f64.powi(n as i32)).sum();
                let got = hs_norm(&xi_as_hs(&ctx, trunc).unwrap()).unwrap().powi(2);
                assert!((got - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn extended_coefficients_agree_with_orthonormal_sum() {
        let ctx = c(2, -0.35, 3);
        let ext = xi_extended(&ctx, 5, None).unwrap();
        let t = xi_as_hs(&ctx, 3).unwrap().re();
        assert!((ext.view((0, 0), (15, 15)) - t).amax() < 1e-12);
        let cut = xi_extended(&ctx, 5, Some(2)).unwrap();
        assert_eq!(cut.view((7, 7), (56, 56)).amax(), 0.0);
    }

    #[test]
    fn xi_is_real_structure_invariant() {
        let ctx = c(2, -0.4, 3);
        let t = xi_as_hs(&ctx, 3).unwrap();
        assert!(t.real_structure().sub(&t).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn xi_action_is_positive_when_rho_below_one() {
        for &q in &[-0.09, -0.05, 0.05, 0.09] {
            let ctx = c(2, q, 3);
            let act = LrAction::new(&xi_as_hs(&ctx, 3).unwrap(), Side::Left).unwrap();
            assert!(act.symmetry_defect() < 1e-10);
            let e = act.extremes().unwrap();
            assert!(e.min > -1e-10, "q = {q}: min eigenvalue {}", e.min);
        }
    }

    #[test]
    fn constants_examples() {
        let r = constants(0.0, 5).unwrap();
        assert_eq!((r.c_q, r.nu, r.rho, r.nu_lt_1, r.rho_lt_1), (1.0, 0.0, 0.0, true, true));
        for n in 2..=10 {
            assert!(constants(0.13 / n as f64, n).unwrap().nu_lt_1);
            assert!(constants(0.13 / (n as f64).sqrt(), n).unwrap().rho_lt_1);
        }
        let r = constants(0.6, 2).unwrap();
        assert!(r.nu.is_infinite() && !r.nu_lt_1);
        // Independent evaluation of the bracket at x = 0.13.
        let x: f64 = 0.13;
        let want = 4.0 * x / (1.0 - x) + 5.0 * (x / (1.0 - x)).powi(2) + 2.0 * (x / (1.0 - x)).powi(3);
        let r = constants(0.065, 2).unwrap();
        assert!((r.nu / c_q(0.065).unwrap().powi(3) - want).abs() < 1e-14);
    }

    #[test]
    fn rho_bounds_compressed_deviation() {
        for n in 2..=3 {
            let q = 0.13 / (n as f64).sqrt();
            let ctx = c(n, q, if n == 2 { 4 } else { 3 });
            let dev = xi_as_hs(&ctx, ctx.level()).unwrap().sub(&HSElement::one(&ctx)).unwrap();
            let norm = LrAction::new(&dev, Side::Left).unwrap().op_norm();
            assert!(norm <= constants(q, n).unwrap().rho, "N = {n}");
        }
    }

    #[test]
    fn truncations_converge_in_tail() {
        let ctx = c(2, 0.3, 4);
        let full = xi_as_hs(&ctx, 4).unwrap();
        let mut prev = f64::INFINITY;
        for trunc in 0..4 {
            let gap = xi_as_hs(&ctx, trunc).unwrap().sub(&full).unwrap();
            let n = LrAction::new(&gap, Side::Left).unwrap().op_norm();
            assert!(n < prev);
            prev = n;
        }
    }

    #[test]
    fn neumann_series() {
        let ctx = c(2, 0.0, 3);
        let s = xi_inverse_neumann(&ctx, 4).unwrap();
        for u in &s.partial_sums {
            assert!(u.sub(&HSElement::one(&ctx)).unwrap().max_abs() == 0.0);
        }
        assert!(s.residuals.iter().all(|&r| r == 0.0));

        let ctx = c(2, 0.05, 4);
        let s = xi_inverse_neumann(&ctx, 8).unwrap();
        let xi = xi_as_hs(&ctx, 4).unwrap();
        let u1 = HSElement::one(&ctx).scale(Complex64::new(2.0, 0.0)).sub(&xi).unwrap();
        assert!(s.partial_sums[1].sub(&u1).unwrap().max_abs() < 1e-15);
        assert!(s.residuals.windows(2).all(|w| w[1] < w[0]));
        assert!(!s.diverging && s.rho_lt_1);
        // The literal residual agrees with the closed form up to rounding.
        let act = LrAction::new(&xi, Side::Left).unwrap();
        for n in [1, 3] {
            let lit = act.apply(&s.partial_sums[n]).unwrap().sub(&HSElement::one(&ctx)).unwrap();
            let r = LrAction::new(&lit, Side::Left).unwrap().op_norm();
            assert!((r - s.residuals[n]).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn tensor_bozejko(q in prop::sample::select(vec![-0.5, -0.2, 0.2, 0.5]), n in 0usize..3, m in 0usize..3, s in prop::collection::vec(-1.0f64..1.0, 1..20)) {
            let ctx = c(2, q, 3);
            let mut t = HSElement::zeros(&ctx);
            let (on, om) = (ctx.offset(n), ctx.offset(m));
            for a in 0..ctx.level_dim(n) {
                for b in 0..ctx.level_dim(m) {
                    t.coeffs_mut()[(on + a, om + b)] = Complex64::new(s[(a * 5 + b) % s.len()], 0.0);
                }
            }
            let hs = hs_norm(&t).unwrap();
            prop_assume!(hs > 1e-6);
            let lhs = LrAction::new(&t, Side::Left).unwrap().op_norm();
            let bound = c_q(q.abs()).unwrap().powi(3) * ((n + 1) * (m + 1)) as f64 * hs;
            prop_assert!(lhs <= bound + 1e-9, "{lhs} > {bound}");
        }

        #[test]
        fn hs_inner_is_hermitian(seed1 in 0u64..1000, seed2 in 0u64..1000, q in -0.8f64..0.8) {
            let ctx = c(2, q, 2);
            let (a, b) = (random_hs(&ctx, seed1).scale(Complex64::new(0.3, 1.0)), random_hs(&ctx, seed2));
            let x = hs_inner(&a, &b).unwrap();
            let y = hs_inner(&b, &a).unwrap();
            prop_assert!((x - y.conj()).norm() < 1e-10 * (1.0 + x.norm()));
        }
    }
}
