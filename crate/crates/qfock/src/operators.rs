//! Operators on the truncated Fock space: left and right creation/annihilation, the field
//! operators `X_i`, Wick words, adjoints with respect to the q-metric, norms and the trace.
//!
//! Every operator is the compression `P_{≤L} A P_{≤L}` of the untruncated one. Moments
//! `τ(X_{i_1}⋯X_{i_k})` are exact once `L ≥ k`; operator norms are lower bounds of the
//! untruncated norms.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{q_inner, Ctx, GradedVector};
use crate::wick::{apply_left_monomial, Block};

const PRODUCT_TOL: f64 = 1e-15;
const PRODUCT_MAX_FACTORS: usize = 1_000_000;

/// Operator in word coordinates. The imaginary part is absent for real operators.
#[derive(Debug, Clone)]
pub struct FockOperator {
    ctx: Ctx,
    re: DMatrix<f64>,
    im: Option<DMatrix<f64>>,
    grading_shift: Option<i32>,
}

impl FockOperator {
    /// Wraps a matrix over the full graded basis, validating its grading tag when given.
    pub fn new(ctx: &Ctx, re: DMatrix<f64>, im: Option<DMatrix<f64>>, grading_shift: Option<i32>) -> Result<Self> {
        let d = ctx.dim();
        let bad = |m: &DMatrix<f64>| m.nrows() != d || m.ncols() != d;
        if bad(&re) || im.as_ref().is_some_and(bad) {
            return Err(Error::Invalid(format!("operator matrix must be {d}x{d}")));
        }
        let op = FockOperator {
            ctx: ctx.clone(),
            re,
            im,
            grading_shift,
        };
        if let Some(s) = grading_shift {
            if !op.respects_shift(s) {
                return Err(Error::Invalid(format!("operator has entries outside grading shift {s}")));
            }
        }
        Ok(op)
    }

    fn real(ctx: &Ctx, re: DMatrix<f64>, grading_shift: Option<i32>) -> Self {
        FockOperator {
            ctx: ctx.clone(),
            re,
            im: None,
            grading_shift,
        }
    }

    pub fn identity(ctx: &Ctx) -> Self {
        Self::real(ctx, DMatrix::identity(ctx.dim(), ctx.dim()), Some(0))
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn re(&self) -> &DMatrix<f64> {
        &self.re
    }

    pub fn im(&self) -> Option<&DMatrix<f64>> {
        self.im.as_ref()
    }

    pub fn grading_shift(&self) -> Option<i32> {
        self.grading_shift
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    /// Entry `(row, col)` as a complex number.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        Complex64::new(self.re[(row, col)], self.im.as_ref().map_or(0.0, |m| m[(row, col)]))
    }

    pub fn to_complex(&self) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.re.nrows(), self.re.ncols(), |r, c| self.entry(r, c))
    }

    fn respects_shift(&self, s: i32) -> bool {
        let ctx = &self.ctx;
        let l = ctx.level();
        for out in 0..=l {
            for inp in 0..=l {
                if out as i64 - inp as i64 == s as i64 {
                    continue;
                }
                let (ro, rk) = (ctx.offset(out), ctx.level_dim(out));
                let (co, ck) = (ctx.offset(inp), ctx.level_dim(inp));
                let zero = |m: &DMatrix<f64>| m.view((ro, co), (rk, ck)).iter().all(|&x| x == 0.0);
                if !zero(&self.re) || !self.im.as_ref().is_none_or(zero) {
                    return false;
                }
            }
        }
        true
    }

    fn check_same(&self, other: &FockOperator) -> Result<()> {
        if self.ctx.same_space(&other.ctx) {
            Ok(())
        } else {
            Err(Error::ContextMismatch)
        }
    }

    fn combine_shift(a: Option<i32>, b: Option<i32>) -> Option<i32> {
        match (a, b) {
            (Some(x), Some(y)) if x == y => Some(x),
            _ => None,
        }
    }

    pub fn add(&self, other: &FockOperator) -> Result<Self> {
        self.check_same(other)?;
        let im = match (&self.im, &other.im) {
            (None, None) => None,
            (a, b) => Some(
                a.clone().unwrap_or_else(|| DMatrix::zeros(self.re.nrows(), self.re.ncols()))
                    + b.clone().unwrap_or_else(|| DMatrix::zeros(self.re.nrows(), self.re.ncols())),
            ),
        };
        Ok(FockOperator {
            ctx: self.ctx.clone(),
            re: &self.re + &other.re,
            im,
            grading_shift: Self::combine_shift(self.grading_shift, other.grading_shift),
        })
    }

    pub fn sub(&self, other: &FockOperator) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let (re, im) = match &self.im {
            None if s.im == 0.0 => (&self.re * s.re, None),
            None => (&self.re * s.re, Some(&self.re * s.im)),
            Some(b) => (&self.re * s.re - b * s.im, Some(&self.re * s.im + b * s.re)),
        };
        FockOperator {
            ctx: self.ctx.clone(),
            re,
            im,
            grading_shift: self.grading_shift,
        }
    }

    /// Composition `self · other` of the two compressions.
    pub fn mul(&self, other: &FockOperator) -> Result<Self> {
        self.check_same(other)?;
        let re = match (&self.im, &other.im) {
            (Some(a), Some(b)) => &self.re * &other.re - a * b,
            _ => &self.re * &other.re,
        };
        let im = match (&self.im, &other.im) {
            (None, None) => None,
            (Some(a), None) => Some(a * &other.re),
            (None, Some(b)) => Some(&self.re * b),
            (Some(a), Some(b)) => Some(a * &other.re + &self.re * b),
        };
        let grading_shift = match (self.grading_shift, other.grading_shift) {
            (Some(x), Some(y)) => Some(x + y),
            _ => None,
        };
        Ok(FockOperator {
            ctx: self.ctx.clone(),
            re,
            im,
            grading_shift,
        })
    }

    pub fn commutator(&self, other: &FockOperator) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    pub fn apply(&self, v: &GradedVector) -> Result<GradedVector> {
        if !self.ctx.same_space(v.ctx()) {
            return Err(Error::ContextMismatch);
        }
        let d = self.ctx.dim();
        let x = v.coeffs();
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        for c in 0..d {
            let xc = x[c];
            if xc == Complex64::new(0.0, 0.0) {
                continue;
            }
            for r in 0..d {
                let a = self.entry(r, c);
                if a != Complex64::new(0.0, 0.0) {
                    out[r] += a * xc;
                }
            }
        }
        GradedVector::from_coeffs(&self.ctx, out)
    }

    /// Largest absolute entry difference, used for identity checks.
    pub fn max_abs_diff(&self, other: &FockOperator) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn max_abs(&self) -> f64 {
        self.re.amax().max(self.im.as_ref().map_or(0.0, |m| m.amax()))
    }
}

fn left_kernel(i: usize, ctx: &Ctx, f: impl Fn(&Block<f64>) -> Block<f64>) -> Result<DMatrix<f64>> {
    ctx.check_letter(i)?;
    Ok(f(&Block::identity(ctx.alphabet(), ctx.level())).to_matrix())
}

/// `ℓ(h_i)`: prepends `i`; words of length `L` are sent to 0.
pub fn creation(i: usize, ctx: &Ctx) -> Result<FockOperator> {
    let m = left_kernel(i, ctx, |b| b.create_left(i, ctx.level()))?;
    Ok(FockOperator::real(ctx, m, Some(1)))
}

/// `ℓ*(h_i) e_w = Σ_k q^{k-1} [w_k = i] e_{w∖k}`.
pub fn annihilation(i: usize, ctx: &Ctx) -> Result<FockOperator> {
    let m = left_kernel(i, ctx, |b| b.annihilate_left(i, ctx.q(), ctx.level()))?;
    Ok(FockOperator::real(ctx, m, Some(-1)))
}

/// `r(h_i)`: appends `i`.
pub fn right_creation(i: usize, ctx: &Ctx) -> Result<FockOperator> {
    let m = left_kernel(i, ctx, |b| b.create_right(i, ctx.level()))?;
    Ok(FockOperator::real(ctx, m, Some(1)))
}

/// `r*(h_i)`, the q-adjoint of [`right_creation`].
pub fn right_annihilation(i: usize, ctx: &Ctx) -> Result<FockOperator> {
    let mut a = adjoint(&right_creation(i, ctx)?)?;
    a.grading_shift = Some(-1);
    Ok(a)
}

/// `r*(h_i)` from the closed form `Σ_k q^{n-k} [w_k = i] e_{w∖k}`.
pub fn right_annihilation_formula(i: usize, ctx: &Ctx) -> Result<FockOperator> {
    let m = left_kernel(i, ctx, |b| b.annihilate_right(i, ctx.q(), ctx.level()))?;
    Ok(FockOperator::real(ctx, m, Some(-1)))
}

/// The q-Gaussian `X_i = ℓ(h_i) + ℓ*(h_i)`.
pub fn gaussian(i: usize, ctx: &Ctx) -> Result<FockOperator> {
    let m = left_kernel(i, ctx, |b| b.gaussian_left(i, ctx.q(), ctx.level()))?;
    Ok(FockOperator::real(ctx, m, None))
}

/// `G^{-1} A^H G`, the adjoint for the q-inner product.
pub fn adjoint(a: &FockOperator) -> Result<FockOperator> {
    let metric = a.ctx.metric()?;
    let conj = |m: &DMatrix<f64>| &metric.g_inv * m.transpose() * &metric.g;
    Ok(FockOperator {
        ctx: a.ctx.clone(),
        re: conj(&a.re),
        im: a.im.as_ref().map(|m| -conj(m)),
        grading_shift: a.grading_shift.map(|s| -s),
    })
}

/// The Wick word `ψ_w`, the polynomial in `X_1..X_N` with `ψ_w Ω = e_w`.
pub fn wick_word(w: &[usize], ctx: &Ctx) -> Result<FockOperator> {
    for &i in w {
        ctx.check_letter(i)?;
    }
    let table = ctx.wick_table()?;
    Ok(FockOperator::real(ctx, table.block_of(w)?.to_matrix(), None))
}

/// `ψ(ξ) = Σ_w ξ_w ψ_w`.
pub fn wick_operator(xi: &GradedVector) -> Result<FockOperator> {
    let ctx = xi.ctx();
    let table = ctx.wick_table()?;
    let d = ctx.dim();
    let mut re = DMatrix::zeros(d, d);
    let mut im = DMatrix::zeros(d, d);
    for (pos, c) in xi.coeffs().iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let m = table.matrix(pos);
        re += &m * c.re;
        im += &m * c.im;
    }
    let im = (im.amax() > 0.0).then_some(im);
    FockOperator::new(ctx, re, im, None)
}

/// Exact compression of the monomial `X_{l_1} ⋯ X_{l_k}`.
pub fn monomial(letters: &[usize], ctx: &Ctx) -> Result<FockOperator> {
    for &i in letters {
        ctx.check_letter(i)?;
    }
    let id = Block::identity(ctx.alphabet(), ctx.level());
    let m = apply_left_monomial(&id, letters, ctx.q(), ctx.level()).to_matrix();
    Ok(FockOperator::real(ctx, m, None))
}

/// `τ(A) = ⟨Ω, AΩ⟩_q`.
pub fn trace_state(a: &FockOperator) -> Complex64 {
    a.entry(0, 0)
}

/// Largest singular value with respect to the q-metric, i.e. `‖G^{1/2} A G^{-1/2}‖₂`.
pub fn op_norm(a: &FockOperator) -> Result<f64> {
    restricted_op_norm(a, a.ctx.level())
}

/// q-metric norm of `A` restricted to inputs of length `≤ in_level`.
pub fn restricted_op_norm(a: &FockOperator, in_level: usize) -> Result<f64> {
    let ctx = &a.ctx;
    ctx.cap().check_dim("dense operator norm", ctx.dim())?;
    let metric = ctx.metric()?;
    let k = ctx.offset(in_level.min(ctx.level()) + 1);
    let s_in = metric.g_inv_sqrt.view((0, 0), (k, k));
    let tilde = |m: &DMatrix<f64>| &metric.g_sqrt * m.columns(0, k) * s_in;
    let re = tilde(&a.re);
    let m = match &a.im {
        None => re,
        Some(b) => {
            // The real form [[A, -B], [B, A]] has the singular values of A + iB, each twice.
            let im = tilde(b);
            let (r, c) = re.shape();
            let mut big = DMatrix::zeros(2 * r, 2 * c);
            big.view_mut((0, 0), (r, c)).copy_from(&re);
            big.view_mut((r, c), (r, c)).copy_from(&re);
            big.view_mut((0, c), (r, c)).copy_from(&(-&im));
            big.view_mut((r, 0), (r, c)).copy_from(&im);
            big
        }
    };
    Ok(m.singular_values().max())
}

/// `C_q = Π_{m≥1} (1 − q^m)^{-1}`, truncated once a factor is within `1e-15` of 1.
pub fn c_q(q: f64) -> Result<f64> {
    if !(q > -1.0 && q < 1.0) {
        return Err(Error::QOutOfRange(q));
    }
    let mut inv = 1.0;
    let mut p = 1.0;
    for _ in 0..PRODUCT_MAX_FACTORS {
        p *= q;
        if p.abs() < PRODUCT_TOL {
            break;
        }
        inv *= 1.0 - p;
    }
    Ok(1.0 / inv)
}

/// Outcome of the Haagerup–Bożejko norm comparison for one homogeneous vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BozejkoReport {
    pub level: usize,
    /// Truncated `‖ψ(ξ)‖`.
    pub lhs: f64,
    /// `C_{|q|}^{3/2} (n+1) ‖ξ‖_q`.
    pub bound: f64,
    /// `‖ξ‖_q`, a lower bound for `‖ψ(ξ)‖` that survives truncation.
    pub l2_norm: f64,
    pub pass: bool,
    pub lower_pass: bool,
}

/// Compares the truncated `‖ψ(ξ)‖` with `C_{|q|}^{3/2}(n+1)‖ξ‖` for `ξ` homogeneous of level `n`.
pub fn bozejko_check(xi: &GradedVector) -> Result<BozejkoReport> {
    let level = xi.homogeneous_level().ok_or(Error::NonHomogeneous)?;
    let ctx = xi.ctx();
    let lhs = op_norm(&wick_operator(xi)?)?;
    let l2_norm = xi.norm_q()?;
    let bound = c_q(ctx.q().abs())?.powf(1.5) * (level as f64 + 1.0) * l2_norm;
    Ok(BozejkoReport {
        level,
        lhs,
        bound,
        l2_norm,
        pass: lhs <= bound + 1e-9,
        lower_pass: lhs >= l2_norm - 1e-9,
    })
}

/// `⟨Aξ, η⟩_q − ⟨ξ, A^*η⟩_q`.
pub fn adjoint_defect(a: &FockOperator, xi: &GradedVector, eta: &GradedVector) -> Result<f64> {
    let lhs = q_inner(&a.apply(xi)?, eta)?;
    let rhs = q_inner(xi, &adjoint(a)?.apply(eta)?)?;
    Ok((lhs - rhs).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::make_context;
    use proptest::prelude::*;

    fn c(n: usize, q: f64, l: usize) -> Ctx {
        make_context(n, q, l).unwrap()
    }

    fn basis(ctx: &Ctx, w: &[usize]) -> GradedVector {
        GradedVector::basis(ctx, w).unwrap()
    }

    fn close(a: &GradedVector, b: &GradedVector, tol: f64) -> bool {
        a.sub(b).unwrap().max_abs() < tol
    }

    #[test]
    fn creation_annihilation_examples() {
        let ctx = c(2, 0.3, 3);
        let om = GradedVector::vacuum(&ctx);
        assert!(close(&creation(0, &ctx).unwrap().apply(&om).unwrap(), &basis(&ctx, &[0]), 1e-300));
        let v = annihilation(0, &ctx).unwrap().apply(&basis(&ctx, &[0, 0])).unwrap();
        assert!(close(&v, &basis(&ctx, &[0]).scale(Complex64::new(1.3, 0.0)), 1e-15));
        let v = annihilation(1, &ctx).unwrap().apply(&basis(&ctx, &[0, 0])).unwrap();
        assert_eq!(v.max_abs(), 0.0);
        assert_eq!(annihilation(0, &ctx).unwrap().apply(&om).unwrap().max_abs(), 0.0);
        assert!(creation(2, &ctx).is_err());
    }

    #[test]
    fn right_operators_and_mirror_formula() {
        let ctx = c(2, 0.3, 3);
        let om = GradedVector::vacuum(&ctx);
        assert!(close(&right_creation(0, &ctx).unwrap().apply(&om).unwrap(), &basis(&ctx, &[0]), 1e-300));
        let rs = right_annihilation(0, &ctx).unwrap();
        // Brute force: r* is the q-adjoint of appending, so ⟨e_u, r* e_w⟩ = ⟨e_u·0, e_w⟩.
        let v = rs.apply(&basis(&ctx, &[1, 0])).unwrap();
        assert!(close(&v, &basis(&ctx, &[1]), 1e-12));
        let v = rs.apply(&basis(&ctx, &[0, 1])).unwrap();
        assert!(close(&v, &basis(&ctx, &[1]).scale(Complex64::new(0.3, 0.0)), 1e-12));
        let f = right_annihilation_formula(0, &ctx).unwrap();
        assert!(rs.max_abs_diff(&f).unwrap() < 1e-12);
    }

    #[test]
    fn gaussian_examples_and_norm_bound() {
        for &q in &[-0.7, -0.2, 0.0, 0.4, 0.8] {
            let ctx = c(2, q, 4);
            let x = gaussian(0, &ctx).unwrap();
            let om = GradedVector::vacuum(&ctx);
            let x2 = x.mul(&x).unwrap().apply(&om).unwrap();
            let want = basis(&ctx, &[0, 0]).add(&om).unwrap();
            assert!(close(&x2, &want, 1e-14));
            assert!(adjoint(&x).unwrap().max_abs_diff(&x).unwrap() < 1e-10);
            assert!(op_norm(&x).unwrap() < 2.0 / (1.0 - q.abs()));
        }
    }

    #[test]
    fn adjoint_examples() {
        let ctx = c(2, -0.45, 3);
        for i in 0..2 {
            let a = adjoint(&creation(i, &ctx).unwrap()).unwrap();
            assert!(a.max_abs_diff(&annihilation(i, &ctx).unwrap()).unwrap() < 1e-10);
        }
        let a = wick_word(&[0, 1, 0], &ctx).unwrap().scale(Complex64::new(0.5, -2.0));
        assert!(adjoint(&adjoint(&a).unwrap()).unwrap().max_abs_diff(&a).unwrap() < 1e-10);
    }

    #[test]
    fn wick_words_map_vacuum_to_words() {
        for &(n, q) in &[(1, 0.6), (2, -0.3), (3, 0.25)] {
            let ctx = c(n, q, 4);
            let om = GradedVector::vacuum(&ctx);
            for w in crate::word::all_words(n, 4) {
                let v = wick_word(&w, &ctx).unwrap().apply(&om).unwrap();
                assert!(close(&v, &basis(&ctx, &w), 1e-12), "{w:?}");
            }
        }
        let ctx = c(2, 0.35, 4);
        let x = gaussian(0, &ctx).unwrap();
        assert!(wick_word(&[0], &ctx).unwrap().max_abs_diff(&x).unwrap() < 1e-14);
        let x2m1 = x.mul(&x).unwrap().sub(&FockOperator::identity(&ctx)).unwrap();
        // X₁² − 1 agrees with ψ₁₁ away from the top level, where X₁² is not an exact compression.
        let top = ctx.offset(ctx.level());
        let d = (wick_word(&[0, 0], &ctx).unwrap().re() - x2m1.re()).columns(0, top).amax();
        assert!(d < 1e-14);
    }

    #[test]
    fn moments() {
        for &q in &[-0.6, 0.0, 0.3] {
            for l in 4..7 {
                let ctx = c(2, q, l);
                let x1 = gaussian(0, &ctx).unwrap();
                let x2 = gaussian(1, &ctx).unwrap();
                let x11 = x1.mul(&x1).unwrap();
                assert!((trace_state(&x11).re - 1.0).abs() < 1e-14);
                let m4 = trace_state(&x11.mul(&x11).unwrap());
                assert!((m4.re - (2.0 + q)).abs() < 1e-12);
                let alt = x1.mul(&x2).unwrap().mul(&x1).unwrap().mul(&x2).unwrap();
                assert!((trace_state(&alt).re - q).abs() < 1e-12);
                let mono = monomial(&[0, 1, 0, 1], &ctx).unwrap();
                assert!((trace_state(&mono).re - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn norm_examples() {
        let ctx = c(2, 0.0, 4);
        assert!((op_norm(&FockOperator::identity(&ctx)).unwrap() - 1.0).abs() < 1e-12);
        assert!((op_norm(&creation(0, &ctx).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for l in 1..7 {
            let n = op_norm(&gaussian(1, &c(2, 0.5, l)).unwrap()).unwrap();
            assert!(n >= prev - 1e-12);
            prev = n;
        }
        let ctx = c(2, 0.3, 3);
        let z = gaussian(0, &ctx).unwrap().scale(Complex64::new(0.0, 2.0));
        let r = op_norm(&gaussian(0, &ctx).unwrap()).unwrap();
        assert!((op_norm(&z).unwrap() - 2.0 * r).abs() < 1e-12);
    }

    #[test]
    fn c_q_values() {
        assert_eq!(c_q(0.0).unwrap(), 1.0);
        let want = 1.0 / ((1.0 - 0.5) * (1.0 - 0.25) * (1.0 - 0.125));
        assert!(c_q(0.5).unwrap() > want);
        // Euler's pentagonal theorem gives an independent series for Π(1 − q^m).
        for &q in &[0.5f64, -0.3, 0.7] {
            let mut s = 0.0;
            for k in -60i32..=60 {
                let e = k * (3 * k - 1) / 2;
                s += if k % 2 == 0 { 1.0 } else { -1.0 } * q.powi(e);
            }
            assert!((c_q(q).unwrap() * s - 1.0).abs() < 1e-10, "{q}");
        }
        assert!(c_q(1.0).is_err());
    }

    #[test]
    fn bozejko_examples() {
        let ctx = c(2, 0.0, 3);
        let r = bozejko_check(&basis(&ctx, &[0, 1])).unwrap();
        assert!((r.bound - 3.0).abs() < 1e-12 && r.pass && r.lower_pass);
        let ctx = c(2, 0.5, 3);
        let r = bozejko_check(&basis(&ctx, &[1])).unwrap();
        assert!((r.lhs - op_norm(&gaussian(1, &ctx).unwrap()).unwrap()).abs() < 1e-12);
        assert!(r.pass);
        let mixed = basis(&ctx, &[1]).add(&basis(&ctx, &[0, 0])).unwrap();
        assert_eq!(bozejko_check(&mixed).unwrap_err(), Error::NonHomogeneous);
    }

    #[test]
    fn left_and_right_creations_commute_below_top() {
        let ctx = c(2, 0.4, 4);
        let k = creation(0, &ctx).unwrap().commutator(&right_creation(1, &ctx).unwrap()).unwrap();
        let keep = ctx.offset(ctx.level() - 1);
        assert_eq!(k.re().columns(0, keep).amax(), 0.0);
    }

    fn random_vector(ctx: &Ctx, seed: &[f64]) -> GradedVector {
        let v: Vec<Complex64> = (0..ctx.dim())
            .map(|k| Complex64::new(seed[k % seed.len()] * (k as f64 + 1.0).sin(), seed[(k + 1) % seed.len()]))
            .collect();
        GradedVector::from_coeffs(ctx, v).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn adjoint_pairing(q in -0.9f64..0.9, i in 0usize..2, s1 in prop::collection::vec(-1.0f64..1.0, 5), s2 in prop::collection::vec(-1.0f64..1.0, 7)) {
            let ctx = c(2, q, 3);
            let (x, y) = (random_vector(&ctx, &s1), random_vector(&ctx, &s2));
            let ops = [
                creation(i, &ctx).unwrap(),
                annihilation(i, &ctx).unwrap(),
                right_creation(i, &ctx).unwrap(),
                right_annihilation(i, &ctx).unwrap(),
                gaussian(i, &ctx).unwrap(),
                wick_word(&[i, 1 - i, i], &ctx).unwrap(),
            ];
            for a in &ops {
                prop_assert!(adjoint_defect(a, &x, &y).unwrap() < 1e-10);
            }
        }

        #[test]
        fn moments_do_not_depend_on_level(q in -0.9f64..0.9, word in prop::collection::vec(0usize..2, 4)) {
            let t4 = trace_state(&monomial(&word, &c(2, q, 4)).unwrap());
            let t6 = trace_state(&monomial(&word, &c(2, q, 6)).unwrap());
            prop_assert!((t4 - t6).norm() < 1e-12);
        }

        #[test]
        fn bozejko_random(q in prop::sample::select(vec![-0.5, -0.2, 0.2, 0.5]), n in 1usize..4, s in prop::collection::vec(-1.0f64..1.0, 9)) {
            let ctx = c(2, q, n);
            let k = ctx.level_dim(n);
            let vals: Vec<Complex64> = (0..k).map(|j| Complex64::new(s[j % s.len()], 0.0)).collect();
            let xi = GradedVector::from_level(&ctx, n, &vals).unwrap();
            prop_assume!(xi.max_abs() > 0.0);
            let r = bozejko_check(&xi).unwrap();
            prop_assert!(r.pass && r.lower_pass, "{r:?}");
        }
    }
}
