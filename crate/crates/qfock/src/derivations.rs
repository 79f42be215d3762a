//! Derivations on non-commutative polynomials in `X_1..X_N`.
//!
//! * `∂_j`, the free difference quotient, with `∂_j X_i = δ_{ij} 1⊗1`;
//! * `∂_j^(q)`, the commutator derivation, with `∂_j^(q) X_i = δ_{ij} Ξ_q`;
//! * `∂_j^(q,Q)`, the same with `Ξ_q` cut at level `Q`;
//! * `∂̃_j^(q)`, i.e. `∂_j` followed by the square root of right multiplication by `Ξ_q`;
//! * `∂̂_k`, the doubling derivation sending `X_k` to a fresh copy `X_{k'}`.
//!
//! Outputs are exact at truncation whenever the polynomial degree fits under `L`: every
//! product is evaluated as a compression whose intermediate levels are never cut.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::deformation::{self, hs_norm, HSElement, LrAction, Side};
use crate::error::{Error, Result};
use crate::fock::{q_inner, Ctx, FockContext, GradedVector};
use crate::operators::{self, FockOperator};
use crate::wick::{apply_left_monomial, apply_right_monomial, Block};
use crate::word;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Finitely supported linear combination of monomials `X_{i_1} ⋯ X_{i_k}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NCPoly {
    terms: BTreeMap<Vec<usize>, Complex64>,
}

impl NCPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: Complex64) -> Self {
        Self::monomial(&[], c)
    }

    pub fn variable(i: usize) -> Self {
        Self::monomial(&[i], Complex64::new(1.0, 0.0))
    }

    pub fn monomial(letters: &[usize], c: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(letters.to_vec(), c);
        p
    }

    fn add_term(&mut self, letters: Vec<usize>, c: Complex64) {
        let e = self.terms.entry(letters.clone()).or_insert(ZERO);
        *e += c;
        if *e == ZERO {
            self.terms.remove(&letters);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[usize], Complex64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest monomial length; 0 for constants and the zero polynomial.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_letter(&self) -> Option<usize> {
        self.terms.keys().flat_map(|k| k.iter().copied()).max()
    }

    pub fn add(&self, other: &NCPoly) -> NCPoly {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.add_term(k.clone(), *v);
        }
        out
    }

    pub fn sub(&self, other: &NCPoly) -> NCPoly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: Complex64) -> NCPoly {
        let mut out = NCPoly::zero();
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v * s);
        }
        out
    }

    pub fn mul(&self, other: &NCPoly) -> NCPoly {
        let mut out = NCPoly::zero();
        for (a, x) in &self.terms {
            for (b, y) in &other.terms {
                let mut w = a.clone();
                w.extend_from_slice(b);
                out.add_term(w, x * y);
            }
        }
        out
    }

    /// `P*`: monomials reversed, coefficients conjugated.
    pub fn star(&self) -> NCPoly {
        let mut out = NCPoly::zero();
        for (k, v) in &self.terms {
            out.add_term(k.iter().rev().copied().collect(), v.conj());
        }
        out
    }

    /// The Wick word `ψ_w` expanded into monomials.
    pub fn wick(w: &[usize], q: f64) -> NCPoly {
        let mut memo = HashMap::new();
        wick_rec(w, q, &mut memo)
    }

    /// `ψ(ξ) = Σ_w ξ_w ψ_w`.
    pub fn from_vector(xi: &GradedVector) -> NCPoly {
        let ctx = xi.ctx();
        let mut memo = HashMap::new();
        let mut out = NCPoly::zero();
        for (pos, c) in xi.coeffs().iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            let (n, idx) = word::split_graded(pos, ctx.alphabet());
            let w = word::word_from_index(idx, n, ctx.alphabet());
            out = out.add(&wick_rec(&w, ctx.q(), &mut memo).scale(*c));
        }
        out
    }

    fn check(&self, ctx: &Ctx, alphabet: usize) -> Result<()> {
        if let Some(m) = self.max_letter() {
            if m >= alphabet {
                return Err(Error::LetterOutOfRange { letter: m, alphabet });
            }
        }
        if self.degree() > ctx.level() {
            return Err(Error::DegreeOverflow {
                degree: self.degree(),
                max: ctx.level(),
            });
        }
        Ok(())
    }

    /// `PΩ`, exact for `deg P ≤ L`.
    pub fn vacuum_vector(&self, ctx: &Ctx) -> Result<GradedVector> {
        self.check(ctx, ctx.alphabet())?;
        let mut out = vec![ZERO; ctx.dim()];
        for (letters, c) in self.terms() {
            for (o, x) in out.iter_mut().zip(monomial_vacuum(letters, ctx)) {
                *o += c * x;
            }
        }
        GradedVector::from_coeffs(ctx, out)
    }

    /// `ψ(P)` as a compression on the truncated space.
    pub fn operator(&self, ctx: &Ctx) -> Result<FockOperator> {
        let mut acc = FockOperator::identity(ctx).scale(ZERO);
        for (letters, c) in self.terms() {
            acc = acc.add(&operators::monomial(letters, ctx)?.scale(c))?;
        }
        Ok(acc)
    }
}

fn wick_rec(w: &[usize], q: f64, memo: &mut HashMap<Vec<usize>, NCPoly>) -> NCPoly {
    if let Some(p) = memo.get(w) {
        return p.clone();
    }
    let p = if w.is_empty() {
        NCPoly::constant(Complex64::new(1.0, 0.0))
    } else {
        let i = w[0];
        let tail = &w[1..];
        let mut p = NCPoly::variable(i).mul(&wick_rec(tail, q, memo));
        for k in 0..tail.len() {
            if tail[k] == i {
                let mut v = tail.to_vec();
                v.remove(k);
                p = p.sub(&wick_rec(&v, q, memo).scale(Complex64::new(q.powi(k as i32), 0.0)));
            }
        }
        p
    };
    memo.insert(w.to_vec(), p.clone());
    p
}

fn monomial_vacuum(letters: &[usize], ctx: &Ctx) -> Vec<f64> {
    let om = Block::level_basis(ctx.alphabet(), 0);
    apply_left_monomial(&om, letters, ctx.q(), ctx.level()).to_matrix().column(0).iter().copied().collect()
}

/// Which derivation to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivationTag {
    Fdq,
    QCommutator,
    QSqrt,
    QTruncated(usize),
    Doubling,
}

/// Output of [`derive`]: a tensor for the first four derivations, a vector of the doubled
/// Fock space for the doubling derivation.
#[derive(Debug, Clone)]
pub enum Derivative {
    Hs(HSElement),
    Doubled(GradedVector),
}

impl Derivative {
    pub fn hs(self) -> Option<HSElement> {
        match self {
            Derivative::Hs(t) => Some(t),
            Derivative::Doubled(_) => None,
        }
    }

    pub fn doubled(self) -> Option<GradedVector> {
        match self {
            Derivative::Doubled(v) => Some(v),
            Derivative::Hs(_) => None,
        }
    }
}

/// Applies the tagged derivation in direction `j`. For [`DerivationTag::Doubling`], `ctx`
/// must be a doubled context whose alphabet is `2N`, with `P` using letters below `N`.
pub fn derive(p: &NCPoly, j: usize, tag: DerivationTag, ctx: &Ctx) -> Result<Derivative> {
    match tag {
        DerivationTag::Fdq => fdq(p, j, ctx).map(Derivative::Hs),
        DerivationTag::QCommutator => q_commutator(p, j, ctx, None).map(Derivative::Hs),
        DerivationTag::QTruncated(t) => {
            if t > ctx.level() {
                return Err(Error::LevelOutOfRange {
                    level: t,
                    max: ctx.level(),
                });
            }
            q_commutator(p, j, ctx, Some(t)).map(Derivative::Hs)
        }
        DerivationTag::QSqrt => q_sqrt(p, j, ctx).map(Derivative::Hs),
        DerivationTag::Doubling => doubling(p, j, ctx).map(Derivative::Doubled),
    }
}

/// `∂_j P = Σ_{m_p = j} X_{m_1..m_{p-1}} ⊗ X_{m_{p+1}..m_k}`.
pub fn fdq(p: &NCPoly, j: usize, ctx: &Ctx) -> Result<HSElement> {
    ctx.check_letter(j)?;
    p.check(ctx, ctx.alphabet())?;
    let d = ctx.dim();
    let mut memo: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
    let mut vac = |w: &[usize]| memo.entry(w.to_vec()).or_insert_with(|| monomial_vacuum(w, ctx)).clone();
    let mut out = DMatrix::from_element(d, d, ZERO);
    for (m, c) in p.terms() {
        for pos in 0..m.len() {
            if m[pos] != j {
                continue;
            }
            let (a, b) = (vac(&m[..pos]), vac(&m[pos + 1..]));
            for (u, x) in a.iter().enumerate().filter(|(_, x)| **x != 0.0) {
                for (v, y) in b.iter().enumerate().filter(|(_, y)| **y != 0.0) {
                    out[(u, v)] += c * (x * y);
                }
            }
        }
    }
    HSElement::from_complex(ctx, out)
}

/// `∂_j^(q)` (or `∂_j^(q,Q)` when `trunc` is set). Each term `a ⊗ b` of the Leibniz
/// expansion is `(X_a ⊗ 1) Ξ (1 ⊗ X_b)`; `Ξ` is taken up to level `L + min(|a|, |b|)`,
/// which is every level that can reach legs of length `≤ L`.
pub fn q_commutator(p: &NCPoly, j: usize, ctx: &Ctx, trunc: Option<usize>) -> Result<HSElement> {
    ctx.check_letter(j)?;
    p.check(ctx, ctx.alphabet())?;
    let (na, q, l) = (ctx.alphabet(), ctx.q(), ctx.level());
    let d = ctx.dim();
    let mut xi_cache: HashMap<usize, Block<f64>> = HashMap::new();
    let mut out = DMatrix::from_element(d, d, ZERO);
    for (m, c) in p.terms() {
        for pos in 0..m.len() {
            if m[pos] != j {
                continue;
            }
            let (a, b) = (&m[..pos], &m[pos + 1..]);
            let top = l + a.len().min(b.len());
            if let std::collections::hash_map::Entry::Vacant(e) = xi_cache.entry(top) {
                let x = deformation::xi_extended(ctx, top, trunc)?;
                e.insert(Block::from_columns(na, top, &x));
            }
            let xi = &xi_cache[&top];
            let left = apply_left_monomial(xi, a, q, l).to_matrix();
            let lt = Block::from_columns(na, top, &left.transpose());
            let term = apply_right_monomial(&lt, b, q, l).to_matrix().transpose();
            for (o, x) in out.iter_mut().zip(term.iter()) {
                *o += c * x;
            }
        }
    }
    HSElement::from_complex(ctx, out)
}

/// `∂̃_j^(q) P`: the square root of right multiplication by `Ξ_q` applied to `∂_j P`.
/// Unavailable when the truncated action is not positive on the relevant Krylov space.
pub fn q_sqrt(p: &NCPoly, j: usize, ctx: &Ctx) -> Result<HSElement> {
    let f = fdq(p, j, ctx)?;
    let act = LrAction::new(&deformation::xi_as_hs(ctx, ctx.level())?, Side::Right)?;
    act.sqrt_apply(&f)
}

/// `⟨∂_j P, (·Ξ_q) ∂_j P⟩`, the quadratic form whose value is `‖∂̃_j^(q) P‖²`.
pub fn q_sqrt_norm_sq(p: &NCPoly, j: usize, ctx: &Ctx) -> Result<f64> {
    let f = fdq(p, j, ctx)?;
    let act = LrAction::new(&deformation::xi_as_hs(ctx, ctx.level())?, Side::Right)?;
    Ok(deformation::hs_inner(&f, &act.apply(&f)?)?.re)
}

/// `∂̂_k P Ω` in a doubled context: every occurrence of `X_k` replaced in turn by `X_{k+N}`.
pub fn doubling(p: &NCPoly, k: usize, dctx: &Ctx) -> Result<GradedVector> {
    let na = dctx.alphabet();
    if !na.is_multiple_of(2) {
        return Err(Error::Invalid("doubling needs a context with an even alphabet".into()));
    }
    let n = na / 2;
    if k >= n {
        return Err(Error::LetterOutOfRange { letter: k, alphabet: n });
    }
    p.check(dctx, n)?;
    let mut out = vec![ZERO; dctx.dim()];
    for (m, c) in p.terms() {
        for pos in 0..m.len() {
            if m[pos] != k {
                continue;
            }
            let mut w = m.to_vec();
            w[pos] = k + n;
            for (o, x) in out.iter_mut().zip(monomial_vacuum(&w, dctx)) {
                *o += c * x;
            }
        }
    }
    GradedVector::from_coeffs(dctx, out)
}

/// The context with alphabet `2N` and the same `q` used by the doubling derivation.
pub fn doubled_context(ctx: &Ctx, level: usize) -> Result<Ctx> {
    FockContext::with_cap(2 * ctx.alphabet(), ctx.q(), level, *ctx.cap())
}

/// q-metric norm of `Op(∂_j^(q) P) − [ψ(P), r(h_j)]` on inputs of length `≤ L − deg P − 1`,
/// where both sides are exact.
pub fn commutator_check(p: &NCPoly, j: usize, ctx: &Ctx) -> Result<f64> {
    let deg = p.degree();
    if deg + 1 > ctx.level() {
        return Err(Error::DegreeOverflow {
            degree: deg,
            max: ctx.level().saturating_sub(1),
        });
    }
    let lhs = q_commutator(p, j, ctx, None)?.as_operator()?;
    let psi = p.operator(ctx)?;
    let r = operators::right_creation(j, ctx)?;
    let rhs = psi.commutator(&r)?;
    operators::restricted_op_norm(&lhs.sub(&rhs)?, ctx.level() - deg - 1)
}

/// `(1 ⊗ τ) ∂_j^(q) P`.
pub fn partial_tau(p: &NCPoly, j: usize, ctx: &Ctx) -> Result<GradedVector> {
    Ok(q_commutator(p, j, ctx, None)?.partial_trace_right())
}

/// `‖(1 ⊗ τ) ∂_j^(q) P − r(h_j)^* PΩ‖_q`.
pub fn partial_tau_residual(p: &NCPoly, j: usize, ctx: &Ctx) -> Result<f64> {
    let lhs = partial_tau(p, j, ctx)?;
    let rhs = operators::right_annihilation(j, ctx)?.apply(&p.vacuum_vector(ctx)?)?;
    lhs.sub(&rhs)?.norm_q()
}

/// Level-`n` vector of `∂̂_k ψ(ξ) Ω` in the doubled space, from the closed form
/// `∂̂_k ψ_w = Σ_{w_j = k} ψ_{w with w_j ↦ k'}`.
pub fn hat_vector(xi: &GradedVector, k: usize, dctx: &Ctx) -> Result<GradedVector> {
    let ctx = xi.ctx();
    let n = ctx.alphabet();
    if dctx.alphabet() != 2 * n || dctx.q() != ctx.q() {
        return Err(Error::ContextMismatch);
    }
    ctx.check_letter(k)?;
    let mut out = vec![ZERO; dctx.dim()];
    for (pos, c) in xi.coeffs().iter().enumerate() {
        if *c == ZERO {
            continue;
        }
        let (len, idx) = word::split_graded(pos, n);
        if len > dctx.level() {
            return Err(Error::LevelOutOfRange {
                level: len,
                max: dctx.level(),
            });
        }
        let w = word::word_from_index(idx, len, n);
        for jpos in 0..len {
            if w[jpos] == k {
                let mut v = w.clone();
                v[jpos] = k + n;
                out[word::graded_index(&v, 2 * n)] += c;
            }
        }
    }
    GradedVector::from_coeffs(dctx, out)
}

/// Both sides of `Σ_k ⟨∂̂_k ψ(ξ), ∂̂_k ψ(η)⟩_q = n δ_{nm} ⟨ξ, η⟩_q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumberReport {
    pub lhs: Complex64,
    pub rhs: Complex64,
    pub residual: f64,
}

pub fn number_check(xi: &GradedVector, eta: &GradedVector) -> Result<NumberReport> {
    xi.check_same(eta)?;
    let n = xi.homogeneous_level().ok_or(Error::NonHomogeneous)?;
    let m = eta.homogeneous_level().ok_or(Error::NonHomogeneous)?;
    let ctx = xi.ctx();
    let dctx = doubled_context(ctx, n.max(m))?;
    let mut lhs = ZERO;
    for k in 0..ctx.alphabet() {
        lhs += q_inner(&hat_vector(xi, k, &dctx)?, &hat_vector(eta, k, &dctx)?)?;
    }
    let rhs = if n == m { q_inner(xi, eta)? * n as f64 } else { ZERO };
    Ok(NumberReport {
        lhs,
        rhs,
        residual: (lhs - rhs).norm(),
    })
}

/// `∂_j^(q)*(T) = Σ T_{uv} [ψ_u X_j ψ_v − r(h_j)^*(ψ_u) ψ_v − ψ_u ℓ(h_j)^*(ψ_v)] Ω`.
pub fn dq_star(t: &HSElement, j: usize) -> Result<GradedVector> {
    let ctx = t.ctx();
    ctx.check_letter(j)?;
    let (na, q, l) = (ctx.alphabet(), ctx.q(), ctx.level());
    let d = ctx.dim();
    let table = ctx.wick_table()?;
    let wide = ctx.wide_wick_table()?;
    let rev = ctx.reversal();
    let coeffs = t.coeffs();
    let rows_t = Block::from_columns(na, l, &coeffs.transpose());
    let cols_t = Block::from_columns(na, l, coeffs);
    // Column u: X_j applied to row u of T, kept up to level L+1.
    let first = rows_t.gaussian_left(j, q, l + 1).to_matrix();
    // Column v: r(h_j)^* applied to column v of T.
    let second = cols_t.annihilate_right(j, q, l).to_matrix();
    // Column u: ℓ(h_j)^* applied to row u of T.
    let third = rows_t.annihilate_left(j, q, l).to_matrix();
    let mut out = vec![ZERO; d];
    let mut add = |m: &DMatrix<f64>, x: &[Complex64], sign: f64| {
        for c in 0..m.ncols() {
            if x[c] == ZERO {
                continue;
            }
            let xc = x[c] * sign;
            for (r, o) in out.iter_mut().enumerate() {
                let a = m[(r, c)];
                if a != 0.0 {
                    *o += xc * a;
                }
            }
        }
    };
    for u in 0..d {
        add(&wide.matrix(u), first.column(u).as_slice(), 1.0);
        add(&table.matrix(u), third.column(u).as_slice(), -1.0);
    }
    for v in 0..d {
        let m = table.matrix(rev[v]);
        let rm = DMatrix::from_fn(d, d, |r, c| m[(rev[r], rev[c])]);
        add(&rm, second.column(v).as_slice(), -1.0);
    }
    GradedVector::from_coeffs(ctx, out)
}

/// Conjugate-variable approximants `ξ_j(n) = ∂_j^(q)*(U_n)` for every `n ≤ n_terms` and `j`.
#[derive(Debug, Clone)]
pub struct ConjugateSeries {
    /// `vectors[n][j]`.
    pub vectors: Vec<Vec<GradedVector>>,
    /// `‖ξ_j(n)‖_q`, indexed `[n][j]`.
    pub norms: Vec<Vec<f64>>,
    /// `Σ_j ‖ξ_j(n)‖²`, the free Fisher information estimate.
    pub fisher: Vec<f64>,
    /// Residuals of the Neumann partial sums.
    pub residuals: Vec<f64>,
    pub rho_lt_1: bool,
    pub diverging: bool,
}

pub fn conjugate_series(ctx: &Ctx, n_terms: usize) -> Result<ConjugateSeries> {
    let series = deformation::xi_inverse_neumann(ctx, n_terms)?;
    let mut vectors = Vec::with_capacity(n_terms + 1);
    let mut norms = Vec::with_capacity(n_terms + 1);
    let mut fisher = Vec::with_capacity(n_terms + 1);
    for u in &series.partial_sums {
        let vs: Vec<GradedVector> = (0..ctx.alphabet()).map(|j| dq_star(u, j)).collect::<Result<_>>()?;
        let ns: Vec<f64> = vs.iter().map(|v| v.norm_q()).collect::<Result<_>>()?;
        fisher.push(ns.iter().map(|x| x * x).sum());
        norms.push(ns);
        vectors.push(vs);
    }
    Ok(ConjugateSeries {
        vectors,
        norms,
        fisher,
        residuals: series.residuals,
        rho_lt_1: series.rho_lt_1,
        diverging: series.diverging,
    })
}

/// Approximant of the `j`-th conjugate variable and its norm history.
#[derive(Debug, Clone)]
pub struct ConjugateVariable {
    pub vector: GradedVector,
    pub norms: Vec<f64>,
    pub rho_lt_1: bool,
    pub diverging: bool,
}

pub fn conjugate_variable(j: usize, n_terms: usize, ctx: &Ctx) -> Result<ConjugateVariable> {
    ctx.check_letter(j)?;
    let s = conjugate_series(ctx, n_terms)?;
    Ok(ConjugateVariable {
        vector: s.vectors[n_terms][j].clone(),
        norms: s.norms.iter().map(|v| v[j]).collect(),
        rho_lt_1: s.rho_lt_1,
        diverging: s.diverging,
    })
}

pub fn fisher_estimate(n_terms: usize, ctx: &Ctx) -> Result<f64> {
    Ok(*conjugate_series(ctx, n_terms)?.fisher.last().expect("n_terms + 1 entries"))
}

/// Norms of `∂_k ξ` for a conjugate-variable approximant `ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    pub l2_norm: f64,
    /// Doubled-space norm of left multiplication by `∂_k ξ`, a lower bound for its norm in
    /// `M ⊗̄ M^op`.
    pub lr_op_norm: f64,
}

/// `∂_k` of the polynomial `ψ(ξ)`.
pub fn lipschitz_of(xi: &GradedVector, k: usize) -> Result<LipschitzReport> {
    let t = fdq(&NCPoly::from_vector(xi), k, xi.ctx())?;
    Ok(LipschitzReport {
        l2_norm: hs_norm(&t)?,
        lr_op_norm: LrAction::new(&t, Side::Left)?.op_norm(),
    })
}

pub fn lipschitz_diagnostic(j: usize, k: usize, n_terms: usize, ctx: &Ctx) -> Result<LipschitzReport> {
    ctx.check_letter(k)?;
    let v = conjugate_variable(j, n_terms, ctx)?;
    lipschitz_of(&v.vector, k)
}

/// Norms of the four derivations in one direction and the sandwich inequalities between
/// them, evaluated with compressed norms of `Ξ_q^{±1/2}` and `Ξ_q^Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRow {
    pub k: usize,
    pub fdq: f64,
    /// `‖∂̃_k P‖`, from the quadratic form; `None` if the square root is unavailable.
    pub sqrt: Option<f64>,
    pub commutator: f64,
    pub truncated: f64,
    /// `‖∂̂_k P‖`.
    pub doubling: f64,
    /// `|‖∂̂_k P‖² − ‖∂̃_k P‖²|`.
    pub number_form_residual: f64,
    pub first_chain: bool,
    pub second_chain: bool,
    pub third_chain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub trunc: usize,
    pub xi_half_norm: f64,
    pub xi_inv_half_norm: f64,
    pub xi_trunc_norm: f64,
    pub xi_gap_norm: f64,
    pub sqrt_available: bool,
    pub rows: Vec<EquivalenceRow>,
}

impl EquivalenceReport {
    pub fn consistent(&self) -> bool {
        self.rows.iter().all(|r| r.first_chain && r.second_chain && r.third_chain)
    }
}

pub fn equivalence_check(p: &NCPoly, trunc: usize, ctx: &Ctx) -> Result<EquivalenceReport> {
    let l = ctx.level();
    if trunc > l {
        return Err(Error::LevelOutOfRange { level: trunc, max: l });
    }
    let xi = deformation::xi_as_hs(ctx, l)?;
    let xi_act = LrAction::new(&xi, Side::Left)?;
    let spec = xi_act.extremes()?;
    let sqrt_available = spec.min > 0.0;
    let xi_half_norm = spec.max.max(0.0).sqrt();
    let xi_inv_half_norm = if sqrt_available { 1.0 / spec.min.sqrt() } else { f64::INFINITY };
    let xi_q = deformation::xi_as_hs(ctx, trunc)?;
    let xi_trunc_norm = LrAction::new(&xi_q, Side::Left)?.op_norm();
    let xi_gap_norm = LrAction::new(&xi_q.sub(&xi)?, Side::Left)?.op_norm();
    let dctx = doubled_context(ctx, p.degree())?;
    let right = LrAction::new(&xi, Side::Right)?;
    let slack = |x: f64| x * (1.0 + 1e-9) + 1e-12;
    let mut rows = Vec::new();
    for k in 0..ctx.alphabet() {
        let f = fdq(p, k, ctx)?;
        let fdq_n = hs_norm(&f)?;
        let form = deformation::hs_inner(&f, &right.apply(&f)?)?.re;
        let sqrt = (sqrt_available && form >= 0.0).then(|| form.sqrt());
        let commutator = hs_norm(&q_commutator(p, k, ctx, None)?)?;
        let truncated = hs_norm(&q_commutator(p, k, ctx, Some(trunc))?)?;
        let doubling = doubling(p, k, &dctx)?.norm_q()?;
        let number_form_residual = (doubling * doubling - form).abs();
        let (first_chain, second_chain) = match sqrt {
            Some(s) => (
                commutator <= slack(xi_half_norm * s) && xi_half_norm * s <= slack(xi_half_norm * xi_half_norm * fdq_n),
                fdq_n <= slack(xi_inv_half_norm * s) && xi_inv_half_norm * s <= slack(xi_inv_half_norm.powi(2) * commutator),
            ),
            None => (false, false),
        };
        let lower = commutator * (1.0 - xi_gap_norm * xi_inv_half_norm.powi(2));
        let third_chain = lower <= slack(truncated) && truncated <= slack(xi_trunc_norm * fdq_n);
        rows.push(EquivalenceRow {
            k,
            fdq: fdq_n,
            sqrt,
            commutator,
            truncated,
            doubling,
            number_form_residual,
            first_chain,
            second_chain,
            third_chain,
        });
    }
    Ok(EquivalenceReport {
        trunc,
        xi_half_norm,
        xi_inv_half_norm,
        xi_trunc_norm,
        xi_gap_norm,
        sqrt_available,
        rows,
    })
}
