//! The truncated q-Fock space: contexts, graded vectors, the q-inner product and Gram data.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::cap::SizeCap;
use crate::error::{Error, Result};
use crate::symgroup::{pq_direct, pq_recursive, WordMatrix};
use crate::wick::WickTable;
use crate::word::{self, level_dim, offset};

const MIN_GRAM_EIG: f64 = 1e-12;

/// Gram matrix of one level together with its inverse square root.
#[derive(Debug, Clone)]
pub struct GramBlock {
    pub n: usize,
    /// `Γ_n`, the matrix of q-inner products between words of length `n`.
    pub gamma: WordMatrix,
    /// `B_n = Γ_n^{-1/2}`.
    pub b: WordMatrix,
    /// `Γ_n^{1/2}`.
    pub sqrt: DMatrix<f64>,
    /// `Γ_n^{-1}`.
    pub inverse: DMatrix<f64>,
    pub min_eig: f64,
}

impl GramBlock {
    fn from_gamma(gamma: WordMatrix) -> Result<Self> {
        let n = gamma.n;
        let eig = gamma.entries.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if min_eig <= MIN_GRAM_EIG {
            return Err(Error::DegenerateMetric { level: n, min_eig });
        }
        let v = &eig.eigenvectors;
        let spectral = |f: &dyn Fn(f64) -> f64| {
            let scaled = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&x| f(x)));
            let mut vs = v.clone();
            for (j, mut col) in vs.column_iter_mut().enumerate() {
                col *= scaled[j];
            }
            let m = &vs * v.transpose();
            (&m + m.transpose()) * 0.5
        };
        let b = spectral(&|x| 1.0 / x.sqrt());
        let sqrt = spectral(&|x| x.sqrt());
        let inverse = spectral(&|x| 1.0 / x);
        Ok(GramBlock {
            n,
            b: WordMatrix {
                n,
                alphabet: gamma.alphabet,
                entries: b,
            },
            gamma,
            sqrt,
            inverse,
            min_eig,
        })
    }
}

/// Block-diagonal metric data on the whole truncated space.
#[derive(Debug, Clone)]
pub struct Metric {
    /// `G = ⊕ Γ_n`.
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub g_sqrt: DMatrix<f64>,
    pub g_inv_sqrt: DMatrix<f64>,
}

/// Parameters `(N, q, L)` of a truncated q-Fock space plus lazily built caches.
///
/// Caches are write-once: concurrent readers see either nothing or the final value.
#[derive(Debug)]
pub struct FockContext {
    alphabet: usize,
    q: f64,
    level: usize,
    cap: SizeCap,
    dim: usize,
    grams: Vec<OnceLock<Result<Arc<GramBlock>>>>,
    metric: OnceLock<Result<Arc<Metric>>>,
    reversal: Vec<usize>,
    table: OnceLock<Result<Arc<WickTable>>>,
    wide_table: OnceLock<Result<Arc<WickTable>>>,
}

pub type Ctx = Arc<FockContext>;

/// Builds a context with caps from the environment.
pub fn make_context(alphabet: usize, q: f64, level: usize) -> Result<Ctx> {
    FockContext::with_cap(alphabet, q, level, SizeCap::from_env()?)
}

impl FockContext {
    pub fn with_cap(alphabet: usize, q: f64, level: usize, cap: SizeCap) -> Result<Ctx> {
        if !(q > -1.0 && q < 1.0) {
            return Err(Error::QOutOfRange(q));
        }
        if alphabet == 0 {
            return Err(Error::ZeroAlphabet);
        }
        let dim = word::checked_total_dim(alphabet, level).unwrap_or(usize::MAX);
        cap.check_dim("truncated Fock space", dim)?;
        // Levels above `L` are kept reachable for exact compressions of derivations.
        let ext_levels = 2 * level + 2;
        Ok(Arc::new(FockContext {
            alphabet,
            q,
            level,
            cap,
            dim,
            grams: (0..=ext_levels).map(|_| OnceLock::new()).collect(),
            metric: OnceLock::new(),
            reversal: word::reversal_table(alphabet, level),
            table: OnceLock::new(),
            wide_table: OnceLock::new(),
        }))
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn cap(&self) -> &SizeCap {
        &self.cap
    }

    /// `Σ_{n ≤ L} N^n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn offset(&self, n: usize) -> usize {
        offset(self.alphabet, n)
    }

    pub fn level_dim(&self, n: usize) -> usize {
        level_dim(self.alphabet, n)
    }

    pub fn same_space(&self, other: &FockContext) -> bool {
        self.alphabet == other.alphabet && self.q == other.q && self.level == other.level
    }

    pub fn check_letter(&self, i: usize) -> Result<()> {
        if i >= self.alphabet {
            Err(Error::LetterOutOfRange {
                letter: i,
                alphabet: self.alphabet,
            })
        } else {
            Ok(())
        }
    }

    /// Graded position of the reversed word.
    pub fn reversal(&self) -> &[usize] {
        &self.reversal
    }

    /// Gram block of level `n ≤ L`, built from the permutation sum.
    pub fn gram(&self, n: usize) -> Result<Arc<GramBlock>> {
        if n > self.level {
            return Err(Error::LevelOutOfRange {
                level: n,
                max: self.level,
            });
        }
        self.gram_any(n)
    }

    /// Gram block of any level up to `2L+1`. Levels beyond the permutation-sum cap use
    /// the inductive relation instead.
    pub(crate) fn gram_any(&self, n: usize) -> Result<Arc<GramBlock>> {
        let slot = self.grams.get(n).ok_or(Error::LevelOutOfRange {
            level: n,
            max: self.grams.len() - 1,
        })?;
        slot.get_or_init(|| {
            let gamma = if n <= self.cap.max_perm_len {
                pq_direct(n, self.alphabet, self.q, &self.cap)?
            } else {
                pq_recursive(n, self.alphabet, self.q, &self.cap)?
            };
            GramBlock::from_gamma(gamma).map(Arc::new)
        })
        .clone()
    }

    pub fn metric(&self) -> Result<Arc<Metric>> {
        self.metric
            .get_or_init(|| {
                let d = self.dim;
                let mut m = Metric {
                    g: DMatrix::zeros(d, d),
                    g_inv: DMatrix::zeros(d, d),
                    g_sqrt: DMatrix::zeros(d, d),
                    g_inv_sqrt: DMatrix::zeros(d, d),
                };
                for n in 0..=self.level {
                    let gb = self.gram(n)?;
                    let (o, k) = (self.offset(n), self.level_dim(n));
                    m.g.view_mut((o, o), (k, k)).copy_from(&gb.gamma.entries);
                    m.g_inv.view_mut((o, o), (k, k)).copy_from(&gb.inverse);
                    m.g_sqrt.view_mut((o, o), (k, k)).copy_from(&gb.sqrt);
                    m.g_inv_sqrt.view_mut((o, o), (k, k)).copy_from(&gb.b.entries);
                }
                Ok(Arc::new(m))
            })
            .clone()
    }

    /// Exact compressions `P_{≤L} ψ_w P_{≤L}` of every Wick word with `|w| ≤ L`.
    pub fn wick_table(&self) -> Result<Arc<WickTable>> {
        self.table
            .get_or_init(|| WickTable::build(self.alphabet, self.q, self.level, self.level, self.level, &self.cap).map(Arc::new))
            .clone()
    }

    /// Exact compressions `P_{≤L} ψ_w P_{≤L+1}` of every Wick word with `|w| ≤ L`.
    pub fn wide_wick_table(&self) -> Result<Arc<WickTable>> {
        self.wide_table
            .get_or_init(|| {
                WickTable::build(self.alphabet, self.q, self.level, self.level + 1, self.level, &self.cap).map(Arc::new)
            })
            .clone()
    }

    pub fn orthonormal_vectors(self: &Arc<Self>, n: usize) -> Result<Vec<GradedVector>> {
        orthonormal_vectors(n, self)
    }
}

/// Element of the truncated Fock space in word coordinates.
#[derive(Debug, Clone)]
pub struct GradedVector {
    ctx: Ctx,
    coeffs: Vec<Complex64>,
}

impl GradedVector {
    pub fn zeros(ctx: &Ctx) -> Self {
        GradedVector {
            ctx: ctx.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); ctx.dim()],
        }
    }

    pub fn vacuum(ctx: &Ctx) -> Self {
        let mut v = Self::zeros(ctx);
        v.coeffs[0] = Complex64::new(1.0, 0.0);
        v
    }

    /// Basis vector of a word (letters in `0..N`).
    pub fn basis(ctx: &Ctx, w: &[usize]) -> Result<Self> {
        if w.len() > ctx.level() {
            return Err(Error::LevelOutOfRange {
                level: w.len(),
                max: ctx.level(),
            });
        }
        for &c in w {
            ctx.check_letter(c)?;
        }
        let mut v = Self::zeros(ctx);
        v.coeffs[word::graded_index(w, ctx.alphabet())] = Complex64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn from_coeffs(ctx: &Ctx, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != ctx.dim() {
            return Err(Error::Invalid(format!(
                "expected {} coefficients, got {}",
                ctx.dim(),
                coeffs.len()
            )));
        }
        Ok(GradedVector {
            ctx: ctx.clone(),
            coeffs,
        })
    }

    pub fn from_real(ctx: &Ctx, coeffs: &[f64]) -> Result<Self> {
        Self::from_coeffs(ctx, coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Vector supported on level `n` with the given coefficients.
    pub fn from_level(ctx: &Ctx, n: usize, values: &[Complex64]) -> Result<Self> {
        if n > ctx.level() {
            return Err(Error::LevelOutOfRange {
                level: n,
                max: ctx.level(),
            });
        }
        if values.len() != ctx.level_dim(n) {
            return Err(Error::Invalid(format!(
                "level {n} has {} words, got {} values",
                ctx.level_dim(n),
                values.len()
            )));
        }
        let mut v = Self::zeros(ctx);
        let o = ctx.offset(n);
        v.coeffs[o..o + values.len()].copy_from_slice(values);
        Ok(v)
    }

    pub fn ctx(&self) -> &Ctx {
        &self.ctx
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn level(&self, n: usize) -> &[Complex64] {
        let o = self.ctx.offset(n);
        &self.coeffs[o..o + self.ctx.level_dim(n)]
    }

    pub fn coeff(&self, w: &[usize]) -> Complex64 {
        self.coeffs[word::graded_index(w, self.ctx.alphabet())]
    }

    /// The single level carrying nonzero coefficients, if there is exactly one.
    /// The zero vector counts as homogeneous of level 0.
    pub fn homogeneous_level(&self) -> Option<usize> {
        let mut found = None;
        for n in 0..=self.ctx.level() {
            if self.level(n).iter().any(|c| c.norm() != 0.0) {
                if found.is_some() {
                    return None;
                }
                found = Some(n);
            }
        }
        Some(found.unwrap_or(0))
    }

    pub fn is_real(&self, tol: f64) -> bool {
        self.coeffs.iter().all(|c| c.im.abs() <= tol)
    }

    pub fn re(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.im).collect()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        GradedVector {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().map(|&c| c * s).collect(),
        }
    }

    pub fn add(&self, other: &GradedVector) -> Result<Self> {
        self.check_same(other)?;
        Ok(GradedVector {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &GradedVector) -> Result<Self> {
        self.check_same(other)?;
        Ok(GradedVector {
            ctx: self.ctx.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    /// The Tomita conjugation `J`: reverse every word and conjugate coefficients.
    pub fn conjugate(&self) -> Self {
        let mut out = vec![Complex64::new(0.0, 0.0); self.coeffs.len()];
        for (i, &r) in self.ctx.reversal().iter().enumerate() {
            out[r] = self.coeffs[i].conj();
        }
        GradedVector {
            ctx: self.ctx.clone(),
            coeffs: out,
        }
    }

    pub fn norm_q(&self) -> Result<f64> {
        Ok(q_inner(self, self)?.re.max(0.0).sqrt())
    }

    /// Largest coefficient modulus, the plain sup-norm in word coordinates.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn check_same(&self, other: &GradedVector) -> Result<()> {
        if self.ctx.same_space(&other.ctx) {
            Ok(())
        } else {
            Err(Error::ContextMismatch)
        }
    }
}

/// `⟨v, w⟩_q = Σ_n v_n^* Γ_n w_n`, conjugate-linear in `v`.
pub fn q_inner(v: &GradedVector, w: &GradedVector) -> Result<Complex64> {
    v.check_same(w)?;
    let ctx = v.ctx();
    let mut acc = Complex64::new(0.0, 0.0);
    for n in 0..=ctx.level() {
        let (a, b) = (v.level(n), w.level(n));
        if a.iter().all(|c| c.norm() == 0.0) || b.iter().all(|c| c.norm() == 0.0) {
            continue;
        }
        let g = ctx.gram(n)?;
        let gm = &g.gamma.entries;
        for (i, ai) in a.iter().enumerate() {
            if ai.norm() == 0.0 {
                continue;
            }
            let mut row = Complex64::new(0.0, 0.0);
            for (j, bj) in b.iter().enumerate() {
                row += bj * gm[(i, j)];
            }
            acc += ai.conj() * row;
        }
    }
    Ok(acc)
}

/// Gram block of level `n` in a context.
pub fn gram(n: usize, ctx: &Ctx) -> Result<Arc<GramBlock>> {
    ctx.gram(n)
}

/// The q-orthonormal vectors `p_i`, the columns of `B_n`.
pub fn orthonormal_vectors(n: usize, ctx: &Ctx) -> Result<Vec<GradedVector>> {
    let g = ctx.gram(n)?;
    let b = &g.b.entries;
    (0..b.ncols())
        .map(|j| {
            let col: Vec<Complex64> = b.column(j).iter().map(|&x| Complex64::new(x, 0.0)).collect();
            GradedVector::from_level(ctx, n, &col)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn context_examples() {
        assert_eq!(make_context(2, 0.0, 4).unwrap().dim(), 31);
        assert_eq!(make_context(3, -0.2, 5).unwrap().dim(), 364);
        assert_eq!(make_context(2, 1.0, 4).unwrap_err(), Error::QOutOfRange(1.0));
        assert_eq!(make_context(0, 0.1, 4).unwrap_err(), Error::ZeroAlphabet);
        let tight = SizeCap {
            max_dim: 100,
            ..SizeCap::default()
        };
        assert!(matches!(
            FockContext::with_cap(2, 0.1, 8, tight),
            Err(Error::Capacity { requested: 511, .. })
        ));
    }

    #[test]
    fn inner_product_examples() {
        let q = 0.3;
        let ctx = make_context(2, q, 3).unwrap();
        let ij = GradedVector::basis(&ctx, &[0, 1]).unwrap();
        let ji = GradedVector::basis(&ctx, &[1, 0]).unwrap();
        let ii = GradedVector::basis(&ctx, &[0, 0]).unwrap();
        assert!((q_inner(&ij, &ji).unwrap() - c(q)).norm() < 1e-15);
        assert!((q_inner(&ii, &ii).unwrap() - c(1.0 + q)).norm() < 1e-15);
        let om = GradedVector::vacuum(&ctx);
        assert_eq!(q_inner(&om, &om).unwrap(), c(1.0));
        let other = make_context(2, 0.2, 3).unwrap();
        assert_eq!(q_inner(&om, &GradedVector::vacuum(&other)).unwrap_err(), Error::ContextMismatch);
    }

    #[test]
    fn gram_examples() {
        let q = -0.35;
        let ctx = make_context(2, q, 5).unwrap();
        assert_eq!(ctx.gram(1).unwrap().gamma.entries, DMatrix::identity(2, 2));
        let g2 = ctx.gram(2).unwrap();
        let (a, b) = (word::word_index(&[0, 1], 2), word::word_index(&[1, 0], 2));
        assert!((g2.gamma.entries[(a, b)] - q).abs() < 1e-15);
        assert!((g2.gamma.entries[(0, 0)] - (1.0 + q)).abs() < 1e-15);
        assert!(ctx.gram(6).is_err());
        for alphabet in 1..=3 {
            let ctx = make_context(alphabet, 0.7, 5).unwrap();
            for n in 0..=5 {
                let g = ctx.gram(n).unwrap();
                let k = g.gamma.dim();
                let r = &g.b.entries * &g.gamma.entries * &g.b.entries - DMatrix::identity(k, k);
                assert!(r.amax() < 1e-9);
            }
        }
    }

    #[test]
    fn positive_definite_on_grid() {
        for &q in &[-0.9, -0.5, 0.0, 0.5, 0.9] {
            for alphabet in 1..=3 {
                let ctx = make_context(alphabet, q, 5).unwrap();
                for n in 0..=5 {
                    assert!(ctx.gram(n).unwrap().min_eig > 0.0);
                }
            }
        }
    }

    #[test]
    fn orthonormal_examples() {
        let ctx = make_context(2, 0.0, 2).unwrap();
        let ps = orthonormal_vectors(2, &ctx).unwrap();
        for (i, p) in ps.iter().enumerate() {
            let e = GradedVector::basis(&ctx, &word::word_from_index(i, 2, 2)).unwrap();
            assert!(p.sub(&e).unwrap().max_abs() < 1e-15);
        }
        let q = 0.4;
        let ctx = make_context(1, q, 2).unwrap();
        let ps = orthonormal_vectors(2, &ctx).unwrap();
        assert_eq!(ps.len(), 1);
        assert!((ps[0].coeff(&[0, 0]) - c((1.0 + q).powf(-0.5))).norm() < 1e-15);
        let ctx = make_context(3, -0.6, 4).unwrap();
        for n in 0..=4 {
            let ps = orthonormal_vectors(n, &ctx).unwrap();
            for (i, a) in ps.iter().enumerate() {
                for (j, b) in ps.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((q_inner(a, b).unwrap() - c(want)).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn extended_levels_use_recursion() {
        let ctx = make_context(1, 0.5, 5).unwrap();
        let g = ctx.gram_any(9).unwrap();
        let direct: f64 = (1..=9).map(|m| (1.0 - 0.5f64.powi(m)) / 0.5).product();
        assert!((g.gamma.entries[(0, 0)] - direct).abs() < 1e-9);
    }

    fn random_vector(ctx: &Ctx, seed: &[f64]) -> GradedVector {
        let coeffs = (0..ctx.dim())
            .map(|i| Complex64::new(seed[(2 * i) % seed.len()], seed[(2 * i + 1) % seed.len()]))
            .collect();
        GradedVector::from_coeffs(ctx, coeffs).unwrap()
    }

    proptest! {
        #[test]
        fn hermitian_and_sesquilinear(
            q in -0.9f64..0.9,
            a in proptest::collection::vec(-1.0f64..1.0, 31),
            b in proptest::collection::vec(-1.0f64..1.0, 29),
            s in -2.0f64..2.0,
            t in -2.0f64..2.0,
        ) {
            let ctx = make_context(2, q, 3).unwrap();
            let v = random_vector(&ctx, &a);
            let w = random_vector(&ctx, &b);
            let vw = q_inner(&v, &w).unwrap();
            let wv = q_inner(&w, &v).unwrap();
            prop_assert!((vw - wv.conj()).norm() < 1e-12);
            let z = Complex64::new(s, t);
            let lhs = q_inner(&v.scale(z), &w).unwrap();
            prop_assert!((lhs - z.conj() * vw).norm() < 1e-12);
            let rhs = q_inner(&v, &w.scale(z)).unwrap();
            prop_assert!((rhs - z * vw).norm() < 1e-12);
            prop_assert!(q_inner(&v, &v).unwrap().re >= 0.0);
        }

        #[test]
        fn levels_are_orthogonal(q in -0.9f64..0.9, n in 0usize..4, m in 0usize..4) {
            prop_assume!(n != m);
            let ctx = make_context(2, q, 3).unwrap();
            let v = GradedVector::from_level(&ctx, n, &vec![c(1.0); ctx.level_dim(n)]).unwrap();
            let w = GradedVector::from_level(&ctx, m, &vec![c(0.5); ctx.level_dim(m)]).unwrap();
            prop_assert_eq!(q_inner(&v, &w).unwrap(), c(0.0));
        }
    }
}
