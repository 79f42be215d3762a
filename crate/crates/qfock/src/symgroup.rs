//! Symmetric-group combinatorics on word space.
//!
//! A permutation `π` acts on words by `π⁻¹(ζ_1⊗…⊗ζ_n) = ζ_{π(1)}⊗…⊗ζ_{π(n)}`, so
//! [`perm_action`] sends the basis word `w` to `(w_{π(1)}, …, w_{π(n)})`. With this
//! convention `A(π)A(σ) = A(σ∘π)`.

use nalgebra::DMatrix;

use crate::cap::SizeCap;
use crate::error::{Error, Result};
use crate::word::{level_dim, word_from_index};

/// Permutation of `{1..n}` stored by its images.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from 1-based images.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &x in &images {
            if x == 0 || x > n || seen[x - 1] {
                return Err(Error::InvalidPermutation(format!("{images:?} is not a bijection of 1..{n}")));
            }
            seen[x - 1] = true;
        }
        Ok(Permutation { images })
    }

    pub fn identity(n: usize) -> Self {
        Permutation {
            images: (1..=n).collect(),
        }
    }

    /// Transposition of `k` and `k+1` (1-based).
    pub fn adjacent_transposition(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(Error::InvalidPermutation(format!("no adjacent transposition ({k} {}) on {n} points", k + 1)));
        }
        let mut images: Vec<usize> = (1..=n).collect();
        images.swap(k - 1, k);
        Ok(Permutation { images })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// `π(k)` for 1-based `k`.
    pub fn apply(&self, k: usize) -> usize {
        self.images[k - 1]
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        assert_eq!(self.len(), other.len(), "composing permutations of different sizes");
        Permutation {
            images: other.images.iter().map(|&k| self.images[k - 1]).collect(),
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut images = vec![0; self.len()];
        for (i, &x) in self.images.iter().enumerate() {
            images[x - 1] = i + 1;
        }
        Permutation { images }
    }

    /// Every permutation of `{1..n}` in lexicographic order of images.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut cur: Vec<usize> = (1..=n).collect();
        let mut out = vec![Permutation { images: cur.clone() }];
        while next_permutation(&mut cur) {
            out.push(Permutation { images: cur.clone() });
        }
        out
    }
}

fn next_permutation(a: &mut [usize]) -> bool {
    if a.len() < 2 {
        return false;
    }
    let mut i = a.len() - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = a.len() - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

/// `#{(i, j) : i < j, π(i) > π(j)}`.
pub fn inversions(p: &Permutation) -> usize {
    let im = p.images();
    let mut count = 0;
    for i in 0..im.len() {
        for j in i + 1..im.len() {
            if im[i] > im[j] {
                count += 1;
            }
        }
    }
    count
}

/// The cycle `(k→l)`: `k+i ↦ k+i+1` for `0 ≤ i < l-k` and `l ↦ k`.
pub fn cycle_perm(k: usize, l: usize, n: usize) -> Result<Permutation> {
    if k == 0 || k > l || l > n {
        return Err(Error::InvalidCycle { k, l, n });
    }
    let mut images: Vec<usize> = (1..=n).collect();
    for x in k..l {
        images[x - 1] = x + 1;
    }
    images[l - 1] = k;
    Ok(Permutation { images })
}

/// Dense matrix on the words of one length, rows and columns in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct WordMatrix {
    pub n: usize,
    pub alphabet: usize,
    pub entries: DMatrix<f64>,
}

impl WordMatrix {
    pub fn identity(n: usize, alphabet: usize) -> Self {
        let d = level_dim(alphabet, n);
        WordMatrix {
            n,
            alphabet,
            entries: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn max_abs_diff(&self, other: &WordMatrix) -> f64 {
        (&self.entries - &other.entries).amax()
    }
}

/// Image index of every word under a permutation, i.e. the column→row map of [`perm_action`].
fn action_targets(p: &Permutation, alphabet: usize, digits: &[Vec<usize>]) -> Vec<usize> {
    let n = p.len();
    let im = p.images();
    digits
        .iter()
        .map(|w| (0..n).rev().fold(0, |acc, k| acc * alphabet + w[im[k] - 1]))
        .collect()
}

fn all_digits(n: usize, alphabet: usize) -> Vec<Vec<usize>> {
    (0..level_dim(alphabet, n)).map(|i| word_from_index(i, n, alphabet)).collect()
}

/// 0/1 matrix sending the basis word `w` to `(w_{π(1)}, …, w_{π(n)})`.
pub fn perm_action(p: &Permutation, alphabet: usize) -> WordMatrix {
    let n = p.len();
    let d = level_dim(alphabet, n);
    let targets = action_targets(p, alphabet, &all_digits(n, alphabet));
    let mut m = DMatrix::zeros(d, d);
    for (col, &row) in targets.iter().enumerate() {
        m[(row, col)] = 1.0;
    }
    WordMatrix {
        n,
        alphabet,
        entries: m,
    }
}

/// `P_q^(n) = Σ_{π ∈ S_n} q^{i(π)} π` summed over all `n!` permutations.
pub fn pq_direct(n: usize, alphabet: usize, q: f64, cap: &SizeCap) -> Result<WordMatrix> {
    if n > cap.max_perm_len {
        return Err(Error::Capacity {
            what: format!("permutation sum over S_{n}"),
            requested: n,
            cap: cap.max_perm_len,
        });
    }
    let d = alphabet
        .checked_pow(n as u32)
        .ok_or_else(|| Error::Capacity {
            what: format!("word space of length {n}"),
            requested: usize::MAX,
            cap: cap.max_dim,
        })?;
    cap.check_dim(&format!("word space of length {n}"), d)?;
    let digits = all_digits(n, alphabet);
    let mut m = DMatrix::zeros(d, d);
    for p in Permutation::all(n) {
        let c = q.powi(inversions(&p) as i32);
        for (col, row) in action_targets(&p, alphabet, &digits).into_iter().enumerate() {
            m[(row, col)] += c;
        }
    }
    Ok(WordMatrix {
        n,
        alphabet,
        entries: m,
    })
}

/// `M_n = Σ_{k=1}^n q^{k-1} (1→k)`.
pub fn mn_matrix(n: usize, alphabet: usize, q: f64) -> WordMatrix {
    let d = level_dim(alphabet, n);
    let mut m = DMatrix::zeros(d, d);
    if n == 0 {
        m[(0, 0)] = 1.0;
    }
    let digits = all_digits(n, alphabet);
    for k in 1..=n {
        let c = q.powi(k as i32 - 1);
        let p = cycle_perm(1, k, n).expect("valid cycle");
        for (col, row) in action_targets(&p, alphabet, &digits).into_iter().enumerate() {
            m[(row, col)] += c;
        }
    }
    WordMatrix {
        n,
        alphabet,
        entries: m,
    }
}

/// Lifts an operator on words of length `n-1` to length `n`, acting on positions `2..n`.
pub fn embed_tail(p: &WordMatrix) -> WordMatrix {
    let id = DMatrix::<f64>::identity(p.alphabet, p.alphabet);
    WordMatrix {
        n: p.n + 1,
        alphabet: p.alphabet,
        entries: p.entries.kronecker(&id),
    }
}

/// `P_q^(n)` from the inductive relation `P^(n) = π_{n-1,n}(P^(n-1)) M_n`.
///
/// With the word action being an anti-homomorphism, the group-algebra product
/// becomes the matrix product `M_n · embed(P^(n-1))`.
pub fn pq_recursive(n: usize, alphabet: usize, q: f64, cap: &SizeCap) -> Result<WordMatrix> {
    let d = alphabet.checked_pow(n as u32).unwrap_or(usize::MAX);
    cap.check_dim(&format!("word space of length {n}"), d)?;
    let mut p = WordMatrix::identity(0, alphabet);
    for m in 1..=n {
        let lifted = embed_tail(&p);
        p = WordMatrix {
            n: m,
            alphabet,
            entries: mn_matrix(m, alphabet, q).entries * lifted.entries,
        };
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseMethod {
    ProductFormula,
    DirectFallback,
}

#[derive(Debug, Clone)]
pub struct MnInverse {
    pub matrix: WordMatrix,
    /// `max |M_n · R − I|` for the product-formula result `R`.
    pub product_residual: f64,
    pub method: InverseMethod,
}

/// `(1 - x g)^{-1} = Σ_{k<m} x^k g^k / (1 - x^m)` for a permutation matrix `g` of order `m`.
fn geometric_inverse(g: &DMatrix<f64>, order: usize, x: f64) -> DMatrix<f64> {
    let d = g.nrows();
    let mut acc = DMatrix::<f64>::identity(d, d);
    let mut power = DMatrix::<f64>::identity(d, d);
    for k in 1..order {
        power = g * &power;
        acc += &power * x.powi(k as i32);
    }
    acc / (1.0 - x.powi(order as i32))
}

/// Product formula for `M_n^{-1}` in the reading
/// `Π_{j=n-1}^{1} (1 - q^j (1→j+1)) · Π_{j=n-2}^{0} (1 - q^{n-j} (2→n-j))^{-1}`
/// (group-algebra order, each factor of the second product inverted on its own).
pub fn mn_inverse_product(n: usize, alphabet: usize, q: f64) -> WordMatrix {
    let d = level_dim(alphabet, n);
    let mut r = DMatrix::<f64>::identity(d, d);
    // The word action reverses products, so group order F_{n-1}⋯F_1 G_{n-2}^{-1}⋯G_0^{-1}
    // becomes the matrix product G_0^{-1}⋯G_{n-2}^{-1} F_1⋯F_{n-1}.
    for j in 0..n.saturating_sub(1) {
        let top = n - j;
        let g = perm_action(&cycle_perm(2, top, n).expect("valid cycle"), alphabet).entries;
        r *= geometric_inverse(&g, top - 1, q.powi(top as i32));
    }
    for j in 1..n {
        let f = perm_action(&cycle_perm(1, j + 1, n).expect("valid cycle"), alphabet).entries;
        r *= DMatrix::<f64>::identity(d, d) - f * q.powi(j as i32);
    }
    WordMatrix {
        n,
        alphabet,
        entries: r,
    }
}

/// Inverse of `M_n`, from the product formula when it checks out against `M_n`, otherwise
/// from a direct LU solve.
pub fn mn_inverse(n: usize, alphabet: usize, q: f64) -> Result<MnInverse> {
    if !(q > -1.0 && q < 1.0) {
        return Err(Error::QOutOfRange(q));
    }
    let m = mn_matrix(n, alphabet, q);
    let r = mn_inverse_product(n, alphabet, q);
    let d = m.dim();
    let residual = (&m.entries * &r.entries - DMatrix::<f64>::identity(d, d)).amax();
    if residual <= 1e-8 {
        return Ok(MnInverse {
            matrix: r,
            product_residual: residual,
            method: InverseMethod::ProductFormula,
        });
    }
    let inv = m
        .entries
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Invalid(format!("M_{n} is singular at q = {q}")))?;
    Ok(MnInverse {
        matrix: WordMatrix {
            n,
            alphabet,
            entries: inv,
        },
        product_residual: residual,
        method: InverseMethod::DirectFallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::word::word_index;
    use proptest::prelude::*;

    const Q_GRID: [f64; 7] = [-0.9, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9];

    #[test]
    fn inversion_examples() {
        assert_eq!(inversions(&Permutation::identity(4)), 0);
        assert_eq!(inversions(&Permutation::new(vec![3, 2, 1]).unwrap()), 3);
        assert_eq!(inversions(&Permutation::new(vec![2, 1, 3]).unwrap()), 1);
        assert!(Permutation::new(vec![1, 1, 3]).is_err());
        assert!(Permutation::new(vec![0, 1]).is_err());
    }

    #[test]
    fn cycle_examples() {
        assert_eq!(cycle_perm(1, 1, 3).unwrap(), Permutation::identity(3));
        assert_eq!(cycle_perm(1, 3, 3).unwrap().images(), &[2, 3, 1]);
        assert_eq!(cycle_perm(2, 3, 4).unwrap().images(), &[1, 3, 2, 4]);
        assert!(cycle_perm(3, 2, 4).is_err());
        assert!(cycle_perm(1, 5, 4).is_err());
    }

    #[test]
    fn perm_action_examples() {
        let id = perm_action(&Permutation::identity(3), 2);
        assert_eq!(id.entries, DMatrix::identity(8, 8));
        let swap = perm_action(&Permutation::new(vec![2, 1]).unwrap(), 2);
        let from = word_index(&[0, 1], 2);
        let to = word_index(&[1, 0], 2);
        assert_eq!(swap.entries[(to, from)], 1.0);
        let p = Permutation::new(vec![3, 1, 4, 2]).unwrap();
        let a = perm_action(&p, 2).entries;
        assert!((a.transpose() * &a - DMatrix::identity(16, 16)).amax() == 0.0);
    }

    #[test]
    fn action_is_anti_homomorphism() {
        let p = Permutation::new(vec![2, 3, 1, 4]).unwrap();
        let s = Permutation::new(vec![4, 1, 3, 2]).unwrap();
        let lhs = perm_action(&p, 2).entries * perm_action(&s, 2).entries;
        let rhs = perm_action(&s.compose(&p), 2).entries;
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn pq_direct_examples() {
        let cap = SizeCap::default();
        let q = 0.37;
        assert_eq!(pq_direct(1, 3, q, &cap).unwrap().entries, DMatrix::identity(3, 3));
        let p = pq_direct(2, 1, q, &cap).unwrap();
        assert!((p.entries[(0, 0)] - (1.0 + q)).abs() < 1e-15);
        let p = pq_direct(2, 2, q, &cap).unwrap();
        let a = word_index(&[0, 1], 2);
        let b = word_index(&[1, 0], 2);
        assert!((p.entries[(a, b)] - q).abs() < 1e-15);
        assert!(matches!(pq_direct(9, 2, q, &cap), Err(Error::Capacity { .. })));
        assert!(matches!(pq_direct(8, 3, q, &cap), Err(Error::Capacity { .. })));
    }

    #[test]
    fn mn_examples() {
        let q = -0.42;
        assert_eq!(mn_matrix(1, 2, q).entries, DMatrix::identity(2, 2));
        let swap = perm_action(&Permutation::new(vec![2, 1]).unwrap(), 2).entries;
        let m2 = mn_matrix(2, 2, q).entries;
        assert!((m2 - (DMatrix::identity(4, 4) + &swap * q)).amax() < 1e-15);
        let m3 = mn_matrix(3, 1, q).entries;
        assert!((m3[(0, 0)] - (1.0 + q + q * q)).abs() < 1e-15);
    }

    #[test]
    fn recursion_matches_direct_sum() {
        let cap = SizeCap::default();
        for &q in &Q_GRID {
            for alphabet in 1..=2 {
                for n in 0..=6 {
                    let d = pq_direct(n, alphabet, q, &cap).unwrap();
                    let r = pq_recursive(n, alphabet, q, &cap).unwrap();
                    assert!(d.max_abs_diff(&r) < 1e-12, "n={n} N={alphabet} q={q}");
                }
            }
        }
    }

    #[test]
    fn pq_symmetric_psd() {
        let cap = SizeCap::default();
        for &q in &Q_GRID {
            for n in 1..=4 {
                let p = pq_direct(n, 2, q, &cap).unwrap().entries;
                assert!((&p - p.transpose()).amax() < 1e-14);
                let min = p.symmetric_eigenvalues().min();
                assert!(min > -1e-12, "q={q} n={n} min={min}");
            }
        }
    }

    #[test]
    fn mn_inverse_examples() {
        let q = 0.3;
        let inv = mn_inverse(2, 1, q).unwrap();
        assert!((inv.matrix.entries[(0, 0)] - 1.0 / (1.0 + q)).abs() < 1e-15);
        let swap = perm_action(&Permutation::new(vec![2, 1]).unwrap(), 3).entries;
        let expected = (DMatrix::identity(9, 9) - swap * q) / (1.0 - q * q);
        let inv = mn_inverse(2, 3, q).unwrap();
        assert!((inv.matrix.entries - expected).amax() < 1e-14);
        assert!(mn_inverse(2, 2, 1.0).is_err());
    }

    #[test]
    fn product_formula_is_the_inverse() {
        for &q in &Q_GRID {
            for alphabet in 1..=2 {
                for n in 1..=6 {
                    let inv = mn_inverse(n, alphabet, q).unwrap();
                    assert_eq!(inv.method, InverseMethod::ProductFormula);
                    let m = mn_matrix(n, alphabet, q).entries;
                    let d = m.nrows();
                    assert!((m * inv.matrix.entries - DMatrix::identity(d, d)).amax() < 1e-10);
                }
            }
        }
    }

    fn perm_strategy() -> impl Strategy<Value = Permutation> {
        (2usize..8)
            .prop_flat_map(|n| Just((1..=n).collect::<Vec<_>>()).prop_shuffle())
            .prop_map(|v| Permutation::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn adjacent_transposition_changes_inversions_by_one(p in perm_strategy(), k in 1usize..7) {
            let n = p.len();
            let k = 1 + (k - 1) % (n - 1);
            let t = Permutation::adjacent_transposition(n, k).unwrap();
            let a = inversions(&p) as i64;
            let b = inversions(&p.compose(&t)) as i64;
            prop_assert_eq!((a - b).abs(), 1);
        }

        #[test]
        fn inverse_has_same_inversions(p in perm_strategy()) {
            prop_assert_eq!(inversions(&p), inversions(&p.inverse()));
            prop_assert_eq!(p.compose(&p.inverse()), Permutation::identity(p.len()));
        }
    }
}
