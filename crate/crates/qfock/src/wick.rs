//! Row-oriented creation/annihilation kernels and exact compressions of Wick words.
//!
//! A [`Block`] stores a matrix whose rows are indexed by graded words up to some level
//! and whose columns are arbitrary. Left and right creation/annihilation act on rows only,
//! so a product of field operators applied to a set of column vectors is a sequence of row
//! sweeps. Cutting intermediate results at "final level + letters still to apply" keeps
//! every product an exact compression of the untruncated operator.

use std::ops::{AddAssign, Mul, SubAssign};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::cap::{self, SizeCap};
use crate::error::{Error, Result};
use crate::word::{self, delete_position, insert_position, level_dim, offset, total_dim};

pub trait Scalar: Copy + Default + AddAssign + SubAssign + Mul<f64, Output = Self> + Send + Sync + 'static {}

impl Scalar for f64 {}
impl Scalar for Complex64 {}

/// Row-major matrix with rows indexed by words of length `≤ max_level`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    alphabet: usize,
    max_level: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Block<T> {
    pub fn zeros(alphabet: usize, max_level: usize, cols: usize) -> Self {
        Block {
            alphabet,
            max_level,
            cols,
            data: vec![T::default(); total_dim(alphabet, max_level) * cols],
        }
    }

    /// Builds a block from a column-major matrix with `total_dim(alphabet, max_level)` rows.
    pub fn from_columns(alphabet: usize, max_level: usize, m: &DMatrix<T>) -> Self
    where
        T: nalgebra::Scalar,
    {
        assert_eq!(m.nrows(), total_dim(alphabet, max_level));
        let mut b = Self::zeros(alphabet, max_level, m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                b.data[r * b.cols + c] = m[(r, c)];
            }
        }
        b
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols.max(1)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Rows restricted (or zero-extended) to words of length `≤ level`.
    pub fn truncated(&self, level: usize) -> Self {
        let rows = total_dim(self.alphabet, level);
        let keep = rows.min(self.rows()) * self.cols;
        let mut data = Vec::with_capacity(rows * self.cols);
        data.extend_from_slice(&self.data[..keep]);
        data.resize(rows * self.cols, T::default());
        Block {
            alphabet: self.alphabet,
            max_level: level,
            cols: self.cols,
            data,
        }
    }

    /// `self += a * other` over the rows both blocks have.
    pub fn axpy(&mut self, a: f64, other: &Block<T>) {
        assert_eq!(self.cols, other.cols);
        let n = self.data.len().min(other.data.len());
        for (x, &y) in self.data[..n].iter_mut().zip(&other.data[..n]) {
            *x += y * a;
        }
    }

    fn add_row_scaled(&mut self, dst: usize, src: &Block<T>, src_row: usize, a: f64) {
        let c = self.cols;
        let s = &src.data[src_row * c..(src_row + 1) * c];
        let d = &mut self.data[dst * c..(dst + 1) * c];
        for (x, &y) in d.iter_mut().zip(s) {
            *x += y * a;
        }
    }

    /// Left creation `ℓ(h_i)`: prepend `i`.
    pub fn create_left(&self, i: usize, out_level: usize) -> Self {
        let mut out = Self::zeros(self.alphabet, out_level, self.cols);
        self.create_into(&mut out, i, true);
        out
    }

    /// Right creation `r(h_i)`: append `i`.
    pub fn create_right(&self, i: usize, out_level: usize) -> Self {
        let mut out = Self::zeros(self.alphabet, out_level, self.cols);
        self.create_into(&mut out, i, false);
        out
    }

    fn create_into(&self, out: &mut Block<T>, i: usize, left: bool) {
        let na = self.alphabet;
        let top = self.max_level.min(out.max_level.saturating_sub(1));
        if out.max_level == 0 {
            return;
        }
        for n in 0..=top {
            let (src_off, dst_off) = (offset(na, n), offset(na, n + 1));
            let shift = level_dim(na, n);
            for w in 0..level_dim(na, n) {
                let target = if left { i + na * w } else { w + i * shift };
                out.add_row_scaled(dst_off + target, self, src_off + w, 1.0);
            }
        }
    }

    /// Left annihilation `ℓ*(h_i) e_w = Σ_k q^{k-1} [w_k = i] e_{w∖k}`.
    pub fn annihilate_left(&self, i: usize, q: f64, out_level: usize) -> Self {
        let mut out = Self::zeros(self.alphabet, out_level, self.cols);
        self.annihilate_into(&mut out, i, q, true);
        out
    }

    /// Right annihilation `r*(h_i) e_w = Σ_k q^{|w|-k} [w_k = i] e_{w∖k}`.
    pub fn annihilate_right(&self, i: usize, q: f64, out_level: usize) -> Self {
        let mut out = Self::zeros(self.alphabet, out_level, self.cols);
        self.annihilate_into(&mut out, i, q, false);
        out
    }

    fn annihilate_into(&self, out: &mut Block<T>, i: usize, q: f64, left: bool) {
        let na = self.alphabet;
        if self.max_level == 0 {
            return;
        }
        let top = out.max_level.min(self.max_level - 1);
        for n in 0..=top {
            let (dst_off, src_off) = (offset(na, n), offset(na, n + 1));
            for k in 1..=n + 1 {
                let weight = if left { q.powi(k as i32 - 1) } else { q.powi((n + 1 - k) as i32) };
                if weight == 0.0 {
                    continue;
                }
                for u in 0..level_dim(na, n) {
                    let v = insert_position(u, k, i, na);
                    out.add_row_scaled(dst_off + u, self, src_off + v, weight);
                }
            }
        }
    }

    /// Left field operator `X_i = ℓ(h_i) + ℓ*(h_i)`.
    pub fn gaussian_left(&self, i: usize, q: f64, out_level: usize) -> Self {
        let mut out = Self::zeros(self.alphabet, out_level, self.cols);
        self.create_into(&mut out, i, true);
        self.annihilate_into(&mut out, i, q, true);
        out
    }

    /// Right field operator `r(h_i) + r*(h_i)`, i.e. right multiplication by `X_i`.
    pub fn gaussian_right(&self, i: usize, q: f64, out_level: usize) -> Self {
        let mut out = Self::zeros(self.alphabet, out_level, self.cols);
        self.create_into(&mut out, i, false);
        self.annihilate_into(&mut out, i, q, false);
        out
    }

    /// Rows in graded order as a column-major matrix.
    pub fn to_matrix(&self) -> DMatrix<T>
    where
        T: nalgebra::Scalar,
    {
        DMatrix::from_row_slice(self.rows(), self.cols, &self.data)
    }
}

impl Block<f64> {
    /// Identity on words of length `≤ level`.
    pub fn identity(alphabet: usize, level: usize) -> Self {
        let d = total_dim(alphabet, level);
        let mut b = Self::zeros(alphabet, level, d);
        for r in 0..d {
            b.row_mut(r)[r] = 1.0;
        }
        b
    }

    /// Columns are the basis words of length exactly `n`.
    pub fn level_basis(alphabet: usize, n: usize) -> Self {
        let k = level_dim(alphabet, n);
        let o = offset(alphabet, n);
        let mut b = Self::zeros(alphabet, n, k);
        for j in 0..k {
            b.row_mut(o + j)[j] = 1.0;
        }
        b
    }
}

/// `X_{l_1} ⋯ X_{l_k} · block`, exact on rows of length `≤ out_level`.
pub fn apply_left_monomial<T: Scalar>(block: &Block<T>, letters: &[usize], q: f64, out_level: usize) -> Block<T> {
    let mut cur = block.clone();
    for (s, &i) in letters.iter().enumerate().rev() {
        cur = cur.gaussian_left(i, q, out_level + s);
    }
    cur.truncated(out_level)
}

/// `block · X_{l_1} ⋯ X_{l_k}` (right multiplication), exact on rows of length `≤ out_level`.
pub fn apply_right_monomial<T: Scalar>(block: &Block<T>, letters: &[usize], q: f64, out_level: usize) -> Block<T> {
    let k = letters.len();
    let mut cur = block.clone();
    for (s, &i) in letters.iter().enumerate() {
        cur = cur.gaussian_right(i, q, out_level + (k - 1 - s));
    }
    cur.truncated(out_level)
}

/// Exact compressions `P_{≤out} ψ_w P_{≤in}` for every word `|w| ≤ word_level`.
#[derive(Debug, Clone)]
pub struct WickTable {
    alphabet: usize,
    word_level: usize,
    in_level: usize,
    out_level: usize,
    blocks: Vec<Block<f64>>,
}

impl WickTable {
    /// Runs the Wick recursion `ψ_{i·w} = X_i ψ_w − Σ_k q^{k-1} [w_k = i] ψ_{w∖k}` stage by
    /// stage. Words of length `m` are held with rows cut at `out + (K − m)` (never more than
    /// `in + m`, beyond which `ψ_w` has no entries), which is what the next two stages need.
    pub fn build(alphabet: usize, q: f64, word_level: usize, in_level: usize, out_level: usize, cap: &SizeCap) -> Result<Self> {
        let na = alphabet;
        let cols = word::checked_total_dim(na, in_level).unwrap_or(usize::MAX);
        let cut = |m: usize| (out_level + word_level - m).min(in_level + m);
        let widest = (0..=word_level).map(cut).max().unwrap_or(0);
        let rows = word::checked_total_dim(na, widest).unwrap_or(usize::MAX);
        cap.check_dim("Wick recursion working rows", rows)?;
        let words = word::checked_total_dim(na, word_level).unwrap_or(usize::MAX);
        let stored = words
            .checked_mul(total_dim(na, out_level))
            .and_then(|x| x.checked_mul(cols))
            .unwrap_or(usize::MAX);
        cap::check("Wick table entries", stored, cap.max_table_entries)?;
        let mut working = 0usize;
        for m in 0..=word_level {
            let w = level_dim(na, m).saturating_mul(total_dim(na, cut(m))).saturating_mul(cols);
            working = working.max(w);
        }
        cap::check("Wick recursion working entries", working, cap.max_table_entries)?;

        let mut blocks = Vec::with_capacity(words);
        let mut prev2: Vec<Block<f64>> = Vec::new();
        let mut prev1: Vec<Block<f64>> = vec![Block::identity(na, in_level).truncated(cut(0))];
        blocks.push(prev1[0].truncated(out_level));
        for m in 1..=word_level {
            let r = cut(m);
            let mut stage = Vec::with_capacity(level_dim(na, m));
            for idx in 0..level_dim(na, m) {
                let i = idx % na;
                let tail = idx / na;
                let mut b = prev1[tail].gaussian_left(i, q, r);
                for k in 1..m {
                    if (tail / level_dim(na, k - 1)) % na == i {
                        let shorter = &prev2[delete_position(tail, k, na)];
                        b.axpy(-q.powi(k as i32 - 1), shorter);
                    }
                }
                blocks.push(b.truncated(out_level));
                stage.push(b);
            }
            prev2 = std::mem::replace(&mut prev1, stage);
        }
        Ok(WickTable {
            alphabet,
            word_level,
            in_level,
            out_level,
            blocks,
        })
    }

    pub fn word_level(&self) -> usize {
        self.word_level
    }

    pub fn in_level(&self) -> usize {
        self.in_level
    }

    pub fn out_level(&self) -> usize {
        self.out_level
    }

    /// Block of the word at graded position `pos`.
    pub fn block(&self, pos: usize) -> &Block<f64> {
        &self.blocks[pos]
    }

    pub fn block_of(&self, w: &[usize]) -> Result<&Block<f64>> {
        if w.len() > self.word_level {
            return Err(Error::LevelOutOfRange {
                level: w.len(),
                max: self.word_level,
            });
        }
        Ok(&self.blocks[word::graded_index(w, self.alphabet)])
    }

    pub fn matrix(&self, pos: usize) -> DMatrix<f64> {
        self.blocks[pos].to_matrix()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}
