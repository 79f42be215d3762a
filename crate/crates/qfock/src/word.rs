//! Word indexing.
//!
//! A word `(w_1, ..., w_n)` over letters `0..N` is encoded base-N little-endian:
//! `index = sum_k w_k N^(k-1)`. The graded basis of the truncated Fock space lists
//! level 0 (the vacuum), then level 1, and so on, so a word of length `n` sits at
//! `offset(n) + index`.

/// `N^n`, the number of words of length `n`.
pub fn level_dim(alphabet: usize, n: usize) -> usize {
    alphabet.pow(n as u32)
}

/// Graded position of the first word of length `n`.
pub fn offset(alphabet: usize, n: usize) -> usize {
    (0..n).map(|m| level_dim(alphabet, m)).sum()
}

/// Dimension of the space spanned by words of length at most `level`, or `None` on overflow.
pub fn checked_total_dim(alphabet: usize, level: usize) -> Option<usize> {
    let mut total: usize = 0;
    let mut p: usize = 1;
    for m in 0..=level {
        total = total.checked_add(p)?;
        if m < level {
            p = p.checked_mul(alphabet)?;
        }
    }
    Some(total)
}

pub fn total_dim(alphabet: usize, level: usize) -> usize {
    checked_total_dim(alphabet, level).expect("dimension overflow")
}

pub fn word_index(word: &[usize], alphabet: usize) -> usize {
    word.iter().rev().fold(0, |acc, &c| acc * alphabet + c)
}

pub fn word_from_index(mut idx: usize, n: usize, alphabet: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(n);
    for _ in 0..n {
        w.push(idx % alphabet);
        idx /= alphabet;
    }
    w
}

/// Splits a graded position into `(level, index within level)`.
pub fn split_graded(pos: usize, alphabet: usize) -> (usize, usize) {
    let mut n = 0;
    let mut start = 0;
    loop {
        let d = level_dim(alphabet, n);
        if pos < start + d {
            return (n, pos - start);
        }
        start += d;
        n += 1;
    }
}

pub fn graded_index(word: &[usize], alphabet: usize) -> usize {
    offset(alphabet, word.len()) + word_index(word, alphabet)
}

/// Index of the word obtained by deleting position `k` (1-based) from a word of index `idx`.
pub fn delete_position(idx: usize, k: usize, alphabet: usize) -> usize {
    let low = level_dim(alphabet, k - 1);
    (idx % low) + (idx / (low * alphabet)) * low
}

/// Index of the word obtained by inserting `letter` so that it lands at position `k` (1-based).
pub fn insert_position(idx: usize, k: usize, letter: usize, alphabet: usize) -> usize {
    let low = level_dim(alphabet, k - 1);
    (idx % low) + low * (letter + alphabet * (idx / low))
}

/// Index of the reversed word.
pub fn reverse_index(mut idx: usize, n: usize, alphabet: usize) -> usize {
    let mut r = 0;
    for _ in 0..n {
        r = r * alphabet + idx % alphabet;
        idx /= alphabet;
    }
    r
}

/// Graded-position permutation implementing word reversal on all levels up to `level`.
pub fn reversal_table(alphabet: usize, level: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(total_dim(alphabet, level));
    for n in 0..=level {
        let off = offset(alphabet, n);
        for i in 0..level_dim(alphabet, n) {
            out.push(off + reverse_index(i, n, alphabet));
        }
    }
    out
}

/// All words of length at most `level`, in graded order.
pub fn all_words(alphabet: usize, level: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for n in 0..=level {
        for i in 0..level_dim(alphabet, n) {
            out.push(word_from_index(i, n, alphabet));
        }
    }
    out
}
