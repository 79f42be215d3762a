//! Krylov routines for symmetric operators given only as matrix-vector products.
//!
//! All routines use full reorthogonalization and a fixed deterministic start vector, so
//! repeated runs give identical results.

use std::ops::SubAssign;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

const CHECK_EVERY: usize = 4;

/// Stopping rule for the Lanczos iterations.
#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub max_iter: usize,
    /// Relative residual at which an extreme Ritz value counts as converged. Ritz values
    /// are accurate to roughly the square of this.
    pub tol: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            max_iter: 400,
            tol: 1e-9,
        }
    }
}

/// Extreme eigenvalue estimates of a symmetric operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub min: f64,
    pub max: f64,
    pub iterations: usize,
}

struct Krylov {
    basis: Vec<DVector<f64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Krylov {
    fn tridiagonal(&self) -> DMatrix<f64> {
        let k = self.alpha.len();
        let mut t = DMatrix::zeros(k, k);
        for i in 0..k {
            t[(i, i)] = self.alpha[i];
            if i + 1 < k {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        t
    }
}

fn start_vector(dim: usize) -> DVector<f64> {
    // Deterministic and generic enough to overlap every eigenvector in practice.
    let v = DVector::from_fn(dim, |i, _| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.754_877_666).fract());
    let n = v.norm();
    v / n
}

/// Runs Lanczos from `start` until `done` reports convergence, the space is exhausted, or
/// `max_iter` steps are taken.
fn lanczos<F, D>(apply: &F, start: DVector<f64>, max_iter: usize, mut done: D) -> Krylov
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    D: FnMut(&Krylov) -> bool,
{
    let dim = start.len();
    let mut k = Krylov {
        basis: vec![start],
        alpha: Vec::new(),
        beta: Vec::new(),
    };
    let steps = max_iter.min(dim).max(1);
    for it in 0..steps {
        let v = &k.basis[it];
        let mut w = apply(v);
        let a = v.dot(&w);
        k.alpha.push(a);
        for _ in 0..2 {
            for b in &k.basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let nb = w.norm();
        let scale = k.alpha.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        // The Krylov space is invariant, so the Ritz data is exact.
        if nb <= 1e-13 * scale || it + 1 == dim {
            break;
        }
        k.beta.push(nb);
        if done(&k) {
            break;
        }
        k.basis.push(w / nb);
    }
    k.beta.truncate(k.alpha.len().saturating_sub(1));
    k
}

/// Smallest and largest eigenvalues of the symmetric operator `apply` on `R^dim`.
pub fn extremes<F>(dim: usize, apply: F, opts: LanczosOptions) -> Extremes
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    extremes_impl(dim, apply, opts, true)
}

fn extremes_impl<F>(dim: usize, apply: F, opts: LanczosOptions, need_min: bool) -> Extremes
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    extremes_from(dim, apply, opts, need_min, None).0
}

/// Also returns the Ritz vector of the largest eigenvalue.
fn extremes_from<F>(dim: usize, apply: F, opts: LanczosOptions, need_min: bool, start: Option<&DVector<f64>>) -> (Extremes, DVector<f64>)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if dim == 0 {
        let e = Extremes {
            min: 0.0,
            max: 0.0,
            iterations: 0,
        };
        return (e, DVector::zeros(0));
    }
    let converged = |k: &Krylov| {
        let m = k.alpha.len();
        if m < 4 || !m.is_multiple_of(CHECK_EVERY) {
            return false;
        }
        let last_beta = *k.beta.last().unwrap();
        let mut t = k.tridiagonal();
        t.resize_mut(m, m, 0.0);
        let eig = SymmetricEigen::new(t);
        let (imin, imax) = argminmax(&eig.eigenvalues);
        let scale = eig.eigenvalues[imin].abs().max(eig.eigenvalues[imax].abs()).max(1e-300);
        let res = |i: usize| (last_beta * eig.eigenvectors[(m - 1, i)]).abs();
        (!need_min || res(imin) <= opts.tol * scale) && res(imax) <= opts.tol * scale
    };
    let generic = start_vector(dim);
    let v0 = match start {
        // A little of the generic vector keeps every eigendirection reachable.
        Some(s) if s.len() == dim && s.norm() > 0.0 => {
            let v = s / s.norm() + &generic * 1e-3;
            let n = v.norm();
            v / n
        }
        _ => generic,
    };
    let k = lanczos(&apply, v0, opts.max_iter, converged);
    let eig = SymmetricEigen::new(k.tridiagonal());
    let (imin, imax) = argminmax(&eig.eigenvalues);
    let mut top = DVector::zeros(dim);
    for (i, b) in k.basis.iter().take(eig.eigenvalues.len()).enumerate() {
        top.axpy(eig.eigenvectors[(i, imax)], b, 1.0);
    }
    let e = Extremes {
        min: eig.eigenvalues[imin],
        max: eig.eigenvalues[imax],
        iterations: k.alpha.len(),
    };
    (e, top)
}

fn argminmax(v: &DVector<f64>) -> (usize, usize) {
    let mut imin = 0;
    let mut imax = 0;
    for i in 0..v.len() {
        if v[i] < v[imin] {
            imin = i;
        }
        if v[i] > v[imax] {
            imax = i;
        }
    }
    (imin, imax)
}

/// Largest singular value of `A` from products with `A` and `A^T`.
pub fn top_singular_value<F, G>(dim_in: usize, apply: F, apply_t: G, opts: LanczosOptions) -> f64
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    top_singular_pair(dim_in, apply, apply_t, opts, None).0
}

/// Largest singular value with its right singular vector, starting from `start` when given.
/// A good start (for example the vector of a nearby operator) cuts the iteration count.
pub fn top_singular_pair<F, G>(dim_in: usize, apply: F, apply_t: G, opts: LanczosOptions, start: Option<&DVector<f64>>) -> (f64, DVector<f64>)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let (e, v) = extremes_from(dim_in, |x| apply_t(&apply(x)), opts, false, start);
    (e.max.max(0.0).sqrt(), v)
}

/// Result of a Krylov evaluation of `f(A) b`.
#[derive(Debug, Clone)]
pub struct FunctionApply {
    pub value: DVector<f64>,
    /// Smallest Ritz value seen; negative values mean `A` is not positive on the Krylov space.
    pub min_ritz: f64,
    pub iterations: usize,
}

/// `A^{1/2} b` for symmetric positive semi-definite `A`. Iterates until successive
/// approximations agree to `opts.tol` relative to `‖b‖`.
pub fn sqrt_apply<F>(apply: F, b: &DVector<f64>, opts: LanczosOptions) -> FunctionApply
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let nb = b.norm();
    if nb == 0.0 {
        return FunctionApply {
            value: b.clone(),
            min_ritz: 0.0,
            iterations: 0,
        };
    }
    let coeffs = |t: DMatrix<f64>| -> (DVector<f64>, f64) {
        let eig = SymmetricEigen::new(t);
        let min = eig.eigenvalues.min();
        let v = &eig.eigenvectors;
        let f = DVector::from_fn(v.ncols(), |i, _| eig.eigenvalues[i].max(0.0).sqrt() * v[(0, i)]);
        (v * f, min)
    };
    let mut prev: Option<DVector<f64>> = None;
    let converged = |k: &Krylov| {
        let m = k.alpha.len();
        if !m.is_multiple_of(CHECK_EVERY) {
            return false;
        }
        let mut t = k.tridiagonal();
        t.resize_mut(m, m, 0.0);
        let (c, _) = coeffs(t);
        let out = match &prev {
            Some(p) => {
                let mut diff = c.clone();
                diff.rows_mut(0, p.len()).sub_assign(p);
                diff.norm() <= opts.tol
            }
            None => false,
        };
        prev = Some(c);
        out
    };
    let k = lanczos(&apply, b / nb, opts.max_iter, converged);
    let (c, min_ritz) = coeffs(k.tridiagonal());
    let mut value = DVector::zeros(b.len());
    for (i, q) in k.basis.iter().take(c.len()).enumerate() {
        value.axpy(c[i] * nb, q, 1.0);
    }
    FunctionApply {
        value,
        min_ritz,
        iterations: k.alpha.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) as f64).sin());
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    }

    #[test]
    fn extremes_match_dense() {
        let a = spd(60);
        let e = extremes(60, |x| &a * x, LanczosOptions::default());
        let dense = a.clone().symmetric_eigen().eigenvalues;
        assert!((e.max - dense.max()).abs() < 1e-9 * dense.max());
        assert!((e.min - dense.min()).abs() < 1e-9 * dense.max());
    }

    #[test]
    fn singular_value_matches_dense() {
        let a = DMatrix::from_fn(30, 30, |i, j| ((i + 2 * j) as f64).cos() / (1.0 + i as f64));
        let s = top_singular_value(30, |x| &a * x, |y| a.transpose() * y, LanczosOptions::default());
        assert!((s - a.singular_values().max()).abs() < 1e-9);
    }

    #[test]
    fn warm_start_finds_the_same_value() {
        let a = DMatrix::from_fn(50, 50, |i, j| ((i * 3 + j) as f64).sin() / (1.0 + (i + j) as f64));
        let opts = LanczosOptions::default();
        let (s, v) = top_singular_pair(50, |x| &a * x, |y| a.transpose() * y, opts, None);
        let b = &a * 1.01;
        let (s2, _) = top_singular_pair(50, |x| &b * x, |y| b.transpose() * y, opts, Some(&v));
        assert!((s2 - 1.01 * s).abs() < 1e-9);
        assert!((s - a.singular_values().max()).abs() < 1e-9);
    }

    #[test]
    fn sqrt_matches_dense() {
        let a = spd(40);
        let b = DVector::from_fn(40, |i, _| (i as f64).cos());
        let r = sqrt_apply(|x| &a * x, &b, LanczosOptions::default());
        let eig = a.clone().symmetric_eigen();
        let s = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
        assert!((r.value - s * &b).amax() < 1e-9);
        assert!(r.min_ritz > 0.0);
    }

    #[test]
    fn sqrt_flags_indefinite_operators() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -0.5, 2.0, 0.3]));
        let b = DVector::from_element(4, 1.0);
        assert!(sqrt_apply(|x| &a * x, &b, LanczosOptions::default()).min_ritz < 0.0);
    }
}
