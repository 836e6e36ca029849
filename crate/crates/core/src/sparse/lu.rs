//! Left-looking sparse LU with partial pivoting (Gilbert-Peierls).
//!
//! Column `k` of `A` is solved against the `L` factored so far using a
//! depth-first reach to find the nonzero pattern, then the largest
//! remaining entry is taken as pivot. Complexity is proportional to the
//! flop count of the factorisation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

const NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct SparseLu<T> {
    n: usize,
    // L is unit lower triangular; the diagonal is stored first in each column.
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<T>,
    // U is upper triangular; the diagonal is stored last in each column.
    u_ptr: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<T>,
    /// `pinv[i]` = pivot step at which original row `i` was eliminated.
    pinv: Vec<usize>,
}

impl<T: Scalar> SparseLu<T> {
    pub fn factor(a: &SparseMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        if a.n_cols() != n {
            return Err(Error::InvalidInput(format!(
                "LU needs a square matrix, got {} x {}",
                n,
                a.n_cols()
            )));
        }
        let scales = a.row_scales();
        let csc = a.transpose();
        let pivot_floor = T::lit(1e-14);

        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx = Vec::with_capacity(4 * a.nnz());
        let mut l_val = Vec::with_capacity(4 * a.nnz());
        let mut u_ptr = Vec::with_capacity(n + 1);
        let mut u_idx = Vec::with_capacity(4 * a.nnz());
        let mut u_val = Vec::with_capacity(4 * a.nnz());
        let mut pinv = vec![NONE; n];

        let mut x = vec![T::zero(); n];
        let mut xi = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut pstack = vec![0usize; n];
        let mut mark = vec![NONE; n];

        for k in 0..n {
            l_ptr.push(l_idx.len());
            u_ptr.push(u_idx.len());

            // --- reach of column k in the graph of L ---
            let mut top = n;
            for (i, _) in csc.row(k) {
                if mark[i] != k {
                    top = dfs(i, k, top, &l_ptr, &l_idx, &pinv, &mut xi, &mut stack, &mut pstack, &mut mark);
                }
            }
            // --- sparse triangular solve x = L \ A(:, k) ---
            for &i in &xi[top..n] {
                x[i] = T::zero();
            }
            for (i, v) in csc.row(k) {
                x[i] = v;
            }
            for px in top..n {
                let j = xi[px];
                let col = pinv[j];
                if col == NONE {
                    continue;
                }
                let xj = x[j];
                // diagonal of L is 1 and stored first
                let end = if col + 1 < l_ptr.len() { l_ptr[col + 1] } else { l_idx.len() };
                for p in l_ptr[col] + 1..end {
                    x[l_idx[p]] -= l_val[p] * xj;
                }
            }
            // --- pivot selection ---
            let mut ipiv = NONE;
            let mut best = -T::one();
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    let t = x[i].abs();
                    if t > best {
                        best = t;
                        ipiv = i;
                    }
                } else {
                    u_idx.push(pinv[i]);
                    u_val.push(x[i]);
                }
            }
            if ipiv == NONE || best <= pivot_floor * scales[ipiv] || best == T::zero() {
                return Err(Error::SingularMatrix(format!(
                    "pivot {} at elimination step {k} of {n}",
                    best.max(T::zero())
                )));
            }
            let pivot = x[ipiv];
            u_idx.push(k);
            u_val.push(pivot);
            pinv[ipiv] = k;
            l_idx.push(ipiv);
            l_val.push(T::one());
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    l_idx.push(i);
                    l_val.push(x[i] / pivot);
                }
                x[i] = T::zero();
            }
        }
        l_ptr.push(l_idx.len());
        u_ptr.push(u_idx.len());
        for i in l_idx.iter_mut() {
            *i = pinv[*i];
        }
        Ok(Self {
            n,
            l_ptr,
            l_idx,
            l_val,
            u_ptr,
            u_idx,
            u_val,
            pinv,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Fill of the factors, `nnz(L) + nnz(U)`.
    pub fn nnz(&self) -> usize {
        self.l_idx.len() + self.u_idx.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        assert_eq!(b.len(), self.n, "right-hand side length must match the factor");
        let mut x = vec![T::zero(); self.n];
        for (i, &bi) in b.iter().enumerate() {
            x[self.pinv[i]] = bi;
        }
        for j in 0..self.n {
            let xj = x[j];
            if xj != T::zero() {
                for p in self.l_ptr[j] + 1..self.l_ptr[j + 1] {
                    x[self.l_idx[p]] -= self.l_val[p] * xj;
                }
            }
        }
        for j in (0..self.n).rev() {
            let last = self.u_ptr[j + 1] - 1;
            x[j] /= self.u_val[last];
            let xj = x[j];
            if xj != T::zero() {
                for p in self.u_ptr[j]..last {
                    x[self.u_idx[p]] -= self.u_val[p] * xj;
                }
            }
        }
        x
    }
}

/// Non-recursive depth-first search from row `start`; pushes finished
/// nodes onto `xi[..top]` in reverse topological order.
#[allow(clippy::too_many_arguments)]
fn dfs(
    start: usize,
    stamp: usize,
    mut top: usize,
    l_ptr: &[usize],
    l_idx: &[usize],
    pinv: &[usize],
    xi: &mut [usize],
    stack: &mut [usize],
    pstack: &mut [usize],
    mark: &mut [usize],
) -> usize {
    let mut head = 0usize;
    stack[0] = start;
    loop {
        let j = stack[head];
        let col = pinv[j];
        if mark[j] != stamp {
            mark[j] = stamp;
            pstack[head] = if col == NONE { 0 } else { l_ptr[col] };
        }
        let end = if col == NONE {
            0
        } else if col + 1 < l_ptr.len() {
            l_ptr[col + 1]
        } else {
            l_idx.len()
        };
        let mut done = true;
        let mut p = pstack[head];
        while p < end {
            let i = l_idx[p];
            p += 1;
            if mark[i] == stamp {
                continue;
            }
            pstack[head] = p;
            head += 1;
            stack[head] = i;
            done = false;
            break;
        }
        if done {
            top -= 1;
            xi[top] = j;
            if head == 0 {
                return top;
            }
            head -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    #[test]
    fn needs_pivoting() {
        // [[0, 1], [1, 0]]
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let lu = SparseLu::factor(&a).unwrap();
        assert_eq!(lu.solve(&[3.0, 4.0]), vec![4.0, 3.0]);
    }

    #[test]
    fn singular_detected() {
        let a = SparseMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 0, 1.0), (2, 2, 1.0)]).unwrap();
        assert!(matches!(SparseLu::factor(&a), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn small_dense_system() {
        let dense = [[4.0, -2.0, 1.0], [3.0, 6.0, -4.0], [2.0, 1.0, 8.0]];
        let mut t = Vec::new();
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                t.push((i, j, v));
            }
        }
        let a = SparseMatrix::from_triplets(3, 3, t).unwrap();
        let x_true = [1.0f64, -2.0, 0.5];
        let b = a.mul_vec(&x_true);
        let x = SparseLu::factor(&a).unwrap().solve(&b);
        for (xi, ti) in x.iter().zip(x_true) {
            assert!((xi - ti).abs() < 1e-14);
        }
    }
}
