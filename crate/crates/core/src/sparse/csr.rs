use std::cmp::Ordering;
use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Compressed sparse row matrix. Column indices are strictly increasing
/// within each row and no explicit zeros are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

/// Accumulates `(row, col, value)` triplets; duplicates are summed on build.
#[derive(Clone, Debug)]
pub struct TripletBuilder<T> {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: T) {
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn build(self) -> Result<SparseMatrix<T>> {
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, self.entries)
    }
}

impl<T: Scalar> SparseMatrix<T> {
    /// Canonical assembly: triplets are sorted by `(row, col, value)` before
    /// duplicates are summed, so any permutation of the input produces the
    /// same bits.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut entries: Vec<(usize, usize, T)>) -> Result<Self> {
        if let Some(&(r, c, _)) = entries.iter().find(|(r, c, _)| *r >= n_rows || *c >= n_cols) {
            return Err(Error::InvalidInput(format!(
                "triplet ({r}, {c}) outside a {n_rows} x {n_cols} matrix"
            )));
        }
        if entries.iter().any(|(_, _, v)| !v.is_finite()) {
            return Err(Error::NonFinite("matrix triplet".into()));
        }
        entries.sort_unstable_by(|a, b| {
            (a.0, a.1)
                .cmp(&(b.0, b.1))
                .then_with(|| a.2.partial_cmp(&b.2).unwrap_or(Ordering::Equal))
        });
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            i += 1;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v != T::zero() {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n_cols, "vector length must match column count");
        (0..self.n_rows)
            .map(|r| self.row(r).fold(T::zero(), |acc, (c, v)| acc + v * x[c]))
            .collect()
    }

    /// Largest absolute entry of each row.
    pub fn row_scales(&self) -> Vec<T> {
        (0..self.n_rows)
            .map(|r| self.row(r).fold(T::zero(), |acc, (_, v)| acc.max(v.abs())))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                let pos = next[c];
                next[c] += 1;
                col_idx[pos] = r;
                values[pos] = v;
            }
        }
        Self {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr: counts,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.n_cols]; self.n_rows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        out
    }

    /// MatrixMarket coordinate dump, entries sorted row-major, 1-based.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                writeln!(w, "{} {} {:.16e}", r + 1, c + 1, v.as_f64())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duplicates_summed_and_zeros_pruned() {
        let m = SparseMatrix::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 1, 2.0), (1, 2, 0.5), (0, 0, 1.0), (0, 0, -1.0)],
        )
        .unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 2), 1.5);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.row_ptr(), &[0, 1, 2]);
        assert!(SparseMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn transpose_and_mul() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![3.0, 3.0]);
        let t = m.transpose();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.get(2, 0), 2.0);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn matrix_market_dump() {
        let m = SparseMatrix::from_triplets(2, 2, vec![(1, 0, -1.0), (0, 0, 2.0)]).unwrap();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "%%MatrixMarket matrix coordinate real general");
        assert_eq!(lines[1], "2 2 2");
        assert_eq!(lines[2], "1 1 2.0000000000000000e0");
        assert_eq!(lines[3], "2 1 -1.0000000000000000e0");
    }

    proptest! {
        #[test]
        fn assembly_is_order_independent(
            entries in prop::collection::vec((0usize..6, 0usize..6, -10.0f64..10.0), 1..60),
            seed in any::<u64>(),
        ) {
            let a = SparseMatrix::from_triplets(6, 6, entries.clone()).unwrap();
            let mut shuffled = entries;
            // deterministic Fisher-Yates driven by the seed
            let mut state = seed | 1;
            for i in (1..shuffled.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                shuffled.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let b = SparseMatrix::from_triplets(6, 6, shuffled).unwrap();
            prop_assert_eq!(a.row_ptr(), b.row_ptr());
            prop_assert_eq!(a.col_idx(), b.col_idx());
            let bits_a: Vec<u64> = a.values().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits_a, bits_b);
            for r in 0..6 {
                let cols: Vec<usize> = a.row(r).map(|(c, _)| c).collect();
                prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(a.row(r).all(|(_, v)| v != 0.0));
            }
        }
    }
}
