//! Bit-packed linear algebra over GF(2).
//!
//! Rows are stored as little-endian runs of `u64` words (bit `c` of a row
//! lives in word `c / 64`, bit position `c % 64`), so row operations are
//! word-parallel XORs and rank computation is plain Gaussian elimination.

/// Dense binary matrix, row-major, 64 columns per word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words: usize, // words per row = ceil(cols / 64)
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64).max(1);
        BitMatrix { rows, cols, words, data: vec![0; rows * words] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.words + c / 64] >> (c % 64) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        debug_assert!(r < self.rows && c < self.cols);
        let w = &mut self.data[r * self.words + c / 64];
        if v {
            *w |= 1 << (c % 64);
        } else {
            *w &= !(1 << (c % 64));
        }
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words..(r + 1) * self.words]
    }

    /// dst ^= src (row XOR).
    pub fn xor_row(&mut self, dst: usize, src: usize) {
        debug_assert!(dst != src);
        let (a, b) = (dst * self.words, src * self.words);
        for k in 0..self.words {
            let v = self.data[b + k];
            self.data[a + k] ^= v;
        }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for k in 0..self.words {
            self.data.swap(a * self.words + k, b * self.words + k);
        }
    }

    pub fn row_is_zero(&self, r: usize) -> bool {
        self.row(r).iter().all(|&w| w == 0)
    }

    /// Rank over GF(2); the matrix is consumed into echelon form internally.
    pub fn rank(mut self) -> usize {
        self.echelonize()
    }

    /// In-place reduction to row echelon form (eliminating below pivots only).
    /// Returns the rank. Pivot columns are chosen left to right.
    pub fn echelonize(&mut self) -> usize {
        let mut rank = 0;
        for c in 0..self.cols {
            let Some(p) = (rank..self.rows).find(|&r| self.get(r, c)) else {
                continue;
            };
            self.swap_rows(rank, p);
            for r in rank + 1..self.rows {
                if self.get(r, c) {
                    self.xor_row(r, rank);
                }
            }
            rank += 1;
            if rank == self.rows {
                break;
            }
        }
        rank
    }
}

/// Rank of a binary matrix over GF(2).
pub fn rank_gf2(m: &BitMatrix) -> usize {
    m.clone().rank()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&[u8]]) -> BitMatrix {
        let mut m = BitMatrix::zeros(rows.len(), rows[0].len());
        for (r, row) in rows.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v != 0);
            }
        }
        m
    }

    #[test]
    fn rank_identity() {
        let mut m = BitMatrix::zeros(5, 5);
        for i in 0..5 {
            m.set(i, i, true);
        }
        assert_eq!(rank_gf2(&m), 5);
    }

    #[test]
    fn rank_zero_matrix() {
        assert_eq!(rank_gf2(&BitMatrix::zeros(4, 7)), 0);
    }

    #[test]
    fn duplicate_rows_counted_once() {
        let m = from_rows(&[&[1, 0, 1], &[1, 0, 1], &[0, 1, 1]]);
        assert_eq!(rank_gf2(&m), 2);
    }

    #[test]
    fn linear_combination_detected() {
        // row2 = row0 + row1
        let m = from_rows(&[&[1, 1, 0, 0], &[0, 1, 1, 0], &[1, 0, 1, 0]]);
        assert_eq!(rank_gf2(&m), 2);
    }

    #[test]
    fn wide_matrix_crosses_word_boundary() {
        // Two independent rows with support only in columns >= 64.
        let mut m = BitMatrix::zeros(2, 130);
        m.set(0, 70, true);
        m.set(1, 70, true);
        m.set(1, 129, true);
        assert_eq!(rank_gf2(&m), 2);
        m.set(1, 129, false);
        assert_eq!(rank_gf2(&m), 1);
    }

    #[test]
    fn get_set_roundtrip() {
        let mut m = BitMatrix::zeros(3, 100);
        m.set(2, 99, true);
        m.set(0, 0, true);
        assert!(m.get(2, 99) && m.get(0, 0) && !m.get(1, 50));
    }
}
