//! Dense linear algebra over GF(2).
//!
//! Vectors are row vectors packed into 64-bit words, bit `i` living in word
//! `i / 64` at position `i % 64`. Every operation keeps the bits past `len`
//! cleared, so word-level equality, hashing and popcounts are exact.
//! Matrices are stored as a list of packed rows and multiply on the right:
//! `v * A` is the XOR of the rows of `A` selected by the ones of `v`.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};
use std::str::FromStr;

use rand::Rng;

use crate::error::{check_len, Error, Result};

const WORD: usize = 64;

fn words_for(len: usize) -> usize {
    len.div_ceil(WORD)
}

/// Packed row vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: vec![0; words_for(len)],
            len,
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = BitVector {
            words: vec![u64::MAX; words_for(len)],
            len,
        };
        v.mask_tail();
        v
    }

    /// The `i`-th standard basis vector of length `len`.
    pub fn unit(len: usize, i: usize) -> Self {
        let mut v = Self::zeros(len);
        v.set(i, true);
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Uniformly random vector, one generator draw per bit.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut v = Self::zeros(len);
        for i in 0..len {
            if rng.gen::<bool>() {
                v.set(i, true);
            }
        }
        v
    }

    /// Builds a vector from a slice of 0/1 values; any nonzero entry counts as 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b != 0 {
                v.set(i, true);
            }
        }
        v
    }

    /// Low `len` bits of `value`, bit 0 of `value` becoming entry 0.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= WORD, "from_u64 supports at most 64 bits");
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = value;
            v.mask_tail();
        }
        v
    }

    /// Inverse of [`BitVector::from_u64`]; fails when the vector is longer than 64.
    pub fn to_u64(&self) -> Result<u64> {
        if self.len > WORD {
            return Err(Error::InvalidParameter(format!(
                "vector of length {} does not fit a machine word",
                self.len
            )));
        }
        Ok(self.words.first().copied().unwrap_or(0))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    /// Hamming weight.
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.iter().map(u8::from).collect()
    }

    /// Length-checked XOR.
    pub fn try_xor(&self, other: &BitVector) -> Result<BitVector> {
        check_len("xor", self.len, other.len)?;
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitVector {
            words,
            len: self.len,
        })
    }

    /// GF(2) inner product.
    pub fn dot(&self, other: &BitVector) -> Result<bool> {
        check_len("dot", self.len, other.len)?;
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        Ok(ones % 2 == 1)
    }

    /// `[self || other]`.
    pub fn concat(&self, other: &BitVector) -> BitVector {
        let mut out = BitVector::zeros(self.len + other.len);
        for (i, b) in self.iter().chain(other.iter()).enumerate() {
            if b {
                out.set(i, true);
            }
        }
        out
    }

    /// Copy of entries `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> BitVector {
        assert!(start <= end && end <= self.len, "slice {start}..{end} out of range");
        let mut out = BitVector::zeros(end - start);
        for i in start..end {
            if self.get(i) {
                out.set(i - start, true);
            }
        }
        out
    }

    fn mask_tail(&mut self) {
        let rem = self.len % WORD;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    fn xor_words(&mut self, other: &BitVector) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                '_' | ' ' => {}
                other => {
                    return Err(Error::Parse(format!(
                        "unexpected character {other:?} in bit string {s:?}"
                    )))
                }
            }
        }
        Ok(BitVector::from_bools(&bits))
    }
}

impl BitXor for &BitVector {
    type Output = BitVector;

    /// Panics on length mismatch; use [`BitVector::try_xor`] for a checked form.
    fn bitxor(self, rhs: &BitVector) -> BitVector {
        assert_eq!(self.len, rhs.len, "xor of vectors with different lengths");
        let mut out = self.clone();
        out.xor_words(rhs);
        out
    }
}

impl BitXorAssign<&BitVector> for BitVector {
    fn bitxor_assign(&mut self, rhs: &BitVector) {
        assert_eq!(self.len, rhs.len, "xor of vectors with different lengths");
        self.xor_words(rhs);
    }
}

/// Dense matrix over GF(2), stored as packed rows.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: Vec<BitVector>,
    cols: usize,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix {
            rows: vec![BitVector::zeros(cols); rows],
            cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        BitMatrix {
            rows: (0..n).map(|i| BitVector::unit(n, i)).collect(),
            cols: n,
        }
    }

    /// Builds a matrix from its rows. `cols` is needed for the zero-row case.
    pub fn from_rows(rows: Vec<BitVector>, cols: usize) -> Result<Self> {
        for r in &rows {
            check_len("matrix row", cols, r.len())?;
        }
        Ok(BitMatrix { rows, cols })
    }

    pub fn from_bit_rows(rows: &[&[u8]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        Self::from_rows(rows.iter().map(|r| BitVector::from_bits(r)).collect(), cols)
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVector {
        &self.rows[i]
    }

    pub fn row_vectors(&self) -> &[BitVector] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.rows[r].set(c, value)
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols
    }

    /// Number of nonzero entries.
    pub fn count_ones(&self) -> usize {
        self.rows.iter().map(BitVector::weight).sum()
    }

    pub fn column(&self, c: usize) -> BitVector {
        let mut out = BitVector::zeros(self.rows());
        for (r, row) in self.rows.iter().enumerate() {
            if row.get(c) {
                out.set(r, true);
            }
        }
        out
    }

    pub fn transpose(&self) -> BitMatrix {
        BitMatrix {
            rows: (0..self.cols).map(|c| self.column(c)).collect(),
            cols: self.rows(),
        }
    }

    /// Sub-matrix with rows `r0..r1` and columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> BitMatrix {
        assert!(r0 <= r1 && r1 <= self.rows(), "row range out of bounds");
        assert!(c0 <= c1 && c1 <= self.cols, "column range out of bounds");
        BitMatrix {
            rows: self.rows[r0..r1].iter().map(|r| r.slice(c0, c1)).collect(),
            cols: c1 - c0,
        }
    }

    /// `[self | right]`.
    pub fn hstack(&self, right: &BitMatrix) -> Result<BitMatrix> {
        check_len("hstack rows", self.rows(), right.rows())?;
        Ok(BitMatrix {
            rows: self
                .rows
                .iter()
                .zip(&right.rows)
                .map(|(a, b)| a.concat(b))
                .collect(),
            cols: self.cols + right.cols,
        })
    }

    /// `[self ; below]`.
    pub fn vstack(&self, below: &BitMatrix) -> Result<BitMatrix> {
        check_len("vstack cols", self.cols, below.cols)?;
        let mut rows = self.rows.clone();
        rows.extend(below.rows.iter().cloned());
        Ok(BitMatrix {
            rows,
            cols: self.cols,
        })
    }

    /// Left product `v * self`.
    pub fn left_mul(&self, v: &BitVector) -> Result<BitVector> {
        check_len("vector-matrix product", self.rows(), v.len())?;
        let mut out = BitVector::zeros(self.cols);
        for (i, row) in self.rows.iter().enumerate() {
            if v.get(i) {
                out.xor_words(row);
            }
        }
        Ok(out)
    }

    /// `self * other`.
    pub fn mul(&self, other: &BitMatrix) -> Result<BitMatrix> {
        check_len("matrix product inner dimension", self.cols, other.rows())?;
        let rows = self
            .rows
            .iter()
            .map(|r| other.left_mul(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(BitMatrix {
            rows,
            cols: other.cols,
        })
    }

    /// Reduced row echelon form: the reduced rows (nonzero ones first) and
    /// the pivot column of each nonzero row.
    fn row_reduce(&self) -> (Vec<BitVector>, Vec<usize>) {
        let mut rows = self.rows.clone();
        let mut pivots = Vec::new();
        for col in 0..self.cols {
            let rank = pivots.len();
            if rank == rows.len() {
                break;
            }
            let Some(pivot) = (rank..rows.len()).find(|&r| rows[r].get(col)) else {
                continue;
            };
            rows.swap(rank, pivot);
            let pivot_row = rows[rank].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != rank && row.get(col) {
                    row.xor_words(&pivot_row);
                }
            }
            pivots.push(col);
        }
        (rows, pivots)
    }

    /// Row rank by Gaussian elimination.
    pub fn rank(&self) -> usize {
        self.row_reduce().1.len()
    }

    /// Gauss-Jordan inverse. The pivot for each column is the lowest-index
    /// remaining row with a one there, so the elimination sequence is fixed.
    /// Returns `Ok(None)` for a singular matrix.
    pub fn inverse(&self) -> Result<Option<BitMatrix>> {
        if !self.is_square() {
            return Err(Error::NotSquare {
                rows: self.rows(),
                cols: self.cols,
            });
        }
        let n = self.cols;
        let mut left = self.rows.clone();
        let mut right = BitMatrix::identity(n).rows;
        for col in 0..n {
            let Some(pivot) = (col..n).find(|&r| left[r].get(col)) else {
                return Ok(None);
            };
            left.swap(col, pivot);
            right.swap(col, pivot);
            let (pl, pr) = (left[col].clone(), right[col].clone());
            for r in 0..n {
                if r != col && left[r].get(col) {
                    left[r].xor_words(&pl);
                    right[r].xor_words(&pr);
                }
            }
        }
        Ok(Some(BitMatrix {
            rows: right,
            cols: n,
        }))
    }

    pub fn has_zero_column(&self) -> bool {
        let mut union = BitVector::zeros(self.cols);
        for r in &self.rows {
            for (u, w) in union.words.iter_mut().zip(&r.words) {
                *u |= w;
            }
        }
        union.weight() < self.cols
    }

    /// Indices of a maximal set of linearly independent columns, chosen
    /// greedily from the left.
    pub fn pivot_columns(&self) -> Vec<usize> {
        self.row_reduce().1
    }

    /// Basis of the right null space, returned as rows: every row `h`
    /// satisfies `self * h^T = 0`.
    pub fn null_space(&self) -> BitMatrix {
        let (rows, pivots) = self.row_reduce();
        let basis = (0..self.cols)
            .filter(|c| !pivots.contains(c))
            .map(|f| {
                let mut h = BitVector::unit(self.cols, f);
                for (i, &pc) in pivots.iter().enumerate() {
                    if rows[i].get(f) {
                        h.set(pc, true);
                    }
                }
                h
            })
            .collect();
        BitMatrix {
            rows: basis,
            cols: self.cols,
        }
    }

    /// Parses the literal format: rows of '0'/'1' separated by ';' or newlines.
    pub fn parse_literal(s: &str) -> Result<BitMatrix> {
        let rows: Vec<BitVector> = s
            .split([';', '\n'])
            .map(str::trim)
            .filter(|r| !r.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        let Some(first) = rows.first() else {
            return Err(Error::Parse("empty matrix literal".into()));
        };
        let cols = first.len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse(format!("ragged matrix literal {s:?}")));
        }
        Ok(BitMatrix { rows, cols })
    }

    /// Inverse of [`BitMatrix::parse_literal`], rows joined with ';'.
    pub fn to_literal(&self) -> String {
        self.rows
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitMatrix{}x{}[{}]", self.rows(), self.cols, self.to_literal())
    }
}

impl fmt::Display for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

impl FromStr for BitMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_literal(s)
    }
}

pub fn mat_mul(a: &BitMatrix, b: &BitMatrix) -> Result<BitMatrix> {
    a.mul(b)
}

pub fn vec_mat_mul(v: &BitVector, a: &BitMatrix) -> Result<BitVector> {
    a.left_mul(v)
}

pub fn mat_inverse(a: &BitMatrix) -> Result<Option<BitMatrix>> {
    a.inverse()
}

pub fn rank(a: &BitMatrix) -> usize {
    a.rank()
}

pub fn has_zero_column(a: &BitMatrix) -> bool {
    a.has_zero_column()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_code() -> BitMatrix {
        "0010;0001;1010;0101".parse().unwrap()
    }

    #[test]
    fn identity_times_m_is_m() {
        let m: BitMatrix = "1101;0110;1111;0001".parse().unwrap();
        assert_eq!(mat_mul(&BitMatrix::identity(4), &m).unwrap(), m);
    }

    #[test]
    fn reference_inverse() {
        let inv = mat_inverse(&reference_code()).unwrap().unwrap();
        assert_eq!(inv.to_literal(), "1010;0101;1000;0100");
        assert_eq!(mat_mul(&reference_code(), &inv).unwrap(), BitMatrix::identity(4));
        assert_eq!(mat_mul(&inv, &reference_code()).unwrap(), BitMatrix::identity(4));
    }

    #[test]
    fn row_selection_product() {
        let v: BitVector = "1011".parse().unwrap();
        assert_eq!(vec_mat_mul(&v, &reference_code()).unwrap().to_string(), "1101");
        let row: BitMatrix = "1011".parse().unwrap();
        assert_eq!(mat_mul(&row, &reference_code()).unwrap().to_literal(), "1101");
    }

    #[test]
    fn zero_and_basis_vectors() {
        let a = reference_code();
        assert!(vec_mat_mul(&BitVector::zeros(4), &a).unwrap().is_zero());
        for i in 0..4 {
            assert_eq!(&vec_mat_mul(&BitVector::unit(4, i), &a).unwrap(), a.row(i));
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = BitMatrix::zeros(2, 3);
        assert!(matches!(
            mat_mul(&a, &a),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(vec_mat_mul(&BitVector::zeros(3), &a).is_err());
        assert!(matches!(a.inverse(), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn inverse_edge_cases() {
        assert_eq!(
            BitMatrix::identity(5).inverse().unwrap().unwrap(),
            BitMatrix::identity(5)
        );
        assert!(BitMatrix::zeros(2, 2).inverse().unwrap().is_none());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank(&BitMatrix::identity(3)), 3);
        assert_eq!(rank(&reference_code().block(2, 4, 0, 4)), 2);
        assert_eq!(rank(&"11;11".parse().unwrap()), 1);
    }

    #[test]
    fn zero_column_examples() {
        assert!(!has_zero_column(&BitMatrix::identity(2)));
        assert!(!has_zero_column(&reference_code().block(2, 4, 2, 4)));
        assert!(has_zero_column(&"10;10".parse().unwrap()));
    }

    #[test]
    fn literal_parsing() {
        let m = BitMatrix::parse_literal("0010\n0001;1010; 0101").unwrap();
        assert_eq!(m, reference_code());
        assert!(BitMatrix::parse_literal("01;1").is_err());
        assert!(BitMatrix::parse_literal("0a").is_err());
        assert!(BitMatrix::parse_literal("").is_err());
    }

    #[test]
    fn wide_vectors_mask_tail() {
        let v = BitVector::ones(130);
        assert_eq!(v.weight(), 130);
        assert_eq!((&v ^ &v).weight(), 0);
        assert_eq!(v.slice(60, 70).weight(), 10);
        assert_eq!(BitVector::from_u64(u64::MAX, 5).weight(), 5);
    }

    #[test]
    fn null_space_annihilates() {
        let g: BitMatrix = "1000110;0100011;0010111;0001101".parse().unwrap();
        let h = g.null_space();
        assert_eq!(h.rows(), 3);
        assert!(g.mul(&h.transpose()).unwrap().count_ones() == 0);
        assert_eq!(h.rank(), 3);
    }

    #[test]
    fn xor_distributes_exhaustively() {
        let a: BitMatrix = "101101;011011;110000;000111;111111;100001".parse().unwrap();
        for v in 0..64u64 {
            for w in 0..64u64 {
                let (v, w) = (BitVector::from_u64(v, 6), BitVector::from_u64(w, 6));
                let lhs = a.left_mul(&(&v ^ &w)).unwrap();
                let rhs = &a.left_mul(&v).unwrap() ^ &a.left_mul(&w).unwrap();
                assert_eq!(lhs, rhs);
            }
        }
    }

    fn square(n: usize) -> impl Strategy<Value = BitMatrix> {
        proptest::collection::vec(any::<u64>(), n).prop_map(move |words| {
            let rows = words
                .into_iter()
                .map(|w| BitVector::from_u64(w, n))
                .collect();
            BitMatrix::from_rows(rows, n).unwrap()
        })
    }

    proptest! {
        #[test]
        fn inverse_agrees_with_rank(a in (1usize..=12).prop_flat_map(square)) {
            let n = a.rows();
            match a.inverse().unwrap() {
                Some(inv) => {
                    prop_assert_eq!(a.rank(), n);
                    prop_assert_eq!(a.mul(&inv).unwrap(), BitMatrix::identity(n));
                    prop_assert_eq!(inv.mul(&a).unwrap(), BitMatrix::identity(n));
                }
                None => prop_assert!(a.rank() < n),
            }
        }

        #[test]
        fn self_xor_is_zero(bits in proptest::collection::vec(any::<bool>(), 1..200)) {
            let v = BitVector::from_bools(&bits);
            prop_assert!((&v ^ &v).is_zero());
            prop_assert_eq!(v.to_string().parse::<BitVector>().unwrap(), v);
        }
    }
}
