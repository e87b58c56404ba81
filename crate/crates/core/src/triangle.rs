//! Packed storage for the strictly lower triangle of a symmetric `n×n`
//! matrix. Pairs `(i, j)` with `i > j` are laid out column-major by `j`:
//! `(1,0), (2,0), …, (n-1,0), (2,1), …, (n-1,n-2)`.

use nalgebra::DMatrix;

#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Offset of pair `(i, j)`; the order of the two indices does not matter.
#[inline]
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i > j { (i, j) } else { (j, i) };
    debug_assert!(i < n && i != j);
    j * n - j * (j + 1) / 2 + (i - j - 1)
}

/// Inverse of [`pair_index`]: returns `(i, j)` with `i > j`.
pub fn pair_from_index(n: usize, mut k: usize) -> (usize, usize) {
    let mut j = 0;
    loop {
        let len = n - j - 1;
        if k < len {
            return (j + 1 + k, j);
        }
        k -= len;
        j += 1;
    }
}

/// Iterator over `(i, j)` in storage order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |j| (j + 1..n).map(move |i| (i, j)))
}

pub fn pack(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    pairs(n).map(|(i, j)| m[(i, j)]).collect()
}

/// Symmetric matrix from packed pairs with a constant diagonal.
pub fn unpack(n: usize, packed: &[f64], diagonal: f64) -> DMatrix<f64> {
    let mut m = DMatrix::from_element(n, n, diagonal);
    for ((i, j), &x) in pairs(n).zip(packed) {
        m[(i, j)] = x;
        m[(j, i)] = x;
    }
    m
}
