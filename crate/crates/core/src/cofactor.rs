//! Inversion of the Gram matrix as a flat sum of cofactor products.
//!
//! For `Ψ ∈ R^{n×n}` every entry of the adjugate is a signed `(n-1)×(n-1)`
//! minor, and every minor is a signed sum of `(n-1)!` products drawn through
//! a fixed permutation table. Splitting that sum by permutation gives
//! matrices `Φ_k` with
//!
//! ```text
//! Φ_k[j][i] = |Ψ|⁻¹ · (-1)^{i+j} · sgn σ_k · Π_l Ψ̃_ij[l][σ_k(l)]
//! Σ_k Φ_k   = Ψ⁻¹
//! ```
//!
//! where `Ψ̃_ij` is `Ψ` without row `i` and column `j`. Each term is a pure
//! product of entries, which is exactly what a multiplicative homomorphism can
//! evaluate. The encrypted pipelines mirror this module step for step, so it
//! doubles as their plaintext oracle.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::frit::FritData;

/// Largest supported state dimension; work grows with `(n-1)!`.
pub const MAX_ORDER: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum CofactorError {
    #[error("state dimension {n} exceeds the supported maximum of {max}")]
    Capacity { n: usize, max: usize },
    #[error("matrix must be square and non-empty, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("matrix is singular")]
    Singular,
}

/// One row of the signed permutation table: a permutation of `0..n-1`
/// (zero-based) and its sign.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedPermutation {
    pub permutation: Vec<usize>,
    pub sign: i8,
}

/// All permutations of `n - 1` symbols in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedPermutationTable {
    n: usize,
    rows: Vec<SignedPermutation>,
}

impl SignedPermutationTable {
    /// Matrix order the table was built for (permutations act on `n - 1`
    /// symbols).
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[SignedPermutation] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn permutation_sign(perm: &[usize]) -> i8 {
    // (-1)^(length - number of cycles)
    let mut seen = vec![false; perm.len()];
    let mut cycles = 0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        cycles += 1;
        let mut at = start;
        while !seen[at] {
            seen[at] = true;
            at = perm[at];
        }
    }
    if (perm.len() - cycles).is_multiple_of(2) {
        1
    } else {
        -1
    }
}

fn next_permutation(perm: &mut [usize]) -> bool {
    if perm.len() < 2 {
        return false;
    }
    let Some(pivot) = (0..perm.len() - 1).rev().find(|&i| perm[i] < perm[i + 1]) else {
        return false;
    };
    let swap = (pivot + 1..perm.len()).rev().find(|&j| perm[j] > perm[pivot]).unwrap();
    perm.swap(pivot, swap);
    perm[pivot + 1..].reverse();
    true
}

fn lexicographic_table(symbols: usize, n: usize) -> SignedPermutationTable {
    let mut perm: Vec<usize> = (0..symbols).collect();
    let mut rows = Vec::new();
    loop {
        rows.push(SignedPermutation { sign: permutation_sign(&perm), permutation: perm.clone() });
        if !next_permutation(&mut perm) {
            break;
        }
    }
    SignedPermutationTable { n, rows }
}

/// The `(n-1)! × n` signed permutation table for an `n × n` matrix.
pub fn signed_permutations(n: usize) -> Result<SignedPermutationTable, CofactorError> {
    signed_permutations_capped(n, MAX_ORDER)
}

pub fn signed_permutations_capped(
    n: usize,
    max: usize,
) -> Result<SignedPermutationTable, CofactorError> {
    if n == 0 {
        return Err(CofactorError::Shape { rows: 0, cols: 0 });
    }
    if n > max {
        return Err(CofactorError::Capacity { n, max });
    }
    Ok(lexicographic_table(n - 1, n))
}

/// Lifts a table over `n - 1` symbols to the full symmetric group on `n`
/// symbols, by appending the new symbol and swapping it into each position.
pub fn extend_to_symmetric_group(table: &SignedPermutationTable) -> Vec<SignedPermutation> {
    let last = table.order() - 1;
    let mut out = Vec::with_capacity(table.len() * table.order());
    for row in table.rows() {
        for position in 0..=last {
            let mut permutation = row.permutation.clone();
            permutation.push(last);
            permutation.swap(position, last);
            let sign = if position == last { row.sign } else { -row.sign };
            out.push(SignedPermutation { permutation, sign });
        }
    }
    out.sort_by(|a, b| a.permutation.cmp(&b.permutation));
    out
}

/// Determinant by the Leibniz sum over the extended table.
pub fn leibniz_determinant(psi: &DMatrix<f64>) -> Result<f64, CofactorError> {
    let table = signed_permutations_capped(check_square(psi)?, MAX_ORDER + 1)?;
    Ok(extend_to_symmetric_group(&table)
        .iter()
        .map(|row| {
            f64::from(row.sign)
                * row.permutation.iter().enumerate().map(|(i, &j)| psi[(i, j)]).product::<f64>()
        })
        .sum())
}

fn check_square(m: &DMatrix<f64>) -> Result<usize, CofactorError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(CofactorError::Shape { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

/// Entry `(row, col)` of `Ψ̃_ij`, looked up in `Ψ` without building the minor.
#[inline]
pub fn minor_entry(psi: &DMatrix<f64>, i: usize, j: usize, row: usize, col: usize) -> f64 {
    psi[(minor_source(i, row), minor_source(j, col))]
}

/// Index in the full matrix of row/column `idx` of a minor that dropped
/// `removed`.
#[inline]
pub fn minor_source(removed: usize, idx: usize) -> usize {
    if idx < removed {
        idx
    } else {
        idx + 1
    }
}

/// `(-1)^{i+j} · sgn σ_k · Π_l Ψ̃_ij[l][σ_k(l)]`, without the determinant.
pub fn signed_cofactor_term(
    psi: &DMatrix<f64>,
    row: &SignedPermutation,
    i: usize,
    j: usize,
) -> f64 {
    let product: f64 = row
        .permutation
        .iter()
        .enumerate()
        .map(|(l, &s)| minor_entry(psi, i, j, l, s))
        .product();
    let checker = if (i + j).is_multiple_of(2) { 1.0 } else { -1.0 };
    checker * f64::from(row.sign) * product
}

/// Intermediate matrices whose sum is `Ψ⁻¹`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiDecomposition {
    pub phis: Vec<DMatrix<f64>>,
}

impl PhiDecomposition {
    pub fn sum(&self) -> DMatrix<f64> {
        let n = self.phis[0].nrows();
        self.phis.iter().fold(DMatrix::zeros(n, n), |acc, phi| acc + phi)
    }
}

/// Builds every `Φ_k`. The determinant comes from a Laplace expansion along
/// the first row using the same table.
pub fn phi_matrices(
    psi: &DMatrix<f64>,
    table: &SignedPermutationTable,
) -> Result<PhiDecomposition, CofactorError> {
    let n = check_square(psi)?;
    if table.order() != n {
        return Err(CofactorError::Shape { rows: table.order(), cols: n });
    }
    let det: f64 = (0..n)
        .map(|j| {
            psi[(0, j)] * table.rows().iter().map(|row| signed_cofactor_term(psi, row, 0, j)).sum::<f64>()
        })
        .sum();
    if det == 0.0 || !det.is_finite() {
        return Err(CofactorError::Singular);
    }
    phi_matrices_with_det_inv(psi, table, 1.0 / det)
}

/// As [`phi_matrices`] with a caller-supplied `|Ψ|⁻¹`.
pub fn phi_matrices_with_det_inv(
    psi: &DMatrix<f64>,
    table: &SignedPermutationTable,
    det_inv: f64,
) -> Result<PhiDecomposition, CofactorError> {
    let n = check_square(psi)?;
    let phis = table
        .rows()
        .iter()
        .map(|row| {
            // Entry (j, i) comes from the cofactor at (i, j).
            DMatrix::from_fn(n, n, |j, i| det_inv * signed_cofactor_term(psi, row, i, j))
        })
        .collect();
    Ok(PhiDecomposition { phis })
}

/// `Ψ⁻¹ = Σ_k Φ_k`.
pub fn invert_via_cofactors(psi: &DMatrix<f64>) -> Result<DMatrix<f64>, CofactorError> {
    let table = signed_permutations(check_square(psi)?)?;
    Ok(phi_matrices(psi, &table)?.sum())
}

/// Number of gain terms, `(n-1)! · n² · N`.
///
/// The flat index below runs `l` fastest, then the regression row `i`, then
/// the permutation `k`, so the permutation stride is `n · (nN)`.
pub fn term_count(n: usize, samples: usize) -> usize {
    factorial(n - 1) * n * n * samples
}

/// One-based flat index of the term for permutation `k`, regression row `i`
/// and Φ-row `l` (all one-based).
pub fn term_index(k: usize, i: usize, l: usize, n: usize, samples: usize) -> usize {
    (k - 1) * n * n * samples + (i - 1) * n + l
}

/// Inverse of [`term_index`].
pub fn term_position(j: usize, n: usize, samples: usize) -> (usize, usize, usize) {
    let zero = j - 1;
    let per_k = n * n * samples;
    let k = zero / per_k + 1;
    let rest = zero % per_k;
    (k, rest / n + 1, rest % n + 1)
}

pub fn factorial(m: usize) -> usize {
    (1..=m).product()
}

/// Flat list of row-vector terms `F*_j = -Γ_i W_il Φ_{k,l}`, ordered by `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainTermList {
    pub terms: Vec<Vec<f64>>,
}

impl GainTermList {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn sum(&self) -> Vec<f64> {
        let n = self.terms.first().map_or(0, Vec::len);
        self.terms.iter().fold(vec![0.0; n], |mut acc, t| {
            acc.iter_mut().zip(t).for_each(|(a, b)| *a += b);
            acc
        })
    }
}

pub fn gain_terms(data: &FritData, phis: &PhiDecomposition) -> GainTermList {
    let n = data.n;
    let rows = data.gamma.len();
    let mut terms = Vec::with_capacity(phis.phis.len() * rows * n);
    for phi in &phis.phis {
        for i in 0..rows {
            for l in 0..n {
                let scale = -data.gamma[i] * data.w[(i, l)];
                terms.push(phi.row(l).iter().map(|p| scale * p).collect());
            }
        }
    }
    GainTermList { terms }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inversion_parity(perm: &[usize]) -> i8 {
        let mut inversions = 0;
        for a in 0..perm.len() {
            for b in a + 1..perm.len() {
                if perm[a] > perm[b] {
                    inversions += 1;
                }
            }
        }
        if inversions % 2 == 0 {
            1
        } else {
            -1
        }
    }

    #[test]
    fn small_tables() {
        let t2 = signed_permutations(2).unwrap();
        assert_eq!(t2.rows(), &[SignedPermutation { permutation: vec![0], sign: 1 }]);
        let t3 = signed_permutations(3).unwrap();
        assert_eq!(
            t3.rows(),
            &[
                SignedPermutation { permutation: vec![0, 1], sign: 1 },
                SignedPermutation { permutation: vec![1, 0], sign: -1 },
            ]
        );
        let t1 = signed_permutations(1).unwrap();
        assert_eq!(t1.rows(), &[SignedPermutation { permutation: vec![], sign: 1 }]);
    }

    #[test]
    fn signs_match_inversion_count() {
        for n in 1..=MAX_ORDER {
            let table = signed_permutations(n).unwrap();
            assert_eq!(table.len(), factorial(n - 1));
            for row in table.rows() {
                assert_eq!(row.sign, inversion_parity(&row.permutation));
            }
            let mut sorted = table.rows().to_vec();
            sorted.dedup();
            assert_eq!(sorted.len(), table.len());
            assert!(table.rows().windows(2).all(|w| w[0].permutation < w[1].permutation));
        }
        assert_eq!(signed_permutations(4).unwrap().len(), 6);
    }

    #[test]
    fn capacity_limit() {
        assert_eq!(
            signed_permutations(MAX_ORDER + 1),
            Err(CofactorError::Capacity { n: MAX_ORDER + 1, max: MAX_ORDER })
        );
    }

    #[test]
    fn hand_inverses() {
        let id = DMatrix::<f64>::identity(2, 2);
        let phis = phi_matrices(&id, &signed_permutations(2).unwrap()).unwrap();
        assert_eq!(phis.phis.len(), 1);
        assert_eq!(phis.phis[0], id);

        let psi = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let inv = invert_via_cofactors(&psi).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]) / 3.0;
        assert!((inv - expected).norm() < 1e-15);

        assert_eq!(invert_via_cofactors(&DMatrix::from_element(1, 1, 4.0)).unwrap()[(0, 0)], 0.25);
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 5.0]));
        let inv = invert_via_cofactors(&diag).unwrap();
        assert!((inv - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 0.2]))).norm() < 1e-16);
    }

    #[test]
    fn transposed_placement_matters_for_nonsymmetric_input() {
        let psi = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 2.0, 0.5, 3.0, -1.0, 2.0, 0.0, 5.0]);
        let inv = invert_via_cofactors(&psi).unwrap();
        assert!((&psi * inv - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn singular_rejected() {
        let psi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(invert_via_cofactors(&psi), Err(CofactorError::Singular));
        assert!(matches!(
            invert_via_cofactors(&DMatrix::zeros(2, 3)),
            Err(CofactorError::Shape { .. })
        ));
    }

    #[test]
    fn term_counts_and_index_map() {
        assert_eq!(term_count(2, 50), 200);
        assert_eq!(term_count(1, 7), 7);
        assert_eq!(term_count(3, 30), 540);
        for (n, samples) in [(1, 4), (2, 3), (3, 2), (4, 2)] {
            let m = term_count(n, samples);
            let mut seen = vec![false; m + 1];
            for k in 1..=factorial(n - 1) {
                for i in 1..=n * samples {
                    for l in 1..=n {
                        let j = term_index(k, i, l, n, samples);
                        assert!(!seen[j]);
                        seen[j] = true;
                        assert_eq!(term_position(j, n, samples), (k, i, l));
                    }
                }
            }
            assert!(seen[1..].iter().all(|&s| s));
            assert_eq!(term_index(1, 1, 1, n, samples), 1);
            assert_eq!(term_index(factorial(n - 1), n * samples, n, n, samples), m);
        }
    }

    #[test]
    fn symmetric_group_extension() {
        for n in 1..=5 {
            let full = extend_to_symmetric_group(&signed_permutations(n).unwrap());
            assert_eq!(full.len(), factorial(n));
            let mut perms: Vec<_> = full.iter().map(|r| r.permutation.clone()).collect();
            perms.dedup();
            assert_eq!(perms.len(), factorial(n));
            for row in &full {
                assert_eq!(row.sign, inversion_parity(&row.permutation));
            }
        }
    }
}
