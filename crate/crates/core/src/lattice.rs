//! Exact LLL reduction over an integer scalar type.
//!
//! The reducer is the integral variant: it tracks the Gram determinants
//! `d_i` and the scaled coefficients `lambda_ij = d_j * mu_ij`, all of which
//! stay integers, so no rational arithmetic is needed in the inner loop.
//! [`is_lll_reduced`] re-derives Gram-Schmidt from scratch with exact
//! rationals and shares no code with the reducer.

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::IntScalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("basis rows are linearly dependent")]
    SingularBasis,
    #[error("basis is not square: {rows} rows, row {bad_row} has {len} entries")]
    NotSquare { rows: usize, bad_row: usize, len: usize },
    #[error("delta must lie strictly between 1/4 and 1, got {num}/{den}")]
    BadDelta { num: i64, den: i64 },
}

/// Square basis matrix, one basis vector per row, with the Lovász parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis<T> {
    rows: Vec<Vec<T>>,
    delta: Ratio<i64>,
}

pub const DEFAULT_DELTA: (i64, i64) = (99, 100);

impl<T: IntScalar> Basis<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self, LatticeError> {
        Self::with_delta(rows, DEFAULT_DELTA.0, DEFAULT_DELTA.1)
    }

    pub fn with_delta(rows: Vec<Vec<T>>, num: i64, den: i64) -> Result<Self, LatticeError> {
        let n = rows.len();
        if let Some((bad_row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(LatticeError::NotSquare { rows: n, bad_row, len: r.len() });
        }
        if den <= 0 || 4 * num <= den || num >= den {
            return Err(LatticeError::BadDelta { num, den });
        }
        Ok(Basis { rows, delta: Ratio::new(num, den) })
    }

    pub fn from_i64(rows: &[&[i64]]) -> Result<Self, LatticeError> {
        Self::new(rows.iter().map(|r| r.iter().map(|&v| T::from(v)).collect()).collect())
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        Self::new(rows).expect("identity is square")
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<T>> {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn delta(&self) -> Ratio<i64> {
        self.delta
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn determinant(&self) -> T {
        determinant(&self.rows)
    }
}

pub fn dot<T: IntScalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

pub fn determinant<T: IntScalar>(rows: &[Vec<T>]) -> T {
    let n = rows.len();
    if n == 0 {
        return T::one();
    }
    let mut m: Vec<Vec<T>> = rows.to_vec();
    let mut sign = T::one();
    let mut prev = T::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(k, i);
                    sign = -sign;
                }
                None => return T::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = m[i][j].clone() * m[k][k].clone() - m[i][k].clone() * m[k][j].clone();
                m[i][j] = v / prev.clone();
            }
        }
        prev = m[k][k].clone();
    }
    sign * m[n - 1][n - 1].clone()
}

/// LLL-reduces the basis, returning a new basis of the same lattice.
pub fn lll_reduce<T: IntScalar>(basis: &Basis<T>) -> Result<Basis<T>, LatticeError> {
    let mut state = IntegralLll::new(basis)?;
    state.run();
    Ok(Basis { rows: state.rows, delta: basis.delta })
}

struct IntegralLll<T> {
    rows: Vec<Vec<T>>,
    /// `d[0] = 1`, `d[i]` = Gram determinant of the first `i` rows.
    d: Vec<T>,
    /// `lambda[i][j]` for `j < i`, equal to `d[j + 1] * mu_ij`.
    lambda: Vec<Vec<T>>,
    delta_num: T,
    delta_den: T,
}

impl<T: IntScalar> IntegralLll<T> {
    fn new(basis: &Basis<T>) -> Result<Self, LatticeError> {
        let n = basis.dim();
        let rows = basis.rows.clone();
        let mut d = vec![T::zero(); n + 1];
        d[0] = T::one();
        let mut lambda = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            for j in 0..=i {
                let mut u = dot(&rows[i], &rows[j]);
                for l in 0..j {
                    u = (d[l + 1].clone() * u - lambda[i][l].clone() * lambda[j][l].clone()) / d[l].clone();
                }
                if j < i {
                    lambda[i][j] = u;
                } else {
                    if u.is_zero() {
                        return Err(LatticeError::SingularBasis);
                    }
                    d[i + 1] = u;
                }
            }
        }
        Ok(IntegralLll {
            rows,
            d,
            lambda,
            delta_num: T::from(*basis.delta.numer()),
            delta_den: T::from(*basis.delta.denom()),
        })
    }

    /// Size-reduce row `k` against row `l`.
    fn reduce(&mut self, k: usize, l: usize) {
        let dl = self.d[l + 1].clone();
        let two_lambda = self.lambda[k][l].clone() + self.lambda[k][l].clone();
        if two_lambda.abs() <= dl {
            return;
        }
        // Nearest integer to lambda / d_l.
        let q = (two_lambda + dl.clone()).div_floor(&(dl.clone() + dl.clone()));
        let (head, tail) = self.rows.split_at_mut(k);
        for (x, y) in tail[0].iter_mut().zip(&head[l]) {
            *x = x.clone() - q.clone() * y.clone();
        }
        self.lambda[k][l] = self.lambda[k][l].clone() - q.clone() * dl;
        for i in 0..l {
            self.lambda[k][i] = self.lambda[k][i].clone() - q.clone() * self.lambda[l][i].clone();
        }
    }

    /// Lovász condition between rows `k - 1` and `k`, scaled to integers:
    /// `den * (d_{k+1} d_{k-1} + lambda^2) >= num * d_k^2`.
    fn lovasz_holds(&self, k: usize) -> bool {
        let lam = self.lambda[k][k - 1].clone();
        let lhs = self.delta_den.clone() * (self.d[k + 1].clone() * self.d[k - 1].clone() + lam.clone() * lam);
        let rhs = self.delta_num.clone() * self.d[k].clone() * self.d[k].clone();
        lhs >= rhs
    }

    fn swap(&mut self, k: usize) {
        let n = self.rows.len();
        self.rows.swap(k, k - 1);
        for j in 0..k - 1 {
            let tmp = self.lambda[k][j].clone();
            self.lambda[k][j] = self.lambda[k - 1][j].clone();
            self.lambda[k - 1][j] = tmp;
        }
        let lam = self.lambda[k][k - 1].clone();
        let new_d = (self.d[k - 1].clone() * self.d[k + 1].clone() + lam.clone() * lam.clone()) / self.d[k].clone();
        for i in k + 1..n {
            let t = self.lambda[i][k].clone();
            self.lambda[i][k] =
                (self.d[k + 1].clone() * self.lambda[i][k - 1].clone() - lam.clone() * t.clone()) / self.d[k].clone();
            self.lambda[i][k - 1] = (new_d.clone() * t + lam.clone() * self.lambda[i][k].clone()) / self.d[k + 1].clone();
        }
        self.d[k] = new_d;
    }

    fn run(&mut self) {
        let n = self.rows.len();
        let mut k = 1;
        while k < n {
            self.reduce(k, k - 1);
            if !self.lovasz_holds(k) {
                self.swap(k);
                k = k.saturating_sub(1).max(1);
                continue;
            }
            for l in (0..k - 1).rev() {
                self.reduce(k, l);
            }
            k += 1;
        }
    }
}

/// Why a basis failed the LLL check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LllViolation<T: Clone + num_integer::Integer> {
    /// `|mu_ij| > 1/2`
    SizeReduction { i: usize, j: usize, mu: Ratio<T> },
    /// `|b*_k|^2 < (delta - mu_{k,k-1}^2) |b*_{k-1}|^2`
    Lovasz { k: usize },
}

/// Exact-rational check of size reduction and the Lovász condition.
pub fn is_lll_reduced<T: IntScalar>(basis: &Basis<T>) -> Result<Result<(), LllViolation<T>>, LatticeError> {
    let n = basis.dim();
    let rows: Vec<Vec<Ratio<T>>> = basis
        .rows
        .iter()
        .map(|r| r.iter().map(|v| Ratio::from_integer(v.clone())).collect())
        .collect();
    let rdot = |a: &[Ratio<T>], b: &[Ratio<T>]| {
        a.iter().zip(b).fold(Ratio::zero(), |acc: Ratio<T>, (x, y)| acc + x.clone() * y.clone())
    };
    let mut star: Vec<Vec<Ratio<T>>> = Vec::with_capacity(n);
    let mut norms: Vec<Ratio<T>> = Vec::with_capacity(n);
    let mut mu = vec![vec![Ratio::<T>::zero(); n]; n];
    for i in 0..n {
        let mut v = rows[i].clone();
        for j in 0..i {
            mu[i][j] = rdot(&rows[i], &star[j]) / norms[j].clone();
            for (x, s) in v.iter_mut().zip(&star[j]) {
                *x = x.clone() - mu[i][j].clone() * s.clone();
            }
        }
        let norm = rdot(&v, &v);
        if norm.is_zero() {
            return Err(LatticeError::SingularBasis);
        }
        star.push(v);
        norms.push(norm);
    }
    let half = Ratio::new(T::one(), T::from(2));
    for i in 0..n {
        for j in 0..i {
            if mu[i][j].abs() > half {
                return Ok(Err(LllViolation::SizeReduction { i, j, mu: mu[i][j].clone() }));
            }
        }
    }
    let delta = Ratio::new(T::from(*basis.delta.numer()), T::from(*basis.delta.denom()));
    for k in 1..n {
        let m = mu[k][k - 1].clone();
        if norms[k] < (delta.clone() - m.clone() * m) * norms[k - 1].clone() {
            return Ok(Err(LllViolation::Lovasz { k }));
        }
    }
    Ok(Ok(()))
}

/// Squared Euclidean norm.
pub fn norm_sq<T: IntScalar>(v: &[T]) -> T {
    dot(v, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    type B = Basis<i128>;
    type Big = Basis<BigInt>;

    fn det_abs(b: &Big) -> BigInt {
        b.determinant().abs()
    }

    #[test]
    fn identity_is_fixed_point() {
        let id = B::identity(4);
        let out = lll_reduce(&id).unwrap();
        for row in out.rows() {
            assert_eq!(row.iter().filter(|v| v.abs() == 1).count(), 1);
            assert_eq!(row.iter().filter(|v| **v == 0).count(), 3);
        }
        assert!(is_lll_reduced(&id).unwrap().is_ok());
    }

    #[test]
    fn two_dim_example_hits_shortest_vector() {
        let b = B::from_i64(&[&[201, 37], &[1648, 297]]).unwrap();
        let out = lll_reduce(&b).unwrap();
        // lambda_1^2 by enumeration over coefficients in [-50, 50].
        let mut best = i128::MAX;
        for a in -50i128..=50 {
            for c in -50i128..=50 {
                if a == 0 && c == 0 {
                    continue;
                }
                let v = [a * 201 + c * 1648, a * 37 + c * 297];
                best = best.min(v[0] * v[0] + v[1] * v[1]);
            }
        }
        assert_eq!(norm_sq(&out.rows()[0]), best);
        assert!(is_lll_reduced(&out).unwrap().is_ok());
        assert_eq!(out.determinant().abs(), b.determinant().abs());
    }

    #[test]
    fn checker_rejects_unreduced() {
        let b = B::from_i64(&[&[1, 0], &[1_000_000, 1]]).unwrap();
        match is_lll_reduced(&b).unwrap() {
            Err(LllViolation::SizeReduction { i: 1, j: 0, mu }) => assert_eq!(mu, Ratio::from_integer(1_000_000)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn checker_reports_lovasz() {
        let b = B::from_i64(&[&[10, 0], &[0, 1]]).unwrap();
        assert_eq!(is_lll_reduced(&b).unwrap(), Err(LllViolation::Lovasz { k: 1 }));
    }

    #[test]
    fn singular_and_malformed() {
        let b = B::from_i64(&[&[1, 2], &[2, 4]]).unwrap();
        assert_eq!(lll_reduce(&b), Err(LatticeError::SingularBasis));
        assert_eq!(is_lll_reduced(&b), Err(LatticeError::SingularBasis));
        assert!(matches!(B::from_i64(&[&[1, 2], &[3]]), Err(LatticeError::NotSquare { .. })));
        assert!(matches!(B::with_delta(vec![vec![1]], 1, 4), Err(LatticeError::BadDelta { .. })));
        assert!(matches!(B::with_delta(vec![vec![1]], 1, 1), Err(LatticeError::BadDelta { .. })));
    }

    #[test]
    fn bareiss_determinant() {
        let rows = vec![vec![0i128, 2, 1], vec![3, 1, 0], vec![1, 1, 1]];
        // Expanded by hand: 0*(1) - 2*(3) + 1*(2) = -4
        assert_eq!(determinant(&rows), -4);
        assert_eq!(determinant(&[vec![2i128, 4], vec![1, 2]]), 0);
    }

    /// Solves `coeffs * from = to_row` over the rationals; the row is in the
    /// lattice iff every coefficient is an integer.
    fn in_lattice(from: &[Vec<i128>], row: &[i128]) -> bool {
        let n = from.len();
        // Transpose system: sum_i c_i from[i][j] = row[j].
        let mut m: Vec<Vec<Ratio<BigInt>>> = (0..n)
            .map(|j| {
                let mut eq: Vec<Ratio<BigInt>> =
                    (0..n).map(|i| Ratio::from_integer(BigInt::from(from[i][j]))).collect();
                eq.push(Ratio::from_integer(BigInt::from(row[j])));
                eq
            })
            .collect();
        for col in 0..n {
            let piv = (col..n).find(|&r| !m[r][col].is_zero()).unwrap();
            m.swap(col, piv);
            let p = m[col][col].clone();
            for v in m[col].iter_mut() {
                *v = v.clone() / p.clone();
            }
            for r in 0..n {
                if r != col && !m[r][col].is_zero() {
                    let f = m[r][col].clone();
                    for c in 0..=n {
                        let sub = f.clone() * m[col][c].clone();
                        m[r][c] = m[r][c].clone() - sub;
                    }
                }
            }
        }
        m.iter().all(|eq| eq[n].is_integer())
    }

    fn to_big(rows: &[Vec<i128>]) -> Vec<Vec<BigInt>> {
        rows.iter().map(|r| r.iter().map(|&v| BigInt::from(v)).collect()).collect()
    }

    /// Reduced bases of these small inputs always fit in i128.
    fn to_small(rows: &[Vec<BigInt>]) -> Vec<Vec<i128>> {
        use num_traits::ToPrimitive;
        rows.iter().map(|r| r.iter().map(|v| v.to_i128().unwrap()).collect()).collect()
    }

    fn basis_strategy() -> impl Strategy<Value = Vec<Vec<i128>>> {
        (2usize..=5).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(-1000i128..=1000, n), n))
    }

    proptest! {
        #[test]
        fn reduction_invariants(rows in basis_strategy()) {
            let b = Big::new(to_big(&rows)).unwrap();
            prop_assume!(!b.determinant().is_zero());
            let out = lll_reduce(&b).unwrap();
            prop_assert!(is_lll_reduced(&out).unwrap().is_ok());
            prop_assert_eq!(det_abs(&out), det_abs(&b));
            let out_rows = to_small(out.rows());
            for r in &out_rows {
                prop_assert!(in_lattice(&rows, r));
            }
            for r in &rows {
                prop_assert!(in_lattice(&out_rows, r));
            }
            prop_assert_eq!(lll_reduce(&b).unwrap(), out);
        }

        #[test]
        fn weak_delta_also_reduces(rows in basis_strategy()) {
            let b = Big::with_delta(to_big(&rows), 3, 4).unwrap();
            prop_assume!(!b.determinant().is_zero());
            let out = lll_reduce(&b).unwrap();
            prop_assert!(is_lll_reduced(&out).unwrap().is_ok());
            prop_assert_eq!(det_abs(&out), det_abs(&b));
        }
    }
}
