//! Dense univariate polynomials over an exact integer type, and integer root
//! extraction.
//!
//! Roots are isolated with a Sturm sequence of the square-free part, bisected
//! over integer brackets until each bracket has width one. No floating point
//! is involved anywhere.

use std::fmt;

use thiserror::Error;

use crate::IntScalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("lattice entry {index} is not divisible by X^{index}")]
    DivisibilityViolation { index: usize },
}

/// `coeffs[i]` is the coefficient of `x^i`. The leading coefficient is never
/// zero; the zero polynomial has no coefficients.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Poly<T> {
    coeffs: Vec<T>,
}

impl<T: IntScalar> Poly<T> {
    pub fn new(mut coeffs: Vec<T>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn from_i64(coeffs: &[i64]) -> Self {
        Self::new(coeffs.iter().map(|&c| T::from(c)).collect())
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: T) -> Self {
        Self::new(vec![c])
    }

    /// `x + c`
    pub fn monic_linear(c: T) -> Self {
        Self::new(vec![c, T::one()])
    }

    /// `x^k`
    pub fn monomial(k: usize) -> Self {
        let mut coeffs = vec![T::zero(); k + 1];
        coeffs[k] = T::one();
        Poly { coeffs }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<&T> {
        self.coeffs.last()
    }

    /// Horner evaluation.
    pub fn eval_at(&self, x: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * x.clone() + c.clone())
    }

    pub fn multiply(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![T::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = out[i + j].clone() + a.clone() * b.clone();
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, k: &T) -> Self {
        Self::new(self.coeffs.iter().map(|c| c.clone() * k.clone()).collect())
    }

    /// Multiplication by `x^k`.
    pub fn shift(&self, k: usize) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut coeffs = vec![T::zero(); k];
        coeffs.extend(self.coeffs.iter().cloned());
        Poly { coeffs }
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c.clone() * T::from(i as i64))
                .collect(),
        )
    }

    /// Gcd of the coefficients, non-negative.
    pub fn content(&self) -> T {
        self.coeffs.iter().fold(T::zero(), |g, c| g.gcd(c))
    }

    /// Divides out the content and makes the leading coefficient positive.
    pub fn primitive_part(&self) -> Self {
        if self.is_zero() {
            return Self::zero();
        }
        let mut g = self.content();
        if self.leading().is_some_and(|l| l.is_negative()) {
            g = -g;
        }
        Self::new(self.coeffs.iter().map(|c| c.clone() / g.clone()).collect())
    }

    /// Remainder of `self` by `divisor` after scaling `self` by a positive
    /// power of `|lc(divisor)|`, so signs are those of the true remainder.
    fn sign_preserving_rem(&self, divisor: &Self) -> Self {
        let d_deg = divisor.degree().expect("division by zero polynomial");
        let lc = divisor.leading().unwrap().clone();
        let lc_abs = lc.abs();
        let lc_sign = lc.signum();
        let mut rem = self.clone();
        while let Some(r_deg) = rem.degree() {
            if r_deg < d_deg {
                break;
            }
            let factor = rem.leading().unwrap().clone() * lc_sign.clone();
            let subtrahend = divisor.scale(&factor).shift(r_deg - d_deg);
            let mut next = rem.scale(&lc_abs).coeffs;
            for (i, s) in subtrahend.coeffs.into_iter().enumerate() {
                next[i] = next[i].clone() - s;
            }
            rem = Self::new(next);
        }
        rem
    }

    /// Exact quotient in `Z[x]`, or `None` if `divisor` does not divide `self`.
    pub fn div_exact(&self, divisor: &Self) -> Option<Self> {
        let d_deg = divisor.degree()?;
        let lc = divisor.leading().unwrap().clone();
        let mut rem = self.clone();
        let mut quot = vec![T::zero(); self.coeffs.len().saturating_sub(d_deg)];
        while let Some(r_deg) = rem.degree() {
            if r_deg < d_deg {
                return None;
            }
            let (q, r) = rem.leading().unwrap().div_rem(&lc);
            if !r.is_zero() {
                return None;
            }
            let mut next = rem.coeffs.clone();
            for (i, c) in divisor.coeffs.iter().enumerate() {
                let at = i + r_deg - d_deg;
                next[at] = next[at].clone() - c.clone() * q.clone();
            }
            quot[r_deg - d_deg] = q;
            rem = Self::new(next);
        }
        Some(Self::new(quot))
    }

    /// Primitive gcd with positive leading coefficient.
    pub fn gcd(&self, other: &Self) -> Self {
        let mut a = self.primitive_part();
        let mut b = other.primitive_part();
        if a.degree() < b.degree() {
            std::mem::swap(&mut a, &mut b);
        }
        while !b.is_zero() {
            let r = a.sign_preserving_rem(&b).primitive_part();
            a = b;
            b = r;
        }
        a
    }

    /// `p / gcd(p, p')`: same distinct roots, all simple.
    pub fn square_free_part(&self) -> Self {
        let g = self.gcd(&self.derivative());
        if g.degree().unwrap_or(0) == 0 {
            return self.primitive_part();
        }
        self.primitive_part()
            .div_exact(&g)
            .expect("gcd divides the polynomial")
            .primitive_part()
    }

    /// The set `{ r : p(r) = 0, |r| <= bound }`, sorted ascending.
    ///
    /// Panics on the zero polynomial.
    pub fn integer_roots(&self, bound: &T) -> Vec<T> {
        assert!(!self.is_zero(), "every integer is a root of the zero polynomial");
        let square_free = self.square_free_part();
        if square_free.degree() == Some(0) {
            return Vec::new();
        }
        let sturm = SturmSequence::new(&square_free);
        let one = T::one();
        let two = T::from(2);
        let lo = -bound.clone() - one.clone();
        let hi = bound.clone();
        let mut roots = Vec::new();
        // (a, b] brackets with a known distinct-root count.
        let mut stack = vec![(lo.clone(), hi.clone(), sturm.variations(&lo) - sturm.variations(&hi))];
        while let Some((a, b, count)) = stack.pop() {
            if count == 0 {
                continue;
            }
            if b.clone() - a.clone() == one {
                if square_free.eval_at(&b).is_zero() {
                    roots.push(b);
                }
                continue;
            }
            let mid = (a.clone() + b.clone()).div_floor(&two);
            let v_mid = sturm.variations(&mid);
            let left = sturm.variations(&a) - v_mid;
            stack.push((mid.clone(), b, count - left));
            stack.push((a, mid, left));
        }
        roots.retain(|r| self.eval_at(r).is_zero());
        roots.sort();
        roots.dedup();
        roots
    }
}

struct SturmSequence<T> {
    chain: Vec<Poly<T>>,
}

impl<T: IntScalar> SturmSequence<T> {
    fn new(p: &Poly<T>) -> Self {
        let mut chain = vec![p.clone(), p.derivative().primitive_part()];
        loop {
            let n = chain.len();
            if chain[n - 1].is_zero() {
                chain.pop();
                break;
            }
            let rem = chain[n - 2].sign_preserving_rem(&chain[n - 1]);
            if rem.is_zero() {
                break;
            }
            // Dividing by the positive content keeps every sign intact.
            let content = rem.content();
            let next = Poly::new(rem.coeffs.iter().map(|c| -(c.clone() / content.clone())).collect());
            chain.push(next);
        }
        SturmSequence { chain }
    }

    fn variations(&self, x: &T) -> i64 {
        let mut count = 0;
        let mut last: Option<bool> = None;
        for p in &self.chain {
            let v = p.eval_at(x);
            if v.is_zero() {
                continue;
            }
            let positive = v.is_positive();
            if last.is_some_and(|l| l != positive) {
                count += 1;
            }
            last = Some(positive);
        }
        count
    }
}

/// Coefficient vector of `p(xX)`, zero-padded to `width`.
pub fn poly_to_row<T: IntScalar>(p: &Poly<T>, x_bound: &T, width: usize) -> Vec<T> {
    assert!(
        p.coeffs.len() <= width,
        "degree {:?} does not fit in a row of width {width}",
        p.degree()
    );
    let mut row = Vec::with_capacity(width);
    let mut power = T::one();
    for i in 0..width {
        let c = p.coeffs.get(i).cloned().unwrap_or_else(T::zero);
        row.push(c * power.clone());
        power = power * x_bound.clone();
    }
    row
}

/// Inverse of [`poly_to_row`]: entry `i` is divided by `X^i`.
pub fn row_to_poly<T: IntScalar>(row: &[T], x_bound: &T) -> Result<Poly<T>, PolyError> {
    let mut coeffs = Vec::with_capacity(row.len());
    let mut power = T::one();
    for (index, entry) in row.iter().enumerate() {
        let (q, r) = entry.div_rem(&power);
        if !r.is_zero() {
            return Err(PolyError::DivisibilityViolation { index });
        }
        coeffs.push(q);
        power = power * x_bound.clone();
    }
    Ok(Poly::new(coeffs))
}

impl<T: IntScalar> fmt::Debug for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl<T: IntScalar> fmt::Display for Poly<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            let negative = c.is_negative();
            let mag = c.abs();
            match (first, negative) {
                (true, true) => write!(f, "-")?,
                (true, false) => {}
                (false, true) => write!(f, " - ")?,
                (false, false) => write!(f, " + ")?,
            }
            first = false;
            let show_mag = i == 0 || !mag.is_one();
            if show_mag {
                write!(f, "{mag:?}")?;
            }
            match i {
                0 => {}
                1 => write!(f, "x")?,
                _ => write!(f, "x^{i}")?,
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_traits::Zero;
    use proptest::prelude::*;

    type P = Poly<i64>;

    fn fig2() -> P {
        P::from_i64(&[105, -120, 8, 1])
    }

    #[test]
    fn eval_examples() {
        assert_eq!(fig2().eval_at(&7), 0);
        assert_eq!(fig2().eval_at(&0), 105);
        assert_eq!(P::from_i64(&[3, 2]).eval_at(&-2), -1);
    }

    #[test]
    fn multiply_examples() {
        let p = P::from_i64(&[2, 1]).multiply(&P::from_i64(&[3, 1]));
        assert_eq!(p, P::from_i64(&[6, 5, 1]));
        assert_eq!(fig2().multiply(&P::constant(1)), fig2());
        assert!(fig2().multiply(&P::zero()).is_zero());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(fig2().derivative(), P::from_i64(&[-120, 16, 3]));
        assert!(P::constant(9).derivative().is_zero());
        assert_eq!(P::monomial(4).derivative(), P::from_i64(&[0, 0, 0, 4]));
    }

    #[test]
    fn integer_root_examples() {
        assert_eq!(fig2().integer_roots(&10), vec![7]);
        assert_eq!(P::from_i64(&[1, 0, 1]).integer_roots(&100), Vec::<i64>::new());
        assert_eq!(P::from_i64(&[0, -3, 1]).integer_roots(&5), vec![0, 3]);
    }

    #[test]
    fn integer_roots_edge_cases() {
        // Repeated root, roots on the boundary, constant.
        let p = P::from_i64(&[-5, 1]).multiply(&P::from_i64(&[-5, 1])).multiply(&P::from_i64(&[5, 1]));
        assert_eq!(p.integer_roots(&5), vec![-5, 5]);
        assert_eq!(p.integer_roots(&4), Vec::<i64>::new());
        assert_eq!(P::constant(3).integer_roots(&10), Vec::<i64>::new());
        // Rational non-integer root 1/2 next to integer root 1.
        let q = P::from_i64(&[-1, 2]).multiply(&P::from_i64(&[-1, 1]));
        assert_eq!(q.integer_roots(&3), vec![1]);
        // Two roots inside one unit interval.
        let r = P::from_i64(&[-1, 3]).multiply(&P::from_i64(&[-2, 3]));
        assert_eq!(r.integer_roots(&3), Vec::<i64>::new());
    }

    #[test]
    fn integer_roots_bignum() {
        let big = BigInt::from((1u64 << 40) + 12345);
        let p = Poly::<BigInt>::monic_linear(-big.clone())
            .multiply(&Poly::monic_linear(BigInt::from(7)))
            .multiply(&Poly::from_i64(&[1, 0, 1]));
        assert_eq!(p.integer_roots(&(BigInt::from(1u64 << 41))), vec![BigInt::from(-7), big]);
    }

    #[test]
    fn row_conversion_examples() {
        assert_eq!(row_to_poly(&[105, -1200, 800, 1000], &10).unwrap(), fig2());
        assert_eq!(row_to_poly(&[7, 0, 0], &5).unwrap(), P::constant(7));
        assert_eq!(poly_to_row(&P::from_i64(&[2830, 1]), &10, 4), vec![2830, 10, 0, 0]);
        assert_eq!(poly_to_row(&P::constant(16803551), &10, 4), vec![16803551, 0, 0, 0]);
        assert_eq!(poly_to_row(&P::monomial(2), &3, 3), vec![0, 0, 9]);
        assert_eq!(
            row_to_poly(&[1i64, 2, 100], &10),
            Err(PolyError::DivisibilityViolation { index: 1 })
        );
    }

    #[test]
    fn display_is_readable() {
        assert_eq!(fig2().to_string(), "x^3 + 8x^2 - 120x + 105");
        assert_eq!(P::zero().to_string(), "0");
    }

    fn naive_eval(coeffs: &[i64], x: i64) -> i128 {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c as i128 * (x as i128).pow(i as u32))
            .sum()
    }

    proptest! {
        #[test]
        fn eval_matches_power_sum(coeffs in prop::collection::vec(-1000i64..1000, 0..6), x in -50i64..50) {
            let p = Poly::<i128>::new(coeffs.iter().map(|&c| c as i128).collect());
            prop_assert_eq!(p.eval_at(&(x as i128)), naive_eval(&coeffs, x));
        }

        #[test]
        fn row_round_trip(coeffs in prop::collection::vec(-1000i64..1000, 0..5), x in 1i64..50, extra in 0usize..3) {
            let p = Poly::<i128>::new(coeffs.iter().map(|&c| c as i128).collect());
            let width = coeffs.len() + extra;
            let row = poly_to_row(&p, &(x as i128), width);
            prop_assert_eq!(row.len(), width);
            prop_assert_eq!(row_to_poly(&row, &(x as i128)).unwrap(), p);
        }

        #[test]
        fn planted_roots_are_found_exactly(
            roots in prop::collection::vec(-60i64..60, 1..4),
            // Irreducible-or-not extra quadratic factor.
            extra in prop::option::of((-20i64..20, -20i64..20)),
            lead in 1i64..4,
            bound in 0i64..70,
        ) {
            let mut p = Poly::<BigInt>::constant(BigInt::from(lead));
            for &r in &roots {
                p = p.multiply(&Poly::monic_linear(BigInt::from(-r)));
            }
            if let Some((b, c)) = extra {
                p = p.multiply(&Poly::from_i64(&[c, b, 1]));
            }
            prop_assume!(p.degree().unwrap() <= 6);
            let expected: Vec<BigInt> = (-bound..=bound)
                .filter(|x| p.eval_at(&BigInt::from(*x)).is_zero())
                .map(BigInt::from)
                .collect();
            prop_assert_eq!(p.integer_roots(&BigInt::from(bound)), expected);
        }
    }
}
