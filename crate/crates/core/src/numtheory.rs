//! Arbitrary-precision number theory: inverses, integer roots, primality and
//! seeded prime generation.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::Nat;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumError {
    #[error("{a} is not invertible modulo {n}")]
    NotInvertible { a: BigUint, n: BigUint },
}

/// Witnesses that make Miller-Rabin deterministic for every n < 2^64.
const SMALL_WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Default number of random Miller-Rabin rounds above 2^64.
pub const MR_ROUNDS: usize = 40;

/// Successive odd candidates tried before a fresh sample is drawn.
const PRIME_SEARCH_WINDOW: usize = 10_000;

/// Returns `b` in `(0, n)` with `a * b = 1 (mod n)`.
pub fn mod_inverse(a: &Nat, n: &Nat) -> Result<Nat, NumError> {
    let not_invertible = || NumError::NotInvertible { a: a.clone(), n: n.clone() };
    if *n < BigUint::from(2u32) {
        return Err(not_invertible());
    }
    let ext = BigInt::from(a % n).extended_gcd(&BigInt::from(n.clone()));
    if !ext.gcd.is_one() {
        return Err(not_invertible());
    }
    let modulus = BigInt::from(n.clone());
    Ok(ext.x.mod_floor(&modulus).to_biguint().expect("mod_floor is non-negative"))
}

/// Floor of the square root.
pub fn isqrt(n: &Nat) -> Nat {
    n.sqrt()
}

/// Floor of the k-th root. Panics if `k == 0`.
pub fn inth_root(n: &Nat, k: u32) -> Nat {
    assert!(k >= 1, "root index must be positive");
    n.nth_root(k)
}

pub fn gcd(a: &Nat, b: &Nat) -> Nat {
    a.gcd(b)
}

/// Miller-Rabin. Deterministic below 2^64; above that, `rounds` bases drawn
/// from a generator seeded by `n` itself so the answer is reproducible.
pub fn is_probable_prime(n: &Nat, rounds: usize) -> bool {
    let rounds = rounds.max(1);
    if let Some(small) = n.to_u64() {
        if small < 2 {
            return false;
        }
        for &w in SMALL_WITNESSES.iter() {
            if small == w {
                return true;
            }
            if small % w == 0 {
                return false;
            }
        }
        return SMALL_WITNESSES.iter().all(|&w| mr_round(n, &BigUint::from(w)));
    }
    for &w in SMALL_WITNESSES.iter() {
        if (n % w).is_zero() {
            return false;
        }
    }
    let mut rng = ChaCha8Rng::from_seed(seed_from_nat(n));
    let two = BigUint::from(2u32);
    let upper = n - 1u32;
    (0..rounds).all(|_| {
        let base = rng.gen_biguint_range(&two, &upper);
        mr_round(n, &base)
    })
}

fn seed_from_nat(n: &Nat) -> [u8; 32] {
    let mut seed = [0u8; 32];
    for (i, byte) in n.to_bytes_le().iter().enumerate() {
        seed[i % 32] ^= byte.rotate_left((i / 32) as u32);
    }
    seed
}

/// One strong-probable-prime test of odd `n > 2` to `base`.
fn mr_round(n: &Nat, base: &Nat) -> bool {
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let mut x = base.modpow(&d, n);
    if x.is_one() || x == n_minus_1 {
        return true;
    }
    for _ in 1..s {
        x = x.modpow(&BigUint::from(2u32), n);
        if x == n_minus_1 {
            return true;
        }
        if x.is_one() {
            return false;
        }
    }
    false
}

/// Random prime of exactly `bits` bits. With `avoid_1_mod_3`, the result is
/// never congruent to 1 mod 3 (so 3 is invertible mod p - 1).
pub fn gen_prime<R: Rng + ?Sized>(bits: u64, rng: &mut R, avoid_1_mod_3: bool) -> Nat {
    assert!(bits >= 3, "need at least 3 bits for an odd prime with top bit set");
    let top = BigUint::one() << (bits - 1);
    let limit = BigUint::one() << bits;
    loop {
        let mut candidate = rng.gen_biguint(bits) | &top | BigUint::one();
        for _ in 0..PRIME_SEARCH_WINDOW {
            if candidate >= limit {
                break;
            }
            let acceptable = !avoid_1_mod_3 || (&candidate % 3u32) != BigUint::one();
            if acceptable && is_probable_prime(&candidate, MR_ROUNDS) {
                return candidate;
            }
            candidate += 2u32;
        }
    }
}

/// Number of bits in the binary representation (0 for zero).
pub fn bit_length(n: &Nat) -> u64 {
    n.bits()
}

/// Bit `i` of `n`.
pub fn bit(n: &Nat, i: u64) -> bool {
    n.bit(i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nat(v: u64) -> Nat {
        BigUint::from(v)
    }

    fn trial_division_prime(n: u64) -> bool {
        if n < 2 {
            return false;
        }
        let mut d = 2;
        while d * d <= n {
            if n % d == 0 {
                return false;
            }
            d += 1;
        }
        true
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(mod_inverse(&nat(3), &nat(786352)).unwrap(), nat(524235));
        assert_eq!(mod_inverse(&nat(1), &nat(7)).unwrap(), nat(1));
        assert_eq!(mod_inverse(&nat(2), &nat(9)).unwrap(), nat(5));
    }

    #[test]
    fn inverse_errors() {
        assert!(matches!(mod_inverse(&nat(6), &nat(9)), Err(NumError::NotInvertible { .. })));
        assert!(mod_inverse(&nat(1), &nat(1)).is_err());
    }

    #[test]
    fn root_examples() {
        assert_eq!(isqrt(&nat(1576262)), nat(1255));
        assert_eq!(isqrt(&nat(0)), nat(0));
        assert_eq!(isqrt(&nat(16)), nat(4));
        assert_eq!(inth_root(&nat(16803551), 5), nat(27));
        assert_eq!(inth_root(&nat(32), 5), nat(2));
        assert_eq!(inth_root(&nat(1), 3), nat(1));
    }

    #[test]
    fn gcd_examples() {
        assert_eq!(gcd(&nat(2837), &nat(16803551)), nat(2837));
        assert_eq!(gcd(&nat(0), &nat(12)), nat(12));
        assert_eq!(gcd(&nat(12), &nat(18)), nat(6));
    }

    #[test]
    fn primality_examples() {
        assert!(is_probable_prime(&nat(2837), MR_ROUNDS));
        assert!(!is_probable_prime(&nat(561), MR_ROUNDS));
        assert!(!is_probable_prime(&nat(1), MR_ROUNDS));
        assert!(!is_probable_prime(&nat(0), MR_ROUNDS));
        assert!(is_probable_prime(&nat(2), 1));
    }

    #[test]
    fn primality_matches_trial_division_below_20000() {
        for n in 0..20_000u64 {
            assert_eq!(is_probable_prime(&nat(n), 1), trial_division_prime(n), "n = {n}");
        }
    }

    #[test]
    fn primality_large_values() {
        // 2^89 - 1 is a Mersenne prime; 2^67 - 1 is not.
        let m89 = (BigUint::one() << 89u32) - 1u32;
        let m67 = (BigUint::one() << 67u32) - 1u32;
        assert!(is_probable_prime(&m89, MR_ROUNDS));
        assert!(!is_probable_prime(&m67, MR_ROUNDS));
        // Strong pseudoprime to bases 2..37 would need > 2^64; check a Carmichael product.
        let carmichael = nat(3_825_123_056_546_413_051);
        assert!(!is_probable_prime(&carmichael, MR_ROUNDS));
    }

    #[test]
    fn gen_prime_small_cases() {
        for seed in 0..50u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = gen_prime(3, &mut rng, false);
            assert!(p == nat(5) || p == nat(7));
            let p = gen_prime(3, &mut rng, true);
            assert_eq!(p, nat(5));
            let p = gen_prime(12, &mut rng, true).to_u64().unwrap();
            assert!((1 << 11..1 << 12).contains(&p));
            assert!(trial_division_prime(p));
            assert_eq!(p % 3, 2);
        }
    }

    #[test]
    fn gen_prime_is_deterministic() {
        let a = gen_prime(128, &mut ChaCha8Rng::seed_from_u64(9), true);
        let b = gen_prime(128, &mut ChaCha8Rng::seed_from_u64(9), true);
        assert_eq!(a, b);
        assert_eq!(a.bits(), 128);
    }

    #[test]
    fn roots_match_exhaustive_search() {
        let mut r2 = 0u64;
        let mut r3 = 0u64;
        for n in 0..=200_000u64 {
            while (r2 + 1) * (r2 + 1) <= n {
                r2 += 1;
            }
            while (r3 + 1).pow(3) <= n {
                r3 += 1;
            }
            assert_eq!(isqrt(&nat(n)), nat(r2));
            assert_eq!(inth_root(&nat(n), 3), nat(r3));
        }
    }

    proptest! {
        #[test]
        fn inverse_is_inverse(a in 1u64..1_000_000_000, n in 2u64..1_000_000_000) {
            let (a, n) = (nat(a), nat(n));
            prop_assume!(gcd(&a, &n).is_one());
            let b = mod_inverse(&a, &n).unwrap();
            prop_assert!(b < n);
            prop_assert_eq!((&a * &b) % &n, BigUint::one() % &n);
        }

        #[test]
        fn roots_bracket(n in 0u64..=1_000_000, k in 1u32..7) {
            let r = inth_root(&nat(n), k).to_u64().unwrap();
            prop_assert!(r.pow(k) <= n);
            prop_assert!((r + 1).pow(k) > n);
        }

        #[test]
        fn generated_primes_have_exact_length(bits in 3u64..80, seed: u64, flag: bool) {
            let p = gen_prime(bits, &mut ChaCha8Rng::seed_from_u64(seed), flag);
            prop_assert_eq!(p.bits(), bits);
            prop_assert!(is_probable_prime(&p, MR_ROUNDS));
            if flag {
                prop_assert!(&p % 3u32 != BigUint::one());
            }
        }
    }
}
