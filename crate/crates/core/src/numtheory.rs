//! Base-p digit machinery: expansions, Lucas' theorem, digit domination
//! and the zero-gap / word censuses used to build separating sets.
//!
//! Digits are always stored least-significant first, and digit words such
//! as `0 q 1` are matched in that storage order.

use crate::error::{Error, Result};

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    let mut d = 3u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

fn require_prime(p: u64) -> Result<()> {
    if is_prime(p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{p} is not prime")))
    }
}

/// A base-`p` expansion with no stored most-significant zeros.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DigitString {
    base: u64,
    digits: Vec<u64>,
}

impl DigitString {
    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn digits(&self) -> &[u64] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    /// Digit `i`, with the implicit zeros above the top digit.
    pub fn digit(&self, i: usize) -> u64 {
        self.digits.get(i).copied().unwrap_or(0)
    }

    pub fn value(&self) -> u128 {
        self.digits.iter().rev().fold(0u128, |acc, &d| acc * self.base as u128 + d as u128)
    }

    /// Builds a canonical string from arbitrary digits (least significant first).
    pub fn from_digits(base: u64, mut digits: Vec<u64>) -> Result<Self> {
        require_prime(base)?;
        if let Some(d) = digits.iter().find(|&&d| d >= base) {
            return Err(Error::invalid(format!("digit {d} out of range for base {base}")));
        }
        while digits.last() == Some(&0) {
            digits.pop();
        }
        Ok(DigitString { base, digits })
    }
}

pub fn p_ary(mut n: u64, p: u64) -> Result<DigitString> {
    require_prime(p)?;
    let mut digits = Vec::new();
    while n > 0 {
        digits.push(n % p);
        n /= p;
    }
    Ok(DigitString { base: p, digits })
}

/// Binomial coefficient of two digits, mod `p`. Both arguments are `< p`.
fn small_binom_mod(n: u64, k: u64, p: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let (mut num, mut den) = (1u64, 1u64);
    for i in 0..k {
        num = num * ((n - i) % p) % p;
        den = den * ((i + 1) % p) % p;
    }
    // den is a product of integers < p, hence a unit.
    num * crate::algebra::mod_inverse(den, p).expect("unit mod p") % p
}

/// `C(big_n, n) mod p` as the digitwise product of small binomials (Lucas).
pub fn lucas_binom(mut big_n: u64, mut n: u64, p: u64) -> Result<u64> {
    require_prime(p)?;
    Ok(lucas_unchecked(&mut big_n, &mut n, p))
}

pub(crate) fn lucas(big_n: u64, n: u64, p: u64) -> u64 {
    let (mut a, mut b) = (big_n, n);
    lucas_unchecked(&mut a, &mut b, p)
}

fn lucas_unchecked(big_n: &mut u64, n: &mut u64, p: u64) -> u64 {
    let mut acc = 1u64;
    while *n > 0 {
        let (a, b) = (*big_n % p, *n % p);
        if b > a {
            return 0;
        }
        acc = acc * small_binom_mod(a, b, p) % p;
        *big_n /= p;
        *n /= p;
    }
    acc
}

/// `n << N`: every base-`p` digit of `n` is at most the matching digit of `N`.
pub fn digit_dominates(n: u64, big_n: u64, p: u64) -> Result<bool> {
    require_prime(p)?;
    Ok(dominates(n, big_n, p))
}

pub(crate) fn dominates(mut n: u64, mut big_n: u64, p: u64) -> bool {
    while n > 0 {
        if n % p > big_n % p {
            return false;
        }
        n /= p;
        big_n /= p;
    }
    true
}

/// Zero-gap and digit-word census of a base-`p` expansion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GapCensus {
    /// Maximal zero runs of length `>= gamma` with a nonzero digit on both sides.
    pub gap_count: usize,
    /// Lowest index of each occurrence of the word `0, q, 1` (q = p - 1).
    pub zero_q_one: Vec<usize>,
    /// Lowest index of each occurrence of the word `1, 0`.
    pub one_zero: Vec<usize>,
}

/// Counts delimited zero runs and locates the words `0 q 1` and `1 0`.
///
/// A zero run touching the least-significant end, or the implicit zeros
/// above the top digit, is not a gap. Word matching does read the implicit
/// zeros, so a top digit of `1` is an occurrence of `1 0`.
pub fn gap_census(j: u64, p: u64, gamma: usize) -> Result<GapCensus> {
    require_prime(p)?;
    if gamma == 0 {
        return Err(Error::invalid("gap length must be >= 1"));
    }
    let ds = p_ary(j, p)?;
    let d = ds.digits();

    let mut gap_count = 0;
    let mut run_start: Option<usize> = None;
    for (i, &x) in d.iter().enumerate() {
        if x == 0 {
            if run_start.is_none() {
                run_start = Some(i);
            }
        } else if let Some(s) = run_start.take() {
            if s > 0 && i - s >= gamma {
                gap_count += 1;
            }
        }
    }

    let q = p - 1;
    let zero_q_one = (0..d.len())
        .filter(|&i| ds.digit(i) == 0 && ds.digit(i + 1) == q && ds.digit(i + 2) == 1)
        .collect();
    let one_zero = (0..d.len())
        .filter(|&i| ds.digit(i) == 1 && ds.digit(i + 1) == 0)
        .collect();

    Ok(GapCensus { gap_count, zero_q_one, one_zero })
}
