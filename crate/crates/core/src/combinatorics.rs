//! Exact and log-space combinatorial kernels.
//!
//! Every closed-form probability in this crate reduces to ratios of binomial
//! coefficients. Small instances are evaluated exactly with big integers; large
//! ones (N = 1000 photons over 10⁵ modes) only in log space, where the values
//! are far outside the range of `f64`.

use std::fmt;
use std::ops::{Add, Mul};

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::fock_core::ModeVector;

/// Below this `n + m` the falling ratio is always evaluated through exact integers.
pub const EXACT_CROSSOVER: usize = 200;

/// Exact non-negative integer.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BigCount(BigUint);

impl BigCount {
    pub fn zero() -> Self {
        BigCount(BigUint::zero())
    }

    pub fn one() -> Self {
        BigCount(BigUint::one())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    pub fn into_biguint(self) -> BigUint {
        self.0
    }

    /// `None` when the value does not fit in a `usize`.
    pub fn to_usize(&self) -> Option<usize> {
        self.0.to_usize()
    }

    /// Nearest `f64`; `inf` past `f64::MAX`.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }

    /// Natural log, accurate to a few ulp at any magnitude. `-inf` for zero.
    pub fn ln(&self) -> f64 {
        if self.0.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = self.0.bits();
        if bits <= 1000 {
            return self.to_f64().ln();
        }
        let shift = bits - 64;
        let top = (&self.0 >> shift).to_f64().expect("64-bit value fits f64");
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }

    /// `self / other` rounded to `f64`, correct to within one ulp even when both
    /// operands overflow `f64`.
    pub fn ratio_to_f64(&self, other: &BigCount) -> f64 {
        ratio_to_f64(&self.0, &other.0)
    }
}

impl From<u64> for BigCount {
    fn from(v: u64) -> Self {
        BigCount(BigUint::from(v))
    }
}

impl From<BigUint> for BigCount {
    fn from(v: BigUint) -> Self {
        BigCount(v)
    }
}

impl PartialEq<u64> for BigCount {
    fn eq(&self, other: &u64) -> bool {
        self.0 == BigUint::from(*other)
    }
}

impl fmt::Display for BigCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Add for BigCount {
    type Output = BigCount;
    fn add(self, rhs: BigCount) -> BigCount {
        BigCount(self.0 + rhs.0)
    }
}

impl<'a> Add<&'a BigCount> for BigCount {
    type Output = BigCount;
    fn add(self, rhs: &'a BigCount) -> BigCount {
        BigCount(self.0 + &rhs.0)
    }
}

impl Mul for BigCount {
    type Output = BigCount;
    fn mul(self, rhs: BigCount) -> BigCount {
        BigCount(self.0 * rhs.0)
    }
}

impl<'a> Mul<&'a BigCount> for BigCount {
    type Output = BigCount;
    fn mul(self, rhs: &'a BigCount) -> BigCount {
        BigCount(self.0 * &rhs.0)
    }
}

impl std::iter::Sum for BigCount {
    fn sum<I: Iterator<Item = BigCount>>(iter: I) -> BigCount {
        iter.fold(BigCount::zero(), |acc, x| acc + x)
    }
}

fn ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    assert!(!den.is_zero(), "division by zero");
    if num.is_zero() {
        return 0.0;
    }
    // Scale so the integer quotient carries at least 64 significant bits.
    let shift = 64 + den.bits() as i64 - num.bits() as i64;
    let q = if shift >= 0 {
        (num << shift as u64) / den
    } else {
        num / (den << (-shift) as u64)
    };
    let q = q.to_f64().expect("quotient fits f64");
    scale_by_pow2(q, -shift)
}

fn scale_by_pow2(mut x: f64, mut exp: i64) -> f64 {
    // Step in chunks to stay clear of intermediate overflow/underflow.
    while exp > 1000 {
        x *= 2f64.powi(1000);
        exp -= 1000;
    }
    while exp < -1000 {
        x *= 2f64.powi(-1000);
        exp += 1000;
    }
    x * 2f64.powi(exp as i32)
}

/// Exact binomial coefficient `C(n, k)`; zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> BigCount {
    if k > n {
        return BigCount::zero();
    }
    let k = k.min(n - k);
    if k <= 256 {
        BigCount(binomial_multiplicative(n, k))
    } else {
        BigCount(binomial_prime_powers(n, k))
    }
}

fn binomial_multiplicative(n: u64, k: u64) -> BigUint {
    let mut acc = BigUint::one();
    for i in 1..=k {
        // acc * (n - k + i) is divisible by i after the multiplication.
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

/// Legendre's formula: the exponent of prime `p` in `C(n, k)` is the number of
/// borrows when subtracting `k` from `n` in base `p`.
fn binomial_prime_powers(n: u64, k: u64) -> BigUint {
    let primes = sieve(n);
    let mut words: Vec<u64> = Vec::new();
    let mut word: u64 = 1;
    for p in primes {
        let mut exp = 0u32;
        let mut pk = p;
        loop {
            exp += (n / pk - k / pk - (n - k) / pk) as u32;
            match pk.checked_mul(p) {
                Some(next) if next <= n => pk = next,
                _ => break,
            }
        }
        for _ in 0..exp {
            match word.checked_mul(p) {
                Some(w) => word = w,
                None => {
                    words.push(word);
                    word = p;
                }
            }
        }
    }
    words.push(word);
    product_tree(words)
}

fn product_tree(words: Vec<u64>) -> BigUint {
    let mut level: Vec<BigUint> = words.into_iter().map(BigUint::from).collect();
    if level.is_empty() {
        return BigUint::one();
    }
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a * b),
                None => next.push(a),
            }
        }
        level = next;
    }
    level.pop().unwrap()
}

fn sieve(n: u64) -> Vec<u64> {
    let n = n as usize;
    if n < 2 {
        return Vec::new();
    }
    let mut composite = vec![false; n + 1];
    let mut primes = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            primes.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    primes
}

/// Number of length-`parts` non-negative vectors summing to `total`: `C(total+parts−1, parts−1)`.
pub fn count_compositions(total: usize, parts: usize) -> Result<BigCount> {
    if parts == 0 {
        return Err(Error::ZeroModes);
    }
    Ok(binomial((total + parts - 1) as u64, (parts - 1) as u64))
}

/// All length-`parts` vectors summing to `total`, in descending lexicographic order.
pub fn compositions(total: usize, parts: usize) -> Result<Compositions> {
    if parts == 0 {
        return Err(Error::ZeroModes);
    }
    let mut current = vec![0usize; parts];
    current[0] = total;
    Ok(Compositions {
        current,
        started: false,
        done: false,
    })
}

/// Iterator returned by [`compositions`].
#[derive(Debug, Clone)]
pub struct Compositions {
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl Iterator for Compositions {
    type Item = ModeVector;

    fn next(&mut self) -> Option<ModeVector> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(ModeVector::new(self.current.clone()));
        }
        let m = self.current.len();
        for i in (0..m - 1).rev() {
            if self.current[i] > 0 {
                self.current[i] -= 1;
                let tail: usize = self.current[i + 1..].iter().sum();
                for c in &mut self.current[i + 1..] {
                    *c = 0;
                }
                self.current[i + 1] = tail + 1;
                return Some(ModeVector::new(self.current.clone()));
            }
        }
        self.done = true;
        None
    }
}

/// A probability (or any non-negative quantity) held as its natural log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogProb {
    log_value: f64,
    is_zero: bool,
}

impl LogProb {
    pub const ZERO: LogProb = LogProb {
        log_value: f64::NEG_INFINITY,
        is_zero: true,
    };
    pub const ONE: LogProb = LogProb {
        log_value: 0.0,
        is_zero: false,
    };

    pub fn from_ln(log_value: f64) -> Self {
        if log_value == f64::NEG_INFINITY {
            LogProb::ZERO
        } else {
            LogProb {
                log_value,
                is_zero: false,
            }
        }
    }

    pub fn from_value(p: f64) -> Self {
        assert!(p >= 0.0, "negative value {p} cannot be held in log space");
        if p == 0.0 {
            LogProb::ZERO
        } else {
            LogProb::from_ln(p.ln())
        }
    }

    pub fn ln(&self) -> f64 {
        self.log_value
    }

    pub fn log10(&self) -> f64 {
        self.log_value / std::f64::consts::LN_10
    }

    pub fn is_zero(&self) -> bool {
        self.is_zero
    }

    /// May underflow to `0.0` even when [`is_zero`](Self::is_zero) is false.
    pub fn value(&self) -> f64 {
        if self.is_zero {
            0.0
        } else {
            self.log_value.exp()
        }
    }
}

/// Log-sum-exp addition.
impl Add for LogProb {
    type Output = LogProb;
    fn add(self, other: LogProb) -> LogProb {
        match (self.is_zero, other.is_zero) {
            (true, _) => other,
            (_, true) => self,
            _ => {
                let (hi, lo) = if self.log_value >= other.log_value {
                    (self.log_value, other.log_value)
                } else {
                    (other.log_value, self.log_value)
                };
                LogProb::from_ln(hi + (lo - hi).exp().ln_1p())
            }
        }
    }
}

impl Mul for LogProb {
    type Output = LogProb;
    fn mul(self, rhs: LogProb) -> LogProb {
        if self.is_zero || rhs.is_zero {
            LogProb::ZERO
        } else {
            LogProb::from_ln(self.log_value + rhs.log_value)
        }
    }
}

fn check_falling_args(n: usize, m: usize, k: usize) {
    assert!(m >= 1, "falling ratio needs at least one mode");
    assert!(
        (1..=n).contains(&k),
        "falling ratio term index k={k} outside 1..={n}"
    );
}

/// `∏_{j<k} (n−j)/(n+m−1−j)`: the weight of a `k`-photon noise arrangement in
/// the false-alarm sum. Exact arithmetic below [`EXACT_CROSSOVER`], log-space above.
///
/// Panics unless `1 ≤ k ≤ n` and `m ≥ 1`.
pub fn falling_ratio_term(n: usize, m: usize, k: usize) -> LogProb {
    if n + m <= EXACT_CROSSOVER {
        let (num, den) = falling_ratio_exact(n, m, k);
        LogProb::from_value(num.ratio_to_f64(&den))
    } else {
        falling_ratio_log(n, m, k)
    }
}

/// Log-space route, valid at any scale.
pub fn falling_ratio_log(n: usize, m: usize, k: usize) -> LogProb {
    check_falling_args(n, m, k);
    LogProb::from_ln(falling_log_terms(n, m).take(k).sum())
}

fn falling_log_terms(n: usize, m: usize) -> impl Iterator<Item = f64> {
    // the rounded ratio carries one ulp of relative error, so each ln is off by about one ulp
    (0..n).map(move |j| ((n - j) as f64 / (n + m - 1 - j) as f64).ln())
}

/// Exact route: `(C(n−k+m−1, m−1), C(n+m−1, m−1))`.
pub fn falling_ratio_exact(n: usize, m: usize, k: usize) -> (BigCount, BigCount) {
    check_falling_args(n, m, k);
    let num = binomial((n - k + m - 1) as u64, (m - 1) as u64);
    let den = binomial((n + m - 1) as u64, (m - 1) as u64);
    (num, den)
}

/// All coefficients `k = 1..=n`, each identical to `falling_ratio_term(n, m, k)`.
pub fn falling_ratio_terms(n: usize, m: usize) -> Vec<LogProb> {
    assert!(m >= 1, "falling ratio needs at least one mode");
    if n + m <= EXACT_CROSSOVER {
        return (1..=n).map(|k| falling_ratio_term(n, m, k)).collect();
    }
    let mut acc = 0.0;
    falling_log_terms(n, m)
        .map(|t| {
            acc += t;
            LogProb::from_ln(acc)
        })
        .collect()
}
