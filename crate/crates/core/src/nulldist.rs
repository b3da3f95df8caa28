//! Exact null distribution of the rank sum.
//!
//! Under the null hypothesis every mark's rank is an independent uniform draw
//! from `1..=m`, so the rank sum `S` of `n` marks has generating function
//! `((x + x^2 + ... + x^m) / m)^n`. The coefficients of `(x + ... + x^m)^n`
//! are kept as exact big integers with the implicit denominator `m^n`; no
//! probability in this module ever passes through a float on the decision
//! path.
//!
//! The coefficients come from a short linear recurrence satisfied by the
//! generating function, one small-integer step per coefficient.
//!
//! Practical bound: the table holds `n(m-1)+1` coefficients of roughly
//! `n·log2(m)` bits each, twice over (densities and cumulative sums). That is
//! about 1 MB at `n=100, m=100` and a few hundred MB at `n=1000, m=100`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NullDistError {
    #[error("invalid mark count n={0}: must be at least 1")]
    InvalidMarkCount(u64),
    #[error("invalid version count m={0}: must be at least 2")]
    InvalidVersionCount(u64),
    #[error("invalid probability {0:?}: must be a decimal strictly between 0 and 1")]
    InvalidProbability(String),
    #[error("rank sum {sum} outside support [{lo}, {hi}]")]
    OutOfSupport { sum: u64, lo: u64, hi: u64 },
}

/// A probability held as an exact reduced fraction, parsed from decimal text
/// so that `"0.05"` is exactly `1/20`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Probability {
    numer: BigUint,
    denom: BigUint,
    text: String,
}

impl Probability {
    /// Builds `numer/denom`; the value must lie strictly inside `(0, 1)`.
    pub fn from_ratio(numer: u64, denom: u64) -> Result<Self, NullDistError> {
        let text = format!("{numer}/{denom}");
        Self::from_parts(BigUint::from(numer), BigUint::from(denom), text)
    }

    fn from_parts(numer: BigUint, denom: BigUint, text: String) -> Result<Self, NullDistError> {
        if numer.is_zero() || denom.is_zero() || numer >= denom {
            return Err(NullDistError::InvalidProbability(text));
        }
        let g = numer.gcd(&denom);
        Ok(Self {
            numer: numer / &g,
            denom: denom / &g,
            text,
        })
    }

    pub fn numer(&self) -> &BigUint {
        &self.numer
    }

    pub fn denom(&self) -> &BigUint {
        &self.denom
    }

    /// The text the value was parsed from (or `a/b` for ratios).
    pub fn as_str(&self) -> &str {
        &self.text
    }

    /// Lossy view for display and Monte Carlo bookkeeping only.
    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.numer, &self.denom)
    }
}

impl FromStr for Probability {
    type Err = NullDistError;

    /// Accepts plain decimals (`0.05`, `.2`) and scientific notation
    /// (`5e-2`, `1.5E-3`). Binary floats are never involved.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || NullDistError::InvalidProbability(s.to_string());
        let trimmed = s.trim();
        let (mantissa, exponent) = match trimmed.find(['e', 'E']) {
            Some(pos) => {
                let exp: i64 = trimmed[pos + 1..].parse().map_err(|_| bad())?;
                (&trimmed[..pos], exp)
            }
            None => (trimmed, 0),
        };
        let (int_part, frac_part) = match mantissa.split_once('.') {
            Some((i, f)) => (i, f),
            None => (mantissa, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{int_part}{frac_part}");
        let mut numer = BigUint::parse_bytes(digits.as_bytes(), 10).ok_or_else(bad)?;
        let mut denom = BigUint::from(10u32).pow(frac_part.len() as u32);
        if exponent.unsigned_abs() > 10_000 {
            return Err(bad());
        }
        let scale = BigUint::from(10u32).pow(exponent.unsigned_abs() as u32);
        if exponent >= 0 {
            numer *= scale;
        } else {
            denom *= scale;
        }
        Self::from_parts(numer, denom, trimmed.to_string())
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl fmt::Debug for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Probability({} = {}/{})", self.text, self.numer, self.denom)
    }
}

impl Serialize for Probability {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// An exact probability `count / m^n`, deliberately left unreduced so that it
/// reads as "tuples with this property out of all tuples".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactProb {
    pub numer: BigUint,
    pub denom: BigUint,
}

impl ExactProb {
    pub fn zero(denom: BigUint) -> Self {
        Self {
            numer: BigUint::zero(),
            denom,
        }
    }

    /// Value comparison by cross-multiplication.
    pub fn cmp_value(&self, other: &ExactProb) -> Ordering {
        (&self.numer * &other.denom).cmp(&(&other.numer * &self.denom))
    }

    /// `self <= p`, decided exactly.
    pub fn le(&self, p: &Probability) -> bool {
        &self.numer * p.denom() <= p.numer() * &self.denom
    }

    pub fn equals_ratio(&self, numer: u64, denom: u64) -> bool {
        &self.numer * BigUint::from(denom) == BigUint::from(numer) * &self.denom
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.numer, &self.denom)
    }
}

impl fmt::Display for ExactProb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

fn ratio_to_f64(numer: &BigUint, denom: &BigUint) -> f64 {
    // Scale both down to at most 1000 bits so the conversion cannot overflow.
    let shift = denom.bits().saturating_sub(1000);
    let n = (numer >> shift).to_f64().unwrap_or(f64::INFINITY);
    let d = (denom >> shift).to_f64().unwrap_or(f64::INFINITY);
    n / d
}

/// Exact distribution of the sum of `n` i.i.d. uniform ranks on `1..=m`.
#[derive(Clone, Debug)]
pub struct RankSumDistribution {
    n: u64,
    m: u64,
    /// `counts[i]` is the number of tuples in `{1..m}^n` summing to `n + i`.
    counts: Vec<BigUint>,
    /// `cumulative[i] = counts[0] + ... + counts[i]`.
    cumulative: Vec<BigUint>,
    total: BigUint,
}

impl RankSumDistribution {
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    /// Smallest possible sum, `n`.
    pub fn min_sum(&self) -> u64 {
        self.n
    }

    /// Largest possible sum, `n·m`.
    pub fn max_sum(&self) -> u64 {
        self.n * self.m
    }

    /// `m^n`, the number of equally likely outcome tuples.
    pub fn total(&self) -> &BigUint {
        &self.total
    }

    /// All counts, indexed from `min_sum()`.
    pub fn counts(&self) -> &[BigUint] {
        &self.counts
    }

    /// Number of tuples whose sum is exactly `s` (zero outside the support).
    pub fn count(&self, s: u64) -> BigUint {
        match self.index_of(s) {
            Some(i) => self.counts[i].clone(),
            None => BigUint::zero(),
        }
    }

    /// `Pr(S = s)`.
    pub fn pmf(&self, s: u64) -> ExactProb {
        ExactProb {
            numer: self.count(s),
            denom: self.total.clone(),
        }
    }

    /// `Pr(S <= t)`: zero below the support, one at or above `n·m`.
    pub fn cdf(&self, t: i64) -> ExactProb {
        let numer = if t < self.n as i64 {
            BigUint::zero()
        } else if t as u64 >= self.max_sum() {
            self.total.clone()
        } else {
            self.cumulative[(t as u64 - self.n) as usize].clone()
        };
        ExactProb {
            numer,
            denom: self.total.clone(),
        }
    }

    /// Exact p-value `Pr(S' <= s)` for an observed sum inside the support.
    pub fn pvalue(&self, s: u64) -> Result<ExactProb, NullDistError> {
        if self.index_of(s).is_none() {
            return Err(NullDistError::OutOfSupport {
                sum: s,
                lo: self.min_sum(),
                hi: self.max_sum(),
            });
        }
        Ok(self.cdf(s as i64))
    }

    /// Largest `T` with `Pr(S <= T) <= p`, found by binary search over the
    /// cumulative table with exact comparisons.
    pub fn threshold(&self, p: &Probability) -> Threshold {
        // cumulative[i] * denom <= numer * total
        let budget = p.numer() * &self.total;
        let fits = |i: usize| &self.cumulative[i] * p.denom() <= budget;
        if !fits(0) {
            return Threshold {
                value: ThresholdValue::Undetectable,
                fdr_bound: p.clone(),
                exact_cdf_at_t: None,
                min_cdf: self.cdf(self.n as i64),
            };
        }
        // fits(0) holds and fits(last) fails because cumulative[last] == total.
        let (mut lo, mut hi) = (0usize, self.cumulative.len() - 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if fits(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = self.n + lo as u64;
        Threshold {
            value: ThresholdValue::At(t),
            fdr_bound: p.clone(),
            exact_cdf_at_t: Some(self.cdf(t as i64)),
            min_cdf: self.cdf(self.n as i64),
        }
    }

    fn index_of(&self, s: u64) -> Option<usize> {
        if s < self.n || s > self.max_sum() {
            None
        } else {
            Some((s - self.n) as usize)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdValue {
    At(u64),
    /// Even the minimal sum `n` has null probability above `p`.
    Undetectable,
}

#[derive(Clone, Debug)]
pub struct Threshold {
    pub value: ThresholdValue,
    pub fdr_bound: Probability,
    pub exact_cdf_at_t: Option<ExactProb>,
    /// `Pr(S <= n)`, the smallest achievable false-detection probability.
    pub min_cdf: ExactProb,
}

impl Threshold {
    pub fn t(&self) -> Option<u64> {
        match self.value {
            ThresholdValue::At(t) => Some(t),
            ThresholdValue::Undetectable => None,
        }
    }

    pub fn is_undetectable(&self) -> bool {
        self.value == ThresholdValue::Undetectable
    }

    /// Whether an observed rank sum leads to rejecting the null.
    pub fn rejects(&self, rank_sum: u64) -> bool {
        self.t().is_some_and(|t| rank_sum <= t)
    }
}

fn validate(n: u64, m: u64) -> Result<(), NullDistError> {
    if n < 1 {
        return Err(NullDistError::InvalidMarkCount(n));
    }
    if m < 2 {
        return Err(NullDistError::InvalidVersionCount(m));
    }
    Ok(())
}

/// Exact counts of `(x + x^2 + ... + x^m)^n`.
pub fn rank_sum_pdf(n: u64, m: u64) -> Result<RankSumDistribution, NullDistError> {
    validate(n, m)?;
    let counts = counts_by_recurrence(n, m);
    let mut cumulative = Vec::with_capacity(counts.len());
    let mut running = BigUint::zero();
    for c in &counts {
        running += c;
        cumulative.push(running.clone());
    }
    let total = BigUint::from(m).pow(n as u32);
    debug_assert_eq!(running, total);
    Ok(RankSumDistribution {
        n,
        m,
        counts,
        cumulative,
        total,
    })
}

const CACHE_ENTRIES: usize = 32;

/// Memoized [`rank_sum_pdf`]. Detection over many repositories sees the same
/// few `(n, m)` pairs again and again; the cache is cleared once it holds
/// `CACHE_ENTRIES` tables.
pub fn shared_pdf(n: u64, m: u64) -> Result<Arc<RankSumDistribution>, NullDistError> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), Arc<RankSumDistribution>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(d) = cache.lock().expect("cache lock").get(&(n, m)) {
        return Ok(Arc::clone(d));
    }
    // Computed outside the lock; two threads may race to build the same table.
    let d = Arc::new(rank_sum_pdf(n, m)?);
    let mut map = cache.lock().expect("cache lock");
    if map.len() >= CACHE_ENTRIES {
        map.clear();
    }
    map.insert((n, m), Arc::clone(&d));
    Ok(d)
}

/// `Pr(S <= t)` for the `(n, m)` null distribution.
pub fn cdf(dist: &RankSumDistribution, t: i64) -> ExactProb {
    dist.cdf(t)
}

/// Largest `T` with `Pr(S <= T) <= p` for `n` marks of `m` versions each.
pub fn threshold(n: u64, m: u64, p: &Probability) -> Result<Threshold, NullDistError> {
    Ok(shared_pdf(n, m)?.threshold(p))
}

/// Exact `Pr(S' <= s)` under the null.
pub fn pvalue(n: u64, m: u64, s: u64) -> Result<ExactProb, NullDistError> {
    shared_pdf(n, m)?.pvalue(s)
}

/// Coefficients `c_t` of `P = ((1 - x^m) / (1 - x))^n`, which shifted by
/// `n` are the rank-sum counts.
///
/// From `(1 - x)(1 - x^m) P' = n ((1 - x^m) - m x^(m-1) (1 - x)) P`:
///
/// `(t+1) c[t+1] = (t+n) c[t] + (n(m-1) + m - t) c[t-m] - (nm + m - 1 - t) c[t-m+1]`
///
/// Every multiplier is non-negative on `0 <= t < n(m-1)`, the left side is
/// exact, and the counts are symmetric, so only the lower half is computed.
fn counts_by_recurrence(n: u64, m: u64) -> Vec<BigUint> {
    let top = (n * (m - 1)) as usize;
    let mut c: Vec<BigUint> = Vec::with_capacity(top + 1);
    c.push(BigUint::one());
    let at = |c: &[BigUint], i: i64| if i < 0 { BigUint::zero() } else { c[i as usize].clone() };
    for t in 0..top / 2 {
        let ti = t as i64;
        let mi = m as i64;
        let mut next = &c[t] * (t as u64 + n);
        next += at(&c, ti - mi) * (n * (m - 1) + m - t as u64);
        next -= at(&c, ti - mi + 1) * (n * m + m - 1 - t as u64);
        let (q, r) = next.div_rem(&BigUint::from(t as u64 + 1));
        debug_assert!(r.is_zero());
        c.push(q);
    }
    for s in c.len()..=top {
        let mirrored = c[top - s].clone();
        c.push(mirrored);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts_u64(d: &RankSumDistribution) -> Vec<u64> {
        d.counts().iter().map(|c| c.to_u64().unwrap()).collect()
    }

    /// Brute-force enumeration of all `m^n` tuples.
    fn enumerate(n: u32, m: u64) -> Vec<u64> {
        let mut out = vec![0u64; (n as u64 * (m - 1) + 1) as usize];
        let total = m.pow(n);
        for code in 0..total {
            let mut rest = code;
            let mut sum = 0;
            for _ in 0..n {
                sum += rest % m + 1;
                rest /= m;
            }
            out[(sum - n as u64) as usize] += 1;
        }
        out
    }

    #[test]
    fn two_coins() {
        let d = rank_sum_pdf(2, 2).unwrap();
        assert_eq!(counts_u64(&d), vec![1, 2, 1]);
        assert_eq!(d.total(), &BigUint::from(4u32));
    }

    #[test]
    fn two_three_sided() {
        // enumeration of the 9 tuples
        assert_eq!(enumerate(2, 3), vec![1, 2, 3, 2, 1]);
        assert_eq!(counts_u64(&rank_sum_pdf(2, 3).unwrap()), vec![1, 2, 3, 2, 1]);
    }

    #[test]
    fn three_dice() {
        let brute = enumerate(3, 6);
        assert_eq!(brute[0], 1);
        assert_eq!(brute[10 - 3], 27);
        assert_eq!(brute[18 - 3], 1);
        let d = rank_sum_pdf(3, 6).unwrap();
        assert_eq!(counts_u64(&d), brute);
        assert_eq!(d.count(10), BigUint::from(27u32));
        assert_eq!(d.total(), &BigUint::from(216u32));
    }

    #[test]
    fn cdf_examples() {
        let d = rank_sum_pdf(3, 6).unwrap();
        assert!(d.cdf(2).numer.is_zero());
        // tuples with sum <= 5: 1 + 3 + 6
        assert_eq!(enumerate(3, 6)[..3].iter().sum::<u64>(), 10);
        assert_eq!(d.cdf(5).to_string(), "10/216");
        let d1 = rank_sum_pdf(1, 4).unwrap();
        assert!(d1.cdf(4).equals_ratio(1, 1));
        assert!(d1.cdf(100).equals_ratio(1, 1));
    }

    #[test]
    fn thresholds() {
        let p: Probability = "0.05".parse().unwrap();
        assert!(threshold(1, 2, &p).unwrap().is_undetectable());
        let t = threshold(3, 6, &p).unwrap();
        assert_eq!(t.t(), Some(5));
        assert_eq!(t.exact_cdf_at_t.as_ref().unwrap().to_string(), "10/216");
    }

    #[test]
    fn pvalues() {
        assert!(pvalue(1, 2, 1).unwrap().equals_ratio(1, 2));
        assert_eq!(pvalue(3, 6, 3).unwrap().to_string(), "1/216");
        assert!(pvalue(2, 3, 6).unwrap().equals_ratio(1, 1));
        assert!(matches!(
            pvalue(2, 3, 7),
            Err(NullDistError::OutOfSupport { .. })
        ));
        assert!(pvalue(2, 3, 1).is_err());
    }

    #[test]
    fn argument_errors() {
        assert_eq!(
            rank_sum_pdf(0, 5).unwrap_err(),
            NullDistError::InvalidMarkCount(0)
        );
        assert_eq!(
            rank_sum_pdf(3, 1).unwrap_err(),
            NullDistError::InvalidVersionCount(1)
        );
    }

    #[test]
    fn probability_parsing_is_exact() {
        let p: Probability = "0.05".parse().unwrap();
        assert_eq!((p.numer().clone(), p.denom().clone()), (1u32.into(), 20u32.into()));
        let q: Probability = "5e-2".parse().unwrap();
        assert_eq!(q.numer(), p.numer());
        assert_eq!(q.denom(), p.denom());
        let r: Probability = ".2".parse().unwrap();
        assert_eq!(r.denom(), &BigUint::from(5u32));
        for bad in ["0", "1", "1.0", "-0.1", "abc", "", ".", "0.5.1", "2e-0", "0x1"] {
            assert!(bad.parse::<Probability>().is_err(), "{bad} should be rejected");
        }
        assert!(Probability::from_ratio(1, 2).is_ok());
        assert!(Probability::from_ratio(3, 3).is_err());
    }

    #[test]
    fn boundary_comparison_is_exact() {
        // cdf(5) of three dice is exactly 10/216; a bound equal to it must admit T=5.
        let d = rank_sum_pdf(3, 6).unwrap();
        let p = Probability::from_ratio(10, 216).unwrap();
        assert_eq!(d.threshold(&p).t(), Some(5));
        let just_below = Probability::from_ratio(10 * 1_000_000 - 1, 216 * 1_000_000).unwrap();
        assert_eq!(d.threshold(&just_below).t(), Some(4));
    }
}
