//! Arithmetic of sparse binary expansions in base λ: the sparsity threshold
//! `r(λ)`, partial sums over `S_r` words, and brute-force verification that
//! distinct sparse words keep their sums apart.
//!
//! `S_r` is the language of 0/1 sequences in which every 1 is followed by at
//! least `r` zeros. Once `r ≥ r(λ)`, two distinct `S_r` sequences always have
//! distinct sums `Σ a_k λ^{-k}`; the brute-force check verifies the finite
//! shadow of that statement with rigorous tail bounds. Gap comparisons are
//! normalized to the first differing position (the comparison the underlying
//! separation argument actually makes), since truncated sums of words that
//! differ only near the end of the window are trivially close. Gaps are
//! measured in base `a = max(|λ|, 1/|λ|)`: for real λ > 1 these are the λ
//! gaps themselves, and the block-bound check certifies separation for every
//! λ of that modulus (the separation argument reaches λ only through `a`).
//!
//! All computations are exact rational when the effective modulus
//! `a = max(|λ|, 1/|λ|)` is rational (in particular for every rational λ);
//! otherwise double precision with error accounting — a PASS requires the
//! accumulated float error to stay below 2^-40.

use crate::scalar::{
    rat_to_f64, rational_sqrt, sqrt_power_gap_exceeds_two, LambdaValue, ModulusSq, Rat,
};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExpansionError {
    #[error("λ must have modulus different from 0 and 1")]
    ExcludedModulus,
    #[error("word violates the S_{r} constraint at position {position}")]
    ConstraintViolation { r: usize, position: usize },
    #[error("r = {given} is below the threshold r(λ) = {threshold}; the separation hypothesis fails")]
    BelowThreshold { given: usize, threshold: usize },
    #[error("word length must be at least r + 2 = {0}")]
    LengthTooShort(usize),
    #[error("|λ| > 1 is required for partial sums")]
    ModulusNotAboveOne,
    #[error("accumulated float error {0:.3e} exceeds the 2^-40 budget")]
    FloatBudgetExceeded(f64),
}

/// A base for sparse expansions: λ with its effective modulus
/// `a = max(|λ|, 1/|λ|)`, tracked exactly when possible.
#[derive(Debug, Clone)]
pub struct Lambda {
    value: LambdaValue,
    /// `a²` as an exact rational, when λ is exact.
    effective_modulus_sq: EffectiveModulus,
}

#[derive(Debug, Clone)]
enum EffectiveModulus {
    ExactSq(Rat),
    Approx(f64),
}

impl Lambda {
    pub fn new(value: LambdaValue) -> Result<Self, ExpansionError> {
        if value.is_zero() || value.is_unit_modulus() {
            return Err(ExpansionError::ExcludedModulus);
        }
        let effective_modulus_sq = match value.modulus_sq() {
            ModulusSq::Exact(m) => {
                if m > Rat::one() {
                    EffectiveModulus::ExactSq(m)
                } else {
                    EffectiveModulus::ExactSq(Rat::one() / m)
                }
            }
            ModulusSq::Approx(m) => EffectiveModulus::Approx(if m > 1.0 { m } else { 1.0 / m }),
        };
        Ok(Lambda {
            value,
            effective_modulus_sq,
        })
    }

    pub fn from_integer(n: i64) -> Result<Self, ExpansionError> {
        Self::new(LambdaValue::from_integer(n))
    }

    pub fn value(&self) -> &LambdaValue {
        &self.value
    }

    /// The effective modulus as a float (exact path rounds at the end).
    pub fn effective_modulus(&self) -> f64 {
        match &self.effective_modulus_sq {
            EffectiveModulus::ExactSq(m) => rat_to_f64(m).sqrt(),
            EffectiveModulus::Approx(m) => m.sqrt(),
        }
    }

    /// The effective modulus as an exact rational, when it is one.
    pub fn exact_effective_modulus(&self) -> Option<Rat> {
        match &self.effective_modulus_sq {
            EffectiveModulus::ExactSq(m) => rational_sqrt(m),
            EffectiveModulus::Approx(_) => None,
        }
    }

    /// Decides `a^r − a^{r-1} > 2` (the r(λ) recursion step), exactly when
    /// the squared modulus is exact.
    fn gap_exceeds_two(&self, r: u32) -> bool {
        match &self.effective_modulus_sq {
            EffectiveModulus::ExactSq(m) => sqrt_power_gap_exceeds_two(m, r),
            EffectiveModulus::Approx(m) => {
                let a = m.sqrt();
                a.powi(r as i32) - a.powi(r as i32 - 1) > 2.0
            }
        }
    }
}

/// Least `r ≥ 1` with `1/a + 2/a^r < 1`, where `a = max(|λ|, 1/|λ|)`.
/// Equivalently (multiplying by `a^r`): least `r` with `a^r − a^{r-1} > 2`.
pub fn r_of_lambda(lambda: &Lambda) -> usize {
    let mut r = 1u32;
    while !lambda.gap_exceeds_two(r) {
        r += 1;
        debug_assert!(r < 10_000, "a > 1 guarantees termination");
    }
    r as usize
}

/// Checks the `S_r` constraint on a finite word (the tail beyond the window
/// counts as zeros, so a trailing 1 is fine).
pub fn check_s_r(word: &[u8], r: usize) -> Result<(), ExpansionError> {
    for (k, &bit) in word.iter().enumerate() {
        if bit > 1 {
            return Err(ExpansionError::ConstraintViolation { r, position: k });
        }
        if bit == 1 {
            for j in (k + 1)..=(k + r).min(word.len().saturating_sub(1)) {
                if word[j] == 1 {
                    return Err(ExpansionError::ConstraintViolation { r, position: j });
                }
            }
        }
    }
    Ok(())
}

/// Exact or float value of `Σ a_k λ^{-k}` over a finite word (tail zeros).
pub fn partial_sum(word: &[u8], r: usize, lambda: &Lambda) -> Result<LambdaValue, ExpansionError> {
    check_s_r(word, r)?;
    let above_one = match lambda.value.modulus_sq() {
        ModulusSq::Exact(m) => m > Rat::one(),
        ModulusSq::Approx(m) => m > 1.0,
    };
    if !above_one {
        return Err(ExpansionError::ModulusNotAboveOne);
    }
    match &lambda.value {
        LambdaValue::Exact(lam) => {
            let inv = num_complex::Complex::new(Rat::one(), Rat::zero()) / lam.clone();
            let mut coeff = num_complex::Complex::new(Rat::one(), Rat::zero());
            let mut sum = num_complex::Complex::new(Rat::zero(), Rat::zero());
            for &bit in word {
                if bit == 1 {
                    sum += coeff.clone();
                }
                coeff *= inv.clone();
            }
            Ok(LambdaValue::Exact(sum))
        }
        LambdaValue::Approx(lam) => {
            let inv = num_complex::Complex::new(1.0, 0.0) / lam;
            let mut coeff = num_complex::Complex::new(1.0, 0.0);
            let mut sum = num_complex::Complex::new(0.0, 0.0);
            for &bit in word {
                if bit == 1 {
                    sum += coeff;
                }
                coeff *= inv;
            }
            Ok(LambdaValue::Approx(sum))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Report of the brute-force separation check over all length-`len` words of
/// the `S_r` language.
#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub r: usize,
    pub lambda: String,
    pub len: usize,
    pub word_count: u64,
    pub pairs_checked: u64,
    /// Minimum over word pairs of `a^d · |ΔS|`, where `d` is the first
    /// differing position — the gap after the normalization the separation
    /// argument performs.
    pub min_gap: f64,
    /// Minimum unnormalized gap `|ΔS|`, for reference.
    pub raw_min_gap: f64,
    /// Bounds any `S_r` tail beyond position `len − 1`:
    /// `(a^-len + a^-(len+r)) / (1 − a^-r)`.
    pub tail_bound: f64,
    /// Largest normalized comparison sum `Σ_{k≥1} c_k a^-k`; the separation
    /// argument needs it below `(1/a + 1/a^r)/(1 − a^-r) < 1`.
    pub max_block_sum: f64,
    pub block_bound: f64,
    pub verdict: Verdict,
}

/// Enumerates all length-`len` words of `S_r` (lexicographically, by DFS over
/// the sparsity automaton) and verifies that normalized pairwise gaps exceed
/// twice the tail bound, and that every normalized comparison satisfies the
/// block bound. Refuses `r < r(λ)`.
pub fn uniqueness_bruteforce(
    r: usize,
    lambda: &Lambda,
    len: usize,
) -> Result<UniquenessReport, ExpansionError> {
    let threshold = r_of_lambda(lambda);
    if r < threshold {
        return Err(ExpansionError::BelowThreshold {
            given: r,
            threshold,
        });
    }
    if len < r + 2 {
        return Err(ExpansionError::LengthTooShort(r + 2));
    }
    let words = enumerate_s_r_words(r, len);
    let word_count = words.len() as u64;

    match lambda.exact_effective_modulus() {
        Some(a) => uniqueness_exact(r, lambda, len, &words, word_count, &a),
        None => uniqueness_float(r, lambda, len, &words, word_count),
    }
}

/// All `S_r` words of the given length, lexicographic. The DFS state is the
/// number of positions since the last 1 (saturating at `r`), so the word set
/// matches the sparsity automaton's fresh-start language.
pub fn enumerate_s_r_words(r: usize, len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(len);
    fn rec(word: &mut Vec<u8>, since_one: usize, r: usize, len: usize, out: &mut Vec<Vec<u8>>) {
        if word.len() == len {
            out.push(word.clone());
            return;
        }
        word.push(0);
        rec(word, (since_one + 1).min(r + 1), r, len, out);
        word.pop();
        if since_one >= r {
            word.push(1);
            rec(word, 0, r, len, out);
            word.pop();
        }
    }
    rec(&mut word, r + 1, r, len, &mut out);
    out
}

fn uniqueness_exact(
    r: usize,
    lambda: &Lambda,
    len: usize,
    words: &[Vec<u8>],
    word_count: u64,
    a: &Rat,
) -> Result<UniquenessReport, ExpansionError> {
    // Sums are taken in base a (the effective modulus): the separation
    // argument only ever uses |λ| through a.
    let inv = Rat::one() / a.clone();
    let mut inv_pows = Vec::with_capacity(len + 1);
    let mut acc = Rat::one();
    for _ in 0..=len {
        inv_pows.push(acc.clone());
        acc *= &inv;
    }
    let sums: Vec<Rat> = words
        .iter()
        .map(|w| {
            w.iter()
                .enumerate()
                .filter(|(_, &b)| b == 1)
                .map(|(k, _)| inv_pows[k].clone())
                .fold(Rat::zero(), |s, t| s + t)
        })
        .collect();

    let tail_bound = tail_bound_exact(a, len, r);
    let block_bound = block_bound_exact(a, r);
    let two = Rat::from_integer(BigInt::from(2));

    let mut pairs_checked = 0u64;
    let mut min_gap: Option<Rat> = None;
    let mut raw_min_gap: Option<Rat> = None;
    let mut max_block_sum = Rat::zero();
    let mut pass = true;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            pairs_checked += 1;
            let d = first_diff(&words[i], &words[j]);
            let raw = (sums[i].clone() - &sums[j]).abs();
            // Normalize so the first differing position sits at 0.
            let mut norm = raw.clone();
            for _ in 0..d {
                norm *= a;
            }
            if raw_min_gap.as_ref().is_none_or(|g| raw < *g) {
                raw_min_gap = Some(raw);
            }
            if norm <= &two * &tail_bound {
                pass = false;
            }
            // Block bound: |Σ_{k≥1} c_k a^-k| over the normalized difference
            // pattern c_k = |a_k − b_k| must stay within the proof's bound.
            let block_sum = normalized_block_sum_exact(&words[i], &words[j], d, &inv_pows);
            if block_sum > block_bound {
                pass = false;
            }
            if block_sum > max_block_sum {
                max_block_sum = block_sum;
            }
            if min_gap.as_ref().is_none_or(|g| norm < *g) {
                min_gap = Some(norm);
            }
        }
    }
    Ok(UniquenessReport {
        r,
        lambda: lambda.value.to_string(),
        len,
        word_count,
        pairs_checked,
        min_gap: min_gap.as_ref().map_or(f64::INFINITY, rat_to_f64),
        raw_min_gap: raw_min_gap.as_ref().map_or(f64::INFINITY, rat_to_f64),
        tail_bound: rat_to_f64(&tail_bound),
        max_block_sum: rat_to_f64(&max_block_sum),
        block_bound: rat_to_f64(&block_bound),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

fn uniqueness_float(
    r: usize,
    lambda: &Lambda,
    len: usize,
    words: &[Vec<u8>],
    word_count: u64,
) -> Result<UniquenessReport, ExpansionError> {
    let a = lambda.effective_modulus();
    let inv = 1.0 / a;
    let mut inv_pows = Vec::with_capacity(len + 1);
    let mut acc = 1.0f64;
    for _ in 0..=len {
        inv_pows.push(acc);
        acc *= inv;
    }
    // Normalized gaps are accumulated directly from the difference pattern
    // (never by multiplying a tiny raw gap back up by a^d), so each value is
    // a sum of ≤ len terms bounded by 1/(1−1/a).
    let err = 4.0 * (len as f64) * f64::EPSILON / (1.0 - inv);
    let budget = 2f64.powi(-40);
    if err >= budget {
        return Err(ExpansionError::FloatBudgetExceeded(err));
    }
    let tail_bound =
        (a.powi(-(len as i32)) + a.powi(-((len + r) as i32))) / (1.0 - a.powi(-(r as i32)));
    let block_bound = (inv + a.powi(-(r as i32))) / (1.0 - a.powi(-(r as i32)));
    let mut pairs_checked = 0u64;
    let mut min_gap = f64::INFINITY;
    let mut raw_min_gap = f64::INFINITY;
    let mut max_block_sum = 0.0f64;
    let mut pass = true;
    for i in 0..words.len() {
        for j in (i + 1)..words.len() {
            pairs_checked += 1;
            let d = first_diff(&words[i], &words[j]);
            let mut norm_signed = 0.0f64;
            let mut block_sum = 0.0f64;
            for k in d..len {
                let diff = words[i][k] as i32 - words[j][k] as i32;
                norm_signed += diff as f64 * inv_pows[k - d];
                if k > d && diff != 0 {
                    block_sum += inv_pows[k - d];
                }
            }
            let norm = norm_signed.abs();
            raw_min_gap = raw_min_gap.min(norm * inv_pows[d]);
            min_gap = min_gap.min(norm);
            if norm <= 2.0 * tail_bound + 2.0 * err {
                pass = false;
            }
            max_block_sum = max_block_sum.max(block_sum);
            if block_sum > block_bound + err {
                pass = false;
            }
        }
    }
    Ok(UniquenessReport {
        r,
        lambda: lambda.value.to_string(),
        len,
        word_count,
        pairs_checked,
        min_gap,
        raw_min_gap,
        tail_bound,
        max_block_sum,
        block_bound,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
    })
}

fn first_diff(a: &[u8], b: &[u8]) -> usize {
    a.iter()
        .zip(b.iter())
        .position(|(x, y)| x != y)
        .expect("distinct words differ somewhere")
}

/// `(a^-len + a^-(len+r)) / (1 − a^-r)`.
fn tail_bound_exact(a: &Rat, len: usize, r: usize) -> Rat {
    let inv = Rat::one() / a.clone();
    let al = pow(&inv, len);
    let alr = pow(&inv, len + r);
    let ar = pow(&inv, r);
    (al + alr) / (Rat::one() - ar)
}

/// `(1/a + 1/a^r) / (1 − a^-r)` — the normalized comparison bound; below 1
/// exactly when `r ≥ r(λ)`.
fn block_bound_exact(a: &Rat, r: usize) -> Rat {
    let inv = Rat::one() / a.clone();
    let ar = pow(&inv, r);
    (inv.clone() + ar.clone()) / (Rat::one() - ar)
}

fn pow(x: &Rat, k: usize) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..k {
        acc *= x;
    }
    acc
}

/// Normalized difference sum `Σ_{k≥1} c_k a^-k`, `c_k = |a_{d+k} − b_{d+k}|`.
fn normalized_block_sum_exact(w1: &[u8], w2: &[u8], d: usize, inv_pows: &[Rat]) -> Rat {
    let mut sum = Rat::zero();
    for k in (d + 1)..w1.len() {
        if w1[k] != w2[k] {
            sum += inv_pows[k - d].clone();
        }
    }
    sum
}
