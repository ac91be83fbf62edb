//! Scalar arithmetic shared by the solver-facing modules: exact Gaussian
//! rationals, a float fallback, parsing of `a+bi` command-line syntax, and a
//! small exact linear solver.
//!
//! Exact values are [`num_complex::Complex`] over [`num_rational::BigRational`],
//! so all four field operations are available without rounding. Wherever a
//! modulus is needed we work with the squared modulus, which stays rational.

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt;
use thiserror::Error;

/// Exact rational number of arbitrary precision.
pub type Rat = BigRational;
/// Exact Gaussian rational: complex number with rational real and imaginary parts.
pub type GaussRat = Complex<BigRational>;
/// Double-precision complex number.
pub type C64 = Complex<f64>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScalarError {
    #[error("cannot parse `{0}` as a complex number (expected forms like `2`, `-3/7`, `0.5-2i`)")]
    Parse(String),
    #[error("denominator is zero in `{0}`")]
    ZeroDenominator(String),
}

/// A complex scalar carried either exactly or in double precision.
///
/// Exact values arise from parsed input (every decimal literal is rational);
/// the float variant exists for callers that only hold approximations.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaValue {
    Exact(GaussRat),
    Approx(C64),
}

impl LambdaValue {
    pub fn from_rational(r: Rat) -> Self {
        LambdaValue::Exact(Complex::new(r, Rat::zero()))
    }

    pub fn from_integer(n: i64) -> Self {
        Self::from_rational(Rat::from_integer(BigInt::from(n)))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            LambdaValue::Exact(z) => z.is_zero(),
            LambdaValue::Approx(z) => z.norm_sqr() == 0.0,
        }
    }

    /// Squared modulus, kept exact when the value is exact.
    pub fn modulus_sq(&self) -> ModulusSq {
        match self {
            LambdaValue::Exact(z) => ModulusSq::Exact(z.norm_sqr()),
            LambdaValue::Approx(z) => ModulusSq::Approx(z.norm_sqr()),
        }
    }

    /// True when |λ| = 1 (exactly, for exact values; within 1e-12 otherwise).
    pub fn is_unit_modulus(&self) -> bool {
        match self.modulus_sq() {
            ModulusSq::Exact(m) => m.is_one(),
            ModulusSq::Approx(m) => (m - 1.0).abs() < 1e-12,
        }
    }

    pub fn to_c64(&self) -> C64 {
        match self {
            LambdaValue::Exact(z) => Complex::new(rat_to_f64(&z.re), rat_to_f64(&z.im)),
            LambdaValue::Approx(z) => *z,
        }
    }

    pub fn as_exact(&self) -> Option<&GaussRat> {
        match self {
            LambdaValue::Exact(z) => Some(z),
            LambdaValue::Approx(_) => None,
        }
    }
}

impl fmt::Display for LambdaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaValue::Exact(z) => write!(f, "{}", format_gauss(z)),
            LambdaValue::Approx(z) => write!(f, "{}+{}i", z.re, z.im),
        }
    }
}

/// Squared modulus of a [`LambdaValue`].
#[derive(Debug, Clone, PartialEq)]
pub enum ModulusSq {
    Exact(Rat),
    Approx(f64),
}

impl ModulusSq {
    pub fn to_f64(&self) -> f64 {
        match self {
            ModulusSq::Exact(m) => rat_to_f64(m),
            ModulusSq::Approx(m) => *m,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            ModulusSq::Exact(m) => m.is_one(),
            ModulusSq::Approx(m) => (*m - 1.0).abs() < 1e-12,
        }
    }
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Out-of-range ratio of huge integers; fall back on a quotient of
        // leading approximations.
        let n = r.numer().to_f64().unwrap_or(f64::MAX);
        let d = r.denom().to_f64().unwrap_or(f64::MAX);
        n / d
    })
}

/// Renders a rational as `p/q`, or just `p` when the denominator is one.
pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Renders a Gaussian rational as `a`, `bi`, or `a+bi`.
pub fn format_gauss(z: &GaussRat) -> String {
    if z.im.is_zero() {
        format_rat(&z.re)
    } else if z.re.is_zero() {
        format!("{}i", format_rat(&z.im))
    } else if z.im.is_negative() {
        format!("{}{}i", format_rat(&z.re), format_rat(&z.im))
    } else {
        format!("{}+{}i", format_rat(&z.re), format_rat(&z.im))
    }
}

/// Parses `a+bi` syntax into an exact Gaussian rational.
///
/// Each part may be an integer (`-3`), a fraction (`3/7`), or a decimal
/// (`0.25`); the imaginary part carries the suffix `i`. A bare `i` or `-i`
/// is accepted.
pub fn parse_complex(input: &str) -> Result<GaussRat, ScalarError> {
    let s: String = input.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(ScalarError::Parse(input.to_string()));
    }
    // Split into at most two signed terms.
    let mut terms: Vec<String> = Vec::new();
    let mut cur = String::new();
    for (idx, ch) in s.char_indices() {
        if (ch == '+' || ch == '-') && idx > 0 {
            let prev = s.as_bytes()[idx - 1] as char;
            if prev != '+' && prev != '-' && prev != '/' && prev != 'e' && prev != 'E' {
                terms.push(std::mem::take(&mut cur));
            }
        }
        cur.push(ch);
    }
    terms.push(cur);
    if terms.len() > 2 {
        return Err(ScalarError::Parse(input.to_string()));
    }

    let mut re = Rat::zero();
    let mut im = Rat::zero();
    let mut seen_re = false;
    let mut seen_im = false;
    for term in &terms {
        if let Some(body) = term.strip_suffix(['i', 'I']) {
            if seen_im {
                return Err(ScalarError::Parse(input.to_string()));
            }
            seen_im = true;
            im = match body {
                "" | "+" => Rat::one(),
                "-" => -Rat::one(),
                _ => parse_rational(body)?,
            };
        } else {
            if seen_re {
                return Err(ScalarError::Parse(input.to_string()));
            }
            seen_re = true;
            re = parse_rational(term)?;
        }
    }
    Ok(Complex::new(re, im))
}

/// Parses an integer, fraction, or decimal literal into an exact rational.
pub fn parse_rational(input: &str) -> Result<Rat, ScalarError> {
    let s = input.trim();
    if s.is_empty() {
        return Err(ScalarError::Parse(input.to_string()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .parse()
            .map_err(|_| ScalarError::Parse(input.to_string()))?;
        let d: BigInt = den
            .parse()
            .map_err(|_| ScalarError::Parse(input.to_string()))?;
        if d.is_zero() {
            return Err(ScalarError::ZeroDenominator(input.to_string()));
        }
        return Ok(Rat::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let sign = if int_part.starts_with('-') { -1 } else { 1 };
        let int_digits = int_part.trim_start_matches(['+', '-']);
        let int_val: BigInt = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            int_digits
                .parse()
                .map_err(|_| ScalarError::Parse(input.to_string()))?
        };
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(ScalarError::Parse(input.to_string()));
        }
        let frac_val: BigInt = frac_part
            .parse()
            .map_err(|_| ScalarError::Parse(input.to_string()))?;
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        let total = int_val * &scale + frac_val;
        return Ok(Rat::new(total * BigInt::from(sign), scale));
    }
    let n: BigInt = s
        .parse()
        .map_err(|_| ScalarError::Parse(input.to_string()))?;
    Ok(Rat::from_integer(n))
}

/// Exact square root of a rational, when it is a perfect square.
pub fn rational_sqrt(r: &Rat) -> Option<Rat> {
    if r.is_negative() {
        return None;
    }
    let num = r.numer().magnitude();
    let den = r.denom().magnitude();
    let sn = num.sqrt();
    let sd = den.sqrt();
    if &(&sn * &sn) == num && &(&sd * &sd) == den {
        Some(Rat::new(
            BigInt::from(sn),
            BigInt::from(sd),
        ))
    } else {
        None
    }
}

/// Decides `a^r − a^{r−1} > 2` exactly, where `a = sqrt(m_sq)` and `m_sq > 1`
/// is rational. Used for the sparse-expansion threshold; the comparison
/// reduces to rational inequalities after isolating the square root.
pub fn sqrt_power_gap_exceeds_two(m_sq: &Rat, r: u32) -> bool {
    debug_assert!(*m_sq > Rat::one());
    let two = Rat::from_integer(BigInt::from(2));
    if r.is_multiple_of(2) {
        // a^r = m^{r/2}, a^{r-1} = m^{(r-2)/2} sqrt(m):
        // A - B sqrt(m) > 2  <=>  A - 2 > B sqrt(m)  <=>  (A-2)^2 > B^2 m.
        let a = pow_rat(m_sq, r / 2);
        let b = pow_rat(m_sq, (r - 2) / 2);
        let lhs = &a - &two;
        if !lhs.is_positive() {
            return false;
        }
        &lhs * &lhs > &b * &b * m_sq
    } else {
        // a^r = m^{(r-1)/2} sqrt(m), a^{r-1} = m^{(r-1)/2}:
        // B sqrt(m) - A > 2  <=>  B^2 m > (A+2)^2.
        let b = pow_rat(m_sq, (r - 1) / 2);
        let a = b.clone();
        let rhs = &a + &two;
        &b * &b * m_sq > &rhs * &rhs
    }
}

fn pow_rat(r: &Rat, k: u32) -> Rat {
    let mut acc = Rat::one();
    for _ in 0..k {
        acc *= r;
    }
    acc
}

// ---------------------------------------------------------------------------
// Linear solving over an abstract field
// ---------------------------------------------------------------------------

/// The operations Gaussian elimination needs. Implemented for exact Gaussian
/// rationals (decisions are exact) and for `Complex<f64>` (zero tests use a
/// pivot threshold of 1e-12).
pub trait SolveScalar: Clone {
    fn zero() -> Self;
    fn one() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_zero_val(&self) -> bool;
    /// Magnitude used for pivot selection and residual reporting.
    fn size(&self) -> f64;
}

impl SolveScalar for GaussRat {
    fn zero() -> Self {
        Complex::new(Rat::zero(), Rat::zero())
    }
    fn one() -> Self {
        Complex::new(Rat::one(), Rat::zero())
    }
    fn add(&self, other: &Self) -> Self {
        self.clone() + other.clone()
    }
    fn sub(&self, other: &Self) -> Self {
        self.clone() - other.clone()
    }
    fn mul(&self, other: &Self) -> Self {
        self.clone() * other.clone()
    }
    fn div(&self, other: &Self) -> Self {
        self.clone() / other.clone()
    }
    fn neg(&self) -> Self {
        -self.clone()
    }
    fn is_zero_val(&self) -> bool {
        self.is_zero()
    }
    fn size(&self) -> f64 {
        rat_to_f64(&self.norm_sqr()).sqrt()
    }
}

impl SolveScalar for C64 {
    fn zero() -> Self {
        Complex::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex::new(1.0, 0.0)
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero_val(&self) -> bool {
        self.norm() < 1e-12
    }
    fn size(&self) -> f64 {
        self.norm()
    }
}

/// Result of a rectangular exact solve.
#[derive(Debug, Clone)]
pub enum LinearOutcome<S> {
    /// A particular solution; free variables are set to zero.
    Solution(Vec<S>),
    /// The system is inconsistent. `row` indexes the offending equation of
    /// the original system, `residual` is the magnitude it cannot shed.
    Inconsistent { row: usize, residual: f64 },
}

/// Gaussian elimination with partial pivoting on an `rows × cols` system
/// `A x = b`. Handles rectangular systems; reports inconsistency exactly for
/// exact scalars.
pub fn solve_linear<S: SolveScalar>(
    mut a: Vec<Vec<S>>,
    mut b: Vec<S>,
    cols: usize,
) -> LinearOutcome<S> {
    let rows = a.len();
    debug_assert_eq!(b.len(), rows);
    let mut row_origin: Vec<usize> = (0..rows).collect();
    let mut pivot_col_of_row: Vec<Option<usize>> = vec![None; rows];
    let mut rank = 0usize;

    for col in 0..cols {
        // Pick the largest remaining pivot in this column.
        let mut best: Option<(usize, f64)> = None;
        for r in rank..rows {
            let sz = a[r][col].size();
            if !a[r][col].is_zero_val() && best.is_none_or(|(_, s)| sz > s) {
                best = Some((r, sz));
            }
        }
        let Some((piv, _)) = best else { continue };
        a.swap(rank, piv);
        b.swap(rank, piv);
        row_origin.swap(rank, piv);
        let inv = S::one().div(&a[rank][col]);
        for c in col..cols {
            a[rank][c] = a[rank][c].mul(&inv);
        }
        b[rank] = b[rank].mul(&inv);
        for r in 0..rows {
            if r != rank && !a[r][col].is_zero_val() {
                let factor = a[r][col].clone();
                for c in col..cols {
                    let t = factor.mul(&a[rank][c]);
                    a[r][c] = a[r][c].sub(&t);
                }
                let t = factor.mul(&b[rank]);
                b[r] = b[r].sub(&t);
            }
        }
        pivot_col_of_row[rank] = Some(col);
        rank += 1;
        if rank == rows {
            break;
        }
    }

    for r in rank..rows {
        if !b[r].is_zero_val() {
            return LinearOutcome::Inconsistent {
                row: row_origin[r],
                residual: b[r].size(),
            };
        }
    }

    let mut x = vec![S::zero(); cols];
    for r in 0..rank {
        if let Some(col) = pivot_col_of_row[r] {
            x[col] = b[r].clone();
        }
    }
    LinearOutcome::Solution(x)
}
