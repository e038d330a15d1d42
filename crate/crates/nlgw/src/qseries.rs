//! Exact-rational formal series in one variable with fractional exponents,
//! the classical q-series built from them, and elementary number theory
//! helpers.
//!
//! A [`FracSeries`] stores coefficients on a fixed exponent grid `1/N`:
//! the coefficient map is keyed by the exponent *numerator*, and every
//! series carries an explicit truncation `order` (coefficients at exponent
//! numerator `>= order` are unknown, not zero). Requesting a coefficient
//! beyond the truncation is an error, never a silent zero.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// Exact rational scalar used throughout the crate.
pub type Rational = BigRational;

/// Shorthand for an integer-valued [`Rational`].
pub fn rat(n: i64) -> Rational {
    BigRational::from_integer(BigInt::from(n))
}

/// `n/d` as a [`Rational`].
pub fn ratio(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Canonical `num/den` rendering (used by all serialized output).
pub fn rational_string(x: &Rational) -> String {
    if x.denom().is_one() {
        format!("{}", x.numer())
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QError {
    #[error("coefficient at exponent numerator {wanted} requested, series only known below {order}")]
    Truncation { wanted: i64, order: i64 },
    #[error("cannot invert a series with no nonzero coefficient")]
    NotInvertible,
    #[error("truncation must allow at least one coefficient")]
    EmptyTruncation,
    #[error("{0} is not an odd prime")]
    NotOddPrime(i64),
}

pub type QResult<T> = Result<T, QError>;

/// Moebius function.
pub fn moebius(k: u64) -> i64 {
    assert!(k >= 1, "moebius needs k >= 1");
    let mut m = k;
    let mut res = 1i64;
    let mut p = 2u64;
    while p * p <= m {
        if m % p == 0 {
            m /= p;
            if m % p == 0 {
                return 0;
            }
            res = -res;
        }
        p += 1;
    }
    if m > 1 {
        res = -res;
    }
    res
}

/// Divisors of `n` in increasing order.
pub fn divisors(n: u64) -> Vec<u64> {
    assert!(n >= 1);
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n % d == 0 {
            small.push(d);
            if d != n / d {
                large.push(n / d);
            }
        }
        d += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

fn is_odd_prime(p: i64) -> bool {
    if p < 3 || p % 2 == 0 {
        return false;
    }
    let mut d = 3;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

/// Legendre symbol `(n/p)` for an odd prime `p`, via Euler's criterion.
pub fn legendre_chi(p: i64, n: i64) -> QResult<i64> {
    if !is_odd_prime(p) {
        return Err(QError::NotOddPrime(p));
    }
    let n = n.rem_euclid(p);
    if n == 0 {
        return Ok(0);
    }
    // n^((p-1)/2) mod p
    let mut base = n as i128;
    let mut exp = (p - 1) / 2;
    let m = p as i128;
    let mut acc = 1i128;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % m;
        }
        base = base * base % m;
        exp >>= 1;
    }
    Ok(if acc == 1 { 1 } else { -1 })
}

/// Formal series `sum c_k q^(k/grid)` with exact rational coefficients,
/// known for exponent numerators `k < order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FracSeries {
    grid: i64,
    coeffs: BTreeMap<i64, Rational>,
    order: i64,
}

impl FracSeries {
    pub fn zero(grid: i64, order: i64) -> Self {
        assert!(grid >= 1);
        FracSeries { grid, coeffs: BTreeMap::new(), order }
    }

    pub fn one(grid: i64, order: i64) -> Self {
        let mut s = Self::zero(grid, order);
        if order > 0 {
            s.coeffs.insert(0, Rational::one());
        }
        s
    }

    /// `c * q^(k/grid)`.
    pub fn monomial(grid: i64, k: i64, c: Rational, order: i64) -> Self {
        let mut s = Self::zero(grid, order);
        if !c.is_zero() && k < order {
            s.coeffs.insert(k, c);
        }
        s
    }

    pub fn from_coeffs<I: IntoIterator<Item = (i64, Rational)>>(grid: i64, order: i64, it: I) -> Self {
        let mut s = Self::zero(grid, order);
        for (k, c) in it {
            if !c.is_zero() && k < order {
                s.coeffs.insert(k, c);
            }
        }
        s
    }

    pub fn grid(&self) -> i64 {
        self.grid
    }

    pub fn order(&self) -> i64 {
        self.order
    }

    pub fn iter(&self) -> impl Iterator<Item = (&i64, &Rational)> {
        self.coeffs.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Lowest stored exponent numerator, if any coefficient is nonzero.
    pub fn min_exponent(&self) -> Option<i64> {
        self.coeffs.keys().next().copied()
    }

    /// Coefficient of `q^(k/grid)`; errors past the truncation.
    pub fn coeff(&self, k: i64) -> QResult<Rational> {
        if k >= self.order {
            return Err(QError::Truncation { wanted: k, order: self.order });
        }
        Ok(self.coeffs.get(&k).cloned().unwrap_or_else(Rational::zero))
    }

    /// Coefficient of the integer exponent `n` (i.e. `q^n`).
    pub fn coeff_int(&self, n: i64) -> QResult<Rational> {
        self.coeff(n * self.grid)
    }

    /// Rescale to a finer grid: new grid must be a multiple of the old.
    pub fn with_grid(&self, grid: i64) -> Self {
        assert!(grid % self.grid == 0, "grid refinement must be a multiple");
        let f = grid / self.grid;
        FracSeries {
            grid,
            coeffs: self.coeffs.iter().map(|(k, v)| (k * f, v.clone())).collect(),
            order: self.order.saturating_mul(f),
        }
    }

    fn common_grid(a: &Self, b: &Self) -> (Self, Self) {
        let g = a.grid.lcm(&b.grid);
        (a.with_grid(g), b.with_grid(g))
    }

    pub fn add(&self, other: &Self) -> Self {
        let (a, b) = Self::common_grid(self, other);
        let order = a.order.min(b.order);
        let mut coeffs = a.coeffs;
        for (k, v) in b.coeffs {
            let e = coeffs.entry(k).or_insert_with(Rational::zero);
            *e += v;
        }
        coeffs.retain(|k, v| *k < order && !v.is_zero());
        FracSeries { grid: a.grid, coeffs, order }
    }

    pub fn neg(&self) -> Self {
        FracSeries {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, -v.clone())).collect(),
            order: self.order,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero(self.grid, self.order);
        }
        FracSeries {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * c)).collect(),
            order: self.order,
        }
    }

    /// Multiply by `q^(k/grid)`.
    pub fn shift(&self, k: i64) -> Self {
        FracSeries {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|(e, v)| (e + k, v.clone())).collect(),
            order: self.order + k,
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (a, b) = Self::common_grid(self, other);
        if a.coeffs.is_empty() || b.coeffs.is_empty() {
            // truncation of a product with a zero factor: pessimistic bound
            let ma = a.min_exponent().unwrap_or(0);
            let mb = b.min_exponent().unwrap_or(0);
            let order = (a.order + mb).min(b.order + ma);
            return Self::zero(a.grid, order);
        }
        let ma = *a.coeffs.keys().next().unwrap();
        let mb = *b.coeffs.keys().next().unwrap();
        let order = (a.order + mb).min(b.order + ma);
        let mut coeffs: BTreeMap<i64, Rational> = BTreeMap::new();
        for (ka, va) in &a.coeffs {
            for (kb, vb) in &b.coeffs {
                let k = ka + kb;
                if k >= order {
                    continue;
                }
                let e = coeffs.entry(k).or_insert_with(Rational::zero);
                *e += va * vb;
            }
        }
        coeffs.retain(|_, v| !v.is_zero());
        FracSeries { grid: a.grid, coeffs, order }
    }

    /// Integer power by repeated squaring; negative powers invert first.
    pub fn pow(&self, n: i64) -> QResult<Self> {
        if n == 0 {
            return Ok(Self::one(self.grid, self.order));
        }
        let base = if n < 0 { self.invert()? } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc: Option<Self> = None;
        let mut b = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => b.clone(),
                    Some(r) => r.mul(&b),
                });
            }
            e >>= 1;
            if e > 0 {
                b = b.mul(&b);
            }
        }
        Ok(acc.unwrap())
    }

    /// Multiplicative inverse; requires a nonzero lowest coefficient.
    pub fn invert(&self) -> QResult<Self> {
        let m = *self.coeffs.keys().next().ok_or(QError::NotInvertible)?;
        let a0 = self.coeffs[&m].clone();
        // self = a0 q^(m/g) (1 + u); relative precision order - m
        let rel = self.order - m;
        if rel <= 0 {
            return Err(QError::EmptyTruncation);
        }
        let mut u = FracSeries::zero(self.grid, rel);
        for (k, v) in &self.coeffs {
            if *k != m {
                u.coeffs.insert(k - m, v / &a0);
            }
        }
        let mut inv_unit = FracSeries::one(self.grid, rel);
        let mut term = FracSeries::one(self.grid, rel);
        loop {
            term = term.mul(&u).neg();
            if term.coeffs.is_empty() {
                break;
            }
            inv_unit = inv_unit.add(&term);
        }
        let mut out = FracSeries::zero(self.grid, rel - m);
        for (k, v) in inv_unit.coeffs {
            out.coeffs.insert(k - m, v / &a0);
        }
        Ok(out)
    }

    /// Substitute `q -> q^a` (a >= 1).
    pub fn subst_pow(&self, a: i64) -> Self {
        assert!(a >= 1);
        FracSeries {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|(k, v)| (k * a, v.clone())).collect(),
            order: self.order.saturating_mul(a),
        }
    }

    /// Serialize as `{grid, order, coeffs: [[k, "num/den"], ...]}` with
    /// exponent numerators ascending.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "grid": self.grid,
            "order": self.order,
            "coeffs": self.coeffs.iter()
                .map(|(k, v)| serde_json::json!([k, rational_string(v)]))
                .collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for FracSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            write!(f, "0")?;
        }
        for (i, (k, v)) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if *k == 0 {
                write!(f, "{}", rational_string(v))?;
            } else if self.grid == 1 {
                write!(f, "{}*q^{}", rational_string(v), k)?;
            } else {
                write!(f, "{}*q^({}/{})", rational_string(v), k, self.grid)?;
            }
        }
        write!(f, " + O(q^({}/{}))", self.order, self.grid)
    }
}

/// `prod_i (1 - q^(a_i n))^(e_i)` with the eta prefactor `q^(sum a_i e_i / 24)`,
/// i.e. the product of `eta(a_i tau)^(e_i)`, on the grid `1/24`.
///
/// `terms` is the number of integer q-powers to which the product part is
/// expanded.
pub fn eta_power_product(factors: &[(i64, i64)], terms: i64) -> QResult<FracSeries> {
    if terms < 1 {
        return Err(QError::EmptyTruncation);
    }
    let grid = 24i64;
    let order = terms * grid;
    let mut acc = FracSeries::one(grid, order);
    let mut prefactor = 0i64; // exponent numerator over 24
    for &(a, e) in factors {
        assert!(a >= 1, "eta scale must be positive");
        prefactor += a * e;
        let mut p = FracSeries::one(grid, order);
        let mut n = 1;
        while a * n * grid < order {
            let f = FracSeries::from_coeffs(
                grid,
                order,
                [(0, Rational::one()), (a * n * grid, -Rational::one())],
            );
            p = p.mul(&f);
            n += 1;
        }
        acc = acc.mul(&p.pow(e)?);
    }
    Ok(acc.shift(prefactor))
}

/// `-B_{1,chi_p} = -(1/p) sum a chi_p(a)`, the value `L(0, chi_p)`.
fn l0_chi(p: i64) -> QResult<Rational> {
    let mut s = BigInt::zero();
    for a in 1..p {
        s += BigInt::from(a * legendre_chi(p, a)?);
    }
    Ok(-Rational::new(s, BigInt::from(p)))
}

/// Weight-1 Eisenstein series for the character `chi_p`, normalized to
/// constant term 1. The coefficient in front of the divisor sum is
/// `2/L(0, chi_p)`, which specializes to 2 for p = 11.
pub fn eisenstein_e1(p: i64, terms: i64) -> QResult<FracSeries> {
    if terms < 1 {
        return Err(QError::EmptyTruncation);
    }
    let scale = rat(2) / l0_chi(p)?;
    let mut coeffs = vec![(0, Rational::one())];
    for n in 1..terms {
        let mut s = 0i64;
        for d in divisors(n as u64) {
            s += legendre_chi(p, (n as u64 / d) as i64)?;
        }
        coeffs.push((n, &scale * rat(s)));
    }
    Ok(FracSeries::from_coeffs(1, terms, coeffs))
}

/// Weight-3 Eisenstein series `sum_n q^n sum_{d|n} d^2 chi_p(n/d)`.
pub fn eisenstein_e3(p: i64, terms: i64) -> QResult<FracSeries> {
    if terms < 1 {
        return Err(QError::EmptyTruncation);
    }
    let mut coeffs = Vec::new();
    for n in 1..terms {
        let mut s = 0i64;
        for d in divisors(n as u64) {
            s += (d * d) as i64 * legendre_chi(p, (n as u64 / d) as i64)?;
        }
        coeffs.push((n, rat(s)));
    }
    Ok(FracSeries::from_coeffs(1, terms, coeffs))
}

/// `Delta_p = (eta(tau) eta(p tau))^(24/(p+1))`, weight `24/(p+1)`;
/// for p = 11 this is `eta^2 eta_11^2` of weight 2.
pub fn delta_p_series(p: i64, terms: i64) -> QResult<FracSeries> {
    let e = 24 / (p + 1);
    assert!(e * (p + 1) == 24, "p+1 must divide 24");
    // prefactor q^(e(1+p)/24) = q^1; result is integral, regrid to 1
    let s = eta_power_product(&[(1, e), (p, e)], terms)?;
    let mut coeffs = Vec::new();
    for (k, v) in s.iter() {
        assert!(k % 24 == 0, "Delta_p expansion must be integral");
        coeffs.push((k / 24, v.clone()));
    }
    Ok(FracSeries::from_coeffs(1, terms.min(s.order() / 24), coeffs))
}

/// Jacobi theta `sum_{n in Z} q^(n^2) = 1 + 2q + 2q^4 + ...`.
pub fn theta(terms: i64) -> QResult<FracSeries> {
    if terms < 1 {
        return Err(QError::EmptyTruncation);
    }
    let mut coeffs = vec![(0, Rational::one())];
    let mut n = 1i64;
    while n * n < terms {
        coeffs.push((n * n, rat(2)));
        n += 1;
    }
    Ok(FracSeries::from_coeffs(1, terms, coeffs))
}

/// `alpha(q) = sum_{odd n > 0} sigma_1(n) q^n`.
pub fn alpha_series(terms: i64) -> QResult<FracSeries> {
    if terms < 1 {
        return Err(QError::EmptyTruncation);
    }
    let mut coeffs = Vec::new();
    let mut n = 1i64;
    while n < terms {
        let s: u64 = divisors(n as u64).into_iter().sum();
        coeffs.push((n, rat(s as i64)));
        n += 2;
    }
    Ok(FracSeries::from_coeffs(1, terms, coeffs))
}

/// `G_2(q) = -1/24 + sum_{n>=1} sigma_1(n) q^n`.
pub fn g2_series(terms: i64) -> QResult<FracSeries> {
    if terms < 1 {
        return Err(QError::EmptyTruncation);
    }
    let mut coeffs = vec![(0, ratio(-1, 24))];
    for n in 1..terms {
        let s: u64 = divisors(n as u64).into_iter().sum();
        coeffs.push((n, rat(s as i64)));
    }
    Ok(FracSeries::from_coeffs(1, terms, coeffs))
}

/// `Delta(q) = q prod (1-q^n)^24`, the discriminant cusp form, on grid 1.
pub fn delta_series(terms: i64) -> QResult<FracSeries> {
    if terms < 1 {
        return Err(QError::EmptyTruncation);
    }
    let order = terms;
    let mut p = FracSeries::one(1, order);
    let mut n = 1;
    while n < order {
        let f = FracSeries::from_coeffs(1, order, [(0, Rational::one()), (n, -Rational::one())]);
        p = p.mul(&f.pow(24)?);
        n += 1;
    }
    Ok(p.shift(1))
}
