//! Noether-Lefschetz generating series for prime-discriminant K3^[2]
//! families: the weight-11 monomial basis in `E_1, E_3, Delta_p`, the
//! support-constrained ("plus") subspace, determination of the
//! Debarre-Voisin and cubic-fourfold series, and the HLS classification.

use crate::lattice::{disc_d, heegner_to_cc_coefficient, LatticeError};
use crate::qseries::{
    delta_p_series, eisenstein_e1, eisenstein_e3, legendre_chi, rat, rational_string, FracSeries,
    QError, Rational,
};
use num_traits::Zero;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NlFormsError {
    #[error(transparent)]
    Series(#[from] QError),
    #[error("support-constrained space did not stabilize between precision {lo} and {hi} (dims {dim_lo} vs {dim_hi})")]
    RankNotStabilized { lo: i64, hi: i64, dim_lo: usize, dim_hi: usize },
    #[error("constraint system is rank-deficient: rank {rank} < dimension {dim}")]
    RankDeficient { rank: usize, dim: usize },
    #[error("constraint system is inconsistent")]
    Inconsistent,
    #[error("NL number at D = {0} is beyond the verified truncation {1}")]
    BeyondTruncation(i64, i64),
    #[error("discriminant {0} is not a square modulo {1}")]
    NotASquare(i64, i64),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

pub type NResult<T> = Result<T, NlFormsError>;

/// Noether-Lefschetz generating series of a family: `NL(D)` is the
/// coefficient of `q^(D/p)`, stored on the exponent grid `1/p` and
/// verified for `D <= order`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeegnerSeries {
    pub p: i64,
    series: FracSeries,
}

impl HeegnerSeries {
    pub fn from_nl_values(p: i64, values: impl IntoIterator<Item = (i64, Rational)>, order: i64) -> Self {
        let series = FracSeries::from_coeffs(p, order + 1, values);
        HeegnerSeries { p, series }
    }

    /// Largest verified discriminant.
    pub fn max_verified(&self) -> i64 {
        self.series.order() - 1
    }

    /// `NL(D)`; errors beyond the verified range.
    pub fn nl(&self, d_value: i64) -> NResult<Rational> {
        self.series
            .coeff(d_value)
            .map_err(|_| NlFormsError::BeyondTruncation(d_value, self.max_verified()))
    }

    pub fn series(&self) -> &FracSeries {
        &self.series
    }

    /// Support check: every nonzero coefficient sits at a D with
    /// `chi_p(D) != -1`.
    pub fn support_ok(&self) -> bool {
        self.series
            .iter()
            .all(|(k, v)| v.is_zero() || legendre_chi(self.p, *k).unwrap_or(0) != -1)
    }

    /// `(D, NL(D))` table for `D <= d_max`, nonzero entries plus `D = 0`.
    pub fn table(&self, d_max: i64) -> NResult<Vec<(i64, Rational)>> {
        let mut out = Vec::new();
        for d in 0..=d_max {
            let v = self.nl(d)?;
            if d == 0 || !v.is_zero() {
                out.push((d, v));
            }
        }
        Ok(out)
    }
}

/// Exponent triples `(a, b, c)` for `E_1^a E_3^b Delta_p^c` of the given
/// weight; `Delta_p` has weight `24/(p+1)`.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    pub p: i64,
    pub weight: i64,
    pub monomials: Vec<(i64, i64, i64)>,
}

impl MonomialBasis {
    pub fn new(p: i64, weight: i64) -> Self {
        let w_delta = 24 / (p + 1);
        let mut monomials = Vec::new();
        for c in 0..=weight / w_delta {
            for b in 0..=(weight - w_delta * c) / 3 {
                let a = weight - 3 * b - w_delta * c;
                debug_assert_eq!(a + 3 * b + w_delta * c, weight);
                monomials.push((a, b, c));
            }
        }
        MonomialBasis { p, weight, monomials }
    }
}

/// Coefficient vectors (length `precision + 1`) of the weight-11 monomials.
fn monomial_vectors(p: i64, weight: i64, precision: i64) -> NResult<(MonomialBasis, Vec<Vec<Rational>>)> {
    let basis = MonomialBasis::new(p, weight);
    let order = precision + 1;
    let e1 = eisenstein_e1(p, order)?;
    let e3 = eisenstein_e3(p, order)?;
    let dp = delta_p_series(p, order)?;
    let dense = |s: &FracSeries| -> Vec<Rational> {
        (0..order).map(|n| s.coeff_int(n).unwrap()).collect()
    };
    let convolve = |a: &[Rational], b: &[Rational]| -> Vec<Rational> {
        let mut out = vec![Rational::zero(); order as usize];
        for (i, va) in a.iter().enumerate() {
            if va.is_zero() {
                continue;
            }
            for (j, vb) in b.iter().enumerate() {
                if i + j >= order as usize {
                    break;
                }
                if !vb.is_zero() {
                    out[i + j] += va * vb;
                }
            }
        }
        out
    };
    // cached powers
    let mut pow_cache = |base: &FracSeries, max: i64| -> Vec<Vec<Rational>> {
        let mut v = vec![{
            let mut one = vec![Rational::zero(); order as usize];
            one[0] = rat(1);
            one
        }];
        let b = dense(base);
        for i in 1..=max {
            let prev = v[(i - 1) as usize].clone();
            v.push(convolve(&prev, &b));
        }
        v
    };
    let max_a = basis.monomials.iter().map(|m| m.0).max().unwrap_or(0);
    let max_b = basis.monomials.iter().map(|m| m.1).max().unwrap_or(0);
    let max_c = basis.monomials.iter().map(|m| m.2).max().unwrap_or(0);
    let e1p = pow_cache(&e1, max_a);
    let e3p = pow_cache(&e3, max_b);
    let dpp = pow_cache(&dp, max_c);
    let mut vectors = Vec::new();
    for &(a, b, c) in &basis.monomials {
        let v = convolve(&convolve(&e1p[a as usize], &e3p[b as usize]), &dpp[c as usize]);
        vectors.push(v);
    }
    Ok((basis, vectors))
}

/// Kernel of an exact rational matrix (rows = constraints), as coefficient
/// vectors over the columns.
fn kernel(mut rows: Vec<Vec<Rational>>, ncols: usize) -> Vec<Vec<Rational>> {
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0usize;
    for col in 0..ncols {
        let piv = (r..rows.len()).find(|&i| !rows[i][col].is_zero());
        let piv = match piv {
            Some(p) => p,
            None => continue,
        };
        rows.swap(r, piv);
        let pv = rows[r][col].clone();
        for x in rows[r].iter_mut() {
            *x /= &pv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][col].is_zero() {
                let f = rows[i][col].clone();
                for c in 0..ncols {
                    let sub = &f * &rows[r][c];
                    rows[i][c] -= sub;
                }
            }
        }
        pivots.push(col);
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    let mut out = Vec::new();
    for fc in free {
        let mut x = vec![Rational::zero(); ncols];
        x[fc] = rat(1);
        for (i, &pc) in pivots.iter().enumerate() {
            x[pc] = -rows[i][fc].clone();
        }
        out.push(x);
    }
    out
}

/// Basis (echelonized by leading exponent) of the span of the weight-11
/// monomials whose coefficients vanish at every `n <= precision` with
/// `chi_p(n) = -1`.
pub fn plus_space_basis(p: i64, weight: i64, precision: i64) -> NResult<Vec<FracSeries>> {
    let dim_at = |prec: i64| -> NResult<Vec<Vec<Rational>>> {
        let (_, vectors) = monomial_vectors(p, weight, prec)?;
        let banned: Vec<i64> = (0..=prec).filter(|&n| legendre_chi(p, n).unwrap() == -1).collect();
        let rows: Vec<Vec<Rational>> = banned
            .iter()
            .map(|&n| vectors.iter().map(|v| v[n as usize].clone()).collect())
            .collect();
        let ker = kernel(rows, vectors.len());
        // realize the kernel combinations as coefficient vectors
        let mut series = Vec::new();
        for x in ker {
            let mut s = vec![Rational::zero(); (prec + 1) as usize];
            for (j, xj) in x.iter().enumerate() {
                if xj.is_zero() {
                    continue;
                }
                for (n, c) in vectors[j].iter().enumerate() {
                    if !c.is_zero() {
                        s[n] += xj * c;
                    }
                }
            }
            series.push(s);
        }
        Ok(series)
    };
    let lo = dim_at(precision - p)?;
    let hi = dim_at(precision)?;
    if lo.len() != hi.len() {
        return Err(NlFormsError::RankNotStabilized {
            lo: precision - p,
            hi: precision,
            dim_lo: lo.len(),
            dim_hi: hi.len(),
        });
    }
    // echelonize by leading exponent
    let mut work = hi;
    let mut out = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for (i, v) in work.iter().enumerate() {
            if let Some(lead) = v.iter().position(|x| !x.is_zero()) {
                if best.map_or(true, |(_, bl)| lead < bl) {
                    best = Some((i, lead));
                }
            }
        }
        let (bi, bl) = match best {
            Some(x) => x,
            None => break,
        };
        let mut v = work.remove(bi);
        let pv = v[bl].clone();
        for x in v.iter_mut() {
            *x /= &pv;
        }
        for w in work.iter_mut() {
            if !w[bl].is_zero() {
                let f = w[bl].clone();
                for (c, x) in w.iter_mut().enumerate() {
                    let sub = &f * &v[c];
                    *x -= sub;
                }
            }
        }
        out.push(v);
        let _ = bl;
    }
    Ok(out
        .into_iter()
        .map(|v| {
            FracSeries::from_coeffs(
                1,
                precision + 1,
                v.into_iter().enumerate().map(|(n, c)| (n as i64, c)),
            )
        })
        .collect())
}

/// Solve for the unique element of the support-constrained space matching
/// the given `(exponent, value)` constraints. Errors when the system is
/// rank-deficient (precision too small) or inconsistent.
fn solve_in_space(
    basis: &[FracSeries],
    constraints: &[(i64, Rational)],
) -> NResult<Vec<Rational>> {
    let n = basis.len();
    let mut m: Vec<Vec<Rational>> = Vec::new();
    for (e, v) in constraints {
        let mut row: Vec<Rational> = basis.iter().map(|b| b.coeff_int(*e).unwrap()).collect();
        row.push(v.clone());
        m.push(row);
    }
    // gaussian elimination with consistency check
    let mut r = 0usize;
    let mut piv_cols = Vec::new();
    for col in 0..n {
        let piv = (r..m.len()).find(|&i| !m[i][col].is_zero());
        let piv = match piv {
            Some(p) => p,
            None => continue,
        };
        m.swap(r, piv);
        let pv = m[r][col].clone();
        for x in m[r].iter_mut() {
            *x /= &pv;
        }
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for c in 0..=n {
                    let sub = &f * &m[r][c];
                    m[i][c] -= sub;
                }
            }
        }
        piv_cols.push(col);
        r += 1;
        if r == m.len() {
            break;
        }
    }
    if r < m.len() {
        // leftover rows must be all-zero including rhs
        for row in &m[r..] {
            if row.iter().any(|x| !x.is_zero()) {
                return Err(NlFormsError::Inconsistent);
            }
        }
    }
    if piv_cols.len() < n {
        return Err(NlFormsError::RankDeficient { rank: piv_cols.len(), dim: n });
    }
    let mut x = vec![Rational::zero(); n];
    for (i, &c) in piv_cols.iter().enumerate() {
        x[c] = m[i][n].clone();
    }
    Ok(x)
}

fn combine(basis: &[FracSeries], x: &[Rational]) -> FracSeries {
    let mut acc = FracSeries::zero(1, basis[0].order());
    for (b, c) in basis.iter().zip(x) {
        if !c.is_zero() {
            acc = acc.add(&b.scale(c));
        }
    }
    acc
}

/// The explicit weight-11 modular form `phi_0` (q-expansion
/// `-5 + 320q + 255420q^2 + ...`).
pub fn dv_phi0(terms: i64) -> NResult<FracSeries> {
    dv_phi01(terms).map(|(a, _)| a)
}

/// The explicit weight-11 modular form `phi_1` (q-expansion
/// `-5 + 320q^11 + 990q^12 + ...`).
pub fn dv_phi1(terms: i64) -> NResult<FracSeries> {
    dv_phi01(terms).map(|(_, b)| b)
}

fn dv_phi01(terms: i64) -> NResult<(FracSeries, FracSeries)> {
    let p = 11;
    let order = terms;
    let e1 = eisenstein_e1(p, order)?;
    let e3 = eisenstein_e3(p, order)?;
    let d = delta_p_series(p, order)?;
    let r = |n: i64, den: i64| crate::qseries::ratio(n, den);
    // polynomial expressions in (E1, E3, Delta_11) with exact coefficients
    let mono = |a: i64, b: i64, c: i64| -> FracSeries {
        e1.pow(a).unwrap().mul(&e3.pow(b).unwrap()).mul(&d.pow(c).unwrap())
    };
    let phi0 = mono(11, 0, 0).scale(&rat(-5))
        .add(&mono(8, 1, 0).scale(&rat(430)))
        .add(&mono(5, 0, 3).scale(&r(5199920, 9)))
        .add(&mono(3, 0, 4).scale(&r(-35407490, 27)))
        .add(&mono(4, 1, 2).scale(&r(49194440, 9)))
        .add(&mono(5, 2, 0).scale(&rat(248350)))
        .add(&mono(2, 1, 3).scale(&r(-596661440, 27)))
        .add(&mono(3, 2, 1).scale(&r(-306631760, 9)))
        .add(&mono(0, 1, 4).scale(&r(51243500, 3)))
        .add(&mono(1, 2, 2).scale(&r(1331452540, 27)))
        .add(&mono(2, 3, 0).scale(&r(349019440, 9)));
    let phi1 = mono(11, 0, 0).scale(&rat(-5))
        .add(&mono(8, 1, 0).scale(&rat(110)))
        .add(&mono(5, 0, 3).scale(&r(722740, 3993)))
        .add(&mono(3, 0, 4).scale(&r(-1805750, 3993)))
        .add(&mono(4, 1, 2).scale(&r(-12660620, 11979)))
        .add(&mono(5, 2, 0).scale(&rat(-990)))
        .add(&mono(1, 0, 5).scale(&r(118940, 363)))
        .add(&mono(2, 1, 3).scale(&r(5609180, 3993)))
        .add(&mono(3, 2, 1).scale(&r(29208460, 11979)))
        .add(&mono(0, 1, 4).scale(&r(3500, 33)))
        .add(&mono(2, 3, 0).scale(&r(2610980, 1089)));
    Ok((phi0, phi1))
}

/// The Debarre-Voisin Noether-Lefschetz series from the explicit modular
/// forms: `phi(q^11) = phi_0(q^11) + phi_1(q)` on the `1/11` grid, verified
/// for `D < terms`.
pub fn dv_phi(terms: i64) -> NResult<HeegnerSeries> {
    let p = 11;
    let t0 = (terms - 1) / p + 1;
    let (phi0, phi1) = dv_phi01(t0.max(terms))?;
    let mut values: BTreeMap<i64, Rational> = BTreeMap::new();
    for k in 0..t0 {
        let v = phi0.coeff_int(k)?;
        if !v.is_zero() {
            values.insert(p * k, v);
        }
    }
    for n in 0..terms {
        let v = phi1.coeff_int(n)?;
        if !v.is_zero() {
            *values.entry(n).or_insert_with(Rational::zero) += v;
        }
    }
    Ok(HeegnerSeries::from_nl_values(p, values, terms - 1))
}

/// Determine the Debarre-Voisin series from modularity and the constraints
/// `NL(0) = -10`, `NL(1) = NL(3) = NL(4) = NL(5) = NL(9) = 0` alone.
///
/// The solve happens in the support-constrained scalar space (dimension 6
/// for p = 11); the resulting vector `P` decodes to Noether-Lefschetz
/// numbers by `NL(D) = P[D]` for `11 | D` and `NL(D) = P[D]/2` otherwise.
/// Asserts uniqueness by exact rank computation.
pub fn solve_dv_from_constraints(precision: i64) -> NResult<HeegnerSeries> {
    assert!(precision >= 25, "precision must be at least 25");
    let p = 11;
    let basis = plus_space_basis(p, 11, precision)?;
    let constraints = [
        (0i64, rat(-10)),
        (1, rat(0)),
        (3, rat(0)),
        (4, rat(0)),
        (5, rat(0)),
        (9, rat(0)),
    ];
    let x = solve_in_space(&basis, &constraints)?;
    let sol = combine(&basis, &x);
    let mut values = BTreeMap::new();
    for n in 0..=precision {
        let v = sol.coeff_int(n)?;
        if v.is_zero() {
            continue;
        }
        let nl = if n % p == 0 { v } else { v / rat(2) };
        values.insert(n, nl);
    }
    Ok(HeegnerSeries::from_nl_values(p, values, precision))
}

/// Determine the cubic-fourfold series from modularity and the two values
/// `NL(0) = nl0`, `NL(3) = nl3` (p = 3; the constrained space has
/// dimension 2). Noether-Lefschetz numbers are read off the solution
/// directly.
pub fn solve_cubic_form(nl0: &Rational, nl3: &Rational, precision: i64) -> NResult<HeegnerSeries> {
    assert!(precision >= 25, "precision must be at least 25");
    let p = 3;
    let basis = plus_space_basis(p, 11, precision)?;
    let constraints = [(0i64, nl0.clone()), (3, nl3.clone())];
    let x = solve_in_space(&basis, &constraints)?;
    let sol = combine(&basis, &x);
    let mut values = BTreeMap::new();
    for n in 0..=precision {
        let v = sol.coeff_int(n)?;
        if !v.is_zero() {
            values.insert(n, v);
        }
    }
    Ok(HeegnerSeries::from_nl_values(p, values, precision))
}

/// Outcome of an NL-number lookup: `vacuous` marks pairs `(s, d)` for which
/// no lattice vector exists (non-integral discriminant), reported as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NlValue {
    pub value: Rational,
    pub vacuous: bool,
}

/// `NL_{s,d}` of the family: the coefficient at `D = (d^2 - 2ps)/4`.
/// Non-integral `D` yields zero with the `vacuous` flag set; `D` beyond
/// the verified truncation is an error.
pub fn nl_number(phi: &HeegnerSeries, s: &Rational, d: i64) -> NResult<NlValue> {
    match disc_d(phi.p, d, s) {
        Ok(dd) => Ok(NlValue { value: phi.nl(dd.d_value)?, vacuous: false }),
        Err(LatticeError::NoLatticeVector(_)) => {
            Ok(NlValue { value: Rational::zero(), vacuous: true })
        }
        Err(e) => Err(e.into()),
    }
}

/// Degrees of the first-type divisors, with the set of `e` the counting
/// formula cannot produce ("absent").
#[derive(Debug, Clone)]
pub struct NlFirstTypeVector {
    pub values: BTreeMap<i64, Rational>,
    pub absent: BTreeSet<i64>,
}

/// Invert the upper-triangular relation `NL(D) = sum_e coeff(D, e) C_{2e}`
/// for the first-type degrees `C^pi_{2e}`, `e <= e_max`.
pub fn heegner_to_first_type(phi: &HeegnerSeries, e_max: i64) -> NResult<NlFirstTypeVector> {
    let p = phi.p;
    let mut values: BTreeMap<i64, Rational> = BTreeMap::new();
    let mut absent: BTreeSet<i64> = BTreeSet::new();
    for e in 1..=e_max {
        if legendre_chi(p, e)? == -1 {
            continue; // not in the domain
        }
        let alpha = (0..p).find(|a| (a * a - e).rem_euclid(p) == 0).unwrap();
        let diag = heegner_to_cc_coefficient(p, e, alpha, e)?;
        match diag {
            None => {
                absent.insert(e);
            }
            Some(diag) => {
                assert!(diag > 0, "diagonal coefficient must be positive");
                // NL(e) = sum_{e' <= e} coeff(e, e') C_{2e'}
                let mut rest = Rational::zero();
                for (e2, c2) in &values {
                    if let Some(c) = heegner_to_cc_coefficient(p, e, alpha, *e2)? {
                        rest += rat(c) * c2;
                    }
                }
                let c_e = (phi.nl(e)? - rest) / rat(diag);
                values.insert(e, c_e);
            }
        }
    }
    Ok(NlFirstTypeVector { values, absent })
}

/// Classification of a first-type divisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HlsStatus {
    /// degree vanishes on the pencil: HLS divisor
    Hls,
    /// positive degree on the pencil: not HLS
    NotHls,
    /// the counting formula never produces this divisor
    Absent,
}

#[derive(Debug, Clone)]
pub struct HlsEntry {
    pub e: i64,
    pub c_value: Option<Rational>,
    pub status: HlsStatus,
}

/// Per-`e` HLS classification: `C_{2e}` is HLS iff its degree on the
/// pencil vanishes.
pub fn hls_report(phi: &HeegnerSeries, e_max: i64) -> NResult<Vec<HlsEntry>> {
    let ft = heegner_to_first_type(phi, e_max)?;
    let mut out = Vec::new();
    for e in 1..=e_max {
        if legendre_chi(phi.p, e)? == -1 {
            continue;
        }
        if ft.absent.contains(&e) {
            out.push(HlsEntry { e, c_value: None, status: HlsStatus::Absent });
        } else if let Some(v) = ft.values.get(&e) {
            let status = if v.is_zero() { HlsStatus::Hls } else { HlsStatus::NotHls };
            out.push(HlsEntry { e, c_value: Some(v.clone()), status });
        }
    }
    Ok(out)
}

/// CSV rendering of a `(D, NL)` table.
pub fn nl_table_csv(table: &[(i64, Rational)]) -> String {
    let mut s = String::from("D,NL\n");
    for (d, v) in table {
        s.push_str(&format!("{},{}\n", d, rational_string(v)));
    }
    s
}
