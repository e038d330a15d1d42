//! Truncated cohomology rings of products of projective spaces (times P^1),
//! exact z-Laurent coefficients, Weyl-equivariant operations, abelianized
//! (Martin) integration, and Chern-class/Riemann-Roch integrals for the
//! pencil total spaces.
//!
//! The abelian quotient of `V // G` is a product of projective spaces; its
//! cohomology is `Q[H_1..H_k, h] / (H_i^{n_i}, h^2)`. A [`RingElement`]
//! is a sparse map from monomials to finite Laurent polynomials in `z`.
//! Integrals over the GIT quotient are computed by Martin's formula:
//! `|W|` times the integral equals the abelian integral against the
//! product of the root line bundles.

use crate::qseries::{rat, ratio, Rational};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, OnceLock};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RingError {
    #[error("ambient mismatch between operands")]
    AmbientMismatch,
    #[error("z-exponent {z} outside the window [-{zmax}, {zmax}]")]
    ZWindowOverflow { z: i64, zmax: i64 },
    #[error("nonzero remainder dividing by H_{i} - H_{j}")]
    NonzeroRemainder { i: usize, j: usize },
    #[error("element is not Weyl-invariant")]
    NotWeylInvariant,
    #[error("Euler count is not an integer: {0}")]
    NonIntegralEuler(String),
    #[error("family has no pencil line")]
    NoPencilLine,
    #[error("singular fiber count {0} is not a non-negative integer")]
    NonIntegralFiberCount(String),
}

pub type CResult<T> = Result<T, RingError>;

/// Linear form `sum c_i H_i + c_h h` (the last entry is the `h`
/// coefficient).
pub type LinForm = Vec<i64>;

/// Shape of the truncated ring: `caps[i]` is the nilpotency order of the
/// i-th variable (`H_i^caps[i] = 0`), the final entry the order of `h`
/// (2 with a pencil line, 1 without). `deg_cap` optionally truncates by
/// total degree (used by lifted polynomial representatives). `zmax` caps
/// the z-Laurent window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingShape {
    pub caps: Vec<i64>,
    pub deg_cap: Option<i64>,
    pub zmax: i64,
}

impl RingShape {
    pub fn nvars(&self) -> usize {
        self.caps.len()
    }

    /// Top monomial exponents `caps - 1`.
    pub fn top(&self) -> Vec<i64> {
        self.caps.iter().map(|c| c - 1).collect()
    }

    pub fn top_degree(&self) -> i64 {
        self.caps.iter().map(|c| c - 1).sum()
    }

    fn admits(&self, mono: &[i64]) -> bool {
        if mono.iter().zip(&self.caps).any(|(e, c)| e >= c) {
            return false;
        }
        match self.deg_cap {
            Some(d) => mono.iter().sum::<i64>() <= d,
            None => true,
        }
    }
}

/// Description of the abelian quotient and the Weyl data of `V // G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmbientSpec {
    /// projective factor sizes: `H_i` is nilpotent of order `factors[i]`
    pub factors: Vec<i64>,
    pub has_pencil_line: bool,
    /// positive roots as linear forms in the `H_i` (no `h` component);
    /// the full root set is these together with their negatives
    pub roots: Vec<LinForm>,
    pub weyl_order: i64,
}

impl AmbientSpec {
    /// Abelian quotient of `Gr(k, n)`: `(P^{n-1})^k` with roots
    /// `H_i - H_j`, optionally times `P^1`.
    pub fn grassmannian(k: usize, n: i64, pencil: bool) -> Self {
        let nv = k + 1;
        let mut roots = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                let mut r = vec![0i64; nv];
                r[i] = 1;
                r[j] = -1;
                roots.push(r);
            }
        }
        let weyl_order = (1..=k as i64).product();
        AmbientSpec { factors: vec![n; k], has_pencil_line: pencil, roots, weyl_order }
    }

    pub fn nvars(&self) -> usize {
        self.factors.len() + 1
    }

    pub fn shape(&self) -> RingShape {
        let mut caps = self.factors.clone();
        caps.push(if self.has_pencil_line { 2 } else { 1 });
        let zmax = caps.iter().map(|c| c - 1).sum::<i64>() + 3;
        RingShape { caps, deg_cap: None, zmax }
    }

    /// Shape for lifted polynomial representatives: per-variable caps are
    /// raised by the Vandermonde degree in that variable, total degree
    /// optionally capped.
    pub fn lifted_shape(&self, deg_cap: i64) -> RingShape {
        let k = self.factors.len();
        let mut caps: Vec<i64> = self.factors.iter().map(|n| n + k as i64).collect();
        caps.push(if self.has_pencil_line { 2 } else { 1 });
        let zmax = deg_cap + self.shape().zmax;
        RingShape { caps, deg_cap: Some(deg_cap), zmax }
    }

    /// Generators of the permutation action on equal-size factors.
    fn weyl_transpositions(&self) -> Vec<(usize, usize)> {
        let k = self.factors.len();
        (0..k.saturating_sub(1))
            .filter(|&i| self.factors[i] == self.factors[i + 1])
            .map(|i| (i, i + 1))
            .collect()
    }
}

/// Element of the truncated cohomology ring with z-Laurent coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingElement {
    pub shape: RingShape,
    /// monomial exponents -> (z exponent -> coefficient)
    coeffs: BTreeMap<Vec<i64>, BTreeMap<i64, Rational>>,
}

impl RingElement {
    pub fn zero(shape: &RingShape) -> Self {
        RingElement { shape: shape.clone(), coeffs: BTreeMap::new() }
    }

    pub fn one(shape: &RingShape) -> Self {
        let mut e = Self::zero(shape);
        e.coeffs.insert(vec![0; shape.nvars()], BTreeMap::from([(0, rat(1))]));
        e
    }

    pub fn scalar(shape: &RingShape, c: Rational) -> Self {
        let mut e = Self::zero(shape);
        if !c.is_zero() {
            e.coeffs.insert(vec![0; shape.nvars()], BTreeMap::from([(0, c)]));
        }
        e
    }

    /// `c * H^mono * z^zexp`.
    pub fn term(shape: &RingShape, mono: Vec<i64>, zexp: i64, c: Rational) -> Self {
        let mut e = Self::zero(shape);
        if !c.is_zero() && shape.admits(&mono) {
            e.coeffs.insert(mono, BTreeMap::from([(zexp, c)]));
        }
        e
    }

    /// The linear form as a ring element (z-degree 0), plus `const * z`.
    pub fn linear(shape: &RingShape, form: &LinForm, z_const: i64) -> Self {
        let nv = shape.nvars();
        assert_eq!(form.len(), nv, "linear form length must match variable count");
        let mut e = Self::zero(shape);
        for (i, &c) in form.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let mut m = vec![0; nv];
            m[i] = 1;
            if shape.admits(&m) {
                e.coeffs.insert(m, BTreeMap::from([(0, rat(c))]));
            }
        }
        if z_const != 0 {
            e.coeffs
                .entry(vec![0; nv])
                .or_default()
                .insert(1, rat(z_const));
        }
        e
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, &BTreeMap<i64, Rational>)> {
        self.coeffs.iter()
    }

    pub fn coeff(&self, mono: &[i64], zexp: i64) -> Rational {
        self.coeffs
            .get(mono)
            .and_then(|zs| zs.get(&zexp))
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// The z^j part as a plain monomial map.
    pub fn z_part(&self, j: i64) -> BTreeMap<Vec<i64>, Rational> {
        let mut out = BTreeMap::new();
        for (m, zs) in &self.coeffs {
            if let Some(v) = zs.get(&j) {
                if !v.is_zero() {
                    out.insert(m.clone(), v.clone());
                }
            }
        }
        out
    }

    fn insert_raw(&mut self, mono: Vec<i64>, zexp: i64, v: Rational) {
        if v.is_zero() {
            return;
        }
        let slot = self.coeffs.entry(mono).or_default();
        let e = slot.entry(zexp).or_insert_with(Rational::zero);
        *e += v;
        if e.is_zero() {
            slot.remove(&zexp);
        }
    }

    fn prune(&mut self) {
        self.coeffs.retain(|_, zs| {
            zs.retain(|_, v| !v.is_zero());
            !zs.is_empty()
        });
    }

    pub fn add(&self, other: &Self) -> CResult<Self> {
        if self.shape != other.shape {
            return Err(RingError::AmbientMismatch);
        }
        let mut out = self.clone();
        for (m, zs) in &other.coeffs {
            for (z, v) in zs {
                out.insert_raw(m.clone(), *z, v.clone());
            }
        }
        out.prune();
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        let mut out = self.clone();
        for zs in out.coeffs.values_mut() {
            for v in zs.values_mut() {
                *v = -v.clone();
            }
        }
        out
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero(&self.shape);
        }
        let mut out = self.clone();
        for zs in out.coeffs.values_mut() {
            for v in zs.values_mut() {
                *v *= c;
            }
        }
        out
    }

    /// Ring product with nilpotency (and optional degree) truncation.
    pub fn mul(&self, other: &Self) -> CResult<Self> {
        if self.shape != other.shape {
            return Err(RingError::AmbientMismatch);
        }
        let shape = &self.shape;
        let mut out = Self::zero(shape);
        for (ma, za) in &self.coeffs {
            for (mb, zb) in &other.coeffs {
                let m: Vec<i64> = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                if !shape.admits(&m) {
                    continue;
                }
                for (zea, va) in za {
                    for (zeb, vb) in zb {
                        let z = zea + zeb;
                        if z.abs() > shape.zmax {
                            return Err(RingError::ZWindowOverflow { z, zmax: shape.zmax });
                        }
                        out.insert_raw(m.clone(), z, va * vb);
                    }
                }
            }
        }
        out.prune();
        Ok(out)
    }

    /// Geometric-series inverse `1/(1 + N)`; the constant term must be 1.
    pub fn inv_unit(&self) -> CResult<Self> {
        let nv = self.shape.nvars();
        let unit = vec![0i64; nv];
        assert_eq!(
            self.coeffs.get(&unit).and_then(|z| z.get(&0)).cloned(),
            Some(rat(1)),
            "inv_unit needs constant term 1"
        );
        let mut n = self.clone();
        n.coeffs.entry(unit.clone()).or_default().remove(&0);
        n.prune();
        let n = n.neg();
        let mut acc = Self::one(&self.shape);
        let mut term = Self::one(&self.shape);
        loop {
            term = term.mul(&n)?;
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term)?;
        }
        Ok(acc)
    }

    /// Total-degree component.
    pub fn degree_part(&self, k: i64) -> Self {
        let mut out = Self::zero(&self.shape);
        for (m, zs) in &self.coeffs {
            if m.iter().sum::<i64>() == k {
                out.coeffs.insert(m.clone(), zs.clone());
            }
        }
        out
    }

    /// Apply a permutation of the H variables (the pencil line is fixed).
    pub fn permute(&self, perm: &[usize]) -> Self {
        let nv = self.shape.nvars();
        let mut out = Self::zero(&self.shape);
        for (m, zs) in &self.coeffs {
            let mut m2 = vec![0i64; nv];
            for i in 0..perm.len() {
                m2[i] = m[perm[i]];
            }
            m2[nv - 1] = m[nv - 1];
            for (z, v) in zs {
                out.insert_raw(m2.clone(), *z, v.clone());
            }
        }
        out.prune();
        out
    }
}

/// Exact division by the Vandermonde `prod_{i<j} (H_i - H_j)` over the
/// given index pairs, asserting a zero remainder at every step. The
/// numerator must be supplied on lifted polynomial representatives (caps
/// high enough that no truncation occurred below the relevant degrees).
pub fn vandermonde_divide(numerator: &RingElement, pairs: &[(usize, usize)]) -> CResult<RingElement> {
    let mut p = numerator.clone();
    for &(i, j) in pairs {
        p = divide_binomial(&p, i, j)?;
    }
    Ok(p)
}

/// Divide by `H_i - H_j` (synthetic division in `H_i`), asserting zero
/// remainder.
fn divide_binomial(p: &RingElement, i: usize, j: usize) -> CResult<RingElement> {
    // group by exponent of H_i
    let mut by_a: BTreeMap<i64, Vec<(Vec<i64>, i64, Rational)>> = BTreeMap::new();
    let mut max_a = 0i64;
    for (m, zs) in p.iter() {
        max_a = max_a.max(m[i]);
        for (z, v) in zs {
            by_a.entry(m[i]).or_default().push((m.clone(), *z, v.clone()));
        }
    }
    let mut quotient = RingElement::zero(&p.shape);
    // carry: coefficients at the current power of H_i, keyed by (mono with
    // H_i stripped to 0... keep full monomials with m[i] = current a)
    let mut carry: HashMap<(Vec<i64>, i64), Rational> = HashMap::new();
    for a in (0..=max_a).rev() {
        let mut cur: HashMap<(Vec<i64>, i64), Rational> = carry;
        carry = HashMap::new();
        if let Some(terms) = by_a.get(&a) {
            for (m, z, v) in terms {
                let e = cur.entry((m.clone(), *z)).or_insert_with(Rational::zero);
                *e += v;
            }
        }
        cur.retain(|_, v| !v.is_zero());
        if a == 0 {
            if !cur.is_empty() {
                return Err(RingError::NonzeroRemainder { i, j });
            }
            break;
        }
        for ((m, z), v) in cur {
            let mut mq = m.clone();
            mq[i] -= 1;
            // quotient term (may exceed caps of the original quotient ring;
            // the shape here is the lifted one, so admits() governs)
            if p.shape.admits(&mq) {
                quotient.insert_raw(mq.clone(), z, v.clone());
            }
            let mut mc = mq;
            mc[j] += 1;
            carry.insert((mc, z), v);
        }
    }
    quotient.prune();
    Ok(quotient)
}

/// Coefficient of the top monomial (`prod H_i^(n_i - 1) * h`) in the z^j
/// part; `j = 0` by default through [`integrate_abelian`].
pub fn integrate_abelian_z(x: &RingElement, zexp: i64) -> Rational {
    x.coeff(&x.shape.top(), zexp)
}

/// Coefficient of the top monomial in the z^0 part: the integral over the
/// product of projective spaces.
pub fn integrate_abelian(x: &RingElement) -> Rational {
    integrate_abelian_z(x, 0)
}

// ---------------------------------------------------------------------------
// integer box-slice kernel: expansions of products of linear forms in the
// capped monomial box, used for the Martin pairing
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub(crate) struct BoxSlice {
    strides: Vec<u64>,
    caps: Vec<i64>,
    pub(crate) entries: HashMap<u64, BigInt>,
}

impl BoxSlice {
    fn index(&self, mono: &[i64]) -> Option<u64> {
        let mut idx = 0u64;
        for (e, (&c, &s)) in mono.iter().zip(self.caps.iter().zip(&self.strides)) {
            if *e < 0 || *e >= c {
                return None;
            }
            idx += *e as u64 * s;
        }
        Some(idx)
    }

    /// Expand `prod factors` (pure linear forms, no z) in the box.
    pub(crate) fn product(caps: Vec<i64>, factors: &[LinForm]) -> Self {
        let nv = caps.len();
        let mut strides = vec![0u64; nv];
        let mut acc = 1u64;
        for i in 0..nv {
            strides[i] = acc;
            acc *= caps[i] as u64;
        }
        let mut slice = BoxSlice { strides, caps, entries: HashMap::new() };
        let mut cur: HashMap<u64, BigInt> = HashMap::from([(0u64, BigInt::one())]);
        for f in factors {
            assert_eq!(f.len(), nv);
            let mut next: HashMap<u64, BigInt> =
                HashMap::with_capacity(cur.len() * 2);
            for (&idx, v) in &cur {
                // decode exponents lazily per variable
                for (i, &c) in f.iter().enumerate() {
                    if c == 0 {
                        continue;
                    }
                    let e = (idx / slice.strides[i]) % slice.caps[i] as u64;
                    if e + 1 >= slice.caps[i] as u64 {
                        continue;
                    }
                    let nidx = idx + slice.strides[i];
                    let entry = next.entry(nidx).or_insert_with(BigInt::zero);
                    *entry += v * BigInt::from(c);
                }
            }
            next.retain(|_, v| !v.is_zero());
            cur = next;
        }
        slice.entries = cur;
        slice
    }

    /// `sum_m x[m] * slice[top - m]`.
    pub(crate) fn pair_top(&self, x: &BTreeMap<Vec<i64>, Rational>) -> Rational {
        let top: Vec<i64> = self.caps.iter().map(|c| c - 1).collect();
        let mut out = Rational::zero();
        for (m, v) in x {
            let need: Vec<i64> = top.iter().zip(m).map(|(t, e)| t - e).collect();
            if need.iter().any(|e| *e < 0) {
                continue;
            }
            if let Some(idx) = self.index(&need) {
                if let Some(c) = self.entries.get(&idx) {
                    out += v * Rational::from_integer(c.clone());
                }
            }
        }
        out
    }
}

/// The full root product `prod_{alpha} c_1(L_alpha)` over positive and
/// negative roots, i.e. `prod_{positive alpha} (-alpha^2)`, as box factors
/// with sign.
fn root_product_factors(spec: &AmbientSpec) -> (Rational, Vec<LinForm>) {
    let sign = if spec.roots.len() % 2 == 0 { rat(1) } else { rat(-1) };
    let mut factors = Vec::new();
    for r in &spec.roots {
        factors.push(r.clone());
        factors.push(r.clone());
    }
    (sign, factors)
}

/// Check Weyl invariance by comparing against adjacent-transposition images.
pub fn is_weyl_invariant(spec: &AmbientSpec, x: &RingElement) -> bool {
    let k = spec.factors.len();
    for (i, j) in spec.weyl_transpositions() {
        let mut perm: Vec<usize> = (0..k).collect();
        perm.swap(i, j);
        if x.permute(&perm) != *x {
            return false;
        }
    }
    true
}

/// Martin's integration formula: the integral over `V // G` of the class
/// represented by the Weyl-invariant `x` equals
/// `(1/|W|) * integral over V//T of x * prod_alpha c_1(L_alpha)`.
/// Only the z^0 part of `x` is integrated.
pub fn martin_integrate(spec: &AmbientSpec, x: &RingElement) -> CResult<Rational> {
    if !is_weyl_invariant(spec, x) {
        return Err(RingError::NotWeylInvariant);
    }
    let (sign, factors) = root_product_factors(spec);
    let slice = BoxSlice::product(spec.shape().caps, &factors);
    let paired = slice.pair_top(&x.z_part(0));
    Ok(sign * paired / rat(spec.weyl_order))
}

// ---------------------------------------------------------------------------
// families and characteristic-class integrals
// ---------------------------------------------------------------------------

/// Declarative description of a built-in pencil or fourfold: the ambient
/// GIT quotient, the homogeneous-bundle summands as linear forms in
/// `(H_i, h)`, and the polarization.
#[derive(Debug, Clone)]
pub struct FamilySpec {
    pub name: String,
    pub ambient: AmbientSpec,
    pub bundle_summands: Vec<LinForm>,
    pub polarization: LinForm,
    kernel: Arc<OnceLock<Arc<BoxSlice>>>,
}

impl FamilySpec {
    pub fn new(
        name: &str,
        ambient: AmbientSpec,
        bundle_summands: Vec<LinForm>,
        polarization: LinForm,
    ) -> Self {
        FamilySpec {
            name: name.to_string(),
            ambient,
            bundle_summands,
            polarization,
            kernel: Arc::new(OnceLock::new()),
        }
    }

    /// Pencil of Fano varieties of lines of cubic fourfolds:
    /// `X in Gr(2,6) x P^1` cut by `Sym^3 U^dual (x) O(1)`.
    pub fn fano_pencil() -> Self {
        let ambient = AmbientSpec::grassmannian(2, 6, true);
        let summands = vec![vec![3, 0, 1], vec![2, 1, 1], vec![1, 2, 1], vec![0, 3, 1]];
        FamilySpec::new("fano-pencil", ambient, summands, vec![1, 1, 0])
    }

    /// Fano variety of lines of a single cubic fourfold (no pencil factor).
    pub fn fano_fourfold() -> Self {
        let ambient = AmbientSpec::grassmannian(2, 6, false);
        let summands = vec![vec![3, 0, 0], vec![2, 1, 0], vec![1, 2, 0], vec![0, 3, 0]];
        FamilySpec::new("fano-fourfold", ambient, summands, vec![1, 1, 0])
    }

    /// Pencil of Debarre-Voisin fourfolds: `X in Gr(6,10) x P^1` cut by
    /// `wedge^3 U^dual (x) O(1)` (20 summands `H_i + H_j + H_k + h`).
    pub fn dv_pencil() -> Self {
        let ambient = AmbientSpec::grassmannian(6, 10, true);
        let mut summands = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                for k in j + 1..6 {
                    let mut s = vec![0i64; 7];
                    s[i] = 1;
                    s[j] = 1;
                    s[k] = 1;
                    s[6] = 1;
                    summands.push(s);
                }
            }
        }
        let mut pol = vec![1i64; 7];
        pol[6] = 0;
        FamilySpec::new("dv-pencil", ambient, summands, pol)
    }

    /// A single Debarre-Voisin fourfold (no pencil factor).
    pub fn dv_fourfold() -> Self {
        let ambient = AmbientSpec::grassmannian(6, 10, false);
        let mut summands = Vec::new();
        for i in 0..6 {
            for j in i + 1..6 {
                for k in j + 1..6 {
                    let mut s = vec![0i64; 7];
                    s[i] = 1;
                    s[j] = 1;
                    s[k] = 1;
                    summands.push(s);
                }
            }
        }
        let mut pol = vec![1i64; 7];
        pol[6] = 0;
        FamilySpec::new("dv-fourfold", ambient, summands, pol)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "fano-pencil" => Some(Self::fano_pencil()),
            "fano-fourfold" => Some(Self::fano_fourfold()),
            "dv-pencil" => Some(Self::dv_pencil()),
            "dv-fourfold" => Some(Self::dv_fourfold()),
            _ => None,
        }
    }

    pub fn rank(&self) -> i64 {
        self.bundle_summands.len() as i64
    }

    /// Dimension of the zero locus.
    pub fn dim_total_space(&self) -> i64 {
        let ab: i64 = self.ambient.factors.iter().map(|n| n - 1).sum::<i64>()
            + if self.ambient.has_pencil_line { 1 } else { 0 };
        ab - 2 * self.ambient.roots.len() as i64 - self.rank()
    }

    /// The prime `p` with `q(H) = 2p` of the built-in polarizations.
    pub fn polarization_prime(&self) -> Option<i64> {
        match self.name.as_str() {
            "fano-pencil" | "fano-fourfold" => Some(3),
            "dv-pencil" | "dv-fourfold" => Some(11),
            _ => None,
        }
    }

    /// Shared pairing kernel: the near-top box expansion of
    /// `e(E) * prod_alpha c_1(L_alpha)` (sign included separately).
    pub(crate) fn pairing_kernel(&self) -> (Rational, Arc<BoxSlice>) {
        let (sign, mut factors) = root_product_factors(&self.ambient);
        for s in &self.bundle_summands {
            factors.push(s.clone());
        }
        let slice = self
            .kernel
            .get_or_init(|| Arc::new(BoxSlice::product(self.ambient.shape().caps, &factors)))
            .clone();
        (sign, slice)
    }

    /// Integral over the zero locus `X` of the class of `x` (z^0 part):
    /// `(1/|W|) [top](x * e(E) * prod_alpha c_1(L_alpha))`.
    pub fn integrate_over_zero_locus(&self, x: &BTreeMap<Vec<i64>, Rational>) -> Rational {
        let (sign, slice) = self.pairing_kernel();
        sign * slice.pair_top(x) / rat(self.ambient.weyl_order)
    }
}

/// Total Chern class `prod (1 + ell)` of a split bundle given by linear
/// forms, in a degree-capped ring.
fn chern_total(shape: &RingShape, forms: &[LinForm]) -> CResult<RingElement> {
    let mut acc = RingElement::one(shape);
    for f in forms {
        let lin = RingElement::linear(shape, f, 0);
        acc = acc.mul(&lin.add(&RingElement::one(shape))?)?;
    }
    Ok(acc)
}

/// Todd series `x/(1 - e^{-x})` evaluated at the nilpotent linear form.
fn todd_of(shape: &RingShape, form: &LinForm) -> CResult<RingElement> {
    // (1 - e^{-x})/x = sum_{j >= 1} (-1)^{j-1} x^{j-1} / j!
    let ell = RingElement::linear(shape, form, 0);
    let mut u = RingElement::one(shape);
    let mut pow = RingElement::one(shape);
    let mut fact = rat(1);
    let mut j = 1i64;
    loop {
        j += 1;
        pow = pow.mul(&ell)?;
        fact *= rat(j);
        if pow.is_zero() {
            break;
        }
        let sign = if j % 2 == 0 { rat(-1) } else { rat(1) };
        u = u.add(&pow.scale(&(sign / &fact)))?;
    }
    u.inv_unit()
}

/// Degree-capped shape used for characteristic-class expansions.
fn class_shape(fam: &FamilySpec, deg: i64) -> RingShape {
    let mut s = fam.ambient.shape();
    s.deg_cap = Some(deg);
    s
}

/// The degree-`dim X` component of `c(T_X) = c(T_A)/c(E)` on the abelian
/// side: `c(T_A) = prod (1+H_i)^{n_i} (1+2h) / prod_{+-alpha} (1 + alpha)`.
fn chern_part(fam: &FamilySpec) -> CResult<BTreeMap<Vec<i64>, Rational>> {
    let dim = fam.dim_total_space();
    let shape = class_shape(fam, dim);
    let nv = shape.nvars();
    let mut num_forms: Vec<LinForm> = Vec::new();
    for (i, &n) in fam.ambient.factors.iter().enumerate() {
        for _ in 0..n {
            let mut f = vec![0i64; nv];
            f[i] = 1;
            num_forms.push(f);
        }
    }
    if fam.ambient.has_pencil_line {
        let mut f = vec![0i64; nv];
        f[nv - 1] = 2;
        num_forms.push(f);
    }
    let mut acc = chern_total(&shape, &num_forms)?;
    let mut den_forms: Vec<LinForm> = Vec::new();
    for r in &fam.ambient.roots {
        den_forms.push(r.clone());
        den_forms.push(r.iter().map(|c| -c).collect());
    }
    acc = acc.mul(&chern_total(&shape, &den_forms)?.inv_unit()?)?;
    acc = acc.mul(&chern_total(&shape, &fam.bundle_summands)?.inv_unit()?)?;
    Ok(acc.degree_part(dim).z_part(0))
}

/// Topological Euler number of the zero locus:
/// `int_X c_top(T_X) = (1/|W|) [top]( [c(T_A)/c(E)]_{dim X} e(E) prod_alpha alpha )`.
pub fn euler_characteristic(fam: &FamilySpec) -> CResult<i64> {
    let part = chern_part(fam)?;
    let v = fam.integrate_over_zero_locus(&part);
    if v.denom() != &BigInt::one() {
        return Err(RingError::NonIntegralEuler(crate::qseries::rational_string(&v)));
    }
    v.numer().try_into().map_err(|_| RingError::NonIntegralEuler("overflow".into()))
}

/// `int_X [td(T_X) / td(pullback T_{P^1})]_{dim X}`, which computes
/// `int ch_1(R pi_* O) = 3 c_1(L)`; the degree of the Hodge line bundle is
/// this value divided by 3.
pub fn grr_hodge_degree(fam: &FamilySpec) -> CResult<Rational> {
    if !fam.ambient.has_pencil_line {
        return Err(RingError::NoPencilLine);
    }
    let dim = fam.dim_total_space();
    let shape = class_shape(fam, dim);
    let nv = shape.nvars();
    let mut acc = RingElement::one(&shape);
    for (i, &n) in fam.ambient.factors.iter().enumerate() {
        let mut f = vec![0i64; nv];
        f[i] = 1;
        let td = todd_of(&shape, &f)?;
        acc = acc.mul(&td.clone().pow_n(n)?)?;
    }
    let mut fh = vec![0i64; nv];
    fh[nv - 1] = 2;
    let td2h = todd_of(&shape, &fh)?;
    acc = acc.mul(&td2h)?;
    for r in &fam.ambient.roots {
        let neg: LinForm = r.iter().map(|c| -c).collect();
        acc = acc.mul(&todd_of(&shape, r)?.inv_unit()?)?;
        acc = acc.mul(&todd_of(&shape, &neg)?.inv_unit()?)?;
    }
    for s in &fam.bundle_summands {
        acc = acc.mul(&todd_of(&shape, s)?.inv_unit()?)?;
    }
    // relative Todd: divide by td of the pulled-back tangent of P^1
    acc = acc.mul(&td2h.inv_unit()?)?;
    let part = acc.degree_part(dim).z_part(0);
    Ok(fam.integrate_over_zero_locus(&part))
}

impl RingElement {
    /// Non-negative integer power.
    pub fn pow_n(&self, n: i64) -> CResult<Self> {
        let mut acc = RingElement::one(&self.shape);
        for _ in 0..n {
            acc = acc.mul(self)?;
        }
        Ok(acc)
    }
}

/// Singular fiber count from the Euler numbers:
/// `e_total = e_smooth (2 - delta) + delta e_singular`.
pub fn singular_fiber_count(e_total: i64, e_smooth: i64, e_singular: i64) -> CResult<i64> {
    assert_ne!(e_smooth, e_singular);
    let num = 2 * e_smooth - e_total;
    let den = e_smooth - e_singular;
    if num % den != 0 || num / den < 0 {
        return Err(RingError::NonIntegralFiberCount(format!("{num}/{den}")));
    }
    Ok(num / den)
}
