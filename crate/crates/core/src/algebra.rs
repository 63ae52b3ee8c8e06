//! Finite abelian groups, their elements and endomorphisms, exact phases
//! and characters of `A^(Z^D)`.
//!
//! Two group shapes are supported: cyclic groups `Z/n`, and prime-power
//! vector groups `(Z/p^r)^J`. Characters are housed additively: a coefficient
//! `c` in the same group as the configuration values pairs with `a` to the
//! phase `exp(2 pi i <c, a> / exponent)`.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::lca::Configuration;
use crate::numtheory::is_prime;
use crate::site::Site;

/// Exponents are capped so that a product of two residues fits in a `u64`.
pub const MAX_EXPONENT: u64 = 1 << 31;

pub(crate) type Residues = SmallVec<[u64; 4]>;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

pub fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        return 0;
    }
    a / gcd(a, b) * b
}

/// Inverse of `a` modulo `m`, if `gcd(a, m) = 1`.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut old_r, mut r) = (a as i128 % m as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// Prime factorization with strictly increasing primes.
pub fn factorize(n: u64) -> Result<Vec<(u64, u32)>> {
    if n < 2 {
        return Err(Error::invalid(format!("cannot factorize {n}: need n >= 2")));
    }
    let mut out = Vec::new();
    let mut rest = n;
    let mut d = 2u64;
    while d.saturating_mul(d) <= rest {
        if rest % d == 0 {
            let mut k = 0;
            while rest % d == 0 {
                rest /= d;
                k += 1;
            }
            out.push((d, k));
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if rest > 1 {
        out.push((rest, 1));
    }
    Ok(out)
}

/// A finite abelian group of one of the two supported shapes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    Cyclic { n: u64 },
    /// `(Z/p^r)^dim`
    PrimePowerVector { p: u64, r: u32, dim: usize },
}

impl Group {
    pub fn cyclic(n: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("cyclic group order must be >= 2, got {n}")));
        }
        if n > MAX_EXPONENT {
            return Err(Error::invalid(format!("cyclic group order {n} exceeds {MAX_EXPONENT}")));
        }
        Ok(Group::Cyclic { n })
    }

    pub fn prime_power_vector(p: u64, r: u32, dim: usize) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::invalid(format!("{p} is not prime")));
        }
        if r == 0 || dim == 0 {
            return Err(Error::invalid("prime-power vector group needs r >= 1 and J >= 1"));
        }
        match p.checked_pow(r) {
            Some(q) if q <= MAX_EXPONENT => Ok(Group::PrimePowerVector { p, r, dim }),
            _ => Err(Error::invalid(format!("{p}^{r} exceeds {MAX_EXPONENT}"))),
        }
    }

    pub fn exponent(&self) -> u64 {
        match *self {
            Group::Cyclic { n } => n,
            Group::PrimePowerVector { p, r, .. } => p.pow(r),
        }
    }

    /// Number of residue coordinates per element.
    pub fn coords(&self) -> usize {
        match *self {
            Group::Cyclic { .. } => 1,
            Group::PrimePowerVector { dim, .. } => dim,
        }
    }

    /// `|A|`, or `None` if it does not fit in a `u64`.
    pub fn order(&self) -> Option<u64> {
        self.exponent().checked_pow(self.coords() as u32)
    }

    pub fn is_cyclic(&self) -> bool {
        matches!(self, Group::Cyclic { .. })
    }

    /// The prime-power factors of the exponent.
    pub fn prime_factors(&self) -> Vec<(u64, u32)> {
        match *self {
            Group::Cyclic { n } => factorize(n).expect("n >= 2 by construction"),
            Group::PrimePowerVector { p, r, .. } => vec![(p, r)],
        }
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement(SmallVec::from_elem(0, self.coords()))
    }

    /// Builds an element, reducing every residue modulo the exponent.
    pub fn element(&self, residues: &[i64]) -> Result<GroupElement> {
        if residues.len() != self.coords() {
            return Err(Error::GroupMismatch(format!(
                "element has {} residues, group {} needs {}",
                residues.len(),
                self,
                self.coords()
            )));
        }
        let q = self.exponent() as i64;
        Ok(GroupElement(residues.iter().map(|&x| x.rem_euclid(q) as u64).collect()))
    }

    pub fn contains(&self, a: &GroupElement) -> bool {
        let q = self.exponent();
        a.0.len() == self.coords() && a.0.iter().all(|&x| x < q)
    }

    pub(crate) fn check(&self, a: &GroupElement) -> Result<()> {
        if self.contains(a) {
            Ok(())
        } else {
            Err(Error::GroupMismatch(format!("{a} is not an element of {self}")))
        }
    }

    /// Mixed-radix index of `a`, first residue least significant.
    pub fn index_of(&self, a: &GroupElement) -> usize {
        let q = self.exponent() as usize;
        a.0.iter().rev().fold(0usize, |acc, &x| acc * q + x as usize)
    }

    pub fn element_at(&self, mut index: usize) -> GroupElement {
        let q = self.exponent() as usize;
        let mut out = Residues::with_capacity(self.coords());
        for _ in 0..self.coords() {
            out.push((index % q) as u64);
            index /= q;
        }
        GroupElement(out)
    }

    /// All elements in index order. Panics if the group is too large to enumerate.
    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        let order = self.order().expect("group too large to enumerate") as usize;
        (0..order).map(move |i| self.element_at(i))
    }

    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let q = self.exponent();
        GroupElement(a.0.iter().zip(&b.0).map(|(x, y)| (x + y) % q).collect())
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        let q = self.exponent();
        GroupElement(a.0.iter().map(|x| (q - x) % q).collect())
    }

    pub fn sub(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.add(a, &self.neg(b))
    }

    pub fn identity_endo(&self) -> Endo {
        match *self {
            Group::Cyclic { .. } => Endo::Scalar(1),
            Group::PrimePowerVector { dim, .. } => Endo::Matrix(Matrix::identity(dim)),
        }
    }

    pub fn zero_endo(&self) -> Endo {
        match *self {
            Group::Cyclic { .. } => Endo::Scalar(0),
            Group::PrimePowerVector { dim, .. } => Endo::Matrix(Matrix::zeros(dim)),
        }
    }

    /// Validates `f` against this group and reduces its residues.
    pub fn endo(&self, f: Endo) -> Result<Endo> {
        let q = self.exponent();
        match (self, f) {
            (Group::Cyclic { .. }, Endo::Scalar(k)) => Ok(Endo::Scalar(k % q)),
            (Group::PrimePowerVector { dim, .. }, Endo::Matrix(m)) if m.dim == *dim => {
                Ok(Endo::Matrix(Matrix {
                    dim: m.dim,
                    entries: m.entries.iter().map(|x| x % q).collect(),
                }))
            }
            (g, f) => Err(Error::GroupMismatch(format!("endomorphism {f} does not act on {g}"))),
        }
    }

    pub(crate) fn check_endo(&self, f: &Endo) -> Result<()> {
        let q = self.exponent();
        let ok = match (self, f) {
            (Group::Cyclic { .. }, Endo::Scalar(k)) => *k < q,
            (Group::PrimePowerVector { dim, .. }, Endo::Matrix(m)) => {
                m.dim == *dim && m.entries.iter().all(|&x| x < q)
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::GroupMismatch(format!("endomorphism {f} does not act on {self}")))
        }
    }

    pub fn endo_apply(&self, f: &Endo, a: &GroupElement) -> Result<GroupElement> {
        self.check_endo(f)?;
        self.check(a)?;
        Ok(self.endo_apply_unchecked(f, a))
    }

    pub(crate) fn endo_apply_unchecked(&self, f: &Endo, a: &GroupElement) -> GroupElement {
        let mut out = Residues::from_elem(0, a.0.len());
        self.endo_apply_into(f, &a.0, &mut out);
        GroupElement(out)
    }

    /// `out = f(a)` on raw residue slices; the hot path of automaton updates.
    pub(crate) fn endo_apply_into(&self, f: &Endo, a: &[u64], out: &mut [u64]) {
        let q = self.exponent();
        match f {
            Endo::Scalar(k) => out[0] = k * a[0] % q,
            Endo::Matrix(m) => {
                let d = m.dim;
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &m.entries[i * d..(i + 1) * d];
                    *o = row.iter().zip(a).fold(0, |acc, (x, y)| (acc + x * y) % q);
                }
            }
        }
    }

    /// `f o g`.
    pub fn endo_compose(&self, f: &Endo, g: &Endo) -> Endo {
        let q = self.exponent();
        match (f, g) {
            (Endo::Scalar(a), Endo::Scalar(b)) => Endo::Scalar(a * b % q),
            (Endo::Matrix(a), Endo::Matrix(b)) => Endo::Matrix(a.mul_mod(b, q)),
            _ => panic!("mixed scalar and matrix endomorphisms"),
        }
    }

    pub fn endo_add(&self, f: &Endo, g: &Endo) -> Endo {
        let q = self.exponent();
        match (f, g) {
            (Endo::Scalar(a), Endo::Scalar(b)) => Endo::Scalar((a + b) % q),
            (Endo::Matrix(a), Endo::Matrix(b)) => Endo::Matrix(Matrix {
                dim: a.dim,
                entries: a.entries.iter().zip(&b.entries).map(|(x, y)| (x + y) % q).collect(),
            }),
            _ => panic!("mixed scalar and matrix endomorphisms"),
        }
    }

    /// Scalars need `gcd(f, n) = 1`; matrices need a determinant that is a unit mod `p`.
    pub fn is_automorphism(&self, f: &Endo) -> bool {
        match (self, f) {
            (Group::Cyclic { n }, Endo::Scalar(k)) => gcd(*k % n, *n) == 1,
            (Group::PrimePowerVector { p, .. }, Endo::Matrix(m)) => m.det_mod_prime(*p) != 0,
            _ => false,
        }
    }

    /// The pairing `<c, a> = c_1 a_1 + ... + c_J a_J` as a phase over the exponent.
    pub fn pair(&self, c: &GroupElement, a: &GroupElement) -> Result<Phase> {
        self.check(c)?;
        self.check(a)?;
        Ok(Phase::new(self.pair_raw(&c.0, &a.0), self.exponent()))
    }

    pub(crate) fn pair_raw(&self, c: &[u64], a: &[u64]) -> u64 {
        let q = self.exponent();
        c.iter().zip(a).fold(0, |acc, (x, y)| (acc + x * y) % q)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Group::Cyclic { n } => write!(f, "Z/{n}"),
            Group::PrimePowerVector { p, r: 1, dim } => write!(f, "(Z/{p})^{dim}"),
            Group::PrimePowerVector { p, r, dim } => write!(f, "(Z/{p}^{r})^{dim}"),
        }
    }
}

/// An element of a [`Group`]: one residue per coordinate, each reduced.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(pub(crate) Residues);

impl GroupElement {
    pub fn residues(&self) -> &[u64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() == 1 {
            return write!(f, "{}", self.0[0]);
        }
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// Square residue matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Matrix {
    dim: usize,
    entries: Vec<u64>,
}

impl Matrix {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("matrix must be square and nonempty"));
        }
        Ok(Matrix { dim, entries: rows.into_iter().flatten().collect() })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1;
        }
        Matrix { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, entries: vec![0; dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.entries.chunks(self.dim).map(<[u64]>::to_vec).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let d = self.dim;
        let mut entries = vec![0; d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.entries[i * d + j];
            }
        }
        Matrix { dim: d, entries }
    }

    fn mul_mod(&self, other: &Matrix, q: u64) -> Matrix {
        let d = self.dim;
        let mut entries = vec![0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                if a == 0 {
                    continue;
                }
                for j in 0..d {
                    let e = &mut entries[i * d + j];
                    *e = (*e + a * other.entries[k * d + j]) % q;
                }
            }
        }
        Matrix { dim: d, entries }
    }

    /// Determinant modulo a prime, by elimination over `F_p`.
    pub fn det_mod_prime(&self, p: u64) -> u64 {
        let d = self.dim;
        let mut m: Vec<u64> = self.entries.iter().map(|x| x % p).collect();
        let mut det = 1u64;
        for col in 0..d {
            let Some(pivot) = (col..d).find(|&r| m[r * d + col] != 0) else {
                return 0;
            };
            if pivot != col {
                for j in 0..d {
                    m.swap(pivot * d + j, col * d + j);
                }
                det = (p - det) % p;
            }
            let pv = m[col * d + col];
            det = det * pv % p;
            let inv = mod_inverse(pv, p).expect("nonzero mod prime");
            for r in col + 1..d {
                let factor = m[r * d + col] * inv % p;
                if factor == 0 {
                    continue;
                }
                for j in col..d {
                    let sub = factor * m[col * d + j] % p;
                    m[r * d + j] = (m[r * d + j] + p - sub) % p;
                }
            }
        }
        det
    }
}

/// A group endomorphism: multiplication by a residue on `Z/n`, or a residue
/// matrix on `(Z/p^r)^J`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Endo {
    Scalar(u64),
    Matrix(Matrix),
}

impl Endo {
    pub fn is_zero(&self) -> bool {
        match self {
            Endo::Scalar(k) => *k == 0,
            Endo::Matrix(m) => m.entries.iter().all(|&x| x == 0),
        }
    }

    /// The dual endomorphism `f'` with `<f' c, a> = <c, f a>`.
    pub fn adjoint(&self) -> Endo {
        match self {
            Endo::Scalar(k) => Endo::Scalar(*k),
            Endo::Matrix(m) => Endo::Matrix(m.transpose()),
        }
    }
}

impl fmt::Display for Endo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endo::Scalar(k) => write!(f, "{k}"),
            Endo::Matrix(m) => write!(f, "{:?}", m.rows()),
        }
    }
}

/// `exp(2 pi i num / modulus)`, held exactly.
#[derive(Clone, Copy, Debug)]
pub struct Phase {
    num: u64,
    modulus: u64,
}

impl Phase {
    pub fn new(num: u64, modulus: u64) -> Self {
        assert!(modulus > 0, "phase modulus must be positive");
        Phase { num: num % modulus, modulus }
    }

    pub fn zero() -> Self {
        Phase { num: 0, modulus: 1 }
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// The same phase in lowest terms.
    pub fn reduced(&self) -> (u64, u64) {
        let g = gcd(self.num, self.modulus);
        (self.num / g, self.modulus / g)
    }

    /// Phase product, i.e. numerator sum over the lcm modulus.
    pub fn add(self, other: Phase) -> Phase {
        let l = lcm(self.modulus, other.modulus);
        let a = self.num as u128 * (l / self.modulus) as u128;
        let b = other.num as u128 * (l / other.modulus) as u128;
        Phase { num: ((a + b) % l as u128) as u64, modulus: l }
    }

    pub fn neg(self) -> Phase {
        Phase { num: (self.modulus - self.num) % self.modulus, modulus: self.modulus }
    }

    pub fn to_complex(&self) -> Complex64 {
        let theta = std::f64::consts::TAU * self.num as f64 / self.modulus as f64;
        Complex64::from_polar(1.0, theta)
    }
}

impl PartialEq for Phase {
    fn eq(&self, other: &Self) -> bool {
        self.reduced() == other.reduced()
    }
}

impl Eq for Phase {}

impl Hash for Phase {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.reduced().hash(state);
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.modulus)
    }
}

/// A character of `A^(Z^D)` given by a finite-support coefficient system.
///
/// Zero coefficients are never stored, so [`Character::rank`] is the number of
/// stored entries.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Character {
    group: Group,
    dim: usize,
    coeffs: BTreeMap<Site, GroupElement>,
}

impl Character {
    pub fn trivial(group: Group, dim: usize) -> Self {
        Character { group, dim, coeffs: BTreeMap::new() }
    }

    /// Builds a character; coefficients at repeated sites are summed and
    /// zeros pruned.
    pub fn new(
        group: Group,
        dim: usize,
        coeffs: impl IntoIterator<Item = (Site, GroupElement)>,
    ) -> Result<Self> {
        check_dim(dim)?;
        let mut chi = Character::trivial(group, dim);
        for (site, c) in coeffs {
            chi.group.check(&c)?;
            if !site.fits(dim) {
                return Err(Error::invalid(format!("site {site} is not {dim}-dimensional")));
            }
            chi.accumulate(site, &c);
        }
        Ok(chi)
    }

    /// Internal constructor for already canonical maps.
    pub(crate) fn from_canonical(group: Group, dim: usize, coeffs: BTreeMap<Site, GroupElement>) -> Self {
        debug_assert!(coeffs.values().all(|c| !c.is_zero()));
        Character { group, dim, coeffs }
    }

    pub(crate) fn accumulate(&mut self, site: Site, c: &GroupElement) {
        if c.is_zero() {
            return;
        }
        match self.coeffs.get_mut(&site) {
            Some(old) => {
                let sum = self.group.add(old, c);
                if sum.is_zero() {
                    self.coeffs.remove(&site);
                } else {
                    *old = sum;
                }
            }
            None => {
                self.coeffs.insert(site, c.clone());
            }
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficient(&self, site: &Site) -> GroupElement {
        self.coeffs.get(site).cloned().unwrap_or_else(|| self.group.zero())
    }

    pub fn coefficients(&self) -> &BTreeMap<Site, GroupElement> {
        &self.coeffs
    }

    pub fn support(&self) -> impl Iterator<Item = &Site> {
        self.coeffs.keys()
    }

    /// Pointwise sum of coefficient systems (the product of characters).
    pub fn add(&self, other: &Character) -> Result<Character> {
        self.same_space(other)?;
        let mut out = self.clone();
        for (s, c) in &other.coeffs {
            out.accumulate(*s, c);
        }
        Ok(out)
    }

    pub fn neg(&self) -> Character {
        let coeffs = self.coeffs.iter().map(|(s, c)| (*s, self.group.neg(c))).collect();
        Character { group: self.group.clone(), dim: self.dim, coeffs }
    }

    pub fn sub(&self, other: &Character) -> Result<Character> {
        self.add(&other.neg())
    }

    /// The character `a -> chi(shift_e a)`, i.e. every coefficient moved by `e`.
    pub fn translate(&self, e: Site) -> Character {
        let coeffs = self.coeffs.iter().map(|(s, c)| (*s + e, c.clone())).collect();
        Character { group: self.group.clone(), dim: self.dim, coeffs }
    }

    pub(crate) fn same_space(&self, other: &Character) -> Result<()> {
        if self.group != other.group || self.dim != other.dim {
            return Err(Error::GroupMismatch(format!(
                "characters over {} (D={}) and {} (D={})",
                self.group, self.dim, other.group, other.dim
            )));
        }
        Ok(())
    }

    /// Evaluates `chi(a)` on a torus configuration; support sites wrap.
    pub fn eval(&self, config: &Configuration) -> Result<Phase> {
        if config.group() != &self.group || config.dim() != self.dim {
            return Err(Error::GroupMismatch(format!(
                "character over {} (D={}) evaluated on configuration over {} (D={})",
                self.group,
                self.dim,
                config.group(),
                config.dim()
            )));
        }
        let q = self.group.exponent();
        let mut total = 0u64;
        for (site, c) in &self.coeffs {
            total = (total + self.group.pair_raw(&c.0, config.cell(*site))) % q;
        }
        Ok(if self.coeffs.is_empty() { Phase::zero() } else { Phase::new(total, q) })
    }
}

impl fmt::Display for Character {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (s, c)) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            if self.dim == 1 {
                write!(f, "{}->{}", s.x(), c)?;
            } else {
                write!(f, "{s}->{c}")?;
            }
        }
        write!(f, "}}")
    }
}

pub(crate) fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > crate::site::MAX_DIMENSION {
        return Err(Error::invalid(format!("lattice dimension must be 1 or 2, got {dim}")));
    }
    Ok(())
}
