//! Linear cellular automata `F = sum_u f_u o shift^u` on `A^(Z^D)`.
//!
//! Infinite-lattice semantics are emulated on torus windows. Any operation
//! whose result would wrap around the torus fails with
//! [`Error::WindowOverflow`] instead of aliasing.

use std::collections::BTreeMap;

use crate::algebra::{check_dim, lcm, mod_inverse, Character, Endo, Group, GroupElement, Residues};
use crate::error::{Error, Result};
use crate::site::{span, Site};

/// A finite torus window of `A^(Z^D)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    group: Group,
    dim: usize,
    lens: [usize; 2],
    /// Site-major; each site holds `group.coords()` residues.
    cells: Vec<u64>,
}

impl Configuration {
    pub fn zeros(group: Group, dim: usize, lens: &[usize]) -> Result<Self> {
        check_dim(dim)?;
        if lens.len() != dim || lens.iter().any(|&l| l == 0) {
            return Err(Error::invalid(format!("need {dim} positive window lengths, got {lens:?}")));
        }
        let lens = [lens[0], if dim == 2 { lens[1] } else { 1 }];
        let cells = vec![0; lens[0] * lens[1] * group.coords()];
        Ok(Configuration { group, dim, lens, cells })
    }

    pub fn from_fn(
        group: Group,
        dim: usize,
        lens: &[usize],
        mut f: impl FnMut(Site) -> GroupElement,
    ) -> Result<Self> {
        let mut config = Configuration::zeros(group, dim, lens)?;
        for site in config.sites().collect::<Vec<_>>() {
            config.set(site, &f(site))?;
        }
        Ok(config)
    }

    /// One-dimensional window from a list of cell values.
    pub fn from_elements(group: Group, cells: &[GroupElement]) -> Result<Self> {
        let mut config = Configuration::zeros(group, 1, &[cells.len()])?;
        for (i, a) in cells.iter().enumerate() {
            config.set(Site::new1(i as i64), a)?;
        }
        Ok(config)
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lens(&self) -> &[usize] {
        &self.lens[..self.dim]
    }

    pub fn num_sites(&self) -> usize {
        self.lens[0] * self.lens[1]
    }

    /// Canonical sites `[0, L_1) x [0, L_2)`, first coordinate fastest.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        let (lx, ly) = (self.lens[0] as i64, self.lens[1] as i64);
        (0..ly).flat_map(move |y| (0..lx).map(move |x| Site([x, y])))
    }

    fn offset(&self, site: Site) -> usize {
        let x = site.0[0].rem_euclid(self.lens[0] as i64) as usize;
        let y = site.0[1].rem_euclid(self.lens[1] as i64) as usize;
        (y * self.lens[0] + x) * self.group.coords()
    }

    /// Residues at `site`, wrapping on the torus.
    pub fn cell(&self, site: Site) -> &[u64] {
        let o = self.offset(site);
        &self.cells[o..o + self.group.coords()]
    }

    pub fn get(&self, site: Site) -> GroupElement {
        GroupElement(Residues::from_slice(self.cell(site)))
    }

    pub fn set(&mut self, site: Site, a: &GroupElement) -> Result<()> {
        self.group.check(a)?;
        let o = self.offset(site);
        let k = self.group.coords();
        self.cells[o..o + k].copy_from_slice(a.residues());
        Ok(())
    }
}

/// A linear cellular automaton with pruned, finitely supported coefficients.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Lca {
    group: Group,
    dim: usize,
    coeffs: BTreeMap<Site, Endo>,
}

/// Builds an automaton from `(offset, endomorphism)` pairs; repeated offsets
/// are summed and zero coefficients pruned. An empty result is the zero map.
pub fn make_lca(group: Group, dim: usize, coeffs: impl IntoIterator<Item = (Site, Endo)>) -> Result<Lca> {
    check_dim(dim)?;
    let mut map: BTreeMap<Site, Endo> = BTreeMap::new();
    for (site, f) in coeffs {
        if !site.fits(dim) {
            return Err(Error::invalid(format!("site {site} is not {dim}-dimensional")));
        }
        let f = group.endo(f)?;
        let sum = match map.remove(&site) {
            Some(old) => group.endo_add(&old, &f),
            None => f,
        };
        if !sum.is_zero() {
            map.insert(site, sum);
        }
    }
    Ok(Lca { group, dim, coeffs: map })
}

impl Lca {
    pub fn identity(group: Group, dim: usize) -> Result<Self> {
        let id = group.identity_endo();
        make_lca(group, dim, [(Site::ORIGIN, id)])
    }

    pub fn shift(group: Group, dim: usize, e: Site) -> Result<Self> {
        let id = group.identity_endo();
        make_lca(group, dim, [(e, id)])
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coefficients(&self) -> &BTreeMap<Site, Endo> {
        &self.coeffs
    }

    pub fn coefficient(&self, site: &Site) -> Endo {
        self.coeffs.get(site).cloned().unwrap_or_else(|| self.group.zero_endo())
    }

    pub fn is_zero_map(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// More than one nonzero coefficient.
    pub fn is_nontrivial(&self) -> bool {
        self.coeffs.len() > 1
    }

    pub fn is_scalar(&self) -> bool {
        self.group.is_cyclic()
    }

    /// Per-axis `(min, max)` offsets of the coefficient support.
    pub fn reach(&self) -> ([i64; 2], [i64; 2]) {
        let mut lo = [0i64; 2];
        let mut hi = [0i64; 2];
        for s in self.coeffs.keys() {
            for d in 0..2 {
                lo[d] = lo[d].min(s.0[d]);
                hi[d] = hi[d].max(s.0[d]);
            }
        }
        (lo, hi)
    }

    /// Largest absolute offset along any axis.
    pub fn radius(&self) -> i64 {
        self.coeffs.keys().flat_map(|s| s.0).map(i64::abs).max().unwrap_or(0)
    }

    fn same_space(&self, group: &Group, dim: usize, what: &str) -> Result<()> {
        if &self.group != group || self.dim != dim {
            return Err(Error::GroupMismatch(format!(
                "automaton over {} (D={}) and {what} over {group} (D={dim})",
                self.group, self.dim
            )));
        }
        Ok(())
    }

    /// `b_m = sum_u f_u(a_(m+u))` on the torus.
    pub fn apply(&self, a: &Configuration) -> Result<Configuration> {
        self.same_space(a.group(), a.dim(), "configuration")?;
        let sp = span(self.coeffs.keys());
        for d in 0..self.dim {
            if sp[d] >= a.lens[d] as i64 {
                return Err(Error::WindowOverflow(format!(
                    "torus length {} along axis {d} does not exceed the automaton span {}",
                    a.lens[d], sp[d]
                )));
            }
        }
        let q = self.group.exponent();
        let k = self.group.coords();
        let mut out = Configuration::zeros(a.group.clone(), a.dim, a.lens())?;
        let mut tmp = vec![0u64; k];
        let sites: Vec<Site> = a.sites().collect();
        for m in sites {
            let o = out.offset(m);
            for (u, f) in &self.coeffs {
                self.group.endo_apply_into(f, a.cell(m + *u), &mut tmp);
                for (x, t) in out.cells[o..o + k].iter_mut().zip(&tmp) {
                    *x = (*x + t) % q;
                }
            }
        }
        Ok(out)
    }

    /// `F^steps a`.
    pub fn iterate(&self, a: &Configuration, steps: usize) -> Result<Configuration> {
        let mut cur = a.clone();
        for _ in 0..steps {
            cur = self.apply(&cur)?;
        }
        Ok(cur)
    }

    /// `self o other`: coefficient at `w` is `sum_(u+v=w) f_u o g_v`.
    pub fn compose(&self, other: &Lca) -> Result<Lca> {
        self.same_space(&other.group, other.dim, "automaton")?;
        Ok(Lca {
            group: self.group.clone(),
            dim: self.dim,
            coeffs: convolve_endos(&self.group, &self.coeffs, &other.coeffs),
        })
    }
}

/// Sums sorted-or-not `(site, value)` terms into a pruned, ordered map.
fn merge_terms<T>(
    mut terms: Vec<(Site, T)>,
    add: impl Fn(&T, &T) -> T,
    is_zero: impl Fn(&T) -> bool,
) -> BTreeMap<Site, T> {
    terms.sort_by_key(|(s, _)| *s);
    let mut merged: Vec<(Site, T)> = Vec::with_capacity(terms.len());
    for (s, v) in terms {
        match merged.last_mut() {
            Some((last, acc)) if *last == s => *acc = add(acc, &v),
            _ => merged.push((s, v)),
        }
    }
    merged.into_iter().filter(|(_, v)| !is_zero(v)).collect()
}

fn convolve_endos(group: &Group, a: &BTreeMap<Site, Endo>, b: &BTreeMap<Site, Endo>) -> BTreeMap<Site, Endo> {
    let mut terms = Vec::with_capacity(a.len() * b.len());
    for (u, f) in a {
        for (v, g) in b {
            terms.push((*u + *v, group.endo_compose(f, g)));
        }
    }
    merge_terms(terms, |x, y| group.endo_add(x, y), Endo::is_zero)
}

fn convolve_scalars(n: u64, a: &BTreeMap<Site, u64>, b: &BTreeMap<Site, u64>) -> BTreeMap<Site, u64> {
    let mut terms = Vec::with_capacity(a.len() * b.len());
    for (u, x) in a {
        for (v, y) in b {
            terms.push((*u + *v, x * y % n));
        }
    }
    merge_terms(terms, |x, y| (x + y) % n, |x| *x == 0)
}

/// The pushforward `chi o F`, with coefficients `d_n = sum_u f_u' (c_(n-u))`.
pub fn compose_char(chi: &Character, f: &Lca) -> Result<Character> {
    f.same_space(chi.group(), chi.dim(), "character")?;
    let group = chi.group();
    let adjoints: Vec<(Site, Endo)> = f.coeffs.iter().map(|(u, e)| (*u, e.adjoint())).collect();
    let mut terms = Vec::with_capacity(chi.rank() * adjoints.len());
    for (s, c) in chi.coefficients() {
        for (u, adj) in &adjoints {
            terms.push((*s + *u, group.endo_apply_unchecked(adj, c)));
        }
    }
    let coeffs = merge_terms(terms, |x, y| group.add(x, y), GroupElement::is_zero);
    Ok(Character::from_canonical(group.clone(), chi.dim(), coeffs))
}

/// `chi o F^N`.
///
/// Cyclic groups raise the Laurent polynomial `sum_u f_u x^u` to the `N`-th
/// power by squaring; vector groups fold [`compose_char`] `N` times, since
/// matrix coefficients need not commute.
pub fn char_power(chi: &Character, f: &Lca, n: u64) -> Result<Character> {
    f.same_space(chi.group(), chi.dim(), "character")?;
    if n == 0 || chi.is_trivial() {
        return Ok(chi.clone());
    }
    match chi.group() {
        Group::Cyclic { n: modulus } => {
            let modulus = *modulus;
            let poly: BTreeMap<Site, u64> = f
                .coeffs
                .iter()
                .map(|(s, e)| match e {
                    Endo::Scalar(k) => (*s, *k),
                    Endo::Matrix(_) => unreachable!("validated scalar coefficients"),
                })
                .collect();
            let power = scalar_poly_pow(modulus, &poly, n);
            let c: BTreeMap<Site, u64> =
                chi.coefficients().iter().map(|(s, g)| (*s, g.residues()[0])).collect();
            let d = convolve_scalars(modulus, &c, &power);
            let coeffs = d
                .into_iter()
                .map(|(s, x)| (s, GroupElement(Residues::from_slice(&[x]))))
                .collect();
            Ok(Character::from_canonical(chi.group().clone(), chi.dim(), coeffs))
        }
        Group::PrimePowerVector { .. } => {
            let mut cur = chi.clone();
            for _ in 0..n {
                cur = compose_char(&cur, f)?;
                if cur.is_trivial() {
                    break;
                }
            }
            Ok(cur)
        }
    }
}

fn scalar_poly_pow(modulus: u64, poly: &BTreeMap<Site, u64>, mut n: u64) -> BTreeMap<Site, u64> {
    let mut result: BTreeMap<Site, u64> = [(Site::ORIGIN, 1 % modulus)].into_iter().collect();
    let mut base = poly.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = convolve_scalars(modulus, &result, &base);
        }
        n >>= 1;
        if n > 0 {
            base = convolve_scalars(modulus, &base, &base);
        }
    }
    result
}

/// Coefficients of `F^N`, by square-and-multiply on the coefficient maps.
///
/// Each product keeps the left factor's coefficients on the left, so the
/// result is exact for noncommuting matrix coefficients as well.
pub fn lca_power_coeffs(f: &Lca, n: u64) -> Lca {
    let mut result = Lca::identity(f.group.clone(), f.dim).expect("valid dimension");
    let mut base = f.clone();
    let mut k = n;
    while k > 0 {
        if k & 1 == 1 {
            result.coeffs = convolve_endos(&f.group, &result.coeffs, &base.coeffs);
        }
        k >>= 1;
        if k > 0 {
            base.coeffs = convolve_endos(&f.group, &base.coeffs, &base.coeffs);
        }
    }
    result
}

/// Canonical decomposition of `Z/n` objects into prime-power components.
///
/// Components come in increasing prime order. Objects over a group that is
/// already a prime power split into a single identical component.
pub trait CrtSplit: Sized {
    fn crt_split(&self) -> Vec<Self>;
}

fn cyclic_components(group: &Group) -> Option<(u64, Vec<u64>)> {
    match *group {
        Group::Cyclic { n } => {
            let qs = group.prime_factors().into_iter().map(|(p, r)| p.pow(r)).collect();
            Some((n, qs))
        }
        Group::PrimePowerVector { .. } => None,
    }
}

impl CrtSplit for Group {
    fn crt_split(&self) -> Vec<Group> {
        match cyclic_components(self) {
            Some((_, qs)) if qs.len() > 1 => qs.into_iter().map(|q| Group::Cyclic { n: q }).collect(),
            _ => vec![self.clone()],
        }
    }
}

impl CrtSplit for Lca {
    /// Scalar coefficients reduce modulo each prime-power factor.
    fn crt_split(&self) -> Vec<Lca> {
        match cyclic_components(&self.group) {
            Some((_, qs)) if qs.len() > 1 => qs
                .into_iter()
                .map(|q| {
                    let coeffs = self.coeffs.iter().map(|(s, e)| (*s, e.clone()));
                    make_lca(Group::Cyclic { n: q }, self.dim, coeffs).expect("reduction preserves validity")
                })
                .collect(),
            _ => vec![self.clone()],
        }
    }
}

impl CrtSplit for Character {
    /// The component coefficient is `c * (n/q)^(-1) mod q`, so that the
    /// component phases of `a mod q` sum to the original phase of `a`. It is
    /// nonzero exactly when `c mod q` is, so component ranks are unchanged
    /// by the twist.
    fn crt_split(&self) -> Vec<Character> {
        match cyclic_components(self.group()) {
            Some((n, qs)) if qs.len() > 1 => qs
                .into_iter()
                .map(|q| {
                    let twist = mod_inverse((n / q) % q, q).expect("coprime cofactor");
                    let g = Group::Cyclic { n: q };
                    let coeffs = self
                        .coefficients()
                        .iter()
                        .map(|(s, c)| (*s, g.element(&[(c.residues()[0] % q * twist % q) as i64]).unwrap()));
                    Character::new(g.clone(), self.dim(), coeffs).expect("reduced residues")
                })
                .collect(),
            _ => vec![self.clone()],
        }
    }
}

impl CrtSplit for Configuration {
    fn crt_split(&self) -> Vec<Configuration> {
        match cyclic_components(&self.group) {
            Some((_, qs)) if qs.len() > 1 => qs
                .into_iter()
                .map(|q| Configuration {
                    group: Group::Cyclic { n: q },
                    dim: self.dim,
                    lens: self.lens,
                    cells: self.cells.iter().map(|x| x % q).collect(),
                })
                .collect(),
            _ => vec![self.clone()],
        }
    }
}

/// Chinese-remainder combination of residues modulo pairwise coprime moduli.
pub fn crt_combine(residues: &[u64], moduli: &[u64]) -> u64 {
    let n: u64 = moduli.iter().product();
    residues.iter().zip(moduli).fold(0u64, |acc, (&r, &q)| {
        let m = n / q;
        let inv = mod_inverse(m % q, q).expect("pairwise coprime");
        ((acc as u128 + r as u128 * m as u128 % n as u128 * inv as u128) % n as u128) as u64
    })
}

/// Reassembles an automaton over `Z/n` from its prime-power components.
pub fn crt_merge_lca(parts: &[Lca]) -> Result<Lca> {
    let first = parts.first().ok_or_else(|| Error::invalid("no components to merge"))?;
    let moduli: Vec<u64> = parts.iter().map(|p| p.group.exponent()).collect();
    let n = moduli.iter().try_fold(1u64, |acc, &q| if crate::algebra::gcd(acc, q) == 1 { Some(acc * q) } else { None })
        .ok_or_else(|| Error::invalid("component moduli are not coprime"))?;
    let sites: std::collections::BTreeSet<Site> = parts.iter().flat_map(|p| p.coeffs.keys().copied()).collect();
    let group = Group::cyclic(n)?;
    let coeffs = sites.into_iter().map(|s| {
        let rs: Vec<u64> = parts
            .iter()
            .map(|p| match p.coefficient(&s) {
                Endo::Scalar(k) => k,
                Endo::Matrix(_) => 0,
            })
            .collect();
        (s, Endo::Scalar(crt_combine(&rs, &moduli)))
    });
    make_lca(group, first.dim, coeffs)
}

/// Inverse of the character split.
pub fn crt_merge_character(parts: &[Character]) -> Result<Character> {
    let first = parts.first().ok_or_else(|| Error::invalid("no components to merge"))?;
    let moduli: Vec<u64> = parts.iter().map(|p| p.group().exponent()).collect();
    let n: u64 = moduli.iter().product();
    let group = Group::cyclic(n)?;
    let sites: std::collections::BTreeSet<Site> =
        parts.iter().flat_map(|p| p.coefficients().keys().copied()).collect();
    let mut coeffs = Vec::new();
    for s in sites {
        // c = sum_j c_j * (n / q_j) mod n
        let c = parts.iter().zip(&moduli).fold(0u64, |acc, (p, &q)| {
            (acc + p.coefficient(&s).residues()[0] * (n / q)) % n
        });
        coeffs.push((s, group.element(&[c as i64])?));
    }
    Character::new(group, first.dim(), coeffs)
}

/// Coefficient census behind the nonprime diffusion theorem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HypothesisReport {
    /// `(p, number of coefficients coprime to p)` for each prime `p | n`.
    pub coprime_counts: Vec<(u64, usize)>,
    /// Every count is at least two.
    pub satisfied: bool,
}

pub fn diffusion_hypothesis(f: &Lca) -> Result<HypothesisReport> {
    if !f.is_scalar() {
        return Err(Error::Unsupported(
            "the coprime-coefficient census needs scalar coefficients; use separating sets for matrix automata".into(),
        ));
    }
    let coprime_counts: Vec<(u64, usize)> = f
        .group
        .prime_factors()
        .into_iter()
        .map(|(p, _)| {
            let count = f
                .coeffs
                .values()
                .filter(|e| matches!(e, Endo::Scalar(k) if k % p != 0))
                .count();
            (p, count)
        })
        .collect();
    let satisfied = coprime_counts.iter().all(|&(_, c)| c >= 2);
    Ok(HypothesisReport { coprime_counts, satisfied })
}

/// Lcm of the exponents of a set of groups; the common phase modulus.
pub fn common_modulus(groups: &[Group]) -> u64 {
    groups.iter().fold(1, |acc, g| lcm(acc, g.exponent()))
}
