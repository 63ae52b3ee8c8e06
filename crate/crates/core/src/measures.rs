//! Exactly evaluable measures on `A^Z` and their Fourier analysis.
//!
//! Transition matrices are column-stochastic: `Q[b][a]` is the probability
//! of stepping from letter `a` to letter `b`, and state distributions evolve
//! as `eta_(n+1) = Q eta_n`. The adjoint `Q'` acts on functions by
//! `(Q' phi)(a) = sum_b Q[b][a] phi(b)`.
//!
//! Probabilities are `f64`; character phases stay exact until they are
//! tabulated as complex numbers.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::algebra::{Character, Group, GroupElement, Phase};
use crate::error::{Error, Result};
use crate::lca::{char_power, compose_char, Lca};
use crate::rng;
use crate::site::Site;

/// Tolerance for stochasticity and normalization checks.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Largest alphabet for which dense transfer matrices are built.
pub const MAX_ALPHABET: u64 = 4096;

/// Fourier inversion and exhaustive scans enumerate at most `2^24` characters.
pub const MAX_ENUMERATION_BITS: f64 = 24.0;

/// Operator norms at or below this are treated as exactly zero.
pub const NORM_ZERO_TOL: f64 = 1e-14;

/// A column-stochastic matrix `Q[to][from]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// From rows indexed by the destination letter.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let size = rows.len();
        if size == 0 || rows.iter().any(|r| r.len() != size) {
            return Err(Error::invalid("transition matrix must be square and nonempty"));
        }
        let k = Kernel { size, data: rows.concat() };
        k.validate()?;
        Ok(k)
    }

    pub(crate) fn from_fn(size: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; size * size];
        for to in 0..size {
            for from in 0..size {
                data[to * size + from] = f(to, from);
            }
        }
        Kernel { size, data }
    }

    fn validate(&self) -> Result<()> {
        for from in 0..self.size {
            let mut total = 0.0;
            for to in 0..self.size {
                let x = self.get(to, from);
                if !(x >= 0.0) {
                    return Err(Error::NotStochastic(format!("entry [{to}][{from}] = {x}")));
                }
                total += x;
            }
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotStochastic(format!("column {from} sums to {total}")));
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.data[to * self.size + from]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.size).map(<[f64]>::to_vec).collect()
    }

    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|&x| x > 0.0)
    }

    /// `Q eta`.
    pub fn push(&self, eta: &[f64]) -> Vec<f64> {
        (0..self.size)
            .map(|to| (0..self.size).map(|from| self.get(to, from) * eta[from]).sum())
            .collect()
    }

    /// `Q' phi` for complex test functions.
    fn pull(&self, phi: &[Complex64]) -> Vec<Complex64> {
        (0..self.size)
            .map(|from| (0..self.size).map(|to| phi[to] * self.get(to, from)).sum())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BernoulliSpec {
    pub group: Group,
    /// Probability of each group element, in element-index order.
    pub weights: Vec<f64>,
}

/// A one-step chain started at `origin`; the step from site `n` to `n+1`
/// uses `transitions[(n - origin) mod K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChainSpec {
    pub group: Group,
    pub transitions: Vec<Kernel>,
    pub initial: Vec<f64>,
    pub origin: i64,
}

/// A stationary `U`-step chain given by its `(U+1)`-block marginal.
#[derive(Clone, Debug, PartialEq)]
pub struct NStepMarkovSpec {
    pub group: Group,
    pub steps: usize,
    /// Joint law of `(a_n, ..., a_(n+U))`, mixed radix with `a_n` least significant.
    pub block: Vec<f64>,
    pub origin: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureSpec {
    Bernoulli(BernoulliSpec),
    Markov(MarkovChainSpec),
    NStep(NStepMarkovSpec),
}

/// A finite-state chain whose states project onto letters of `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub transitions: Vec<Kernel>,
    pub initial: Vec<f64>,
    pub origin: i64,
    /// Letter index read off each state.
    pub letters: Vec<usize>,
}

impl Chain {
    pub fn states(&self) -> usize {
        self.initial.len()
    }

    fn kernel_at(&self, site: i64) -> &Kernel {
        let k = self.transitions.len() as i64;
        &self.transitions[(site - self.origin).rem_euclid(k) as usize]
    }

    /// State distribution at `site >= origin`.
    pub fn distribution_at(&self, site: i64) -> Vec<f64> {
        let mut eta = self.initial.clone();
        for n in self.origin..site {
            eta = self.kernel_at(n).push(&eta);
        }
        eta
    }

    /// Probability that the letters at `start, start+1, ...` spell `word`.
    pub fn cylinder_prob(&self, start: i64, word: &[usize]) -> f64 {
        let eta = self.distribution_at(start);
        let mut alpha: Vec<f64> = (0..self.states())
            .map(|s| if word.first() == Some(&self.letters[s]) { eta[s] } else { 0.0 })
            .collect();
        if word.is_empty() {
            return eta.iter().sum();
        }
        for (i, &w) in word.iter().enumerate().skip(1) {
            let k = self.kernel_at(start + i as i64 - 1);
            let next = k.push(&alpha);
            alpha = next
                .into_iter()
                .enumerate()
                .map(|(s, x)| if self.letters[s] == w { x } else { 0.0 })
                .collect();
        }
        alpha.iter().sum()
    }

    /// `sum_a eta_start(a) phi_start(a)` with `phi` built backwards through
    /// alternating adjoint transitions and character multipliers.
    fn transfer(&self, start: i64, tables: &[&[Complex64]]) -> Complex64 {
        let eta = self.distribution_at(start);
        let last = tables.len() - 1;
        let mut phi: Vec<Complex64> = self.letters.iter().map(|&l| tables[last][l]).collect();
        for i in (0..last).rev() {
            let pulled = self.kernel_at(start + i as i64).pull(&phi);
            phi = pulled
                .into_iter()
                .zip(&self.letters)
                .map(|(x, &l)| x * tables[i][l])
                .collect();
        }
        phi.iter().zip(&eta).map(|(x, e)| x * e).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Kind {
    Bernoulli { weights: Vec<f64>, transforms: Vec<Complex64> },
    Chain(Chain),
}

/// A validated measure with its support and closure flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure {
    group: Group,
    spec: MeasureSpec,
    kind: Kind,
    full_support: bool,
    semistationary: bool,
    /// `chars[c][a]` is `exp(2 pi i <c, a> / q)`.
    chars: Vec<Vec<Complex64>>,
}

fn alphabet(group: &Group) -> Result<usize> {
    match group.order() {
        Some(n) if n <= MAX_ALPHABET => Ok(n as usize),
        _ => Err(Error::CapExceeded(format!("alphabet of {group} exceeds {MAX_ALPHABET} letters"))),
    }
}

fn check_distribution(what: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::invalid(format!("{what} has {} entries, expected {len}", p.len())));
    }
    if let Some(x) = p.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::NotStochastic(format!("{what} has entry {x}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::NotStochastic(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Validates a spec and builds its evaluable handle. `U`-step specs are
/// recoded as one-step chains over `A^U`.
pub fn make_measure(spec: MeasureSpec) -> Result<Measure> {
    let group = match &spec {
        MeasureSpec::Bernoulli(s) => s.group.clone(),
        MeasureSpec::Markov(s) => s.group.clone(),
        MeasureSpec::NStep(s) => s.group.clone(),
    };
    let size = alphabet(&group)?;
    let q = group.exponent();
    let elements: Vec<GroupElement> = group.elements().collect();
    let chars: Vec<Vec<Complex64>> = elements
        .iter()
        .map(|c| elements.iter().map(|a| Phase::new(group.pair_raw(c.residues(), a.residues()), q).to_complex()).collect())
        .collect();

    let (kind, full_support, semistationary) = match &spec {
        MeasureSpec::Bernoulli(s) => {
            check_distribution("weights", &s.weights, size)?;
            let transforms = chars
                .iter()
                .map(|row| row.iter().zip(&s.weights).map(|(z, w)| z * w).sum())
                .collect();
            let full = s.weights.iter().all(|&w| w > 0.0);
            (Kind::Bernoulli { weights: s.weights.clone(), transforms }, full, true)
        }
        MeasureSpec::Markov(s) => {
            if s.transitions.is_empty() {
                return Err(Error::invalid("Markov spec needs at least one transition matrix"));
            }
            for k in &s.transitions {
                if k.size() != size {
                    return Err(Error::invalid(format!("transition matrix has size {}, alphabet has {size}", k.size())));
                }
                k.validate()?;
            }
            check_distribution("initial distribution", &s.initial, size)?;
            let chain = Chain {
                transitions: s.transitions.clone(),
                initial: s.initial.clone(),
                origin: s.origin,
                letters: (0..size).collect(),
            };
            let full = s.initial.iter().all(|&x| x > 0.0) && s.transitions.iter().all(Kernel::is_positive);
            let back = chain.distribution_at(s.origin + s.transitions.len() as i64);
            let semi = back.iter().zip(&s.initial).all(|(a, b)| (a - b).abs() <= STOCHASTIC_TOL);
            (Kind::Chain(chain), full, semi)
        }
        MeasureSpec::NStep(s) => {
            let chain = recode(s, size)?;
            let full = s.block.iter().all(|&x| x > 0.0);
            (Kind::Chain(chain), full, true)
        }
    };
    Ok(Measure { group, spec, kind, full_support, semistationary, chars })
}

fn recode(s: &NStepMarkovSpec, size: usize) -> Result<Chain> {
    let u = s.steps;
    if u == 0 {
        return Err(Error::invalid("U-step spec needs U >= 1"));
    }
    let states = size
        .checked_pow(u as u32)
        .filter(|&n| n as u64 <= MAX_ALPHABET)
        .ok_or_else(|| Error::CapExceeded(format!("recoded alphabet {size}^{u} too large")))?;
    check_distribution("block marginal", &s.block, states * size)?;
    // prefix(a_0..a_(U-1)) and suffix(a_1..a_U) marginals of the block
    let mut prefix = vec![0.0; states];
    let mut suffix = vec![0.0; states];
    for (idx, &x) in s.block.iter().enumerate() {
        prefix[idx % states] += x;
        suffix[idx / size] += x;
    }
    if let Some(i) = (0..states).find(|&i| (prefix[i] - suffix[i]).abs() > STOCHASTIC_TOL) {
        return Err(Error::InconsistentMarginals(format!(
            "overlapping {u}-windows disagree at block {i}: {} vs {}",
            prefix[i], suffix[i]
        )));
    }
    // state (a_n..a_(n+U-1)) -> (a_(n+1)..a_(n+U)), i.e. drop the lowest digit, append a new top one
    let kernel = Kernel::from_fn(states, |to, from| {
        if to % (states / size) != from / size {
            return 0.0;
        }
        let next = to / (states / size);
        if prefix[from] > 0.0 {
            s.block[from + states * next] / prefix[from]
        } else {
            1.0 / size as f64
        }
    });
    Ok(Chain { transitions: vec![kernel], initial: prefix, origin: s.origin, letters: (0..states).map(|x| x % size).collect() })
}

impl NStepMarkovSpec {
    /// Stationary spec from a conditional law `P(next | a_n..a_(n+U-1))`,
    /// given as `kernel[prefix][next]` with `prefix` in mixed radix.
    pub fn from_conditional(group: Group, steps: usize, kernel: &[Vec<f64>]) -> Result<Self> {
        let size = alphabet(&group)?;
        let states = size.pow(steps as u32);
        if kernel.len() != states || kernel.iter().any(|r| r.len() != size) {
            return Err(Error::invalid("conditional table has the wrong shape"));
        }
        for row in kernel {
            check_distribution("conditional law", row, size)?;
        }
        let q = Kernel::from_fn(states, |to, from| {
            if to % (states / size) == from / size { kernel[from][to / (states / size)] } else { 0.0 }
        });
        let pi = stationary(&q)?;
        let mut block = vec![0.0; states * size];
        for (from, row) in kernel.iter().enumerate() {
            for (next, &p) in row.iter().enumerate() {
                block[from + states * next] = pi[from] * p;
            }
        }
        Ok(NStepMarkovSpec { group, steps, block, origin: 0 })
    }

    /// Cylinder probability straight from the block marginal:
    /// `nu(w_0..w_U) * prod nu(w_(i-U)..w_i) / nu(w_(i-U)..w_(i-1))`.
    pub fn block_cylinder_prob(&self, word: &[usize]) -> f64 {
        let size = self.group.order().unwrap() as usize;
        let u = self.steps;
        let states = size.pow(u as u32);
        let window = |w: &[usize]| w.iter().rev().fold(0usize, |acc, &x| acc * size + x);
        let marginal = |w: &[usize]| -> f64 {
            // sum the block over its trailing free letters
            let free = u + 1 - w.len();
            let base = window(w);
            let stride = size.pow(w.len() as u32);
            (0..size.pow(free as u32)).map(|t| self.block[base + stride * t]).sum()
        };
        if word.len() <= u + 1 {
            return marginal(word);
        }
        let mut p = self.block[window(&word[..=u])];
        for i in u + 1..word.len() {
            let num = self.block[window(&word[i - u..=i])];
            let den: f64 = (0..size).map(|x| self.block[window(&word[i - u..i]) + states * x]).sum();
            p *= num / den;
        }
        p
    }
}

/// Stationary distribution of a column-stochastic matrix by Gaussian elimination.
pub fn stationary(q: &Kernel) -> Result<Vec<f64>> {
    let n = q.size();
    // (Q - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = q.get(i, j) - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[n - 1] = vec![1.0; n + 1];
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::invalid("chain has no unique stationary distribution"));
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Fourier coefficient of a measure at one character.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierReport {
    pub character: String,
    pub value: Complex64,
    pub modulus: f64,
    pub rank: usize,
}

/// Haar measure on `A^Z`, the uniform product measure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HaarReference {
    pub group: Group,
    pub window: usize,
}

impl HaarReference {
    /// Probability of fixing `k` coordinates: `|A|^(-k)`.
    pub fn cylinder_prob(&self, k: usize) -> f64 {
        (self.group.order().unwrap() as f64).powi(-(k as i32))
    }
}

impl Measure {
    /// The uniform Bernoulli (Haar) measure.
    pub fn haar(group: Group) -> Result<Measure> {
        let size = alphabet(&group)?;
        make_measure(MeasureSpec::Bernoulli(BernoulliSpec { group, weights: vec![1.0 / size as f64; size] }))
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn spec(&self) -> &MeasureSpec {
        &self.spec
    }

    pub fn alphabet(&self) -> usize {
        self.chars.len()
    }

    pub fn full_support(&self) -> bool {
        self.full_support
    }

    /// One period of transitions returns the initial distribution.
    pub fn semistationary(&self) -> bool {
        self.semistationary
    }

    /// The one-step chain realizing a Markov or recoded `U`-step measure.
    pub fn chain(&self) -> Option<&Chain> {
        match &self.kind {
            Kind::Chain(c) => Some(c),
            Kind::Bernoulli { .. } => None,
        }
    }

    /// First site at which the measure is defined.
    pub fn origin(&self) -> Option<i64> {
        self.chain().map(|c| c.origin)
    }

    /// Probability that `start, start+1, ...` carry the letters of `word` (element indices).
    pub fn cylinder_prob(&self, start: i64, word: &[usize]) -> Result<f64> {
        if let Some(o) = self.origin() {
            if start < o {
                return Err(Error::WindowOverflow(format!("cylinder starts at {start}, before the chain origin {o}")));
            }
        }
        Ok(match &self.kind {
            Kind::Bernoulli { weights, .. } => word.iter().map(|&a| weights[a]).product(),
            Kind::Chain(c) => c.cylinder_prob(start, word),
        })
    }

    /// Fourier coefficient at a dense character window: `coeffs[i]` is the
    /// element index of the coefficient at `start + i`.
    pub(crate) fn fourier_window(&self, start: i64, coeffs: &[usize]) -> Complex64 {
        match &self.kind {
            Kind::Bernoulli { transforms, .. } => coeffs.iter().map(|&c| transforms[c]).product(),
            Kind::Chain(chain) => {
                if coeffs.is_empty() {
                    return Complex64::new(1.0, 0.0);
                }
                let tables: Vec<&[Complex64]> = coeffs.iter().map(|&c| self.chars[c].as_slice()).collect();
                chain.transfer(start, &tables)
            }
        }
    }

    fn check_character(&self, chi: &Character) -> Result<()> {
        if chi.group() != &self.group || chi.dim() != 1 {
            return Err(Error::GroupMismatch(format!(
                "character over {} (D={}) against a measure on ({})^Z",
                chi.group(),
                chi.dim(),
                self.group
            )));
        }
        if let (Some(o), Some(first)) = (self.origin(), chi.support().next()) {
            if first.x() < o {
                return Err(Error::WindowOverflow(format!(
                    "character support reaches site {}, before the chain origin {o}",
                    first.x()
                )));
            }
        }
        Ok(())
    }

    pub fn fourier(&self, chi: &Character) -> Result<FourierReport> {
        self.check_character(chi)?;
        let value = if chi.is_trivial() {
            Complex64::new(1.0, 0.0)
        } else {
            match &self.kind {
                Kind::Bernoulli { transforms, .. } => chi
                    .coefficients()
                    .values()
                    .map(|c| transforms[self.group.index_of(c)])
                    .product(),
                Kind::Chain(_) => {
                    let first = chi.support().next().unwrap().x();
                    let last = chi.support().last().unwrap().x();
                    let mut coeffs = vec![0usize; (last - first + 1) as usize];
                    for (s, c) in chi.coefficients() {
                        coeffs[(s.x() - first) as usize] = self.group.index_of(c);
                    }
                    self.fourier_window(first, &coeffs)
                }
            }
        };
        Ok(FourierReport { character: chi.to_string(), value, modulus: value.norm(), rank: chi.rank() })
    }
}

/// `measure_fourier` as a free function.
pub fn measure_fourier(mu: &Measure, chi: &Character) -> Result<FourierReport> {
    mu.fourier(chi)
}

/// `-lambda = 1/2 sup log || xi. Q' chi. P' ||_inf` over all characters `xi`,
/// nontrivial `chi`, and ordered pairs `(Q, P)` from the family. Returns
/// `f64::INFINITY` when the supremum vanishes up to [`NORM_ZERO_TOL`].
pub fn ehm_lambda(group: &Group, family: &[Kernel]) -> Result<f64> {
    if family.is_empty() {
        return Err(Error::invalid("empty transition family"));
    }
    let size = alphabet(group)?;
    for k in family {
        if k.size() != size {
            return Err(Error::invalid(format!("transition matrix has size {}, alphabet has {size}", k.size())));
        }
        k.validate()?;
    }
    let q = group.exponent();
    let elements: Vec<GroupElement> = group.elements().collect();
    let table = |c: &GroupElement| -> Vec<Complex64> {
        elements.iter().map(|a| Phase::new(group.pair_raw(c.residues(), a.residues()), q).to_complex()).collect()
    };
    let tables: Vec<Vec<Complex64>> = elements.iter().map(table).collect();

    let mut sup = 0.0f64;
    for xi in &tables {
        for chi in tables.iter().skip(1) {
            for qm in family {
                for pm in family {
                    sup = sup.max(operator_norm(xi, qm, chi, pm));
                }
            }
        }
    }
    // exact cancellation in the model shows up as rounding noise here
    Ok(if sup <= NORM_ZERO_TOL { f64::INFINITY } else { -0.5 * sup.ln() })
}

/// `|| xi. Q' chi. P' ||_inf`, the largest absolute row sum, where
/// `(Q')[a][b] = Q[b][a]`.
fn operator_norm(xi: &[Complex64], qm: &Kernel, chi: &[Complex64], pm: &Kernel) -> f64 {
    let n = qm.size();
    (0..n)
        .map(|a| {
            (0..n)
                .map(|c| {
                    let s: Complex64 = (0..n).map(|b| chi[b] * (qm.get(b, a) * pm.get(c, b))).sum();
                    (xi[a] * s).norm()
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// `(F^N mu)^(chi) = mu^(chi o F^N)`.
pub fn pushforward_fourier(mu: &Measure, chi: &Character, f: &Lca, n: u64) -> Result<FourierReport> {
    let pushed = char_power(chi, f, n)?;
    mu.fourier(&pushed)
}

/// A one-dimensional cylinder set: fixed letters at listed sites.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cylinder {
    pub sites: Vec<i64>,
    pub values: Vec<GroupElement>,
}

impl Cylinder {
    pub fn new(sites: Vec<i64>, values: Vec<GroupElement>) -> Result<Self> {
        if sites.len() != values.len() || sites.is_empty() {
            return Err(Error::invalid("cylinder needs one value per site and at least one site"));
        }
        let mut sorted = sites.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != sites.len() {
            return Err(Error::invalid("cylinder sites must be distinct"));
        }
        Ok(Cylinder { sites, values })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CesaroTarget {
    Cylinder(Cylinder),
    Character(Character),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Subsequence {
    None,
    /// `N = base^k` for `k >= 0`.
    Powers(u64),
    Explicit(Vec<usize>),
}

impl Subsequence {
    fn members(&self, n_max: usize) -> Vec<usize> {
        match self {
            Subsequence::None => Vec::new(),
            Subsequence::Powers(b) if *b >= 2 => {
                let mut out = Vec::new();
                let mut x = 1u64;
                while x as usize <= n_max {
                    out.push(x as usize);
                    x *= b;
                }
                out
            }
            Subsequence::Powers(_) => Vec::new(),
            Subsequence::Explicit(v) => v.iter().copied().filter(|&n| n >= 1 && n <= n_max).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CesaroReport {
    /// Value at `N = 1..=n_max`: a cylinder probability or a Fourier coefficient.
    pub values: Vec<Complex64>,
    /// Running means `(1/N) sum_(n<=N) values[n]`.
    pub cesaro: Vec<Complex64>,
    /// The Haar value of the same observable.
    pub haar_value: f64,
    /// `(eps, fraction of N with |value - haar| <= eps)`.
    pub within: Vec<(f64, f64)>,
    pub subsequence: Vec<(usize, Complex64)>,
}

/// Number of deterministic work units for chunked parallel sums.
const CHUNKS: usize = 64;

/// Per-`N` values of a cylinder probability or Fourier coefficient of
/// `F^N mu`, their Cesaro means, and a subsequence trace.
///
/// Cylinder probabilities come from Fourier inversion
/// `P[b on B] = |A|^(-|B|) sum_(chi on B) conj(chi(b)) mu^(chi o F^N)`.
pub fn cesaro_scan(mu: &Measure, target: &CesaroTarget, f: &Lca, n_max: usize, subsequence: &Subsequence) -> Result<CesaroReport> {
    if n_max == 0 {
        return Err(Error::invalid("n_max must be >= 1"));
    }
    if f.group() != mu.group() || f.dim() != 1 {
        return Err(Error::GroupMismatch("automaton and measure live on different spaces".into()));
    }
    let group = mu.group().clone();
    let (chars, weights, haar_value): (Vec<Character>, Vec<Complex64>, f64) = match target {
        CesaroTarget::Character(chi) => {
            let haar = if chi.is_trivial() { 1.0 } else { 0.0 };
            (vec![chi.clone()], vec![Complex64::new(1.0, 0.0)], haar)
        }
        CesaroTarget::Cylinder(cyl) => {
            let size = mu.alphabet();
            let bits = cyl.len() as f64 * (size as f64).log2();
            if bits > MAX_ENUMERATION_BITS {
                return Err(Error::CapExceeded(format!("Fourier inversion over {bits:.1} bits exceeds {MAX_ENUMERATION_BITS}")));
            }
            for v in &cyl.values {
                group.check(v)?;
            }
            let total = size.pow(cyl.len() as u32);
            let norm = 1.0 / total as f64;
            let q = group.exponent();
            let mut chars = Vec::with_capacity(total);
            let mut weights = Vec::with_capacity(total);
            for idx in 0..total {
                let mut rest = idx;
                let mut coeffs = Vec::with_capacity(cyl.len());
                let mut phase = Phase::zero();
                for (s, b) in cyl.sites.iter().zip(&cyl.values) {
                    let c = group.element_at(rest % size);
                    rest /= size;
                    phase = phase.add(Phase::new(group.pair_raw(c.residues(), b.residues()), q));
                    coeffs.push((Site::new1(*s), c));
                }
                chars.push(Character::new(group.clone(), 1, coeffs)?);
                weights.push(phase.neg().to_complex() * norm);
            }
            (chars, weights, norm)
        }
    };

    let chunk = chars.len().div_ceil(CHUNKS).max(1);
    let partials: Vec<Result<Vec<Complex64>>> = chars
        .par_chunks(chunk)
        .zip(weights.par_chunks(chunk))
        .map(|(cs, ws)| {
            let mut acc = vec![Complex64::new(0.0, 0.0); n_max];
            for (chi, w) in cs.iter().zip(ws) {
                let mut cur = chi.clone();
                for slot in acc.iter_mut() {
                    cur = compose_char(&cur, f)?;
                    *slot += w * mu.fourier(&cur)?.value;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); n_max];
    for part in partials {
        for (v, x) in values.iter_mut().zip(part?) {
            *v += x;
        }
    }

    let mut cesaro = Vec::with_capacity(n_max);
    let mut running = Complex64::new(0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        running += v;
        cesaro.push(running / (i + 1) as f64);
    }
    let within = [1e-2, 1e-3]
        .iter()
        .map(|&eps| {
            let hits = values.iter().filter(|v| (*v - haar_value).norm() <= eps).count();
            (eps, hits as f64 / n_max as f64)
        })
        .collect();
    let subsequence = subsequence.members(n_max).into_iter().map(|n| (n, values[n - 1])).collect();
    Ok(CesaroReport { values, cesaro, haar_value, within, subsequence })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmScanOptions {
    pub max_rank: usize,
    pub window_start: i64,
    pub window_len: usize,
    /// Characters drawn per rank when the window is too large to enumerate.
    pub samples_per_rank: usize,
    pub seed: u64,
    /// Adds the envelope `exp(-lambda r)` to each row.
    pub lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmRow {
    pub rank: usize,
    pub max_modulus: f64,
    pub envelope: Option<f64>,
    /// Characters examined at this rank.
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HmScan {
    pub exhaustive: bool,
    pub rows: Vec<HmRow>,
}

/// For each rank `1..=max_rank`, the largest `|mu^(chi)|` over characters
/// supported in the window: every character when the window has at most
/// 24 bits, otherwise a seeded sample per rank.
pub fn hm_scan(mu: &Measure, opts: &HmScanOptions) -> Result<HmScan> {
    if opts.window_len == 0 {
        return Err(Error::invalid("empty window"));
    }
    if let Some(o) = mu.origin() {
        if opts.window_start < o {
            return Err(Error::WindowOverflow(format!("window starts before the chain origin {o}")));
        }
    }
    let size = mu.alphabet();
    let max_rank = opts.max_rank.min(opts.window_len);
    let bits = opts.window_len as f64 * (size as f64).log2();
    let exhaustive = bits <= MAX_ENUMERATION_BITS;

    let per_rank: Vec<(f64, u64)> = if exhaustive {
        let total = size.pow(opts.window_len as u32);
        let chunk = total.div_ceil(CHUNKS).max(1);
        let partials: Vec<Vec<(f64, u64)>> = (0..total.div_ceil(chunk))
            .into_par_iter()
            .map(|k| {
                let mut acc = vec![(0.0f64, 0u64); max_rank + 1];
                let mut coeffs = vec![0usize; opts.window_len];
                for idx in k * chunk..((k + 1) * chunk).min(total) {
                    let mut rest = idx;
                    let mut rank = 0;
                    for c in coeffs.iter_mut() {
                        *c = rest % size;
                        rest /= size;
                        rank += (*c != 0) as usize;
                    }
                    if rank == 0 || rank > max_rank {
                        continue;
                    }
                    let m = trimmed_fourier(mu, opts.window_start, &coeffs).norm();
                    let slot = &mut acc[rank];
                    slot.0 = slot.0.max(m);
                    slot.1 += 1;
                }
                acc
            })
            .collect();
        let mut merged = vec![(0.0f64, 0u64); max_rank + 1];
        for part in partials {
            for (m, p) in merged.iter_mut().zip(part) {
                m.0 = m.0.max(p.0);
                m.1 += p.1;
            }
        }
        merged
    } else {
        let mut merged = vec![(0.0f64, 0u64); max_rank + 1];
        for (rank, slot) in merged.iter_mut().enumerate().skip(1) {
            let maxima: Vec<f64> = (0..opts.samples_per_rank)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng::stream(opts.seed, ((rank as u64) << 40) | i as u64);
                    let coeffs = random_character(&mut rng, opts.window_len, rank, size);
                    trimmed_fourier(mu, opts.window_start, &coeffs).norm()
                })
                .collect();
            *slot = (maxima.into_iter().fold(0.0, f64::max), opts.samples_per_rank as u64);
        }
        merged
    };

    let rows = per_rank
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(rank, (max_modulus, count))| HmRow {
            rank,
            max_modulus,
            envelope: opts.lambda.map(|l| (-l * rank as f64).exp()),
            count,
        })
        .collect();
    Ok(HmScan { exhaustive, rows })
}

/// Fourier coefficient of a dense window after dropping trivial edge sites.
fn trimmed_fourier(mu: &Measure, start: i64, coeffs: &[usize]) -> Complex64 {
    let Some(first) = coeffs.iter().position(|&c| c != 0) else {
        return Complex64::new(1.0, 0.0);
    };
    let last = coeffs.iter().rposition(|&c| c != 0).unwrap();
    mu.fourier_window(start + first as i64, &coeffs[first..=last])
}

fn random_character(rng: &mut impl Rng, len: usize, rank: usize, size: usize) -> Vec<usize> {
    let mut coeffs = vec![0usize; len];
    let sites = rand::seq::index::sample(rng, len, rank);
    for s in sites {
        coeffs[s] = rng.gen_range(1..size);
    }
    coeffs
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRow {
    pub n: usize,
    pub hits: u64,
    pub samples: u64,
    pub frequency: f64,
    /// Binomial standard error at the empirical frequency.
    pub sigma: f64,
}

/// Empirical frequency of a cylinder after `N` automaton steps from
/// `samples` seeded draws of `mu`. Sample `i` at list position `k` uses the
/// stream `(seed, k << 40 | i)`, so results do not depend on thread count.
pub fn monte_carlo_check(mu: &Measure, f: &Lca, n_list: &[usize], cylinder: &Cylinder, samples: u64, seed: u64) -> Result<Vec<McRow>> {
    if samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    if f.group() != mu.group() || f.dim() != 1 {
        return Err(Error::GroupMismatch("automaton and measure live on different spaces".into()));
    }
    for v in &cylinder.values {
        mu.group().check(v)?;
    }
    let (lo, hi) = f.reach();
    let (lo, hi) = (lo[0], hi[0]);
    let b_min = *cylinder.sites.iter().min().unwrap();
    let b_max = *cylinder.sites.iter().max().unwrap();
    let targets: Vec<usize> = cylinder.values.iter().map(|v| mu.group().index_of(v)).collect();
    let sampler = Sampler::new(mu);

    let mut rows = Vec::with_capacity(n_list.len());
    for (k, &n) in n_list.iter().enumerate() {
        let start = b_min + n as i64 * lo;
        let len = ((b_max - b_min) + n as i64 * (hi - lo) + 1).max(hi - lo + 1) as usize;
        if let Some(o) = mu.origin() {
            if start < o {
                return Err(Error::WindowOverflow(format!(
                    "light cone of the cylinder after {n} steps starts at {start}, before the chain origin {o}"
                )));
            }
        }
        let hits: u64 = (0..samples)
            .into_par_iter()
            .map(|i| -> Result<u64> {
                let mut rng = rng::stream(seed, ((k as u64) << 40) | i);
                let letters = sampler.draw(&mut rng, start, len);
                let cells: Vec<GroupElement> = letters.iter().map(|&a| mu.group().element_at(a)).collect();
                let config = crate::lca::Configuration::from_elements(mu.group().clone(), &cells)?;
                let out = f.iterate(&config, n)?;
                let hit = cylinder
                    .sites
                    .iter()
                    .zip(&targets)
                    .all(|(s, &t)| mu.group().index_of(&out.get(Site::new1(s - start))) == t);
                Ok(hit as u64)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let freq = hits as f64 / samples as f64;
        rows.push(McRow { n, hits, samples, frequency: freq, sigma: (freq * (1.0 - freq) / samples as f64).sqrt() });
    }
    Ok(rows)
}

/// Inverse-CDF sampler over the letters of a measure.
struct Sampler<'a> {
    mu: &'a Measure,
}

fn draw_index(rng: &mut impl Rng, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        if w > 0.0 {
            last = i;
        }
        if u < acc {
            return i;
        }
    }
    last
}

impl<'a> Sampler<'a> {
    fn new(mu: &'a Measure) -> Self {
        Sampler { mu }
    }

    fn draw(&self, rng: &mut impl Rng, start: i64, len: usize) -> Vec<usize> {
        match &self.mu.kind {
            Kind::Bernoulli { weights, .. } => (0..len).map(|_| draw_index(rng, weights.iter().copied())).collect(),
            Kind::Chain(chain) => {
                let eta = chain.distribution_at(start);
                let mut state = draw_index(rng, eta.iter().copied());
                let mut out = Vec::with_capacity(len);
                out.push(chain.letters[state]);
                for i in 1..len {
                    let k = chain.kernel_at(start + i as i64 - 1);
                    let from = state;
                    state = draw_index(rng, (0..k.size()).map(|to| k.get(to, from)));
                    out.push(chain.letters[state]);
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lca::make_lca;
    use crate::algebra::Endo;

    fn z(n: u64) -> Group {
        Group::cyclic(n).unwrap()
    }

    pub(crate) fn bernoulli(weights: &[f64]) -> Measure {
        let g = z(weights.len() as u64);
        make_measure(MeasureSpec::Bernoulli(BernoulliSpec { group: g, weights: weights.to_vec() })).unwrap()
    }

    fn markov(rows: Vec<Vec<f64>>, initial: Vec<f64>) -> Measure {
        let g = z(rows.len() as u64);
        let k = Kernel::from_rows(&rows).unwrap();
        make_measure(MeasureSpec::Markov(MarkovChainSpec { group: g, transitions: vec![k], initial, origin: 0 })).unwrap()
    }

    fn chi(n: u64, coeffs: &[(i64, i64)]) -> Character {
        let g = z(n);
        Character::new(g.clone(), 1, coeffs.iter().map(|&(s, c)| (Site::new1(s), g.element(&[c]).unwrap()))).unwrap()
    }

    fn lind() -> Lca {
        make_lca(z(2), 1, [(Site::new1(-1), Endo::Scalar(1)), (Site::new1(1), Endo::Scalar(1))]).unwrap()
    }

    #[test]
    fn make_measure_flags() {
        assert!(Measure::haar(z(2)).unwrap().full_support());
        let m = markov(vec![vec![1.0, 0.5], vec![0.0, 0.5]], vec![0.5, 0.5]);
        assert!(!m.full_support());
        let bad = make_measure(MeasureSpec::Bernoulli(BernoulliSpec { group: z(2), weights: vec![0.6, 0.6] }));
        assert!(matches!(bad, Err(Error::NotStochastic(_))));
        let rows = vec![vec![0.9, 0.2], vec![0.2, 0.8]];
        assert!(matches!(Kernel::from_rows(&rows), Err(Error::NotStochastic(_))));
    }

    #[test]
    fn semistationary_flag() {
        let sym = markov(vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![0.5, 0.5]);
        assert!(sym.semistationary());
        let drifting = markov(vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![1.0, 0.0]);
        assert!(!drifting.semistationary());
    }

    #[test]
    fn bernoulli_fourier_examples() {
        let mu = bernoulli(&[0.9, 0.1]);
        assert_eq!(mu.fourier(&Character::trivial(z(2), 1)).unwrap().value, Complex64::new(1.0, 0.0));
        for r in 1..6 {
            let c = chi(2, &(0..r).map(|s| (3 * s, 1)).collect::<Vec<_>>());
            let rep = mu.fourier(&c).unwrap();
            assert!((rep.modulus - 0.8f64.powi(r as i32)).abs() < 1e-12);
            assert_eq!(rep.rank, r as usize);
        }
    }

    #[test]
    fn iid_chain_matches_bernoulli() {
        let beta = [0.2, 0.5, 0.3];
        let iid = markov(vec![vec![0.2; 3], vec![0.5; 3], vec![0.3; 3]], beta.to_vec());
        let bern = bernoulli(&beta);
        for coeffs in [vec![(0, 1)], vec![(0, 1), (1, 2)], vec![(2, 2), (5, 1), (6, 1)]] {
            let c = chi(3, &coeffs);
            let a = iid.fourier(&c).unwrap().value;
            let b = bern.fourier(&c).unwrap().value;
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn ehm_lambda_examples() {
        let q = Kernel::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
        let l = ehm_lambda(&z(2), &[q]).unwrap();
        assert!((l - (-0.5 * 0.8f64.ln())).abs() < 1e-12);
        let u = Kernel::from_rows(&[vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3], vec![1.0 / 3.0; 3]]).unwrap();
        assert_eq!(ehm_lambda(&z(3), &[u]).unwrap(), f64::INFINITY);
        let near = Kernel::from_rows(&[vec![0.01, 0.99], vec![0.99, 0.01]]).unwrap();
        let l = ehm_lambda(&z(2), &[near]).unwrap();
        assert!(l > 0.0 && l < 0.05, "{l}");
        assert!(ehm_lambda(&z(2), &[]).is_err());
    }

    #[test]
    fn pushforward_examples() {
        let mu = bernoulli(&[0.9, 0.1]);
        let f = lind();
        let c = chi(2, &[(0, 1)]);
        assert_eq!(pushforward_fourier(&mu, &c, &f, 0).unwrap(), mu.fourier(&c).unwrap());
        let haar = Measure::haar(z(2)).unwrap();
        for n in [1, 5, 12] {
            assert!(pushforward_fourier(&haar, &c, &f, n).unwrap().modulus < 1e-15);
            let rank = char_power(&c, &f, n).unwrap().rank();
            let m = pushforward_fourier(&mu, &c, &f, n).unwrap().modulus;
            assert!((m - 0.8f64.powi(rank as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn cesaro_small_lind() {
        let mu = bernoulli(&[0.9, 0.1]);
        let cyl = Cylinder::new(vec![0], vec![z(2).element(&[0]).unwrap()]).unwrap();
        let rep = cesaro_scan(&mu, &CesaroTarget::Cylinder(cyl), &lind(), 64, &Subsequence::Powers(2)).unwrap();
        for (i, v) in rep.values.iter().enumerate() {
            let rank = 1u32 << (i as u32 + 1).count_ones();
            assert!((v.re - (1.0 + 0.8f64.powi(rank as i32)) / 2.0).abs() < 1e-12);
            assert!(v.im.abs() < 1e-12);
        }
        assert_eq!(rep.subsequence.len(), 7);
        for (_, v) in &rep.subsequence {
            assert!((v.re - 0.82).abs() < 1e-12);
        }
        assert_eq!(rep.haar_value, 0.5);
    }

    #[test]
    fn cesaro_haar_constant() {
        let haar = Measure::haar(z(2)).unwrap();
        let cyl = Cylinder::new(vec![0, 3], vec![z(2).element(&[1]).unwrap(), z(2).element(&[0]).unwrap()]).unwrap();
        let rep = cesaro_scan(&haar, &CesaroTarget::Cylinder(cyl), &lind(), 20, &Subsequence::None).unwrap();
        assert!(rep.values.iter().all(|v| (v.re - 0.25).abs() < 1e-12));
        assert_eq!(rep.within[0].1, 1.0);
    }

    #[test]
    fn cesaro_cap() {
        let mu = bernoulli(&[0.9, 0.1]);
        let cyl = Cylinder::new((0..25).collect(), vec![z(2).zero(); 25]).unwrap();
        assert!(matches!(
            cesaro_scan(&mu, &CesaroTarget::Cylinder(cyl), &lind(), 2, &Subsequence::None),
            Err(Error::CapExceeded(_))
        ));
    }

    #[test]
    fn hm_scan_examples() {
        let opts = HmScanOptions { max_rank: 6, window_start: 0, window_len: 10, samples_per_rank: 0, seed: 1, lambda: None };
        let haar = hm_scan(&Measure::haar(z(2)).unwrap(), &opts).unwrap();
        assert!(haar.exhaustive);
        assert!(haar.rows.iter().all(|r| r.max_modulus < 1e-15));
        let b = hm_scan(&bernoulli(&[0.9, 0.1]), &opts).unwrap();
        for row in &b.rows {
            assert!((row.max_modulus - 0.8f64.powi(row.rank as i32)).abs() < 1e-12);
        }
        assert_eq!(b.rows[0].count, 10);
    }

    #[test]
    fn hm_scan_markov_envelope() {
        let rows = vec![vec![0.7, 0.4], vec![0.3, 0.6]];
        let k = Kernel::from_rows(&rows).unwrap();
        let eta = stationary(&k).unwrap();
        let mu = markov(rows, eta);
        let lambda = ehm_lambda(&z(2), &[k]).unwrap();
        let opts = HmScanOptions { max_rank: 12, window_start: 0, window_len: 12, samples_per_rank: 0, seed: 0, lambda: Some(lambda) };
        let scan = hm_scan(&mu, &opts).unwrap();
        for row in &scan.rows {
            assert!(row.max_modulus <= row.envelope.unwrap() + 1e-12, "{row:?}");
        }
        // sampled mode on a window too large to enumerate
        let opts = HmScanOptions { window_len: 40, samples_per_rank: 50, ..opts };
        let scan = hm_scan(&mu, &opts).unwrap();
        assert!(!scan.exhaustive);
        for row in &scan.rows {
            assert!(row.max_modulus <= row.envelope.unwrap() + 1e-12, "{row:?}");
        }
        assert_eq!(scan, hm_scan(&mu, &opts).unwrap());
    }

    #[test]
    fn monte_carlo_haar_within_binomial_band() {
        let haar = Measure::haar(z(2)).unwrap();
        let cyl = Cylinder::new(vec![0, 1], vec![z(2).element(&[1]).unwrap(), z(2).element(&[1]).unwrap()]).unwrap();
        let samples = 20_000;
        let rows = monte_carlo_check(&haar, &lind(), &[0, 3], &cyl, samples, 11).unwrap();
        let q = 0.25f64;
        let band = 4.0 * (q * (1.0 - q) / samples as f64).sqrt();
        for r in &rows {
            assert!((r.frequency - q).abs() <= band, "{r:?}");
        }
        assert!(monte_carlo_check(&haar, &lind(), &[1], &cyl, 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let mu = bernoulli(&[0.9, 0.1]);
        let cyl = Cylinder::new(vec![0], vec![z(2).zero()]).unwrap();
        let a = monte_carlo_check(&mu, &lind(), &[4], &cyl, 500, 3).unwrap();
        let b = monte_carlo_check(&mu, &lind(), &[4], &cyl, 500, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nstep_rejects_inconsistent_block() {
        // a_0 a_1 a_2 block where P(a_0 = 1) != P(a_1 = 1)
        let mut block = vec![0.0; 8];
        block[1] = 0.5; // (1,0,0)
        block[0] = 0.5;
        let spec = NStepMarkovSpec { group: z(2), steps: 2, block, origin: 0 };
        assert!(matches!(make_measure(MeasureSpec::NStep(spec)), Err(Error::InconsistentMarginals(_))));
    }

    #[test]
    fn markov_origin_guard() {
        let mu = markov(vec![vec![0.9, 0.1], vec![0.1, 0.9]], vec![0.5, 0.5]);
        assert!(matches!(mu.fourier(&chi(2, &[(-1, 1)])), Err(Error::WindowOverflow(_))));
        assert!(matches!(mu.cylinder_prob(-2, &[0]), Err(Error::WindowOverflow(_))));
    }

    #[test]
    fn stationary_distribution() {
        let k = Kernel::from_rows(&[vec![0.7, 0.4], vec![0.3, 0.6]]).unwrap();
        let pi = stationary(&k).unwrap();
        assert!((pi[0] - 4.0 / 7.0).abs() < 1e-14);
        let back = k.push(&pi);
        assert!((back[0] - pi[0]).abs() < 1e-15);
    }
}
