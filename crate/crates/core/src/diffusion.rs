//! Rank trajectories, empirical diffusion densities, V-separating sets,
//! and the closed-form coefficient families for commuting-automorphism
//! automata and the two-dimensional Ledrappier-type example.
//!
//! Nothing here proves diffusion: densities are measured at a finite
//! horizon and reported as such.

use crate::algebra::{Character, Endo, Group, Matrix};
use crate::error::{Error, Result};
use crate::lca::{compose_char, make_lca, Lca};
use crate::numtheory::{dominates, gap_census, is_prime, lucas};
use crate::site::Site;

/// FNV-1a over a canonical rendering; stable across runs and platforms.
pub fn identity_hash(canonical: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{h:016x}")
}

pub fn lca_hash(f: &Lca) -> String {
    identity_hash(&format!("{}|{}|{:?}", f.group(), f.dim(), f.coefficients()))
}

pub fn character_hash(chi: &Character) -> String {
    identity_hash(&format!("{}|{}|{}", chi.group(), chi.dim(), chi))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankTrajectory {
    pub lca_hash: String,
    pub chi_hash: String,
    /// `ranks[i]` is the rank of `chi o F^(i+1)`.
    pub ranks: Vec<usize>,
}

impl RankTrajectory {
    pub fn n_max(&self) -> usize {
        self.ranks.len()
    }

    pub fn rank_at(&self, n: usize) -> usize {
        self.ranks[n - 1]
    }
}

pub fn rank_trajectory(chi: &Character, f: &Lca, n_max: usize) -> Result<RankTrajectory> {
    if n_max == 0 {
        return Err(Error::invalid("trajectory length must be >= 1"));
    }
    if chi.is_trivial() {
        return Err(Error::invalid("the trivial character has rank 0 under every power"));
    }
    let mut ranks = Vec::with_capacity(n_max);
    let mut cur = chi.clone();
    for _ in 0..n_max {
        cur = compose_char(&cur, f)?;
        ranks.push(cur.rank());
    }
    Ok(RankTrajectory { lca_hash: lca_hash(f), chi_hash: character_hash(chi), ranks })
}

/// For each threshold `R`, the fraction of `N <= n_max` with rank at least `R`.
pub fn density_report(traj: &RankTrajectory, thresholds: &[usize]) -> Result<Vec<(usize, f64)>> {
    if traj.ranks.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    let total = traj.ranks.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&r| (r, traj.ranks.iter().filter(|&&k| k >= r).count() as f64 / total))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeparatingCertificate {
    /// The power `j` of `F` whose coefficients are examined.
    pub power: u64,
    pub v: Vec<Site>,
    pub w: Vec<Site>,
    pub verified: bool,
}

/// Checks that every `w` carries an automorphic coefficient of `F^j` while
/// every `w - v` carries a zero coefficient.
pub fn verify_separating(power_coeffs: &Lca, power: u64, w: &[Site], v: &[Site]) -> Result<SeparatingCertificate> {
    if v.contains(&Site::ORIGIN) {
        return Err(Error::invalid("the gap set V must not contain 0"));
    }
    let group = power_coeffs.group();
    let verified = w.iter().all(|wi| {
        group.is_automorphism(&power_coeffs.coefficient(wi))
            && v.iter().all(|vi| power_coeffs.coefficient(&(*wi - *vi)).is_zero())
    });
    Ok(SeparatingCertificate { power, v: v.to_vec(), w: w.to_vec(), verified })
}

/// `[J k_1]_p [k_1 k_2]_p ... [k_(U-1) k_U]_p`, the scalar part of the
/// coefficient at `(k)` of `F^J` for commuting-automorphism automata.
pub fn calca_coefficient(j: u64, ks: &[u64], p: u64) -> Result<u64> {
    if !is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    let mut prev = j;
    let mut acc = 1 % p;
    for &k in ks {
        acc = acc * lucas(prev, k, p) % p;
        if acc == 0 {
            return Ok(0);
        }
        prev = k;
    }
    Ok(acc)
}

/// `phi^(N)_m`: `C((N+m)/2, m) mod p` when `m = N (mod 2)`, else 0.
pub fn ledrappier_phi(n: u64, m: u64, p: u64) -> Result<u64> {
    if !is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    Ok(phi(n, m, p))
}

fn phi(n: u64, m: u64, p: u64) -> u64 {
    if (n + m) % 2 != 0 {
        return 0;
    }
    lucas((n + m) / 2, m, p)
}

/// The example automaton on `((Z/p)^2)^Z` with local map `(y_0, x_0 + y_1)`.
pub fn example_automaton(p: u64) -> Result<Lca> {
    let group = Group::prime_power_vector(p, 1, 2)?;
    let swap = Matrix::new(vec![vec![0, 1], vec![1, 0]])?;
    let low = Matrix::new(vec![vec![0, 0], vec![0, 1]])?;
    make_lca(group, 1, [(Site::new1(0), Endo::Matrix(swap)), (Site::new1(1), Endo::Matrix(low))])
}

/// Closed form of the site-`m` coefficient of the example automaton's `N`-th power.
pub fn ledrappier_matrix(n: u64, m: u64, p: u64) -> Result<Endo> {
    if n < 2 {
        return Err(Error::invalid("closed form needs N >= 2"));
    }
    if !is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    let (a, b, c) = (phi(n - 2, m, p), phi(n - 1, m, p), phi(n, m, p));
    Ok(Endo::Matrix(Matrix::new(vec![vec![a, b], vec![b, c]])?))
}

/// A separating-set certificate for `F^(2j)` built from the digits of `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExampleSeparating {
    pub certificate: SeparatingCertificate,
    /// Lowest index of the `0 q 1` word used.
    pub anchor: usize,
    /// Lowest indices of the `1 0` words used.
    pub selectors: Vec<usize>,
    /// The numbers `w`; the certificate sites are `2w`.
    pub ws: Vec<u64>,
}

fn ceil_log(base: u64, x: u64) -> usize {
    let mut k = 0;
    let mut pow = 1u128;
    while pow < x as u128 {
        pow *= base as u128;
        k += 1;
    }
    k
}

/// Builds `W_j` for the example automaton and checks the digit inequalities
/// `2w << j+w`, `2w << j+w-1`, and their failure at every `2w-2u`,
/// `2w-2u-1` for `u` in `(0, v_extent]`.
///
/// Words are read least-significant first. Each `w` has a 1 under the final
/// digit of the lowest `0 q 1` word at or above index `L_V`, plus any subset
/// of 1s under the first `L_R` words `1 0` lying at least four digits above
/// that anchor; all other digits are 0.
pub fn build_example_separating(j: u64, p: u64, v_extent: u64, r: u64) -> Result<ExampleSeparating> {
    if !is_prime(p) {
        return Err(Error::invalid(format!("{p} is not prime")));
    }
    if v_extent == 0 || r == 0 {
        return Err(Error::invalid("V extent and R must be positive"));
    }
    if j >= 1 << 60 {
        return Err(Error::invalid("j too large"));
    }
    let lv = ceil_log(p, v_extent) + 1;
    let lr = ceil_log(2, r);
    let census = gap_census(j, p, 1)?;

    let anchors: Vec<usize> = census.zero_q_one.iter().copied().filter(|&i| i >= lv).collect();
    if anchors.is_empty() {
        return Err(Error::NotAMember(format!(
            "{j} has no word 0{}1 at or above digit {lv} in base {p}",
            p - 1
        )));
    }
    let choice = anchors.iter().find_map(|&i0| {
        let sel: Vec<usize> = census.one_zero.iter().copied().filter(|&i| i >= i0 + 4).take(lr).collect();
        (sel.len() == lr).then_some((i0, sel))
    });
    let Some((anchor, selectors)) = choice else {
        return Err(Error::NotAMember(format!(
            "{j} has fewer than {lr} words 10 above its 0{}1 word in base {p}",
            p - 1
        )));
    };

    let pw = |i: usize| (p as u128).pow(i as u32);
    let base_w = pw(anchor + 2);
    let mut ws = Vec::with_capacity(1 << lr);
    for mask in 0u64..(1 << lr) {
        let w = selectors
            .iter()
            .enumerate()
            .filter(|(b, _)| mask >> b & 1 == 1)
            .fold(base_w, |acc, (_, &i)| acc + pw(i));
        ws.push(u64::try_from(w).map_err(|_| Error::invalid("w overflows u64"))?);
    }

    let j = j as u128;
    let dom = |a: u128, b: u128| dominates(a as u64, b as u64, p);
    let verified = ws.iter().all(|&w| {
        let w = w as u128;
        let pary1 = dom(2 * w, j + w) && dom(2 * w, j + w - 1);
        let pary2 = (1..=v_extent as u128).all(|u| {
            !dom(2 * w - 2 * u, j + w - u)
                && !dom(2 * w - 2 * u, j + w - u - 1)
                && !dom(2 * w - 2 * u - 1, j + w - u - 1)
        });
        pary1 && pary2
    });

    let certificate = SeparatingCertificate {
        power: 2 * j as u64,
        v: (1..=2 * v_extent as i64).map(Site::new1).collect(),
        w: ws.iter().map(|&w| Site::new1(2 * w as i64)).collect(),
        verified,
    };
    Ok(ExampleSeparating { certificate, anchor, selectors, ws })
}
