//! Finite-grid Markov random fields built from strictly positive patch
//! potentials, with exact joint tables.
//!
//! Cell `(x, y)` of a `W x H` grid is digit `y*W + x` of a configuration
//! index (least significant first), so row `y` is the block of digits
//! `[y*W, (y+1)*W)`. Rows are the layers of the lamination process.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::algebra::{Group, Phase};
use crate::error::{Error, Result};
use crate::measures::{Kernel, NORM_ZERO_TOL, STOCHASTIC_TOL};

/// Largest joint table, in configurations.
pub const MAX_JOINT: usize = 1 << 24;

/// Conditional-independence tolerance.
pub const MRF_TOL: f64 = 1e-10;

const UHM_SLACK: f64 = 1e-12;
const EHM_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Both axes wrap.
    Torus,
    /// Horizontal axis wraps; rows `0` and `H-1` are free edges.
    FreeStrip,
}

/// A translation-invariant patch potential. `weights` is indexed by the
/// patch contents in mixed radix, first offset least significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub offsets: Vec<[i64; 2]>,
    pub weights: Vec<f64>,
}

impl Interaction {
    /// Pair potential between a cell and the cell at `offset`.
    pub fn pair(size: usize, offset: [i64; 2], agree: f64, disagree: f64) -> Self {
        let weights = (0..size * size).map(|i| if i % size == i / size { agree } else { disagree }).collect();
        Interaction { offsets: vec![[0, 0], offset], weights }
    }

    /// Nearest-neighbor agreement potentials, horizontal and vertical.
    pub fn ising(size: usize, agree: f64, disagree: f64) -> Vec<Self> {
        vec![Self::pair(size, [1, 0], agree, disagree), Self::pair(size, [0, 1], agree, disagree)]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMrf {
    group: Group,
    size: usize,
    width: usize,
    height: usize,
    boundary: Boundary,
    interactions: Vec<Interaction>,
    /// Differences of offsets within each patch; symmetric and contains the origin.
    neighborhood: Vec<[i64; 2]>,
    joint: Vec<f64>,
}

fn grid_size(size: usize, cells: usize) -> Result<usize> {
    (size as u128)
        .checked_pow(cells as u32)
        .filter(|&n| n <= MAX_JOINT as u128)
        .map(|n| n as usize)
        .ok_or_else(|| Error::CapExceeded(format!("{size}^{cells} configurations exceed {MAX_JOINT}")))
}

pub fn make_grid_mrf(
    group: Group,
    width: usize,
    height: usize,
    interactions: Vec<Interaction>,
    boundary: Boundary,
) -> Result<GridMrf> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("grid must be nonempty"));
    }
    let size = group.order().filter(|&n| n <= MAX_JOINT as u64).ok_or_else(|| {
        Error::CapExceeded(format!("alphabet of {group} too large"))
    })? as usize;
    let total = grid_size(size, width * height)?;

    let mut neighborhood = BTreeSet::from([[0i64, 0i64]]);
    for (k, it) in interactions.iter().enumerate() {
        if it.offsets.is_empty() {
            return Err(Error::invalid(format!("interaction {k} has an empty shape")));
        }
        let expected = (size as u128).checked_pow(it.offsets.len() as u32);
        if expected != Some(it.weights.len() as u128) {
            return Err(Error::invalid(format!(
                "interaction {k} has {} weights, expected {size}^{}",
                it.weights.len(),
                it.offsets.len()
            )));
        }
        if let Some(w) = it.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("interaction {k} has non-positive weight {w}")));
        }
        let ys = it.offsets.iter().map(|o| o[1]);
        if ys.clone().max().unwrap() - ys.min().unwrap() > 1 {
            return Err(Error::invalid(format!("interaction {k} spans more than two rows; block rows first")));
        }
        for a in &it.offsets {
            for b in &it.offsets {
                neighborhood.insert([a[0] - b[0], a[1] - b[1]]);
            }
        }
    }

    let mut mrf = GridMrf {
        group,
        size,
        width,
        height,
        boundary,
        interactions,
        neighborhood: neighborhood.into_iter().collect(),
        joint: Vec::new(),
    };
    let patches = mrf.patches();
    let unnormalized: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let cells = mrf.decode(idx);
            patches
                .iter()
                .map(|(k, cells_at)| {
                    let key = cells_at.iter().rev().fold(0usize, |acc, &c| acc * mrf.size + cells[c]);
                    mrf.interactions[*k].weights[key]
                })
                .product()
        })
        .collect();
    let z = chunked_sum(&unnormalized);
    mrf.joint = unnormalized.into_iter().map(|w| w / z).collect();
    Ok(mrf)
}

/// Sum with a fixed association order, independent of the thread pool.
fn chunked_sum(xs: &[f64]) -> f64 {
    let chunk = xs.len().div_ceil(64).max(1);
    let parts: Vec<f64> = xs.par_chunks(chunk).map(|c| c.iter().sum::<f64>()).collect();
    parts.iter().sum()
}

impl GridMrf {
    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn alphabet(&self) -> usize {
        self.size
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn neighborhood(&self) -> &[[i64; 2]] {
        &self.neighborhood
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// Every entry of the joint is positive.
    pub fn full_support(&self) -> bool {
        self.joint.iter().all(|&p| p > 0.0)
    }

    /// Replaces the joint table, keeping the geometry. Used to probe the
    /// verifiers with tables that are not Gibbs.
    pub fn with_joint(&self, joint: Vec<f64>) -> Result<GridMrf> {
        if joint.len() != self.joint.len() {
            return Err(Error::invalid("joint table has the wrong size"));
        }
        let total: f64 = joint.iter().sum();
        if joint.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > MRF_TOL {
            return Err(Error::NotStochastic(format!("joint sums to {total}")));
        }
        Ok(GridMrf { joint, ..self.clone() })
    }

    fn decode(&self, mut idx: usize) -> Vec<usize> {
        (0..self.num_cells())
            .map(|_| {
                let d = idx % self.size;
                idx /= self.size;
                d
            })
            .collect()
    }

    /// Cell index of `(x, y)` after boundary handling; `None` off a free edge.
    pub fn cell(&self, x: i64, y: i64) -> Option<usize> {
        let (w, h) = (self.width as i64, self.height as i64);
        let y = match self.boundary {
            Boundary::Torus => y.rem_euclid(h),
            Boundary::FreeStrip if (0..h).contains(&y) => y,
            Boundary::FreeStrip => return None,
        };
        Some((y * w + x.rem_euclid(w)) as usize)
    }

    /// Every placement of every interaction that lies inside the grid.
    fn patches(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out = Vec::new();
        for (k, it) in self.interactions.iter().enumerate() {
            for y in 0..self.height as i64 {
                for x in 0..self.width as i64 {
                    let cells: Option<Vec<usize>> = it.offsets.iter().map(|o| self.cell(x + o[0], y + o[1])).collect();
                    if let Some(cells) = cells {
                        out.push((k, cells));
                    }
                }
            }
        }
        out
    }

    /// `cl(V) = V + U`, clipped at free edges.
    pub fn closure(&self, region: &[usize]) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &c in region {
            let (x, y) = ((c % self.width) as i64, (c / self.width) as i64);
            for d in &self.neighborhood {
                if let Some(n) = self.cell(x + d[0], y + d[1]) {
                    out.insert(n);
                }
            }
        }
        out
    }

    /// Content index of a row.
    fn row_of(&self, idx: usize, row: usize) -> usize {
        let layer = self.size.pow(self.width as u32);
        (idx / layer.pow(row as u32)) % layer
    }

    pub fn layer_alphabet(&self) -> usize {
        self.size.pow(self.width as u32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MrfCheck {
    pub holds: bool,
    /// Largest `|mu_a[in, out] - mu_a[in] mu_a[out]|` over boundary contents `a`.
    pub deviation: f64,
}

/// Checks that, given the contents of `cl(V) \ V`, the contents of `V` and
/// of the rest of the grid are independent.
pub fn verify_mrf_property(mu: &GridMrf, region: &[usize]) -> Result<MrfCheck> {
    if region.is_empty() || region.iter().any(|&c| c >= mu.num_cells()) {
        return Err(Error::invalid("region must be a nonempty set of grid cells"));
    }
    let inside: BTreeSet<usize> = region.iter().copied().collect();
    let closure = mu.closure(region);
    let boundary: Vec<usize> = closure.difference(&inside).copied().collect();
    let inside: Vec<usize> = inside.into_iter().collect();
    let outside: Vec<usize> = (0..mu.num_cells()).filter(|c| !closure.contains(c)).collect();
    Ok(independence(mu.size, &mu.joint, |idx| mu.decode(idx), &boundary, &inside, &outside))
}

/// Conditional independence of `inside` and `outside` given `boundary`
/// under an arbitrary joint over `size^cells` configurations.
fn independence(
    size: usize,
    joint: &[f64],
    decode: impl Fn(usize) -> Vec<usize>,
    boundary: &[usize],
    inside: &[usize],
    outside: &[usize],
) -> MrfCheck {
    let key = |cells: &[usize], set: &[usize]| set.iter().rev().fold(0usize, |acc, &c| acc * size + cells[c]);
    let (nb, ni, no) = (size.pow(boundary.len() as u32), size.pow(inside.len() as u32), size.pow(outside.len() as u32));
    let mut p_a = vec![0.0; nb];
    let mut p_ai = vec![0.0; nb * ni];
    let mut p_ao = vec![0.0; nb * no];
    let mut p_aio = vec![0.0; nb * ni * no];
    for (idx, &p) in joint.iter().enumerate() {
        let cells = decode(idx);
        let (a, i, o) = (key(&cells, boundary), key(&cells, inside), key(&cells, outside));
        p_a[a] += p;
        p_ai[a * ni + i] += p;
        p_ao[a * no + o] += p;
        p_aio[(a * ni + i) * no + o] += p;
    }
    let mut deviation = 0.0f64;
    for a in 0..nb {
        if p_a[a] <= 0.0 {
            continue;
        }
        for i in 0..ni {
            for o in 0..no {
                let both = p_aio[(a * ni + i) * no + o] / p_a[a];
                let product = (p_ai[a * ni + i] / p_a[a]) * (p_ao[a * no + o] / p_a[a]);
                deviation = deviation.max((both - product).abs());
            }
        }
    }
    MrfCheck { holds: deviation <= MRF_TOL, deviation }
}

/// A lamination step: `kernel[b][a] = P(row n+1 = b | row n = a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerKernel {
    pub row: usize,
    pub kernel: Kernel,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lamination {
    /// Law of row 0.
    pub initial: Vec<f64>,
    pub kernels: Vec<LayerKernel>,
    /// Largest gap between the chain's path probabilities and the joint.
    pub reconstruction_error: f64,
}

fn row_marginals(mu: &GridMrf, n: usize) -> Vec<f64> {
    let layer = mu.layer_alphabet();
    let mut pair = vec![0.0; layer * layer];
    for (idx, &p) in mu.joint.iter().enumerate() {
        pair[mu.row_of(idx, n + 1) * layer + mu.row_of(idx, n)] += p;
    }
    pair
}

/// Row-by-row realization of the field as a one-step Markov chain over
/// the layer alphabet `A^W`.
pub fn lamination_kernels(mu: &GridMrf) -> Result<Lamination> {
    if mu.boundary == Boundary::Torus && mu.height >= 3 {
        return Err(Error::Unsupported(
            "rows of a vertical torus do not form a one-step chain; use a free strip".into(),
        ));
    }
    let layer = mu.layer_alphabet();
    if layer as u64 > crate::measures::MAX_ALPHABET {
        return Err(Error::CapExceeded(format!("layer alphabet {layer} too large")));
    }
    let mut initial = vec![0.0; layer];
    for (idx, &p) in mu.joint.iter().enumerate() {
        initial[mu.row_of(idx, 0)] += p;
    }
    let mut kernels = Vec::with_capacity(mu.height.saturating_sub(1));
    for n in 0..mu.height.saturating_sub(1) {
        let pair = row_marginals(mu, n);
        let mut rows = vec![vec![0.0; layer]; layer];
        for a in 0..layer {
            let pa: f64 = (0..layer).map(|b| pair[b * layer + a]).sum();
            if pa <= 0.0 {
                return Err(Error::invalid(format!("row {n} content {a} has probability zero")));
            }
            for (b, row) in rows.iter_mut().enumerate() {
                row[a] = pair[b * layer + a] / pa;
            }
        }
        kernels.push(LayerKernel { row: n, kernel: Kernel::from_rows(&rows)? });
    }

    let reconstruction_error = mu
        .joint
        .iter()
        .enumerate()
        .map(|(idx, &p)| {
            let mut q = initial[mu.row_of(idx, 0)];
            for k in &kernels {
                q *= k.kernel.get(mu.row_of(idx, k.row + 1), mu.row_of(idx, k.row));
            }
            (p - q).abs()
        })
        .fold(0.0, f64::max);
    Ok(Lamination { initial, kernels, reconstruction_error })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SandwichQuery {
    /// Content index of row `k - 1`.
    pub below: usize,
    /// Content index of row `k + 1`.
    pub above: usize,
    pub row: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sandwich {
    pub query: SandwichQuery,
    /// `P(row k = b | rows k-1, k+1)` indexed by row content.
    pub probs: Vec<f64>,
    /// Largest change in the law of row `k` when the rows beyond `k +- 1`
    /// are also conditioned on.
    pub outer_deviation: f64,
}

fn sandwich_rows(mu: &GridMrf, k: usize) -> Result<(usize, usize)> {
    let h = mu.height;
    match mu.boundary {
        Boundary::FreeStrip if k >= 1 && k + 1 < h => Ok((k - 1, k + 1)),
        Boundary::Torus if h >= 3 && k < h => Ok(((k + h - 1) % h, (k + 1) % h)),
        _ => Err(Error::invalid(format!("row {k} has no neighbors on both sides in a grid of height {h}"))),
    }
}

/// Law of row `k` given rows `k - 1` and `k + 1`, by direct conditioning.
pub fn sandwich_measure(mu: &GridMrf, query: SandwichQuery) -> Result<Sandwich> {
    let (lo, hi) = sandwich_rows(mu, query.row)?;
    let layer = mu.layer_alphabet();
    if query.below >= layer || query.above >= layer {
        return Err(Error::invalid("row content out of range"));
    }
    let k = query.row;
    let stride = layer.pow(k as u32);
    let mut probs = vec![0.0; layer];
    // per outer configuration (row k zeroed), the row-k law
    let mut groups: std::collections::BTreeMap<usize, Vec<f64>> = std::collections::BTreeMap::new();
    for (idx, &p) in mu.joint.iter().enumerate() {
        if mu.row_of(idx, lo) != query.below || mu.row_of(idx, hi) != query.above {
            continue;
        }
        let b = mu.row_of(idx, k);
        probs[b] += p;
        groups.entry(idx - b * stride).or_insert_with(|| vec![0.0; layer])[b] += p;
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("conditioning rows have probability zero"));
    }
    probs.iter_mut().for_each(|x| *x /= total);
    let mut outer_deviation = 0.0f64;
    for law in groups.values() {
        let t: f64 = law.iter().sum();
        if t > 0.0 {
            for (x, s) in law.iter().zip(&probs) {
                outer_deviation = outer_deviation.max((x / t - s).abs());
            }
        }
    }
    Ok(Sandwich { query, probs, outer_deviation })
}

/// Rows admitting a sandwich.
pub fn sandwich_row_range(mu: &GridMrf) -> Vec<usize> {
    (0..mu.height).filter(|&k| sandwich_rows(mu, k).is_ok()).collect()
}

/// Every sandwich of row `k`, ordered by `(below, above)`.
pub fn all_sandwiches(mu: &GridMrf, k: usize) -> Result<Vec<Sandwich>> {
    let layer = mu.layer_alphabet();
    (0..layer * layer)
        .into_par_iter()
        .map(|i| sandwich_measure(mu, SandwichQuery { below: i / layer, above: i % layer, row: k }))
        .collect()
}

/// Conditional independence along a single row, treating a sandwich as a
/// one-dimensional field with the horizontal section of the neighborhood.
pub fn verify_row_mrf(mu: &GridMrf, sandwich: &Sandwich) -> MrfCheck {
    let w = mu.width;
    let section: BTreeSet<i64> = mu.neighborhood.iter().filter(|d| d[1] == 0).map(|d| d[0]).collect();
    let size = mu.size;
    let decode = |mut idx: usize| -> Vec<usize> {
        (0..w)
            .map(|_| {
                let d = idx % size;
                idx /= size;
                d
            })
            .collect()
    };
    let mut worst = MrfCheck { holds: true, deviation: 0.0 };
    for x in 0..w {
        let closure: BTreeSet<usize> = section.iter().map(|d| (x as i64 + d).rem_euclid(w as i64) as usize).collect();
        let boundary: Vec<usize> = closure.iter().copied().filter(|&c| c != x).collect();
        let outside: Vec<usize> = (0..w).filter(|c| !closure.contains(c)).collect();
        let check = independence(size, &sandwich.probs, decode, &boundary, &[x], &outside);
        if check.deviation > worst.deviation {
            worst = check;
        }
    }
    worst
}

/// Outcome of the sandwich / UHM / EHM chain on one field.
#[derive(Clone, Debug, PartialEq)]
pub struct UhmEhmReport {
    /// Empirical: minimum over enumerated sandwiches and ranks `r` of
    /// `-(1/r) log max |s^(chi)|`.
    pub lambda_sandwich: f64,
    pub uhm_holds: bool,
    /// Largest `norm - exp(-lambda r)` over layer characters and times.
    pub uhm_margin: f64,
    pub ehm_holds: bool,
    /// Largest `|mu^(chi)| - exp(-lambda r / 2)` over grid characters.
    pub ehm_margin: f64,
    /// The same, over characters supported on rows that have a sandwich.
    /// Free edge rows are not controlled by any sandwich, so only this part
    /// of the bound is forced on a finite strip.
    pub ehm_interior_margin: f64,
    /// Largest gap in `Q(n)[b][a] Q(n+1)[c][b] = s_(a,c)(b) mu_a(c)`.
    pub triplex_deviation: f64,
    pub layer_characters: usize,
    pub grid_characters: usize,
    /// Distinct single-cell marginals observed across the grid.
    pub local_marginals: Vec<Vec<f64>>,
}

/// Characters on `cells` sites of rank `1..=max_rank` in lexicographic
/// order of (support, coefficients), as dense coefficient vectors.
fn enumerate_characters(size: usize, cells: usize, max_rank: usize) -> Vec<(usize, Vec<usize>)> {
    let mut out = Vec::new();
    for r in 1..=max_rank.min(cells) {
        let mut support: Vec<usize> = (0..r).collect();
        loop {
            let combos = (size - 1).pow(r as u32);
            for code in 0..combos {
                let mut coeffs = vec![0usize; cells];
                let mut rest = code;
                for &s in &support {
                    coeffs[s] = rest % (size - 1) + 1;
                    rest /= size - 1;
                }
                out.push((r, coeffs));
            }
            // next r-subset
            let Some(i) = (0..r).rev().find(|&i| support[i] < cells - r + i) else { break };
            support[i] += 1;
            for j in i + 1..r {
                support[j] = support[j - 1] + 1;
            }
        }
    }
    out
}

/// `chi(x)` for a dense character and configuration, via a pairing table.
struct Pairing {
    size: usize,
    q: u64,
    table: Vec<u64>,
    roots: Vec<Complex64>,
}

impl Pairing {
    fn new(group: &Group) -> Self {
        let size = group.order().unwrap() as usize;
        let q = group.exponent();
        let elements: Vec<_> = group.elements().collect();
        let mut table = vec![0u64; size * size];
        for (i, c) in elements.iter().enumerate() {
            for (j, a) in elements.iter().enumerate() {
                table[i * size + j] = group.pair_raw(c.residues(), a.residues());
            }
        }
        let roots = (0..q).map(|k| Phase::new(k, q).to_complex()).collect();
        Pairing { size, q, table, roots }
    }

    fn eval(&self, coeffs: &[usize], mut idx: usize) -> Complex64 {
        let mut total = 0u64;
        for &c in coeffs {
            let a = idx % self.size;
            idx /= self.size;
            total += self.table[c * self.size + a];
        }
        self.roots[(total % self.q) as usize]
    }
}

fn fourier(pairing: &Pairing, probs: &[f64], coeffs: &[usize]) -> Complex64 {
    probs.iter().enumerate().map(|(idx, &p)| pairing.eval(coeffs, idx) * p).sum()
}

fn neg_log(m: f64) -> f64 {
    if m <= NORM_ZERO_TOL {
        f64::INFINITY
    } else {
        -m.ln()
    }
}

fn envelope(lambda: f64, rank: usize) -> f64 {
    if lambda.is_infinite() {
        0.0
    } else {
        (-lambda * rank as f64).exp()
    }
}

/// Largest work product (characters times table entries) for the scans.
const MAX_SCAN_WORK: u128 = 1 << 34;

pub fn uhm_ehm_check(mu: &GridMrf, max_rank: usize) -> Result<UhmEhmReport> {
    if max_rank == 0 {
        return Err(Error::invalid("max_rank must be >= 1"));
    }
    let lam = lamination_kernels(mu)?;
    let rows = sandwich_row_range(mu);
    if rows.is_empty() {
        return Err(Error::invalid("need at least three rows for sandwich measures"));
    }
    let layer = mu.layer_alphabet();
    let pairing = Pairing::new(&mu.group);
    let layer_chars = enumerate_characters(mu.size, mu.width, max_rank);
    let grid_chars = enumerate_characters(mu.size, mu.num_cells(), max_rank);
    let work = [
        layer_chars.len() as u128 * (layer as u128).pow(3) * rows.len() as u128,
        grid_chars.len() as u128 * mu.joint.len() as u128,
    ];
    if work.iter().any(|&w| w > MAX_SCAN_WORK) {
        return Err(Error::CapExceeded("character enumeration too large for this grid".into()));
    }

    // empirical lambda over all sandwiches
    let mut sandwiches = Vec::new();
    for &k in &rows {
        sandwiches.extend(all_sandwiches(mu, k)?);
    }
    let lambda_sandwich = sandwiches
        .par_iter()
        .map(|s| {
            let mut per_rank = vec![0.0f64; max_rank.min(mu.width) + 1];
            for (r, coeffs) in &layer_chars {
                per_rank[*r] = per_rank[*r].max(fourier(&pairing, &s.probs, coeffs).norm());
            }
            per_rank
                .iter()
                .enumerate()
                .skip(1)
                .map(|(r, &m)| neg_log(m) / r as f64)
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min);

    // UHM: || Q(n)' chi. Q(n+1)' ||_inf against exp(-lambda r)
    let mut uhm_margin = f64::NEG_INFINITY;
    let mut triplex_deviation = 0.0f64;
    for pair in lam.kernels.windows(2) {
        let (qn, qm) = (&pair[0].kernel, &pair[1].kernel);
        let chi_tables: Vec<Vec<Complex64>> = layer_chars
            .iter()
            .map(|(_, c)| (0..layer).map(|b| pairing.eval(c, b)).collect())
            .collect();
        let margins: Vec<f64> = layer_chars
            .par_iter()
            .zip(&chi_tables)
            .map(|((r, _), chi)| {
                let norm = (0..layer)
                    .map(|a| {
                        (0..layer)
                            .map(|c| (0..layer).map(|b| chi[b] * (qn.get(b, a) * qm.get(c, b))).sum::<Complex64>().norm())
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max);
                norm - envelope(lambda_sandwich, *r)
            })
            .collect();
        uhm_margin = margins.into_iter().fold(uhm_margin, f64::max);

        let middle = pair[1].row;
        for s in sandwiches.iter().filter(|s| s.query.row == middle) {
            let (a, c) = (s.query.below, s.query.above);
            let mu_ac: f64 = (0..layer).map(|b| qn.get(b, a) * qm.get(c, b)).sum();
            for b in 0..layer {
                let lhs = qn.get(b, a) * qm.get(c, b);
                triplex_deviation = triplex_deviation.max((lhs - s.probs[b] * mu_ac).abs());
            }
        }
    }
    let uhm_holds = uhm_margin <= UHM_SLACK;

    // EHM at half the sandwich rate over grid characters
    let half = lambda_sandwich / 2.0;
    let margins: Vec<(f64, bool)> = grid_chars
        .par_iter()
        .map(|(r, coeffs)| {
            let interior = coeffs.iter().enumerate().all(|(cell, &c)| c == 0 || rows.contains(&(cell / mu.width)));
            (fourier(&pairing, &mu.joint, coeffs).norm() - envelope(half, *r), interior)
        })
        .collect();
    let ehm_margin = margins.iter().map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    let ehm_interior_margin = margins.iter().filter(|m| m.1).map(|m| m.0).fold(f64::NEG_INFINITY, f64::max);
    let ehm_holds = ehm_margin <= EHM_SLACK;

    Ok(UhmEhmReport {
        lambda_sandwich,
        uhm_holds,
        uhm_margin,
        ehm_holds,
        ehm_margin,
        ehm_interior_margin,
        triplex_deviation,
        layer_characters: layer_chars.len(),
        grid_characters: grid_chars.len(),
        local_marginals: local_marginals(mu),
    })
}

/// Single-cell marginals, deduplicated up to the stochastic tolerance.
pub fn local_marginals(mu: &GridMrf) -> Vec<Vec<f64>> {
    let mut seen: Vec<Vec<f64>> = Vec::new();
    for cell in 0..mu.num_cells() {
        let stride = mu.size.pow(cell as u32);
        let mut m = vec![0.0; mu.size];
        for (idx, &p) in mu.joint.iter().enumerate() {
            m[(idx / stride) % mu.size] += p;
        }
        let known = seen
            .iter()
            .any(|s| s.iter().zip(&m).all(|(x, y)| (x - y).abs() <= STOCHASTIC_TOL));
        if !known {
            seen.push(m);
        }
    }
    seen
}
