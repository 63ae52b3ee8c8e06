use anyhow::{bail, Context, Result};
use haarlab_core::diffusion::{build_example_separating, density_report, example_automaton, ledrappier_matrix, rank_trajectory};
use haarlab_core::lca::{diffusion_hypothesis, lca_power_coeffs};
use haarlab_core::measures::{
    cesaro_scan, ehm_lambda, hm_scan, measure_fourier, monte_carlo_check, pushforward_fourier, CesaroTarget,
    HmScanOptions, MeasureSpec, Subsequence,
};
use haarlab_core::mrf::{all_sandwiches, lamination_kernels, sandwich_row_range, uhm_ehm_check, verify_mrf_property, verify_row_mrf, Boundary};
use haarlab_core::numtheory::{digit_dominates, lucas_binom};
use haarlab_core::{Endo, Site};

use crate::config::{ConfigError, LucasArgs, RunConfig};
use crate::report::{Cell, Report, Table};

/// Characters drawn per rank when an hm-scan window is too wide to enumerate.
const DEFAULT_SAMPLES_PER_RANK: usize = 256;

pub fn run_command(name: &str, cfg: &RunConfig) -> Result<Report> {
    let mut report = Report::new(name, cfg);
    match name {
        "group-info" => group_info(cfg, &mut report)?,
        "lucas" => lucas(cfg, &mut report)?,
        "rank-traj" => rank_traj(cfg, &mut report)?,
        "diffusion-report" => diffusion(cfg, &mut report)?,
        "separating" => separating(cfg, &mut report)?,
        "ledrappier" => ledrappier(cfg, &mut report)?,
        "fourier" => fourier(cfg, &mut report)?,
        "ehm-lambda" => lambda(cfg, &mut report)?,
        "cesaro" => cesaro(cfg, &mut report)?,
        "hm-scan" => hmscan(cfg, &mut report)?,
        "mrf-check" => mrf_check(cfg, &mut report)?,
        "simulate" => simulate(cfg, &mut report)?,
        other => bail!("unknown command `{other}`"),
    }
    Ok(report)
}

fn group_info(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let g = cfg.group()?;
    let factors: Vec<String> = g.prime_factors().iter().map(|(p, k)| format!("{p}^{k}")).collect();
    report.tables.push(Table::key_values(
        "group",
        vec![
            ("group", g.to_string().into()),
            ("order", g.order().into()),
            ("exponent", g.exponent().into()),
            ("coordinates", g.coords().into()),
            ("cyclic", g.is_cyclic().into()),
            ("prime_factors", factors.join(" ").into()),
        ],
    ));
    if cfg.lca.is_empty() {
        return Ok(());
    }
    let f = cfg.automaton()?;
    let coeffs: Vec<String> = f.coefficients().iter().map(|(s, e)| format!("{s}:{e}")).collect();
    let (lo, hi) = f.reach();
    let mut pairs = vec![
        ("coefficients", Cell::from(coeffs.join(" "))),
        ("reach", format!("{lo:?}..{hi:?}").into()),
        ("nontrivial", f.is_nontrivial().into()),
        ("scalar", f.is_scalar().into()),
    ];
    if f.is_scalar() {
        let h = diffusion_hypothesis(&f)?;
        let counts: Vec<String> = h.coprime_counts.iter().map(|(p, c)| format!("{p}:{c}")).collect();
        pairs.push(("coprime_counts", counts.join(" ").into()));
        pairs.push(("hypothesis_satisfied", h.satisfied.into()));
    } else {
        report.warnings.push("matrix coefficients: the coprime census does not apply; use `separating`".into());
    }
    report.tables.push(Table::key_values("automaton", pairs));
    Ok(())
}

pub fn lucas_table(args: &LucasArgs) -> Result<Table> {
    let value = lucas_binom(args.big_n, args.n, args.p)?;
    let dominated = args.n <= args.big_n && digit_dominates(args.n, args.big_n, args.p)?;
    let mut t = Table::new("lucas", &["N", "n", "p", "value", "dominated"]);
    t.push(vec![args.big_n.into(), args.n.into(), args.p.into(), value.into(), dominated.into()]);
    Ok(t)
}

fn lucas(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let args = cfg
        .analysis
        .lucas
        .as_ref()
        .ok_or_else(|| ConfigError::new("analysis.lucas", "required for this command (or pass N n p on the command line)"))?;
    report.tables.push(lucas_table(args)?);
    Ok(())
}

fn rank_traj(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (chi, f, n_max) = (cfg.chi()?, cfg.automaton()?, cfg.n_max()?);
    let traj = rank_trajectory(&chi, &f, n_max).context("rank trajectory")?;
    let mut t = Table::new("ranks", &["N", "rank"]);
    for (i, r) in traj.ranks.iter().enumerate() {
        t.push(vec![(i + 1).into(), (*r).into()]);
    }
    report.tables.push(t);
    report.tables.push(Table::key_values(
        "identity",
        vec![("lca_hash", traj.lca_hash.clone().into()), ("chi_hash", traj.chi_hash.clone().into())],
    ));
    Ok(())
}

fn diffusion(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (chi, f, n_max) = (cfg.chi()?, cfg.automaton()?, cfg.n_max()?);
    if cfg.analysis.thresholds.is_empty() {
        return Err(ConfigError::new("analysis.thresholds", "required for this command").into());
    }
    let traj = rank_trajectory(&chi, &f, n_max).context("rank trajectory")?;
    let mut t = Table::new("density", &["threshold", "density"]);
    for (m, d) in density_report(&traj, &cfg.analysis.thresholds)? {
        t.push(vec![m.into(), d.into()]);
    }
    report.tables.push(t);
    if f.is_scalar() {
        let h = diffusion_hypothesis(&f)?;
        let mut t = Table::new("hypothesis", &["prime", "coprime_coefficients", "satisfied"]);
        for (p, c) in h.coprime_counts {
            t.push(vec![p.into(), c.into(), (c >= 2).into()]);
        }
        report.tables.push(t);
    }
    report.warnings.push(format!(
        "empirical: densities are measured over 1 <= N <= {n_max}; they do not establish a limit"
    ));
    Ok(())
}

fn separating(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let a = cfg
        .analysis
        .separating
        .as_ref()
        .ok_or_else(|| ConfigError::new("analysis.separating", "required for this command"))?;
    let ex = build_example_separating(a.j, a.p, a.v_extent, a.r).context("building the separating set")?;
    let mut t = Table::new("separating", &["w", "site"]);
    for (w, s) in ex.ws.iter().zip(&ex.certificate.w) {
        t.push(vec![(*w).into(), s.x().into()]);
    }
    report.tables.push(t);
    let selectors: Vec<String> = ex.selectors.iter().map(|s| s.to_string()).collect();
    report.tables.push(Table::key_values(
        "certificate",
        vec![
            ("power", ex.certificate.power.into()),
            ("anchor", ex.anchor.into()),
            ("selectors", selectors.join(" ").into()),
            ("gap_sites", ex.certificate.v.len().into()),
            ("verified", ex.certificate.verified.into()),
        ],
    ));
    if !ex.certificate.verified {
        report.warnings.push("the digit inequalities fail for this j; the set is not separating".into());
    }
    Ok(())
}

fn ledrappier(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let a = cfg
        .analysis
        .ledrappier
        .as_ref()
        .ok_or_else(|| ConfigError::new("analysis.ledrappier", "required for this command"))?;
    let direct = lca_power_coeffs(&example_automaton(a.p)?, a.big_n);
    let mut t = Table::new("coefficients", &["m", "a", "b", "c", "matches_power"]);
    for m in 0..=a.big_n {
        let closed = ledrappier_matrix(a.big_n, m, a.p).context("closed form")?;
        let Endo::Matrix(mat) = &closed else { unreachable!("the closed form is a matrix") };
        let matches = direct.coefficient(&Site::new1(m as i64)) == closed;
        t.push(vec![m.into(), mat.get(0, 0).into(), mat.get(0, 1).into(), mat.get(1, 1).into(), matches.into()]);
    }
    report.tables.push(t);
    Ok(())
}

fn fourier(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (mu, chi) = (cfg.measure()?, cfg.chi()?);
    let (n, rep) = match cfg.analysis.power {
        Some(n) => (n, pushforward_fourier(&mu, &chi, &cfg.automaton()?, n).context("pushforward coefficient")?),
        None => (0, measure_fourier(&mu, &chi).context("Fourier coefficient")?),
    };
    let mut t = Table::new("fourier", &["N", "character", "re", "im", "modulus", "rank"]);
    t.push(vec![n.into(), rep.character.into(), rep.value.re.into(), rep.value.im.into(), rep.modulus.into(), rep.rank.into()]);
    report.tables.push(t);
    Ok(())
}

fn lambda(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let family = cfg.transition_family()?;
    let lam = ehm_lambda(&cfg.group()?, &family).context("ehm lambda")?;
    let mut t = Table::new("lambda", &["kernels", "lambda"]);
    t.push(vec![family.len().into(), lam.into()]);
    report.tables.push(t);
    let mu = cfg.measure()?;
    if !mu.semistationary() {
        report.warnings.push("the initial law is not periodic under the family; the envelope is not guaranteed".into());
    }
    Ok(())
}

fn cesaro(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (mu, f, n_max) = (cfg.measure()?, cfg.automaton()?, cfg.n_max()?);
    let target = match cfg.cylinder()? {
        Some(c) => CesaroTarget::Cylinder(c),
        None if !cfg.character.is_empty() => CesaroTarget::Character(cfg.chi()?),
        None => return Err(ConfigError::new("analysis.cylinder", "give a cylinder or a character").into()),
    };
    let subsequence = cfg.subsequence()?;
    let rep = cesaro_scan(&mu, &target, &f, n_max, &subsequence).context("Cesaro scan")?;

    let mut t = Table::new("values", &["N", "value_re", "value_im", "cesaro_re", "cesaro_im"]);
    for (i, (v, c)) in rep.values.iter().zip(&rep.cesaro).enumerate() {
        t.push(vec![(i + 1).into(), v.re.into(), v.im.into(), c.re.into(), c.im.into()]);
    }
    report.tables.push(t);
    if subsequence != Subsequence::None {
        let mut t = Table::new("subsequence", &["N", "value_re", "value_im"]);
        for (n, v) in &rep.subsequence {
            t.push(vec![(*n).into(), v.re.into(), v.im.into()]);
        }
        report.tables.push(t);
    }
    let last = rep.cesaro.last().copied().unwrap_or_default();
    let mut summary = vec![("haar_value", Cell::from(rep.haar_value)), ("cesaro_re", last.re.into()), ("cesaro_im", last.im.into())];
    let labels: Vec<String> = rep.within.iter().map(|(eps, _)| format!("within_{eps:e}")).collect();
    for (label, (_, frac)) in labels.iter().zip(&rep.within) {
        summary.push((label.as_str(), (*frac).into()));
    }
    report.tables.push(Table::key_values("summary", summary));
    report.warnings.push(format!("empirical: means over 1 <= N <= {n_max}; no limit is asserted"));
    Ok(())
}

fn hmscan(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let mu = cfg.measure()?;
    let max_rank = cfg.analysis.max_rank.ok_or_else(|| ConfigError::new("analysis.max_rank", "required for this command"))?;
    let window = cfg.analysis.window.clone().ok_or_else(|| ConfigError::new("analysis.window", "required for this command"))?;
    let bits = window.len as f64 * (mu.alphabet() as f64).log2();
    let exhaustive = bits <= haarlab_core::measures::MAX_ENUMERATION_BITS;
    let seed = if exhaustive { cfg.analysis.seed.unwrap_or(0) } else { cfg.seed()? };
    let lambda = match cfg.analysis.lambda {
        Some(l) => Some(l),
        None if mu.semistationary() && !matches!(mu.spec(), MeasureSpec::NStep(_)) => {
            Some(ehm_lambda(&cfg.group()?, &cfg.transition_family()?).context("ehm lambda")?)
        }
        None => None,
    };
    let opts = HmScanOptions {
        max_rank,
        window_start: window.start,
        window_len: window.len,
        samples_per_rank: cfg.analysis.samples_per_rank.unwrap_or(DEFAULT_SAMPLES_PER_RANK),
        seed,
        lambda,
    };
    let scan = hm_scan(&mu, &opts).context("harmonic-mixing scan")?;
    let mut t = Table::new("scan", &["rank", "max_modulus", "envelope"]);
    let mut counts = Table::new("counts", &["rank", "characters"]);
    for row in &scan.rows {
        t.push(vec![row.rank.into(), row.max_modulus.into(), row.envelope.into()]);
        counts.push(vec![row.rank.into(), row.count.into()]);
    }
    report.tables.push(t);
    report.tables.push(counts);
    if !scan.exhaustive {
        report.warnings.push(format!("sampled: {} characters per rank, seed {seed}", opts.samples_per_rank));
    }
    if let Some(l) = lambda {
        if scan.rows.iter().any(|r| r.envelope.is_some_and(|e| r.max_modulus > e + 1e-12)) {
            report.warnings.push(format!("envelope exp(-{l} r) exceeded"));
        }
    }
    Ok(())
}

fn mrf_check(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let mu = cfg.grid_mrf()?;
    let max_rank = cfg.analysis.max_rank.unwrap_or(4);
    let mut t = Table::new("checks", &["check", "value", "holds"]);
    let mut worst = 0.0f64;
    for c in 0..mu.num_cells() {
        worst = worst.max(verify_mrf_property(&mu, &[c]).context("MRF property")?.deviation);
    }
    t.push(vec!["mrf_property".into(), worst.into(), (worst <= haarlab_core::mrf::MRF_TOL).into()]);
    t.push(vec!["full_support".into(), Cell::Empty, mu.full_support().into()]);

    if mu.boundary() == Boundary::Torus && mu.height() >= 3 {
        report.warnings.push("vertical torus: lamination and the sandwich chain need a free strip; skipped".into());
    } else {
        let lam = lamination_kernels(&mu).context("lamination")?;
        t.push(vec!["lamination_error".into(), lam.reconstruction_error.into(), (lam.reconstruction_error <= 1e-10).into()]);
        let mut count = 0usize;
        let mut min_prob = f64::INFINITY;
        let mut row_dev = 0.0f64;
        for k in sandwich_row_range(&mu) {
            for s in all_sandwiches(&mu, k).context("sandwiches")? {
                count += 1;
                min_prob = s.probs.iter().copied().fold(min_prob, f64::min);
                row_dev = row_dev.max(verify_row_mrf(&mu, &s).deviation);
            }
        }
        if count > 0 {
            t.push(vec!["sandwiches".into(), count.into(), true.into()]);
            t.push(vec!["sandwich_min_prob".into(), min_prob.into(), (min_prob > 0.0).into()]);
            t.push(vec!["sandwich_row_mrf".into(), row_dev.into(), (row_dev <= haarlab_core::mrf::MRF_TOL).into()]);
            let rep = uhm_ehm_check(&mu, max_rank).context("UHM / EHM check")?;
            t.push(vec!["lambda_sandwich".into(), rep.lambda_sandwich.into(), (rep.lambda_sandwich > 0.0).into()]);
            t.push(vec!["uhm".into(), rep.uhm_margin.into(), rep.uhm_holds.into()]);
            t.push(vec!["ehm".into(), rep.ehm_margin.into(), rep.ehm_holds.into()]);
            t.push(vec!["ehm_interior".into(), rep.ehm_interior_margin.into(), (rep.ehm_interior_margin <= 1e-10).into()]);
            t.push(vec!["triplex".into(), rep.triplex_deviation.into(), (rep.triplex_deviation <= 1e-12).into()]);
            report.warnings.push("empirical: lambda_sandwich is a minimum over the enumerated sandwiches and ranks".into());
        } else {
            report.warnings.push("fewer than three rows: no sandwich measures".into());
        }
    }
    report.tables.push(t);

    let mut m = Table::new("marginals", &["x", "y", "letter", "probability"]);
    for y in 0..mu.height() {
        for x in 0..mu.width() {
            let cell = mu.cell(x as i64, y as i64).expect("in-grid cell");
            let probs = cell_marginal(&mu, cell);
            for (a, p) in probs.into_iter().enumerate() {
                m.push(vec![x.into(), y.into(), a.into(), p.into()]);
            }
        }
    }
    report.tables.push(m);
    Ok(())
}

fn cell_marginal(mu: &haarlab_core::mrf::GridMrf, cell: usize) -> Vec<f64> {
    let q = mu.alphabet();
    let stride = q.pow(cell as u32);
    let mut out = vec![0.0; q];
    for (i, p) in mu.joint().iter().enumerate() {
        out[i / stride % q] += p;
    }
    out
}

fn simulate(cfg: &RunConfig, report: &mut Report) -> Result<()> {
    let (mu, f) = (cfg.measure()?, cfg.automaton()?);
    let seed = cfg.seed()?;
    let samples = cfg.analysis.samples.ok_or_else(|| ConfigError::new("analysis.samples", "required for this command"))?;
    let cylinder = cfg.cylinder()?.ok_or_else(|| ConfigError::new("analysis.cylinder", "required for this command"))?;
    if cfg.analysis.n_list.is_empty() {
        return Err(ConfigError::new("analysis.n_list", "required for this command").into());
    }
    let rows = monte_carlo_check(&mu, &f, &cfg.analysis.n_list, &cylinder, samples, seed).context("Monte-Carlo run")?;
    let n_top = *cfg.analysis.n_list.iter().max().expect("nonempty");
    let exact = cesaro_scan(&mu, &CesaroTarget::Cylinder(cylinder), &f, n_top, &Subsequence::None)
        .context("exact cylinder probabilities")?;
    let mut t = Table::new("simulation", &["N", "hits", "samples", "frequency", "sigma", "exact", "z"]);
    for r in rows {
        let (freq, ex) = (r.frequency, if r.n == 0 { None } else { Some(exact.values[r.n - 1].re) });
        let z = ex.map(|e| if r.sigma > 0.0 { (freq - e) / r.sigma } else { 0.0 });
        t.push(vec![r.n.into(), r.hits.into(), r.samples.into(), freq.into(), r.sigma.into(), ex.into(), z.into()]);
    }
    report.tables.push(t);
    Ok(())
}
