//! Monte-Carlo studies. Repetition `r` always uses stream `r` (offset by the
//! group index for multi-group studies) of the base seed, so results do not
//! depend on how rayon schedules the work.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::relative_l2_error;
use super::report::{ExperimentKind, ExperimentReport, RepetitionRecord};
use super::simulate::{simulate_dataset, SimulationConfig};
use crate::aggregation::{label_bound, PreparedBins};
use crate::error::{Error, Result};
use crate::gdp::{GdpBudget, RandomSource};
use crate::pipeline::{prepare_bins, run_regression, PipelineConfig};
use crate::region::Region;
use crate::regression::{self, ols_exact, PrivatizeOptions};
use crate::synthesis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub simulation: SimulationConfig,
    pub pipeline: PipelineConfig,
    pub reps: usize,
    pub base_seed: u64,
    /// Sample sizes for the error-curve study; ascending.
    pub n_grid: Vec<usize>,
    /// Multiplies the feature domain and label interval.
    pub bound_inflation: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            simulation: SimulationConfig::default(),
            pipeline: PipelineConfig::default(),
            reps: 100,
            base_seed: 0,
            n_grid: vec![512, 2048, 8192],
            bound_inflation: 1.0,
        }
    }
}

impl ExperimentConfig {
    fn settings(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[allow(clippy::too_many_arguments)]
fn one_repetition(
    sim: &SimulationConfig,
    pipeline: &PipelineConfig,
    inflation: f64,
    group: &str,
    rep: usize,
    seed: u64,
    stream: u64,
    with_ols: bool,
) -> RepetitionRecord {
    let start = Instant::now();
    let run = || -> Result<RepetitionRecord> {
        let (lo, hi) = sim.label_interval();
        let sim = SimulationConfig {
            label_bounds: Some((lo * inflation, hi * inflation)),
            ..sim.clone()
        };
        let mut rng = RandomSource::new(seed, stream);
        let data = simulate_dataset(&sim, &mut rng)?;
        let domain = Region::new(vec![0.0; sim.d], vec![inflation; sim.d])?;
        let bound = label_bound(lo * inflation, hi * inflation)?;
        let out = run_regression(
            &data.x,
            &data.y,
            &domain,
            bound,
            pipeline,
            Some(sim.sigma * sim.sigma),
            &mut rng,
        )?;
        let truth: Vec<f64> = data.beta.iter().copied().collect();
        let mut estimate: Vec<f64> = out.fit.beta.iter().copied().collect();
        let mut std_error = out.fit.standard_errors();
        let mut naive_std_error: Vec<f64> = (0..out.naive_covariance.nrows())
            .map(|j| out.naive_covariance[(j, j)].max(0.0).sqrt())
            .collect();
        // an intercept coordinate has no simulated counterpart
        estimate.truncate(sim.d);
        std_error.truncate(sim.d);
        naive_std_error.truncate(sim.d);
        let rel = relative_l2_error(&estimate, &truth)?;
        let ols = if with_ols {
            // the non-private baseline needs no bounds, so it sees the raw labels
            let b = ols_exact(&data.x, &data.y_raw)?;
            Some(relative_l2_error(b.as_slice(), &truth)?)
        } else {
            None
        };
        Ok(RepetitionRecord {
            group: group.to_string(),
            rep,
            seed,
            stream,
            ok: true,
            error: None,
            bins: out.fit.bins,
            truth,
            estimate,
            std_error,
            naive_std_error,
            rel_l2_error: rel,
            ols_rel_l2_error: ols,
            elapsed: start.elapsed(),
        })
    };
    match run() {
        Ok(r) => r,
        Err(e) => {
            let mut r = RepetitionRecord::failed(group, rep, seed, stream, &e);
            r.elapsed = start.elapsed();
            r
        }
    }
}

/// Coverage study: per-coordinate bias, empirical and theoretical standard
/// deviations, and coverage of the debiased and naive intervals.
pub fn coverage_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.reps < 100 {
        return Err(Error::invalid("coverage study needs at least 100 repetitions"));
    }
    cfg.simulation.validate()?;
    cfg.pipeline.budgets()?;
    let records: Vec<RepetitionRecord> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            one_repetition(
                &cfg.simulation,
                &cfg.pipeline,
                cfg.bound_inflation,
                "all",
                r,
                cfg.base_seed,
                r as u64,
                false,
            )
        })
        .collect();
    ExperimentReport::new(
        ExperimentKind::Coverage,
        cfg.pipeline.alpha,
        cfg.base_seed,
        cfg.settings(),
        records,
    )
}

/// Mean relative ℓ2 error of the private and the non-private OLS estimate
/// for each sample size in `n_grid`.
pub fn error_curve_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.n_grid.is_empty() || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("n grid must be non-empty and strictly ascending"));
    }
    if cfg.reps == 0 {
        return Err(Error::invalid("need at least one repetition"));
    }
    if !(cfg.bound_inflation.is_finite() && cfg.bound_inflation > 0.0) {
        return Err(Error::invalid("bound inflation must be positive"));
    }
    cfg.pipeline.budgets()?;
    let mut jobs = Vec::new();
    for (g, &n) in cfg.n_grid.iter().enumerate() {
        let sim = SimulationConfig {
            n,
            ..cfg.simulation.clone()
        };
        sim.validate()?;
        for r in 0..cfg.reps {
            jobs.push((format!("n={n}"), sim.clone(), r, (g * cfg.reps + r) as u64));
        }
    }
    let records: Vec<RepetitionRecord> = jobs
        .into_par_iter()
        .map(|(group, sim, r, stream)| {
            one_repetition(
                &sim,
                &cfg.pipeline,
                cfg.bound_inflation,
                &group,
                r,
                cfg.base_seed,
                stream,
                true,
            )
        })
        .collect();
    ExperimentReport::new(
        ExperimentKind::ErrorCurve,
        cfg.pipeline.alpha,
        cfg.base_seed,
        cfg.settings(),
        records,
    )
}

/// Runs a coverage or error-curve study for every `(theta, ratios)` pair and
/// merges the results into one report, groups prefixed with the setting.
/// Every setting reuses the same streams.
pub fn sweep(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    thetas: &[f64],
    ratios: &[[f64; 4]],
) -> Result<ExperimentReport> {
    let thetas = if thetas.is_empty() { vec![cfg.pipeline.theta] } else { thetas.to_vec() };
    let ratios = if ratios.is_empty() { vec![cfg.pipeline.ratios] } else { ratios.to_vec() };
    let mut records = Vec::new();
    for &theta in &thetas {
        for r in &ratios {
            let mut c = cfg.clone();
            c.pipeline.theta = theta;
            c.pipeline.ratios = *r;
            let report = match kind {
                ExperimentKind::Coverage => coverage_experiment(&c)?,
                ExperimentKind::ErrorCurve => error_curve_experiment(&c)?,
            };
            let label = format!("theta={theta};ratios={}:{}:{}:{}", r[0], r[1], r[2], r[3]);
            records.extend(report.repetitions.into_iter().map(|mut rec| {
                rec.group = format!("{label};{}", rec.group);
                rec
            }));
        }
    }
    ExperimentReport::new(kind, cfg.pipeline.alpha, cfg.base_seed, cfg.settings(), records)
}

/// Two-sided 1% critical constant of the two-sample Kolmogorov–Smirnov test,
/// `sqrt(-ln(0.005) / 2)`.
pub const KS_C_ALPHA_1PCT: f64 = 1.627_623_630_718_729_3;

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of a two-sample statistic `d` with sample sizes `n`
/// and `m`, using the Kolmogorov series with Stephens' small-sample
/// correction.
pub fn ks_p_value(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    let root = ne.sqrt();
    let lambda = (root + 0.12 + 0.11 / root) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    KS_C_ALPHA_1PCT * ((n + m) / (n * m)).sqrt()
}

/// Moment and distribution checks for one aggregated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceCheck {
    pub bin: usize,
    /// Feature coordinate, or `None` for the label sum.
    pub coordinate: Option<usize>,
    pub seeds: usize,
    pub expected_mean: f64,
    pub expected_sd: f64,
    pub synthetic_mean: f64,
    pub synthetic_var: f64,
    pub direct_mean: f64,
    pub direct_var: f64,
    /// `(synthetic_mean - expected_mean) / (expected_sd / sqrt(seeds))`.
    pub mean_z: f64,
    pub var_ratio: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub ks_p_value: f64,
    pub mean_ok: bool,
    pub var_ok: bool,
    pub ks_ok: bool,
}

impl EquivalenceCheck {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.var_ok && self.ks_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub base_seed: u64,
    pub seeds: usize,
    pub bins: usize,
    pub settings: serde_json::Value,
    pub checks: Vec<EquivalenceCheck>,
}

impl EquivalenceReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(EquivalenceCheck::passed)
    }

    /// Mean and variance checks must all pass; the KS tests are judged as a
    /// family at `level` with a Bonferroni correction, since with many bins
    /// some per-check rejections at 1% are expected by chance alone.
    pub fn family_passed(&self, level: f64) -> bool {
        let m = self.checks.len().max(1) as f64;
        self.checks
            .iter()
            .all(|c| c.mean_ok && c.var_ok && c.ks_p_value > level / m)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "bin",
            "quantity",
            "seeds",
            "expected_mean",
            "expected_sd",
            "synthetic_mean",
            "synthetic_var",
            "direct_mean",
            "direct_var",
            "mean_z",
            "var_ratio",
            "ks_statistic",
            "ks_critical",
            "ks_p_value",
            "pass",
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
        for c in &self.checks {
            let quantity = c
                .coordinate
                .map_or_else(|| "y".to_string(), |i| format!("x_{}", i + 1));
            w.write_record([
                c.bin.to_string(),
                quantity,
                c.seeds.to_string(),
                c.expected_mean.to_string(),
                c.expected_sd.to_string(),
                c.synthetic_mean.to_string(),
                c.synthetic_var.to_string(),
                c.direct_mean.to_string(),
                c.direct_var.to_string(),
                c.mean_z.to_string(),
                c.var_ratio.to_string(),
                c.ks_statistic.to_string(),
                c.ks_critical.to_string(),
                c.ks_p_value.to_string(),
                c.passed().to_string(),
            ])
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_files(&self, prefix: &Path) -> Result<()> {
        let with_ext = |ext: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(ext);
            std::path::PathBuf::from(p)
        };
        std::fs::write(with_ext(".json"), self.to_json()? + "\n")?;
        self.write_csv(std::fs::File::create(with_ext(".csv"))?)
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Compares aggregated synthetic sums with directly privatized sums on one
/// fixed set of bins. Seed `s` uses stream `2s + 1` for the direct release
/// and `2s + 2` for the synthetic one.
pub fn equivalence_study(
    prepared: &PreparedBins,
    mu_s: GdpBudget,
    mu_t: GdpBudget,
    options: PrivatizeOptions,
    base_seed: u64,
    seeds: usize,
) -> Result<Vec<EquivalenceCheck>> {
    if seeds < 2 {
        return Err(Error::invalid("need at least two seeds"));
    }
    let k = prepared.len();
    let d = prepared.dim();
    let width = d + 1;
    // per seed: K*(d+1) direct values, then K*(d+1) synthetic values
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let mut rng = RandomSource::new(base_seed, 2 * s as u64 + 1);
            let direct = regression::privatize(prepared, mu_s, mu_t, options, &mut rng);
            let mut dv = Vec::with_capacity(k * width);
            for b in 0..k {
                dv.extend(direct.feature_sums().row(b).iter());
                dv.push(direct.label_sums()[b]);
            }
            let mut rng = RandomSource::new(base_seed, 2 * s as u64 + 2);
            let ds = synthesis::generate(prepared, mu_s, mu_t, options, &mut rng);
            let mut sv = Vec::with_capacity(k * width);
            for (sx, sy) in synthesis::aggregate(&ds) {
                sv.extend(sx);
                sv.push(sy);
            }
            (dv, sv)
        })
        .collect();

    let label_sd = options.noise.sd(prepared.label_bound() / mu_t.value());
    let mut checks = Vec::with_capacity(k * width);
    for (b, bin) in prepared.bins().iter().enumerate() {
        let sds = regression::feature_noise_sd(bin.sensitivity(), mu_s, options);
        for q in 0..width {
            let idx = b * width + q;
            let (coordinate, expected_mean, expected_sd) = if q < d {
                (Some(q), bin.feature_sum()[q], sds[q])
            } else {
                (None, bin.label_sum(), label_sd)
            };
            let direct: Vec<f64> = draws.iter().map(|(dv, _)| dv[idx]).collect();
            let synth: Vec<f64> = draws.iter().map(|(_, sv)| sv[idx]).collect();
            let (dm, dvar) = mean_var(&direct);
            let (sm, svar) = mean_var(&synth);
            let se = expected_sd / (seeds as f64).sqrt();
            let mean_z = if se > 0.0 {
                (sm - expected_mean) / se
            } else if (sm - expected_mean).abs() <= 1e-9 * expected_mean.abs().max(1.0) {
                0.0
            } else {
                f64::INFINITY
            };
            let expected_var = expected_sd * expected_sd;
            let var_ratio = if expected_var > 0.0 {
                svar / expected_var
            } else {
                1.0
            };
            let ks = ks_statistic(&synth, &direct);
            let ks_critical = ks_critical_1pct(seeds, seeds);
            checks.push(EquivalenceCheck {
                bin: b,
                coordinate,
                seeds,
                expected_mean,
                expected_sd,
                synthetic_mean: sm,
                synthetic_var: svar,
                direct_mean: dm,
                direct_var: dvar,
                mean_z,
                var_ratio,
                ks_statistic: ks,
                ks_critical,
                ks_p_value: if expected_var == 0.0 { 1.0 } else { ks_p_value(ks, seeds, seeds) },
                mean_ok: mean_z.abs() <= 4.0,
                var_ok: (var_ratio - 1.0).abs() <= 0.05,
                ks_ok: expected_var == 0.0 || ks < ks_critical,
            });
        }
    }
    Ok(checks)
}

/// Builds one set of bins from a simulated dataset (stream 0 of the base
/// seed) and runs [`equivalence_study`] on it.
pub fn equivalence_experiment(cfg: &ExperimentConfig) -> Result<EquivalenceReport> {
    if cfg.reps < 1000 {
        return Err(Error::invalid("equivalence study needs at least 1000 seeds"));
    }
    let sim = &cfg.simulation;
    let mut rng = RandomSource::new(cfg.base_seed, 0);
    let data = simulate_dataset(sim, &mut rng)?;
    let (lo, hi) = sim.label_interval();
    let (prepared, budgets) = prepare_bins(
        &data.x,
        &data.y,
        &sim.domain()?,
        label_bound(lo, hi)?,
        &cfg.pipeline,
        &mut rng,
    )?;
    let options = PrivatizeOptions {
        calibration: cfg.pipeline.calibration,
        noise: cfg.pipeline.noise,
    };
    // stream 0 is taken by the data; shift the per-seed streams past it
    let checks = equivalence_study(
        &prepared,
        budgets.mu_s,
        budgets.mu_t,
        options,
        cfg.base_seed.wrapping_add(1),
        cfg.reps,
    )?;
    Ok(EquivalenceReport {
        base_seed: cfg.base_seed,
        seeds: cfg.reps,
        bins: prepared.len(),
        settings: cfg.settings(),
        checks,
    })
}

/// Debiased fits on `reps` independent privatizations of fixed bins, from the
/// regression route and from aggregated synthetic data. Returns the two sets
/// of coefficient vectors; failed fits are skipped.
pub fn route_fits(
    prepared: &PreparedBins,
    mu_s: GdpBudget,
    mu_t: GdpBudget,
    options: PrivatizeOptions,
    base_seed: u64,
    reps: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let pairs: Vec<(Option<DVector<f64>>, Option<DVector<f64>>)> = (0..reps)
        .into_par_iter()
        .map(|s| {
            let mut rng = RandomSource::new(base_seed, 2 * s as u64 + 1);
            let direct = regression::privatize(prepared, mu_s, mu_t, options, &mut rng);
            let a = regression::fit_debiased(&direct).ok();
            let mut rng = RandomSource::new(base_seed, 2 * s as u64 + 2);
            let ds = synthesis::generate(prepared, mu_s, mu_t, options, &mut rng);
            let b = synthesis::summaries(&ds, mu_s, options)
                .and_then(|p| regression::fit_debiased(&p))
                .ok();
            (a, b)
        })
        .collect();
    let direct = pairs.iter().filter_map(|p| p.0.clone()).collect();
    let synth = pairs.into_iter().filter_map(|p| p.1).collect();
    (direct, synth)
}
