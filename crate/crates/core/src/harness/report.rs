//! Experiment reports. Aggregate rows are always derived from the
//! per-repetition rows by [`summarize`], so a loaded report can be checked
//! for internal consistency with [`ExperimentReport::verify`].

use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regression::critical_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Coverage,
    ErrorCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub group: String,
    pub rep: usize,
    pub seed: u64,
    pub stream: u64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub bins: usize,
    pub truth: Vec<f64>,
    pub estimate: Vec<f64>,
    pub std_error: Vec<f64>,
    pub naive_std_error: Vec<f64>,
    #[serde(with = "nan_as_null")]
    pub rel_l2_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ols_rel_l2_error: Option<f64>,
    /// Not written to report files so that reruns are byte-identical.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RepetitionRecord {
    pub fn failed(group: &str, rep: usize, seed: u64, stream: u64, err: &Error) -> Self {
        Self {
            group: group.to_string(),
            rep,
            seed,
            stream,
            ok: false,
            error: Some(err.to_string()),
            bins: 0,
            truth: Vec::new(),
            estimate: Vec::new(),
            std_error: Vec::new(),
            naive_std_error: Vec::new(),
            rel_l2_error: f64::NAN,
            ols_rel_l2_error: None,
            elapsed: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coordinate: Option<usize>,
    #[serde(with = "nan_as_null")]
    pub value: f64,
}

/// JSON has no NaN; non-finite values are written as `null` and read back as NaN.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub alpha: f64,
    pub base_seed: u64,
    /// Echo of the configuration that produced the report.
    pub settings: serde_json::Value,
    pub repetitions: Vec<RepetitionRecord>,
    pub aggregates: Vec<AggregateRow>,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Aggregates for each group, in order of first appearance.
pub fn summarize(records: &[RepetitionRecord], alpha: f64) -> Result<Vec<AggregateRow>> {
    let z = critical_value(alpha)?;
    let mut groups: Vec<&str> = Vec::new();
    for r in records {
        if !groups.contains(&r.group.as_str()) {
            groups.push(&r.group);
        }
    }
    let mut out = Vec::new();
    for g in groups {
        let all: Vec<&RepetitionRecord> = records.iter().filter(|r| r.group == g).collect();
        let ok: Vec<&RepetitionRecord> = all.iter().copied().filter(|r| r.ok).collect();
        let mut push = |metric: &str, coordinate: Option<usize>, value: f64| {
            out.push(AggregateRow {
                group: g.to_string(),
                metric: metric.to_string(),
                coordinate,
                value,
            })
        };
        push("repetitions", None, all.len() as f64);
        push("failures", None, (all.len() - ok.len()) as f64);
        push(
            "failure_rate",
            None,
            (all.len() - ok.len()) as f64 / all.len() as f64,
        );
        let bins: Vec<f64> = ok.iter().map(|r| r.bins as f64).collect();
        push("mean_bins", None, mean(&bins));
        let err: Vec<f64> = ok.iter().map(|r| r.rel_l2_error).collect();
        push("mean_rel_l2_error", None, mean(&err));
        let ols: Vec<f64> = ok.iter().filter_map(|r| r.ols_rel_l2_error).collect();
        if !ols.is_empty() {
            push("mean_ols_rel_l2_error", None, mean(&ols));
        }
        let dim = ok.first().map_or(0, |r| r.estimate.len());
        let has_se = ok.iter().all(|r| r.std_error.len() == dim && r.naive_std_error.len() == dim);
        for j in 0..dim {
            let dev: Vec<f64> = ok.iter().map(|r| r.estimate[j] - r.truth[j]).collect();
            push("avg_bias", Some(j), mean(&dev));
            push("empirical_sd", Some(j), sample_sd(&dev));
            if !has_se {
                continue;
            }
            let se: Vec<f64> = ok.iter().map(|r| r.std_error[j]).collect();
            let naive: Vec<f64> = ok.iter().map(|r| r.naive_std_error[j]).collect();
            push("avg_theoretical_sd", Some(j), mean(&se));
            push("naive_theoretical_sd", Some(j), mean(&naive));
            let covered = |sd: &dyn Fn(&RepetitionRecord) -> f64| {
                mean(
                    &ok.iter()
                        .map(|r| {
                            let hit = (r.estimate[j] - r.truth[j]).abs() <= z * sd(r);
                            if hit {
                                1.0
                            } else {
                                0.0
                            }
                        })
                        .collect::<Vec<_>>(),
                )
            };
            push("coverage", Some(j), covered(&|r| r.std_error[j]));
            push("naive_coverage", Some(j), covered(&|r| r.naive_std_error[j]));
        }
    }
    Ok(out)
}

impl ExperimentReport {
    pub fn new(
        kind: ExperimentKind,
        alpha: f64,
        base_seed: u64,
        settings: serde_json::Value,
        repetitions: Vec<RepetitionRecord>,
    ) -> Result<Self> {
        let aggregates = summarize(&repetitions, alpha)?;
        Ok(Self {
            kind,
            alpha,
            base_seed,
            settings,
            repetitions,
            aggregates,
        })
    }

    /// Whether the stored aggregates equal a recomputation from the
    /// repetition rows.
    pub fn verify(&self) -> Result<bool> {
        let fresh = summarize(&self.repetitions, self.alpha)?;
        Ok(fresh.len() == self.aggregates.len()
            && fresh.iter().zip(&self.aggregates).all(|(a, b)| {
                a.group == b.group
                    && a.metric == b.metric
                    && a.coordinate == b.coordinate
                    && (a.value == b.value
                        || (a.value.is_nan() && b.value.is_nan())
                        || (a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0))
            }))
    }

    pub fn aggregate(&self, group: &str, metric: &str, coordinate: Option<usize>) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.group == group && a.metric == metric && a.coordinate == coordinate)
            .map(|a| a.value)
    }

    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = Vec::new();
        for a in &self.aggregates {
            if !g.contains(&a.group) {
                g.push(a.group.clone());
            }
        }
        g
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn write_aggregates_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["group", "metric", "coordinate", "value"])
            .map_err(io_err)?;
        for a in &self.aggregates {
            w.write_record([
                a.group.clone(),
                a.metric.clone(),
                a.coordinate.map(|c| (c + 1).to_string()).unwrap_or_default(),
                a.value.to_string(),
            ])
            .map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_repetitions_csv<W: Write>(&self, w: W) -> Result<()> {
        let dim = self
            .repetitions
            .iter()
            .find(|r| r.ok)
            .map_or(0, |r| r.estimate.len());
        let mut w = csv::Writer::from_writer(w);
        let mut header: Vec<String> = [
            "group",
            "rep",
            "seed",
            "stream",
            "ok",
            "bins",
            "rel_l2_error",
            "ols_rel_l2_error",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for prefix in ["truth", "estimate", "std_error", "naive_std_error"] {
            header.extend((1..=dim).map(|j| format!("{prefix}_{j}")));
        }
        header.push("error".into());
        w.write_record(&header).map_err(io_err)?;
        for r in &self.repetitions {
            let mut row = vec![
                r.group.clone(),
                r.rep.to_string(),
                r.seed.to_string(),
                r.stream.to_string(),
                r.ok.to_string(),
                r.bins.to_string(),
                r.rel_l2_error.to_string(),
                r.ols_rel_l2_error.map(|v| v.to_string()).unwrap_or_default(),
            ];
            for v in [&r.truth, &r.estimate, &r.std_error, &r.naive_std_error] {
                for j in 0..dim {
                    row.push(v.get(j).map(|x| x.to_string()).unwrap_or_default());
                }
            }
            row.push(r.error.clone().unwrap_or_default());
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<prefix>.json`, `<prefix>.csv` (aggregates) and
    /// `<prefix>.reps.csv`.
    pub fn write_files(&self, prefix: &Path) -> Result<()> {
        let with_ext = |ext: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(ext);
            std::path::PathBuf::from(p)
        };
        std::fs::write(with_ext(".json"), self.to_json()? + "\n")?;
        self.write_aggregates_csv(std::fs::File::create(with_ext(".csv"))?)?;
        self.write_repetitions_csv(std::fs::File::create(with_ext(".reps.csv"))?)?;
        Ok(())
    }

    /// The six per-coordinate columns of a coverage study as aligned text.
    pub fn coverage_table(&self, group: &str) -> String {
        let mut s = String::from(
            "coef  avg_bias  empirical_sd  avg_theor_sd  naive_theor_sd  coverage  naive_coverage\n",
        );
        let mut j = 0;
        while let Some(bias) = self.aggregate(group, "avg_bias", Some(j)) {
            let get = |m: &str| self.aggregate(group, m, Some(j)).unwrap_or(f64::NAN);
            s.push_str(&format!(
                "{:>4}  {:>8.3}  {:>12.3}  {:>12.3}  {:>14.3}  {:>8.3}  {:>14.3}\n",
                j + 1,
                bias,
                get("empirical_sd"),
                get("avg_theoretical_sd"),
                get("naive_theoretical_sd"),
                get("coverage"),
                get("naive_coverage"),
            ));
            j += 1;
        }
        s
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
