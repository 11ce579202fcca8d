//! Report structures and their CSV / JSON renderings.
//!
//! CSV mirrors the published table layout with four fractional digits;
//! JSON carries full precision. Rendering is deterministic, so identical
//! configurations produce byte-identical files.

#[cfg(test)]
use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use knnim::estimators::EffectEstimate;
use knnim::model::ExposureCounts;
use knnim::sim::SimSummary;

/// One estimator row of an analysis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimator: String,
    pub estimate: f64,
    pub variance: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// One cell of the exposure-count grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub own: u8,
    pub pattern: String,
    pub count: usize,
}

/// Full analysis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub k: usize,
    pub design: String,
    pub z: f64,
    pub estimates: Vec<EstimateRow>,
    pub exposure_counts: Vec<CountRow>,
    /// Exposure cells observed fewer than 30 times.
    pub low_count_exposures: Vec<CountRow>,
}

impl AnalysisReport {
    pub fn new(
        n: usize,
        k: usize,
        design: String,
        z: f64,
        rows: &[EffectEstimate],
        counts: &ExposureCounts,
        low_counts: &[(knnim::model::Exposure, usize)],
    ) -> Self {
        let estimates = rows
            .iter()
            .map(|r| EstimateRow {
                estimator: r.label(),
                estimate: r.estimate,
                variance: r.variance,
                se: r.se,
                ci_lower: r.estimate - z * r.se,
                ci_upper: r.estimate + z * r.se,
            })
            .collect();
        let (patterns, treated, control) = counts.grid();
        let mut exposure_counts = Vec::with_capacity(2 * patterns.len());
        for (pattern, count) in patterns.iter().zip(&treated) {
            exposure_counts.push(CountRow {
                own: 1,
                pattern: pattern.clone(),
                count: *count,
            });
        }
        for (pattern, count) in patterns.iter().zip(&control) {
            exposure_counts.push(CountRow {
                own: 0,
                pattern: pattern.clone(),
                count: *count,
            });
        }
        let low_count_exposures = low_counts
            .iter()
            .map(|(e, count)| CountRow {
                own: e.own() as u8,
                pattern: e.pattern_string(),
                count: *count,
            })
            .collect();
        Self {
            n,
            k,
            design,
            z,
            estimates,
            exposure_counts,
            low_count_exposures,
        }
    }

    /// Two CSV sections separated by a blank line: the estimator table and
    /// the exposure-count grid.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,estimate,variance,se,ci_lower,ci_upper\n");
        for row in &self.estimates {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.estimator,
                fmt4(row.estimate),
                fmt4(row.variance),
                fmt4(row.se),
                fmt4(row.ci_lower),
                fmt4(row.ci_upper)
            ));
        }
        out.push('\n');
        out.push_str("own,pattern,count\n");
        for row in &self.exposure_counts {
            out.push_str(&format!("{},{},{}\n", row.own, row.pattern, row.count));
        }
        out
    }

    /// Parse the two CSV sections back.
    #[cfg(test)]
    pub fn from_csv(text: &str) -> anyhow::Result<(Vec<EstimateRow>, Vec<CountRow>)> {
        let mut sections = text.split("\n\n");
        let estimates_text = sections
            .next()
            .ok_or_else(|| anyhow!("empty analysis report"))?;
        let counts_text = sections
            .next()
            .ok_or_else(|| anyhow!("analysis report is missing the exposure-count section"))?;

        let mut estimates = Vec::new();
        let mut lines = estimates_text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "estimator,estimate,variance,se,ci_lower,ci_upper" {
            bail!("unexpected estimates header `{header}`");
        }
        for line in lines {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                bail!("malformed estimates row `{line}`");
            }
            estimates.push(EstimateRow {
                estimator: fields[0].to_string(),
                estimate: parse_f64(fields[1])?,
                variance: parse_f64(fields[2])?,
                se: parse_f64(fields[3])?,
                ci_lower: parse_f64(fields[4])?,
                ci_upper: parse_f64(fields[5])?,
            });
        }

        let mut counts = Vec::new();
        let mut lines = counts_text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "own,pattern,count" {
            bail!("unexpected exposure-count header `{header}`");
        }
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                bail!("malformed count row `{line}`");
            }
            counts.push(CountRow {
                own: fields[0].parse().context("own flag")?,
                pattern: fields[1].to_string(),
                count: fields[2].parse().context("count")?,
            });
        }
        Ok((estimates, counts))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    #[cfg(test)]
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Four fractional digits, with negative zero normalized away.
fn fmt4(v: f64) -> String {
    let s = format!("{:.4}", v);
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

#[cfg(test)]
fn parse_f64(field: &str) -> anyhow::Result<f64> {
    field
        .parse()
        .with_context(|| format!("expected a number, found `{field}`"))
}

/// Serializable view of a simulation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<SimReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReportRow {
    pub estimator: String,
    pub truth: f64,
    pub emp_ev: f64,
    pub emp_var: f64,
    pub emp_sd: f64,
    pub mean_var_est: f64,
}

impl SimReport {
    pub fn from_summary(summary: &SimSummary) -> Self {
        Self {
            n: summary.n,
            replications: summary.replications,
            seed: summary.seed,
            rows: summary
                .rows
                .iter()
                .map(|r| SimReportRow {
                    estimator: r.label(),
                    truth: r.truth,
                    emp_ev: r.emp_ev,
                    emp_var: r.emp_var,
                    emp_sd: r.emp_sd,
                    mean_var_est: r.mean_var_est,
                })
                .collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,truth,emp_ev,emp_var,emp_sd,mean_var_est\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.estimator,
                fmt4(row.truth),
                fmt4(row.emp_ev),
                fmt4(row.emp_var),
                fmt4(row.emp_sd),
                fmt4(row.mean_var_est)
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Marginal-probability dump rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub unit: String,
    pub own: u8,
    pub pattern: String,
    pub probability: f64,
}

/// Joint-probability dump rows for one unit pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointRow {
    pub unit_i: String,
    pub own_i: u8,
    pub pattern_i: String,
    pub unit_j: String,
    pub own_j: u8,
    pub pattern_j: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityReport {
    pub k: usize,
    pub design: String,
    pub marginals: Vec<MarginalRow>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub joints: Vec<JointRow>,
}

impl ProbabilityReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("unit,own,pattern,probability\n");
        for row in &self.marginals {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.unit,
                row.own,
                row.pattern,
                fmt4(row.probability)
            ));
        }
        if !self.joints.is_empty() {
            out.push('\n');
            out.push_str("unit_i,own_i,pattern_i,unit_j,own_j,pattern_j,probability\n");
            for row in &self.joints {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    row.unit_i,
                    row.own_i,
                    row.pattern_i,
                    row.unit_j,
                    row.own_j,
                    row.pattern_j,
                    fmt4(row.probability)
                ));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt4_normalizes_negative_zero() {
        assert_eq!(fmt4(-0.0), "0.0000");
        assert_eq!(fmt4(-1e-9), "0.0000");
        assert_eq!(fmt4(0.12345), "0.1235");
        assert_eq!(fmt4(-2.5), "-2.5000");
    }

    #[test]
    fn csv_round_trip_is_stable() {
        let report = AnalysisReport {
            n: 4,
            k: 1,
            design: "crd(n_treated=2)".into(),
            z: 1.96,
            estimates: vec![EstimateRow {
                estimator: "total".into(),
                estimate: 0.123456,
                variance: 0.01,
                se: 0.1,
                ci_lower: -0.072544,
                ci_upper: 0.319456,
            }],
            exposure_counts: vec![
                CountRow {
                    own: 1,
                    pattern: "0".into(),
                    count: 2,
                },
                CountRow {
                    own: 0,
                    pattern: "1".into(),
                    count: 2,
                },
            ],
            low_count_exposures: vec![],
        };
        let text = report.to_csv();
        let (estimates, counts) = AnalysisReport::from_csv(&text).unwrap();
        assert_eq!(estimates.len(), 1);
        assert_eq!(counts.len(), 2);
        // re-rendering the parsed values reproduces the same bytes
        let reparsed = AnalysisReport {
            estimates,
            exposure_counts: counts,
            ..report.clone()
        };
        assert_eq!(reparsed.to_csv(), text);
    }

    #[test]
    fn json_round_trip_preserves_full_precision() {
        let report = AnalysisReport {
            n: 4,
            k: 1,
            design: "bernoulli(p=0.5)".into(),
            z: 1.96,
            estimates: vec![EstimateRow {
                estimator: "indirect_a1".into(),
                estimate: 1.0 / 3.0,
                variance: 2.0 / 7.0,
                se: (2.0f64 / 7.0).sqrt(),
                ci_lower: 0.0,
                ci_upper: 0.0,
            }],
            exposure_counts: vec![],
            low_count_exposures: vec![],
        };
        let parsed = AnalysisReport::from_json(&report.to_json()).unwrap();
        assert_eq!(parsed, report);
    }
}
