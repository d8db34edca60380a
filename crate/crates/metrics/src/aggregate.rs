use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::scores::{bleu, meteor_lite, rouge_l, rouge_lsum, rouge_n};

pub const METRIC_NAMES: [&str; 7] = ["bleu1", "bleu4", "rouge1", "rouge2", "rougeL", "rougeLsum", "meteor"];

/// Per-sample scores in [`METRIC_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleScores(pub [f64; 7]);

impl SampleScores {
    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|m| *m == name).map(|i| self.0[i])
    }

    pub fn rouge1(&self) -> f64 {
        self.0[2]
    }
}

pub fn score_pair(hyp: &str, reference: &str) -> SampleScores {
    SampleScores([
        bleu(hyp, reference, 1),
        bleu(hyp, reference, 4),
        rouge_n(hyp, reference, 1).f1,
        rouge_n(hyp, reference, 2).f1,
        rouge_l(hyp, reference).f1,
        rouge_lsum(hyp, reference).f1,
        meteor_lite(hyp, reference),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: [f64; 7],
    /// Population standard deviation.
    pub std: [f64; 7],
}

impl Aggregate {
    pub fn mean_of(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|m| *m == name).map(|i| self.mean[i])
    }
}

pub fn aggregate(samples: &[SampleScores]) -> Result<Aggregate> {
    if samples.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = samples.len() as f64;
    let mut mean = [0.0; 7];
    let mut std = [0.0; 7];
    for k in 0..7 {
        mean[k] = samples.iter().map(|s| s.0[k]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s.0[k] - mean[k]).powi(2)).sum::<f64>() / n;
        std[k] = var.sqrt();
    }
    Ok(Aggregate { count: samples.len(), mean, std })
}

/// Aggregates keyed by group label, e.g. report section.
pub fn aggregate_by_group(samples: &[(String, SampleScores)]) -> BTreeMap<String, Aggregate> {
    let mut groups: BTreeMap<String, Vec<SampleScores>> = BTreeMap::new();
    for (g, s) in samples {
        groups.entry(g.clone()).or_default().push(*s);
    }
    groups.into_iter().map(|(g, v)| (g, aggregate(&v).expect("groups are non-empty"))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub hypothesis: String,
    pub reference: String,
    #[serde(default)]
    pub section: String,
}

pub fn read_generations(r: impl BufRead) -> Result<Vec<GenerationRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| MetricsError::Record { line: i + 1, detail: e.to_string() })?);
    }
    Ok(out)
}

pub fn sample_table(records: &[GenerationRecord], scores: &[SampleScores]) -> String {
    let mut s = String::from("id,section");
    for m in METRIC_NAMES {
        s.push(',');
        s.push_str(m);
    }
    s.push('\n');
    for (r, sc) in records.iter().zip(scores) {
        let _ = write!(s, "{},{}", csv_field(&r.id), csv_field(&r.section));
        for v in sc.0 {
            let _ = write!(s, ",{v:.6}");
        }
        s.push('\n');
    }
    s
}

/// `group,metric,mean,std,count` rows; the corpus row uses group `all`.
pub fn aggregate_table(overall: &Aggregate, groups: &BTreeMap<String, Aggregate>) -> String {
    let mut s = String::from("group,metric,mean,std,count\n");
    let mut row = |g: &str, a: &Aggregate| {
        for (k, m) in METRIC_NAMES.iter().enumerate() {
            let _ = writeln!(s, "{},{m},{:.6},{:.6},{}", csv_field(g), a.mean[k], a.std[k], a.count);
        }
    };
    row("all", overall);
    for (g, a) in groups {
        row(g, a);
    }
    s
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_has_zero_std() {
        let a = aggregate(&[score_pair("a b", "a b c")]).unwrap();
        assert!(a.std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn zero_one_scores() {
        let a = aggregate(&[SampleScores([0.0; 7]), SampleScores([1.0; 7])]).unwrap();
        assert!(a.mean.iter().all(|&m| m == 0.5));
        assert!(a.std.iter().all(|&s| s == 0.5));
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(aggregate(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn grouping_keeps_section_shape() {
        let rows = vec![
            ("impressions".to_string(), SampleScores([1.0; 7])),
            ("background_activity".to_string(), SampleScores([0.0; 7])),
            ("impressions".to_string(), SampleScores([0.5; 7])),
        ];
        let g = aggregate_by_group(&rows);
        assert_eq!(g.len(), 2);
        assert_eq!(g["impressions"].count, 2);
        assert_eq!(g["impressions"].mean[0], 0.75);
        let table = aggregate_table(&aggregate(&[SampleScores([1.0; 7])]).unwrap(), &g);
        assert_eq!(table.lines().count(), 1 + 7 * 3);
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
    }
}
