//! Line-delimited JSON report corpora.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ReportError, Result};
use crate::sections::StructuredReport;
use crate::split::{Split, SplitTag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub id: String,
    pub patient: String,
    pub timestamp: String,
    pub text: String,
}

fn read_lines<T: for<'de> Deserialize<'de>>(r: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ReportError::Corpus { line: i + 1, detail: e.to_string() })?);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(mut w: impl Write, items: &[T]) -> Result<()> {
    for it in items {
        let s = serde_json::to_string(it).map_err(|e| ReportError::Corpus { line: 0, detail: e.to_string() })?;
        writeln!(w, "{s}")?;
    }
    Ok(())
}

pub fn read_reports(r: impl BufRead) -> Result<Vec<ReportRecord>> {
    read_lines(r)
}

pub fn write_reports(w: impl Write, reports: &[ReportRecord]) -> Result<()> {
    write_lines(w, reports)
}

pub fn read_structured(r: impl BufRead) -> Result<Vec<StructuredReport>> {
    read_lines(r)
}

pub fn write_structured(w: impl Write, reports: &[StructuredReport]) -> Result<()> {
    write_lines(w, reports)
}

/// Split manifest: `train`, `val` and `test` id lists.
pub fn split_manifest(ids: &[String], split: &Split) -> BTreeMap<&'static str, Vec<String>> {
    SplitTag::ALL
        .iter()
        .map(|&t| {
            let v = split.indices(t).into_iter().map(|i| ids[i].clone()).collect();
            (t.name(), v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let recs = vec![
            ReportRecord {
                id: "r1".into(),
                patient: "p1".into(),
                timestamp: "2020-01-01T00:00:00".into(),
                text: "IMPRESSION: \"quoted\"\nline".into(),
            },
            ReportRecord {
                id: "r2".into(),
                patient: "p2".into(),
                timestamp: "2020-01-02T00:00:00".into(),
                text: String::new(),
            },
        ];
        let mut buf = Vec::new();
        write_reports(&mut buf, &recs).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        assert_eq!(read_reports(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn bad_line_reports_its_number() {
        let err = read_reports(&b"{\"id\":\"a\",\"patient\":\"p\",\"timestamp\":\"t\",\"text\":\"\"}\nnope\n"[..])
            .unwrap_err();
        assert!(matches!(err, ReportError::Corpus { line: 2, .. }));
    }
}
