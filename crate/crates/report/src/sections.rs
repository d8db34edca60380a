//! Header detection, verbatim extraction and canonical normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ReportError, Result};
use crate::lexicon::{Category, Lexicon, Partition};

/// Separator between duplicate-category pieces.
pub const DUPLICATE_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    /// Header as written in the report.
    pub header_text: String,
    /// Byte offset of the header's first character.
    pub start_offset: usize,
    /// Byte offset just past the header terminator.
    pub body_offset: usize,
    /// Next header's start, or the end of the report.
    pub end_offset: usize,
    /// Index of the matched lexicon rule.
    pub category_hint: usize,
}

/// Byte length of a header match at the start of `line`, including the
/// terminating `:` if present.
fn header_match(line: &str, header: &str) -> Option<usize> {
    let n = header.len();
    if line.len() < n || !line.is_char_boundary(n) || !line[..n].eq_ignore_ascii_case(header) {
        return None;
    }
    let rest = &line[n..];
    let trimmed = rest.trim_start_matches([' ', '\t']);
    let skipped = rest.len() - trimmed.len();
    if trimmed.starts_with(':') {
        Some(n + skipped + 1)
    } else if trimmed.trim_end_matches('\r').is_empty() {
        Some(n)
    } else {
        None
    }
}

/// Lexicon headers that open a line (after indentation), longest match first.
pub fn detect_sections(report: &str, lexicon: &Lexicon) -> Vec<SectionSpan> {
    let mut order: Vec<usize> = (0..lexicon.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(lexicon.rule(i).header.len()));

    let mut spans: Vec<SectionSpan> = Vec::new();
    let mut line_start = 0;
    for line in report.split_inclusive('\n') {
        let body = line.trim_end_matches('\n');
        let indent = body.len() - body.trim_start().len();
        let text = &body[indent..];
        for &id in &order {
            if let Some(len) = header_match(text, &lexicon.rule(id).header) {
                let start = line_start + indent;
                let header_len = lexicon.rule(id).header.len();
                spans.push(SectionSpan {
                    header_text: report[start..start + header_len].to_string(),
                    start_offset: start,
                    body_offset: start + len,
                    end_offset: report.len(),
                    category_hint: id,
                });
                break;
            }
        }
        line_start += line.len();
    }
    for i in 1..spans.len() {
        spans[i - 1].end_offset = spans[i].start_offset;
    }
    spans
}

/// Trimmed body of `span`, borrowed from `report`.
pub fn extract_section<'a>(report: &'a str, span: &SectionSpan) -> Result<&'a str> {
    let ok = span.start_offset <= span.body_offset
        && span.body_offset <= span.end_offset
        && span.end_offset <= report.len()
        && report.is_char_boundary(span.body_offset)
        && report.is_char_boundary(span.end_offset);
    if !ok {
        return Err(ReportError::SpanOutOfBounds { start: span.start_offset, end: span.end_offset, len: report.len() });
    }
    Ok(report[span.body_offset..span.end_offset].trim())
}

/// Pluggable stage-two extractor; the default copies spans verbatim.
pub trait SectionExtractor {
    fn extract(&self, report: &str, span: &SectionSpan) -> Result<String>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct CopyExtractor;

impl SectionExtractor for CopyExtractor {
    fn extract(&self, report: &str, span: &SectionSpan) -> Result<String> {
        extract_section(report, span).map(str::to_string)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub report_id: String,
    pub patient_id: String,
    pub timestamp: String,
    pub sections: BTreeMap<Category, String>,
    /// Each non-empty piece before concatenation, in document order.
    pub pieces: Vec<(Category, String)>,
}

impl StructuredReport {
    pub fn partition_of(&self, c: Category) -> Partition {
        c.partition()
    }

    pub fn section(&self, c: Category) -> Option<&str> {
        self.sections.get(&c).map(String::as_str)
    }

    pub fn in_partition(&self, p: Partition) -> impl Iterator<Item = (Category, &str)> {
        self.sections.iter().filter(move |(c, _)| c.partition() == p).map(|(c, s)| (*c, s.as_str()))
    }
}

/// Groups extracted bodies by canonical category, concatenating duplicates
/// in document order; empty bodies are dropped.
pub fn normalize_sections(
    meta: (&str, &str, &str),
    spans: &[SectionSpan],
    texts: &[String],
    lexicon: &Lexicon,
) -> StructuredReport {
    let (report_id, patient_id, timestamp) = meta;
    let mut sections: BTreeMap<Category, String> = BTreeMap::new();
    let mut pieces = Vec::new();
    for (span, text) in spans.iter().zip(texts) {
        if text.is_empty() {
            continue;
        }
        let cat = lexicon.rule(span.category_hint).category;
        pieces.push((cat, text.clone()));
        sections
            .entry(cat)
            .and_modify(|s| {
                s.push_str(DUPLICATE_SEPARATOR);
                s.push_str(text);
            })
            .or_insert_with(|| text.clone());
    }
    StructuredReport {
        report_id: report_id.to_string(),
        patient_id: patient_id.to_string(),
        timestamp: timestamp.to_string(),
        sections,
        pieces,
    }
}

/// Detect, extract and normalize in one call.
pub fn structure_report(
    meta: (&str, &str, &str),
    report: &str,
    lexicon: &Lexicon,
    extractor: &dyn SectionExtractor,
) -> Result<StructuredReport> {
    let spans = detect_sections(report, lexicon);
    let texts = spans.iter().map(|s| extractor.extract(report, s)).collect::<Result<Vec<_>>>()?;
    Ok(normalize_sections(meta, &spans, &texts, lexicon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Section(usize),
    Unmatched,
}

/// Partition of `[first header, end)` into section spans and the gaps
/// between them. Empty when there are no spans.
pub fn coverage(report_len: usize, spans: &[SectionSpan]) -> Vec<(Region, usize, usize)> {
    let mut out = Vec::new();
    let Some(first) = spans.first() else {
        return out;
    };
    let mut cursor = first.start_offset;
    for (i, s) in spans.iter().enumerate() {
        if s.start_offset > cursor {
            out.push((Region::Unmatched, cursor, s.start_offset));
        }
        out.push((Region::Section(i), s.start_offset, s.end_offset));
        cursor = s.end_offset;
    }
    if cursor < report_len {
        out.push((Region::Unmatched, cursor, report_len));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lx() -> Lexicon {
        Lexicon::default()
    }

    #[test]
    fn single_impression() {
        let r = "IMPRESSION: Normal study.";
        let spans = detect_sections(r, &lx());
        assert_eq!(spans.len(), 1);
        assert_eq!(lx().rule(spans[0].category_hint).category, Category::Impressions);
        assert_eq!(extract_section(r, &spans[0]).unwrap(), "Normal study.");
    }

    #[test]
    fn consecutive_spans_abut() {
        let r = "IMPRESSION: Abnormal.\nBACKGROUND: Slow.\n";
        let s = detect_sections(r, &lx());
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].end_offset, s[1].start_offset);
        assert_eq!(s[1].end_offset, r.len());
    }

    #[test]
    fn no_headers_no_spans() {
        assert!(detect_sections("Patient was calm throughout.", &lx()).is_empty());
    }

    #[test]
    fn header_needs_colon_or_line_end() {
        let r = "History of seizures noted.\nHISTORY\nTwo prior events.\n";
        let s = detect_sections(r, &lx());
        assert_eq!(s.len(), 1);
        assert_eq!(extract_section(r, &s[0]).unwrap(), "Two prior events.");
    }

    #[test]
    fn longest_header_wins() {
        let r = "  Background Activity :  8 Hz alpha.";
        let s = detect_sections(r, &lx());
        assert_eq!(s[0].header_text, "Background Activity");
        assert_eq!(extract_section(r, &s[0]).unwrap(), "8 Hz alpha.");
    }

    #[test]
    fn empty_body_is_empty_string() {
        let r = "IMPRESSION:\nEVENTS: none";
        let s = detect_sections(r, &lx());
        assert_eq!(extract_section(r, &s[0]).unwrap(), "");
    }

    #[test]
    fn multiline_body_is_verbatim() {
        let r = "DESCRIPTION:\nline one\n\n  line two\nIMPRESSION: ok";
        let s = detect_sections(r, &lx());
        assert_eq!(extract_section(r, &s[0]).unwrap(), "line one\n\n  line two");
    }

    #[test]
    fn out_of_bounds_span_errors() {
        let mut s = detect_sections("EVENTS: none", &lx()).remove(0);
        s.end_offset = 99;
        assert!(extract_section("EVENTS: none", &s).is_err());
    }

    #[test]
    fn duplicates_concatenate_in_order() {
        let r = "IMPRESSION: first.\nHISTORY: seizures.\nINTERPRETATION: second.";
        let sr = structure_report(("r1", "p1", "t"), r, &lx(), &CopyExtractor).unwrap();
        assert_eq!(sr.section(Category::Impressions), Some("first.\nsecond."));
        assert_eq!(Category::History.partition(), Partition::ClinicalContext);
        assert_eq!(Category::EventsSeizures.partition(), Partition::EegFindings);
        assert_eq!(sr.in_partition(Partition::ClinicalContext).count(), 1);
    }

    #[test]
    fn coverage_tiles_after_first_header() {
        let r = "preamble\nHISTORY: a\nIMPRESSION: b\n";
        let s = detect_sections(r, &lx());
        let cov = coverage(r.len(), &s);
        assert_eq!(cov.first().unwrap().1, s[0].start_offset);
        assert_eq!(cov.last().unwrap().2, r.len());
        for w in cov.windows(2) {
            assert_eq!(w[0].2, w[1].1);
        }
    }
}
