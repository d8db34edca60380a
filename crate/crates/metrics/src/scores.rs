//! Token-level text generation metrics.

use std::collections::HashMap;

use crate::tokenize::{split_sentences, tokenize};

/// Pseudo-count substituted for a zero n-gram match count.
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn new(hits: f64, hyp_total: f64, ref_total: f64) -> Self {
        let precision = if hyp_total > 0.0 { hits / hyp_total } else { 0.0 };
        let recall = if ref_total > 0.0 { hits / ref_total } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf { precision, recall, f1 }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if n == 0 || tokens.len() < n {
        return m;
    }
    for w in tokens.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Clipped overlap and hypothesis total for order `n`.
fn clipped_overlap(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let hits = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (hits, hyp.len().saturating_sub(n - 1))
}

pub fn bleu_tokens(hyp: &[String], reference: &[String], max_n: usize, epsilon: f64) -> f64 {
    if hyp.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (hits, total) = clipped_overlap(hyp, reference, n);
        let p = if hits == 0 { epsilon / total.max(1) as f64 } else { hits as f64 / total as f64 };
        log_sum += p.ln();
    }
    let (c, r) = (hyp.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * (log_sum / max_n as f64).exp()
}

/// Add-epsilon smoothed BLEU with uniform weights over orders `1..=max_n`.
pub fn bleu(hyp: &str, reference: &str, max_n: usize) -> f64 {
    bleu_tokens(&tokenize(hyp), &tokenize(reference), max_n, DEFAULT_EPSILON)
}

pub fn rouge_n_tokens(hyp: &[String], reference: &[String], n: usize) -> Prf {
    let (hits, hyp_total) = clipped_overlap(hyp, reference, n);
    let ref_total = reference.len().saturating_sub(n - 1);
    Prf::new(hits as f64, hyp_total as f64, ref_total as f64)
}

pub fn rouge_n(hyp: &str, reference: &str, n: usize) -> Prf {
    rouge_n_tokens(&tokenize(hyp), &tokenize(reference), n)
}

fn lcs_table(a: &[String], b: &[String]) -> Vec<Vec<usize>> {
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] { t[i - 1][j - 1] + 1 } else { t[i - 1][j].max(t[i][j - 1]) };
        }
    }
    t
}

/// Indices into `reference` of one longest common subsequence.
fn lcs_indices(reference: &[String], cand: &[String]) -> Vec<usize> {
    let t = lcs_table(reference, cand);
    let (mut i, mut j) = (reference.len(), cand.len());
    let mut out = Vec::new();
    while i > 0 && j > 0 {
        if reference[i - 1] == cand[j - 1] {
            out.push(i - 1);
            i -= 1;
            j -= 1;
        } else if t[i][j - 1] > t[i - 1][j] {
            j -= 1;
        } else {
            i -= 1;
        }
    }
    out.reverse();
    out
}

pub fn rouge_l_tokens(hyp: &[String], reference: &[String]) -> Prf {
    let lcs = lcs_table(hyp, reference)[hyp.len()][reference.len()];
    Prf::new(lcs as f64, hyp.len() as f64, reference.len() as f64)
}

pub fn rouge_l(hyp: &str, reference: &str) -> Prf {
    rouge_l_tokens(&tokenize(hyp), &tokenize(reference))
}

/// Summary-level LCS: per reference sentence, the union of its LCS hits
/// against every hypothesis sentence, with hits clipped by token counts.
pub fn rouge_lsum(hyp: &str, reference: &str) -> Prf {
    let hs = split_sentences(hyp);
    let rs = split_sentences(reference);
    let n_hyp: usize = hs.iter().map(Vec::len).sum();
    let n_ref: usize = rs.iter().map(Vec::len).sum();
    let mut hyp_left: HashMap<&str, usize> = HashMap::new();
    for t in hs.iter().flatten() {
        *hyp_left.entry(t).or_default() += 1;
    }
    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    for t in rs.iter().flatten() {
        *ref_left.entry(t).or_default() += 1;
    }
    let mut hits = 0usize;
    for r in &rs {
        let mut union: Vec<usize> = hs.iter().flat_map(|h| lcs_indices(r, h)).collect();
        union.sort_unstable();
        union.dedup();
        for i in union {
            let tok = r[i].as_str();
            let (hc, rc) = (hyp_left.get(tok).copied(), ref_left.get(tok).copied());
            if hc.unwrap_or(0) > 0 && rc.unwrap_or(0) > 0 {
                hits += 1;
                *hyp_left.get_mut(tok).unwrap() -= 1;
                *ref_left.get_mut(tok).unwrap() -= 1;
            }
        }
    }
    Prf::new(hits as f64, n_hyp as f64, n_ref as f64)
}

/// Light suffix stemmer: `ing`, `ed`, sibilant `es`, then `s`, each only
/// when at least three characters remain.
pub fn stem(word: &str) -> &str {
    let keep = |base: &str| base.chars().count() >= 3;
    for suf in ["ing", "ed"] {
        if let Some(base) = word.strip_suffix(suf).filter(|b| keep(b)) {
            return base;
        }
    }
    if let Some(base) = word.strip_suffix("es").filter(|b| keep(b)) {
        if ["s", "x", "z", "ch", "sh"].iter().any(|t| base.ends_with(t)) {
            return base;
        }
    }
    word.strip_suffix('s').filter(|b| keep(b)).unwrap_or(word)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeteorDetail {
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
}

/// Greedy left-to-right alignment: exact pass, then stem pass. A hypothesis
/// token prefers the reference slot that extends the previous alignment,
/// otherwise the leftmost free slot.
fn align(hyp: &[String], reference: &[String]) -> Vec<Option<usize>> {
    let mut h2r: Vec<Option<usize>> = vec![None; hyp.len()];
    let mut used = vec![false; reference.len()];
    let stems_h: Vec<&str> = hyp.iter().map(|t| stem(t)).collect();
    let stems_r: Vec<&str> = reference.iter().map(|t| stem(t)).collect();
    for stage in 0..2 {
        for i in 0..hyp.len() {
            if h2r[i].is_some() {
                continue;
            }
            let eq = |j: usize| !used[j] && if stage == 0 { hyp[i] == reference[j] } else { stems_h[i] == stems_r[j] };
            let extend = i.checked_sub(1).and_then(|p| h2r[p]).map(|j| j + 1).filter(|&j| j < reference.len() && eq(j));
            let pick = extend.or_else(|| (0..reference.len()).find(|&j| eq(j)));
            if let Some(j) = pick {
                h2r[i] = Some(j);
                used[j] = true;
            }
        }
    }
    h2r
}

pub fn meteor_tokens(hyp: &[String], reference: &[String]) -> MeteorDetail {
    let h2r = align(hyp, reference);
    let pairs: Vec<(usize, usize)> = h2r.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))).collect();
    let m = pairs.len();
    let chunks = pairs
        .iter()
        .enumerate()
        .filter(|&(k, &(i, j))| k == 0 || !(pairs[k - 1].0 + 1 == i && pairs[k - 1].1 + 1 == j))
        .count();
    if m == 0 {
        return MeteorDetail {
            matches: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            penalty: 0.0,
            score: 0.0,
        };
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    MeteorDetail { matches: m, chunks, precision: p, recall: r, fmean, penalty, score: fmean * (1.0 - penalty) }
}

/// Exact plus suffix-stem unigram matching, no synonyms.
pub fn meteor_lite(hyp: &str, reference: &str) -> f64 {
    meteor_tokens(&tokenize(hyp), &tokenize(reference)).score
}
