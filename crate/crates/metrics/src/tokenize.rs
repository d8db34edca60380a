/// Lowercased word tokens: runs of alphanumerics, with every other
/// non-space character kept as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// Sentences for summary-level scoring: a new sentence starts after each
/// `.` token and at each newline. Empty sentences are dropped.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for line in text.split('\n') {
        let mut cur = Vec::new();
        for tok in tokenize(line) {
            let end = tok == ".";
            cur.push(tok);
            if end {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowercases_and_splits_punctuation() {
        assert_eq!(tokenize("Normal EEG, 10-Hz alpha."), vec!["normal", "eeg", ",", "10", "-", "hz", "alpha", "."]);
        assert!(tokenize("  \n\t").is_empty());
    }

    #[test]
    fn sentences_split_on_period_and_newline() {
        let s = split_sentences("A b. C\nd e.\n\n");
        assert_eq!(s.len(), 3);
        assert_eq!(s[0], vec!["a", "b", "."]);
        assert_eq!(s[1], vec!["c"]);
        assert_eq!(s[2], vec!["d", "e", "."]);
    }
}
