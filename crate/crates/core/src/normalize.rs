//! Text folding shared by alias lookup, evidence checks and name matching.
//!
//! Folding lowercases, maps typographic quotes and dashes to ASCII, and
//! collapses whitespace runs to one space. [`FoldedText`] keeps a map from
//! folded byte positions back to character positions in the original, so a
//! match found in folded space can be reported in original coordinates.

use alloc::string::String;
use alloc::vec::Vec;

fn typographic(ch: char) -> Option<&'static str> {
    Some(match ch {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{FF07}' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{FF02}' => "\"",
        '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}'
        | '\u{2212}' => "-",
        '\u{2026}' => "...",
        _ => return None,
    })
}

/// Folded text plus a back-map to original character offsets.
#[derive(Debug, Clone)]
pub struct FoldedText {
    text: String,
    // origin[i] = char index in the original for folded byte i
    origin: Vec<usize>,
}

impl FoldedText {
    pub fn new(input: &str) -> Self {
        let mut text = String::with_capacity(input.len());
        let mut origin = Vec::with_capacity(input.len());
        let mut pending_space: Option<usize> = None;

        let push = |text: &mut String, origin: &mut Vec<usize>, c: char, at: usize| {
            let before = text.len();
            text.push(c);
            origin.extend(core::iter::repeat_n(at, text.len() - before));
        };

        for (ci, ch) in input.chars().enumerate() {
            if ch.is_whitespace() {
                if !text.is_empty() && pending_space.is_none() {
                    pending_space = Some(ci);
                }
                continue;
            }
            if let Some(at) = pending_space.take() {
                push(&mut text, &mut origin, ' ', at);
            }
            match typographic(ch) {
                Some(rep) => {
                    for r in rep.chars() {
                        push(&mut text, &mut origin, r, ci);
                    }
                }
                None => {
                    for lc in ch.to_lowercase() {
                        push(&mut text, &mut origin, lc, ci);
                    }
                }
            }
        }
        FoldedText { text, origin }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }

    /// Original character offsets of every occurrence of `needle` (already folded).
    pub fn find_all(&self, needle: &str) -> Vec<usize> {
        if needle.is_empty() {
            return Vec::new();
        }
        let mut hits = Vec::new();
        let mut from = 0;
        while let Some(pos) = self.text[from..].find(needle) {
            let at = from + pos;
            hits.push(self.origin[at]);
            // advance by one char to allow overlapping matches
            let step = self.text[at..].chars().next().map_or(1, char::len_utf8);
            from = at + step;
        }
        hits
    }

    /// First occurrence of `needle` (already folded), in original character coordinates.
    pub fn find(&self, needle: &str) -> Option<usize> {
        if needle.is_empty() {
            return None;
        }
        self.text.find(needle).map(|at| self.origin[at])
    }
}

/// Fold a string without keeping the offset map.
pub fn fold(input: &str) -> String {
    FoldedText::new(input).into_string()
}

/// Corporate designators stripped from the end of company names before matching.
pub const DEFAULT_CORPORATE_SUFFIXES: &[&str] = &[
    "Co., Ltd.",
    "Company Limited",
    "Corporation",
    "Corp.",
    "Incorporated",
    "Inc.",
    "Limited",
    "Ltd.",
    "LLC",
    "PLC",
    "GmbH",
    "AG",
    "S.A.",
    "N.V.",
    "B.V.",
    "SE",
    "Co.",
    "Company",
    "Holdings",
    "Holding",
    "Group",
    "Technologies",
    "Technology",
    "International",
    "株式会社",
    "股份有限公司",
    "有限责任公司",
    "有限公司",
    "集团",
];

/// Builds matching keys for entity names: folded, punctuation-insensitive,
/// with trailing corporate designators removed.
#[derive(Debug, Clone)]
pub struct NameNormalizer {
    // token sequences, longest first
    suffixes: Vec<Vec<String>>,
}

impl Default for NameNormalizer {
    fn default() -> Self {
        Self::new(DEFAULT_CORPORATE_SUFFIXES.iter().copied())
    }
}

fn tokens(input: &str) -> Vec<String> {
    let folded = fold(input);
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in folded.chars() {
        if ch.is_alphanumeric() || ch == '&' {
            cur.push(ch);
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

impl NameNormalizer {
    pub fn new<'a>(suffixes: impl IntoIterator<Item = &'a str>) -> Self {
        let mut suffixes: Vec<Vec<String>> = suffixes
            .into_iter()
            .map(tokens)
            .filter(|t| !t.is_empty())
            .collect();
        suffixes.sort_by(|a, b| {
            let la: usize = a.iter().map(|t| t.chars().count()).sum();
            let lb: usize = b.iter().map(|t| t.chars().count()).sum();
            lb.cmp(&la).then_with(|| a.cmp(b))
        });
        suffixes.dedup();
        NameNormalizer { suffixes }
    }

    pub fn key(&self, name: &str) -> String {
        let mut toks = tokens(name);
        loop {
            let mut changed = false;
            for suf in &self.suffixes {
                if toks.len() > suf.len() && toks[toks.len() - suf.len()..] == suf[..] {
                    toks.truncate(toks.len() - suf.len());
                    changed = true;
                    break;
                }
                // CJK designators are written without a separator
                if suf.len() == 1 && !suf[0].is_ascii() {
                    if let Some(last) = toks.last_mut() {
                        if last.len() > suf[0].len() && last.ends_with(suf[0].as_str()) {
                            let keep = last.len() - suf[0].len();
                            last.truncate(keep);
                            changed = true;
                            break;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        toks.join(" ")
    }
}
