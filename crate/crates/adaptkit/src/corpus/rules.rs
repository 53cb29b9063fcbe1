use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::{Error, Result};

/// Target script for the foreign-character-ratio rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Script {
    Hangul,
    Latin,
}

impl Script {
    pub fn contains(self, c: char) -> bool {
        match self {
            Script::Hangul => matches!(c,
                '\u{AC00}'..='\u{D7A3}' | '\u{1100}'..='\u{11FF}' | '\u{3130}'..='\u{318F}'),
            Script::Latin => c.is_ascii_alphabetic() || matches!(c, '\u{C0}'..='\u{24F}'),
        }
    }
}

impl std::str::FromStr for Script {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hangul" => Ok(Script::Hangul),
            "latin" => Ok(Script::Latin),
            other => Err(Error::config(format!("unknown script: {other}"))),
        }
    }
}

/// Built-in rule predicates. A document is kept iff it passes every rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Rule {
    /// Reject documents shorter than this many bytes.
    MinLen(usize),
    /// Reject documents longer than this many bytes.
    MaxLen(usize),
    /// Reject when the fraction of alphabetic characters outside the
    /// target script exceeds `max_ratio`.
    MaxForeignRatio { target: Script, max_ratio: f64 },
    /// Reject documents containing a run of one repeated character longer
    /// than this.
    MaxRepeatRun(usize),
    /// Reject documents where any line contains one of these substrings.
    DenyLinePattern(Vec<String>),
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::MinLen(_) => "min_len",
            Rule::MaxLen(_) => "max_len",
            Rule::MaxForeignRatio { .. } => "max_foreign_ratio",
            Rule::MaxRepeatRun(_) => "max_repeat_run",
            Rule::DenyLinePattern(_) => "deny_line_pattern",
        }
    }

    /// Parse a `name=value` rule spec, e.g. `min_len=10`,
    /// `max_foreign_ratio=hangul:0.5`, `deny_line_pattern=a|b`.
    pub fn parse(spec: &str) -> Result<Rule> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::config(format!("rule spec missing '=': {spec}")))?;
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::config(format!("invalid integer in rule {name}: {v}")))
        };
        match name {
            "min_len" => Ok(Rule::MinLen(int(value)?)),
            "max_len" => Ok(Rule::MaxLen(int(value)?)),
            "max_repeat_run" => Ok(Rule::MaxRepeatRun(int(value)?)),
            "max_foreign_ratio" => {
                let (script, ratio) = value.split_once(':').ok_or_else(|| {
                    Error::config(format!("max_foreign_ratio needs script:ratio, got {value}"))
                })?;
                let max_ratio: f64 = ratio
                    .parse()
                    .map_err(|_| Error::config(format!("invalid ratio: {ratio}")))?;
                Ok(Rule::MaxForeignRatio {
                    target: script.parse()?,
                    max_ratio,
                })
            }
            "deny_line_pattern" => Ok(Rule::DenyLinePattern(
                value.split('|').map(|s| s.to_string()).collect(),
            )),
            other => Err(Error::config(format!("unknown rule name: {other}"))),
        }
    }

    fn passes(&self, text: &str) -> bool {
        match self {
            Rule::MinLen(n) => text.len() >= *n,
            Rule::MaxLen(n) => text.len() <= *n,
            Rule::MaxForeignRatio { target, max_ratio } => {
                foreign_ratio(text, *target) <= *max_ratio
            }
            Rule::MaxRepeatRun(n) => longest_repeat_run(text) <= *n,
            Rule::DenyLinePattern(patterns) => !text
                .lines()
                .any(|line| patterns.iter().any(|p| line.contains(p.as_str()))),
        }
    }
}

/// Fraction of alphabetic characters not belonging to the target script.
/// Returns 0 when the text has no alphabetic characters.
pub fn foreign_ratio(text: &str, target: Script) -> f64 {
    let mut alpha = 0usize;
    let mut foreign = 0usize;
    for c in text.chars() {
        if c.is_alphabetic() {
            alpha += 1;
            if !target.contains(c) {
                foreign += 1;
            }
        }
    }
    if alpha == 0 {
        0.0
    } else {
        foreign as f64 / alpha as f64
    }
}

fn longest_repeat_run(text: &str) -> usize {
    let mut best = 0usize;
    let mut run = 0usize;
    let mut prev: Option<char> = None;
    for c in text.chars() {
        if Some(c) == prev {
            run += 1;
        } else {
            run = 1;
            prev = Some(c);
        }
        best = best.max(run);
    }
    best
}

/// Per-rule rejection counts plus the (doc id, rule) pairs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RuleReport {
    pub rejections: BTreeMap<String, u64>,
    pub rejected_docs: Vec<(String, String)>,
}

/// Apply an ordered rule list; a document is rejected by the first rule
/// it fails.
pub fn rule_filter(corpus: &Corpus, rules: &[Rule]) -> (Corpus, RuleReport) {
    let mut report = RuleReport::default();
    let mut kept = Vec::new();
    for doc in &corpus.docs {
        match rules.iter().find(|r| !r.passes(&doc.text)) {
            None => kept.push(doc.clone()),
            Some(rule) => {
                *report.rejections.entry(rule.name().to_string()).or_insert(0) += 1;
                report
                    .rejected_docs
                    .push((doc.id.clone(), rule.name().to_string()));
            }
        }
    }
    (Corpus::new(kept), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    #[test]
    fn empty_rule_list_is_identity() {
        let c: Corpus = vec![Document::new("a", "hello", "t")].into_iter().collect();
        let (out, report) = rule_filter(&c, &[]);
        assert_eq!(out, c);
        assert!(report.rejections.is_empty());
    }

    #[test]
    fn min_len_rejects_short_doc() {
        let c: Corpus = vec![Document::new("a", "12345", "t")].into_iter().collect();
        let (out, report) = rule_filter(&c, &[Rule::MinLen(10)]);
        assert!(out.is_empty());
        assert_eq!(report.rejections["min_len"], 1);
        assert_eq!(report.rejected_docs[0], ("a".to_string(), "min_len".to_string()));
    }

    // Oracle: ratio computed by character-class counting by hand.
    #[test]
    fn foreign_ratio_rejects_latin_doc_under_hangul_target() {
        // 9 Latin letters + 1 Hangul syllable -> foreign ratio 0.9
        let text = "abcdefghi\u{AC00}";
        assert!((foreign_ratio(text, Script::Hangul) - 0.9).abs() < 1e-12);
        let c: Corpus = vec![Document::new("a", text, "t")].into_iter().collect();
        let (out, report) = rule_filter(
            &c,
            &[Rule::MaxForeignRatio {
                target: Script::Hangul,
                max_ratio: 0.5,
            }],
        );
        assert!(out.is_empty());
        assert_eq!(report.rejections["max_foreign_ratio"], 1);
    }

    #[test]
    fn repeat_run_and_deny_patterns() {
        let c: Corpus = vec![
            Document::new("a", "aaaaaab", "t"),
            Document::new("b", "normal text\nclick here to subscribe", "t"),
            Document::new("c", "fine", "t"),
        ]
        .into_iter()
        .collect();
        let rules = [
            Rule::MaxRepeatRun(4),
            Rule::DenyLinePattern(vec!["click here".into()]),
        ];
        let (out, report) = rule_filter(&c, &rules);
        assert_eq!(out.len(), 1);
        assert_eq!(out.docs[0].id, "c");
        assert_eq!(report.rejections["max_repeat_run"], 1);
        assert_eq!(report.rejections["deny_line_pattern"], 1);
    }

    #[test]
    fn parse_specs() {
        assert_eq!(Rule::parse("min_len=10").unwrap(), Rule::MinLen(10));
        assert!(Rule::parse("bogus=1").is_err());
        assert!(matches!(
            Rule::parse("max_foreign_ratio=hangul:0.5").unwrap(),
            Rule::MaxForeignRatio { target: Script::Hangul, .. }
        ));
    }
}
