//! Cloze prompt templates and record assembly.
//!
//! A record's text is the program source followed by one rendered block per
//! test-case pair; every block starts with the separator token.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::harvest::TestCasePair;

pub const DEFAULT_SEP: &str = "[SEP]";
/// Character budget for a whole record.
pub const DEFAULT_MAX_TOTAL_UNITS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    None,
    NlA,
    NlB,
    PlCpp,
    PlJava,
    PlPython,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 6] = [
        TemplateKind::None,
        TemplateKind::NlA,
        TemplateKind::NlB,
        TemplateKind::PlCpp,
        TemplateKind::PlJava,
        TemplateKind::PlPython,
    ];

    /// The programming-language template for programs written in `language`.
    pub fn pl_for(language: Language) -> TemplateKind {
        match language {
            Language::Cpp => TemplateKind::PlCpp,
            Language::Java => TemplateKind::PlJava,
            Language::Python => TemplateKind::PlPython,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::None => "none",
            TemplateKind::NlA => "nl_a",
            TemplateKind::NlB => "nl_b",
            TemplateKind::PlCpp => "pl_cpp",
            TemplateKind::PlJava => "pl_java",
            TemplateKind::PlPython => "pl_python",
        }
    }

    /// (before input, between input and output) for each non-empty template.
    fn parts(self) -> Option<(&'static str, &'static str)> {
        Some(match self {
            TemplateKind::None => return None,
            TemplateKind::NlA => ("input: ", ",output: "),
            TemplateKind::NlB => ("input is ", "andoutput is "),
            TemplateKind::PlCpp => ("cin>>", ";cout<<"),
            TemplateKind::PlJava => ("System.in ", ";System.out"),
            TemplateKind::PlPython => ("input()", "\nprint"),
        })
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown template {s:?} (expected one of none, nl_a, nl_b, pl_cpp, pl_java, pl_python)"))
    }
}

/// Template selection as configured: a fixed kind, or the pl_* template
/// matching each program's language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateChoice {
    Fixed(TemplateKind),
    PlAuto,
}

impl TemplateChoice {
    pub fn resolve(self, language: Language) -> TemplateKind {
        match self {
            TemplateChoice::Fixed(k) => k,
            TemplateChoice::PlAuto => TemplateKind::pl_for(language),
        }
    }
}

impl fmt::Display for TemplateChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemplateChoice::Fixed(k) => k.fmt(f),
            TemplateChoice::PlAuto => f.write_str("pl_auto"),
        }
    }
}

impl FromStr for TemplateChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "pl_auto" {
            return Ok(TemplateChoice::PlAuto);
        }
        s.parse().map(TemplateChoice::Fixed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub sep_token: String,
}

impl PromptTemplate {
    pub fn new(kind: TemplateKind) -> Self {
        PromptTemplate {
            kind,
            sep_token: DEFAULT_SEP.to_string(),
        }
    }
}

/// Renders one pair. `None` renders to the empty string.
pub fn render_pair(pair: &TestCasePair, template: &PromptTemplate) -> String {
    render_texts(&pair.input_text, &pair.output_text, template)
}

pub fn render_texts(input: &str, output: &str, template: &PromptTemplate) -> String {
    match template.kind.parts() {
        None => String::new(),
        Some((pre, mid)) => {
            let mut s = String::with_capacity(template.sep_token.len() + pre.len() + input.len() + mid.len() + output.len());
            s.push_str(&template.sep_token);
            s.push_str(pre);
            s.push_str(input);
            s.push_str(mid);
            s.push_str(output);
            s
        }
    }
}

/// Assembly budget in characters. The source may occupy at most
/// `floor(code_fraction * max_total_units)` characters when pairs compete
/// for space; 1.0 means pairs only get what the full source leaves over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_total_units: usize,
    pub code_fraction: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_total_units: DEFAULT_MAX_TOTAL_UNITS,
            code_fraction: 1.0,
        }
    }
}

impl Budget {
    pub fn unlimited() -> Self {
        Budget {
            max_total_units: usize::MAX,
            code_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.code_fraction) {
            return Err(format!("code_fraction must be in [0, 1], got {}", self.code_fraction));
        }
        Ok(())
    }
}

fn truncate_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Source followed by as many leading pairs as fit, then the source tail
/// cut if still over budget. Returns the text and the number of pairs used.
/// With `TemplateKind::None` the text is the source, untouched.
pub fn assemble(source: &str, pairs: &[TestCasePair], template: &PromptTemplate, budget: &Budget) -> (String, usize) {
    if template.kind == TemplateKind::None {
        return (source.to_string(), 0);
    }
    let max = budget.max_total_units;
    let src_chars = source.chars().count();
    let code_cap = if budget.code_fraction >= 1.0 {
        max
    } else {
        (budget.code_fraction * max as f64).floor() as usize
    };
    let pair_budget = max - src_chars.min(code_cap);

    let mut block = String::new();
    let mut block_chars = 0;
    let mut used = 0;
    for p in pairs {
        let r = render_pair(p, template);
        let n = r.chars().count();
        if block_chars + n > pair_budget {
            break;
        }
        block.push_str(&r);
        block_chars += n;
        used += 1;
    }
    let src = truncate_chars(source, max - block_chars);
    let mut text = String::with_capacity(src.len() + block.len());
    text.push_str(src);
    text.push_str(&block);
    (text, used)
}

/// One line of the emitted dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub program_id: String,
    pub problem_id: String,
    pub text: String,
    pub n_pairs_used: usize,
    pub template_kind: TemplateKind,
    pub split_tag: String,
}

pub fn build_record(
    program_id: &str,
    problem_id: &str,
    source: &str,
    pairs: &[TestCasePair],
    template: &PromptTemplate,
    budget: &Budget,
    split_tag: &str,
) -> AugmentedRecord {
    let (text, n_pairs_used) = assemble(source, pairs, template, budget);
    AugmentedRecord {
        program_id: program_id.to_string(),
        problem_id: problem_id.to_string(),
        text,
        n_pairs_used,
        template_kind: template.kind,
        split_tag: split_tag.to_string(),
    }
}

pub fn write_jsonl<'a>(mut w: impl Write, records: impl IntoIterator<Item = &'a AugmentedRecord>) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harvest::DecodeMode;

    fn pair(i: &str, o: &str) -> TestCasePair {
        TestCasePair::new(i.as_bytes().to_vec(), o.as_bytes().to_vec(), DecodeMode::Utf8)
    }

    fn t(kind: TemplateKind) -> PromptTemplate {
        PromptTemplate::new(kind)
    }

    #[test]
    fn golden_renderings() {
        let p = pair("3 4", "7");
        assert_eq!(render_pair(&p, &t(TemplateKind::PlCpp)), "[SEP]cin>>3 4;cout<<7");
        assert_eq!(render_pair(&pair("x", "y"), &t(TemplateKind::NlA)), "[SEP]input: x,output: y");
        assert_eq!(render_pair(&pair("x", "y"), &t(TemplateKind::NlB)), "[SEP]input is xandoutput is y");
        assert_eq!(render_pair(&pair("x", "y"), &t(TemplateKind::PlJava)), "[SEP]System.in x;System.outy");
        assert_eq!(render_pair(&pair("", ""), &t(TemplateKind::PlPython)), "[SEP]input()\nprint");
        assert_eq!(render_pair(&p, &t(TemplateKind::None)), "");
    }

    #[test]
    fn custom_separator() {
        let tpl = PromptTemplate {
            kind: TemplateKind::NlA,
            sep_token: "</s>".into(),
        };
        assert_eq!(render_pair(&pair("1", "2"), &tpl), "</s>input: 1,output: 2");
    }

    #[test]
    fn none_is_identity() {
        let src = "int main(){}";
        let (text, n) = assemble(src, &[pair("1", "1")], &t(TemplateKind::None), &Budget::default());
        assert_eq!((text.as_str(), n), (src, 0));
    }

    #[test]
    fn no_pairs_gives_source() {
        let (text, n) = assemble("abc", &[], &t(TemplateKind::NlA), &Budget::default());
        assert_eq!((text.as_str(), n), ("abc", 0));
    }

    #[test]
    fn generous_budget_keeps_all_in_order() {
        let pairs: Vec<_> = (0..5).map(|i| pair(&i.to_string(), &(i * 2).to_string())).collect();
        let (text, n) = assemble("SRC", &pairs, &t(TemplateKind::PlCpp), &Budget::default());
        assert_eq!(n, 5);
        let expected: String = std::iter::once("SRC".to_string())
            .chain(pairs.iter().map(|p| render_pair(p, &t(TemplateKind::PlCpp))))
            .collect();
        assert_eq!(text, expected);
    }

    #[test]
    fn tight_budget_drops_trailing_pairs() {
        let src = "0123456789";
        let pairs = vec![pair("a", "b"), pair("c", "d"), pair("e", "f")];
        let one = render_pair(&pairs[0], &t(TemplateKind::NlA)).chars().count();
        let budget = Budget {
            max_total_units: src.len() + 2 * one + 1,
            code_fraction: 1.0,
        };
        let (text, n) = assemble(src, &pairs, &t(TemplateKind::NlA), &budget);
        assert_eq!(n, 2);
        assert!(text.starts_with(src));
        assert_eq!(text.chars().count(), src.len() + 2 * one);
    }

    #[test]
    fn long_source_is_truncated() {
        let src = "x".repeat(100);
        let (text, n) = assemble(&src, &[pair("1", "2")], &t(TemplateKind::NlA), &Budget {
            max_total_units: 40,
            code_fraction: 1.0,
        });
        assert_eq!(n, 0);
        assert_eq!(text, "x".repeat(40));

        let (text, n) = assemble(&src, &[pair("1", "2")], &t(TemplateKind::NlA), &Budget {
            max_total_units: 60,
            code_fraction: 0.5,
        });
        // the 23-char pair fits in the 30 chars reserved for pairs
        assert_eq!(n, 1);
        assert_eq!(text, format!("{}[SEP]input: 1,output: 2", "x".repeat(37)));
    }

    #[test]
    fn template_parsing() {
        for k in TemplateKind::ALL {
            assert_eq!(k.as_str().parse::<TemplateKind>().unwrap(), k);
        }
        assert_eq!("pl_auto".parse::<TemplateChoice>().unwrap().resolve(Language::Java), TemplateKind::PlJava);
        assert!("nl_c".parse::<TemplateKind>().is_err());
    }

    #[test]
    fn record_json_field_order() {
        let r = build_record("1/a.cpp", "1", "s", &[], &t(TemplateKind::NlB), &Budget::default(), "train");
        let mut buf = Vec::new();
        write_jsonl(&mut buf, [&r]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"program_id\":\"1/a.cpp\",\"problem_id\":\"1\",\"text\":\"s\",\"n_pairs_used\":0,\"template_kind\":\"nl_b\",\"split_tag\":\"train\"}\n"
        );
    }
}
