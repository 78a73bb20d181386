//! Classification of clang/gcc error messages into repairable kinds.
//!
//! Matching is done with regular expressions over the compiler's text
//! output; nothing else in the repair stage looks at raw messages except the
//! struct-semicolon fix, which needs to know which of the two messages fired.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::fixes::UMBRELLA_MARKER;
use super::lex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    MissingHeader,
    MissingReturn,
    ReservedKeywordMisuse,
    StructMissingSemicolon,
    UndeclaredIdentifier,
    Other,
}

impl DiagnosticKind {
    pub fn is_classified(self) -> bool {
        self != DiagnosticKind::Other
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticKind::MissingHeader => "missing_header",
            DiagnosticKind::MissingReturn => "missing_return",
            DiagnosticKind::ReservedKeywordMisuse => "reserved_keyword_misuse",
            DiagnosticKind::StructMissingSemicolon => "struct_missing_semicolon",
            DiagnosticKind::UndeclaredIdentifier => "undeclared_identifier",
            DiagnosticKind::Other => "other",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Location {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Absent only for `Other` messages that had no parsable position
    /// (linker errors, crashes of the driver).
    pub location: Option<Location>,
    pub symbol: Option<String>,
    pub raw_message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, line: u32, column: u32, symbol: Option<&str>, raw: &str) -> Self {
        Diagnostic {
            kind,
            location: Some(Location { line, column }),
            symbol: symbol.map(str::to_owned),
            raw_message: raw.to_owned(),
        }
    }
}

/// Names that live in the standard headers we prepend. An undeclared use of
/// one of these means a missing include, not a missing constant.
const STD_NAMES: &[&str] = &[
    "printf", "scanf", "puts", "gets", "getchar", "putchar", "fgets", "fputs", "sprintf", "sscanf", "fprintf",
    "fscanf", "fopen", "fclose", "freopen", "stdin", "stdout", "stderr", "EOF", "NULL", "FILE", "size_t", "malloc",
    "calloc", "realloc", "free", "exit", "abs", "labs", "atoi", "atol", "atof", "qsort", "bsearch", "rand",
    "srand", "system", "strlen", "strcpy", "strncpy", "strcmp", "strncmp", "strcat", "strncat", "strchr",
    "strrchr", "strstr", "strtok", "memset", "memcpy", "memmove", "memcmp", "sqrt", "pow", "fabs", "floor",
    "ceil", "log", "log10", "log2", "exp", "sin", "cos", "tan", "atan", "atan2", "asin", "acos", "round", "fmod",
    "hypot", "isalpha", "isdigit", "isalnum", "isspace", "isupper", "islower", "toupper", "tolower", "ispunct",
    "INT_MAX", "INT_MIN", "LLONG_MAX", "LLONG_MIN", "UINT_MAX", "LONG_MAX", "LONG_MIN", "CHAR_MAX", "DBL_MAX",
    "FLT_MAX", "DBL_MIN", "time", "clock", "CLOCKS_PER_SEC", "assert", "cin", "cout", "cerr", "endl", "std",
    "string", "vector", "map", "set", "multiset", "multimap", "pair", "make_pair", "queue", "priority_queue",
    "stack", "deque", "list", "sort", "stable_sort", "reverse", "swap", "max", "min", "max_element",
    "min_element", "unique", "lower_bound", "upper_bound", "binary_search", "fill", "find", "count",
    "accumulate", "next_permutation", "prev_permutation", "setw", "setprecision", "fixed", "getline",
    "stringstream", "istringstream", "ostringstream", "bitset", "unordered_map", "unordered_set", "greater",
    "less", "ios", "iterator", "to_string", "stoi", "stol", "stoll", "gcd", "__gcd", "numeric_limits", "isnan",
    "isinf", "ios_base", "tie",
];

/// Words that are plain identifiers in C but reserved in C++.
const CPP_ONLY_KEYWORDS: &[&str] = &[
    "new", "delete", "class", "this", "template", "typename", "namespace", "operator", "private", "protected",
    "public", "friend", "virtual", "explicit", "export", "throw", "try", "catch", "mutable", "using", "typeid",
    "nullptr", "decltype", "constexpr", "and", "or", "not", "xor", "bitand", "bitor", "compl", "and_eq",
    "or_eq", "xor_eq", "not_eq", "noexcept", "static_assert", "thread_local", "alignas", "alignof", "char16_t",
    "char32_t", "concept", "requires", "final", "override",
];

pub fn is_std_name(name: &str) -> bool {
    STD_NAMES.contains(&name)
}

fn line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?P<file>[^\n]*?):(?P<line>\d+):(?P<col>\d+): (?:fatal )?error: (?P<msg>.*)$").expect("valid regex")
    })
}

struct Patterns {
    undeclared: Regex,
    unknown_type: Regex,
    main_return: Regex,
    main_no_type: Regex,
    type_specifier: Regex,
    return_no_value: Regex,
    ambiguous: Regex,
    redefinition_kind: Regex,
    expected_unqualified: Regex,
    struct_after: Regex,
    struct_member: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("valid regex");
        Patterns {
            undeclared: re(r"^(?:use of undeclared identifier '(?P<a>[A-Za-z_]\w*)'|'(?P<b>[A-Za-z_]\w*)' was not declared in this scope)"),
            unknown_type: re(r"^(?:unknown type name '(?P<a>\w+)'|no template named '(?P<b>\w+)'|'(?P<c>\w+)' does not name a type|'(?P<d>\w+)' is not a template|no member named '(?P<e>\w+)' in namespace 'std')"),
            main_return: re(r"^'(?:::)?main' must return 'int'"),
            main_no_type: re(r"ISO C\+\+ forbids declaration of 'main' with no type"),
            type_specifier: re(r"^C\+\+ requires a type specifier for all declarations"),
            return_no_value: re(r"^(?:non-void function 'main' should return a value|return-statement with no value, in function returning 'int')"),
            ambiguous: re(r"^reference to '(?P<a>\w+)' is ambiguous"),
            redefinition_kind: re(r"^(?:redefinition of '(?P<a>\w+)' as different kind of symbol|'(?:[^']*[\s*&])?(?P<b>\w+)' redeclared as different kind of (?:entity|symbol))"),
            expected_unqualified: re(r"^expected (?:unqualified-id|identifier|member name or ';'|';' after top level declarator)"),
            struct_after: re(r"^expected ';' after (?:struct|class|union)(?: definition)?"),
            struct_member: re(r"^expected ';' at end of (?:declaration list|member declaration)"),
        }
    })
}

fn first_group<'t>(caps: &regex::Captures<'t>) -> Option<&'t str> {
    caps.iter().skip(1).flatten().next().map(|m| m.as_str())
}

fn token_at<'a>(source: &'a str, line: u32, col: u32) -> Option<&'a str> {
    let off = lex::offset_of(source, line, col)?;
    lex::tokenize(source)
        .into_iter()
        .find(|t| t.start <= off && off < t.end.max(t.start + 1))
        .map(|t| t.text(source))
}

/// Whether the use at (line, col) is immediately followed by a call paren.
fn used_as_call(source: &str, line: u32, col: u32, symbol: &str) -> bool {
    let Some(off) = lex::offset_of(source, line, col) else {
        return false;
    };
    let rest = &source[off..];
    rest.strip_prefix(symbol)
        .is_some_and(|after| after.trim_start().starts_with('('))
}

fn line_mentions_main(source: &str, line: u32) -> bool {
    source
        .lines()
        .nth(line.saturating_sub(1) as usize)
        .is_some_and(|l| lex::tokenize(l).iter().any(|t| t.is(l, "main")))
}

/// Maps one error message to a diagnostic kind.
pub fn classify(source: &str, line: u32, col: u32, msg: &str) -> Diagnostic {
    let p = patterns();
    let has_umbrella = source.contains(UMBRELLA_MARKER);
    let diag = |kind, symbol: Option<&str>| Diagnostic::new(kind, line, col, symbol, msg);

    if let Some(c) = p.undeclared.captures(msg) {
        let sym = first_group(&c).unwrap_or_default();
        if is_std_name(sym) && !has_umbrella {
            return diag(DiagnosticKind::MissingHeader, Some(sym));
        }
        if !is_std_name(sym) && !used_as_call(source, line, col, sym) {
            return diag(DiagnosticKind::UndeclaredIdentifier, Some(sym));
        }
        return diag(DiagnosticKind::Other, Some(sym));
    }
    if let Some(c) = p.unknown_type.captures(msg) {
        let sym = first_group(&c).unwrap_or_default();
        if is_std_name(sym) && !has_umbrella {
            return diag(DiagnosticKind::MissingHeader, Some(sym));
        }
        return diag(DiagnosticKind::Other, Some(sym));
    }
    if p.main_return.is_match(msg) || p.main_no_type.is_match(msg) || p.return_no_value.is_match(msg) {
        return diag(DiagnosticKind::MissingReturn, Some("main"));
    }
    if p.type_specifier.is_match(msg) && line_mentions_main(source, line) {
        return diag(DiagnosticKind::MissingReturn, Some("main"));
    }
    if let Some(c) = p.ambiguous.captures(msg).or_else(|| p.redefinition_kind.captures(msg)) {
        return diag(DiagnosticKind::ReservedKeywordMisuse, first_group(&c));
    }
    if p.expected_unqualified.is_match(msg) {
        if let Some(tok) = token_at(source, line, col).filter(|t| CPP_ONLY_KEYWORDS.contains(t)) {
            return diag(DiagnosticKind::ReservedKeywordMisuse, Some(tok));
        }
    }
    if p.struct_after.is_match(msg) || p.struct_member.is_match(msg) {
        return diag(DiagnosticKind::StructMissingSemicolon, None);
    }
    diag(DiagnosticKind::Other, None)
}

/// Parses compiler stderr into diagnostics for `file_name`. Errors reported
/// inside system headers are kept only when no error points at the program.
pub fn parse_compiler_output(source: &str, file_name: &str, stderr: &str) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut foreign = Vec::new();
    for line in stderr.lines() {
        let Some(c) = line_regex().captures(line) else {
            continue;
        };
        let (Ok(l), Ok(col)) = (c["line"].parse::<u32>(), c["col"].parse::<u32>()) else {
            continue;
        };
        let msg = &c["msg"];
        if c["file"].ends_with(file_name) {
            out.push(classify(source, l, col, msg));
        } else {
            foreign.push(Diagnostic {
                kind: DiagnosticKind::Other,
                location: None,
                symbol: None,
                raw_message: line.to_string(),
            });
        }
    }
    if out.is_empty() {
        out = foreign;
    }
    out
}
