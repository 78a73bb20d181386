//! Source rewrites, one per classified diagnostic kind.
//!
//! Every fix is idempotent: applying it to its own output changes nothing.

use super::diagnostics::{Diagnostic, DiagnosticKind};
use super::lex::{self, Tok, TokKind};

/// First line of the prepended header block. Its presence means the block
/// has already been applied.
pub const UMBRELLA_MARKER: &str = "// fuzztune common headers v1";

/// Header block prepended for missing-header diagnostics. Changing this list
/// changes repair output, so bump the version in the marker when editing it.
pub const UMBRELLA_HEADERS: &[&str] = &[
    "cstdio", "cstdlib", "cstring", "cmath", "cctype", "climits", "cfloat", "ctime", "cassert", "iostream",
    "iomanip", "sstream", "string", "vector", "map", "set", "queue", "stack", "deque", "list", "algorithm",
    "numeric", "utility", "functional", "bitset", "unordered_map", "unordered_set",
];

pub fn umbrella_block() -> String {
    let mut s = String::with_capacity(512);
    s.push_str(UMBRELLA_MARKER);
    s.push('\n');
    for h in UMBRELLA_HEADERS {
        s.push_str("#include <");
        s.push_str(h);
        s.push_str(">\n");
    }
    s.push_str("using namespace std;\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixOptions {
    /// Value given to synthesized definitions of undeclared constants.
    pub undeclared_const_value: i64,
}

impl Default for FixOptions {
    fn default() -> Self {
        FixOptions {
            undeclared_const_value: 100_000,
        }
    }
}

/// Applies the fix for `diag`. Returns the source unchanged when the fix
/// site cannot be found or the fix is already present.
pub fn apply_fix(source: &str, diag: &Diagnostic, opts: &FixOptions) -> String {
    match diag.kind {
        DiagnosticKind::MissingHeader => add_headers(source),
        DiagnosticKind::MissingReturn => fix_main(source),
        DiagnosticKind::ReservedKeywordMisuse => match &diag.symbol {
            Some(sym) => rename_identifier(source, sym),
            None => source.to_string(),
        },
        DiagnosticKind::StructMissingSemicolon => insert_struct_semicolon(source, diag),
        DiagnosticKind::UndeclaredIdentifier => match &diag.symbol {
            Some(sym) => define_constant(source, sym, opts.undeclared_const_value),
            None => source.to_string(),
        },
        DiagnosticKind::Other => source.to_string(),
    }
}

pub fn add_headers(source: &str) -> String {
    if source.contains(UMBRELLA_MARKER) {
        return source.to_string();
    }
    let mut out = umbrella_block();
    out.push_str(source);
    out
}

struct Edit {
    at: usize,
    remove: usize,
    insert: String,
}

fn apply_edits(source: &str, mut edits: Vec<Edit>) -> String {
    edits.sort_by_key(|e| std::cmp::Reverse(e.at));
    let mut out = source.to_string();
    for e in edits {
        out.replace_range(e.at..e.at + e.remove, &e.insert);
    }
    out
}

fn find_main(source: &str, toks: &[Tok]) -> Option<usize> {
    let mut depth = 0i32;
    for (i, t) in toks.iter().enumerate() {
        match t.text(source) {
            "{" => depth += 1,
            "}" => depth -= 1,
            "main" if depth == 0 && toks.get(i + 1).is_some_and(|n| n.is(source, "(")) => {
                let close = lex::matching(source, toks, i + 1)?;
                if toks.get(close + 1).is_some_and(|n| n.is(source, "{")) {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Makes `main` return `int`, turns bare `return;` in its body into
/// `return 0;`, and appends `return 0;` when the body does not end in a
/// return statement.
pub fn fix_main(source: &str) -> String {
    let toks = lex::tokenize(source);
    let Some(m) = find_main(source, &toks) else {
        return source.to_string();
    };
    let mut edits = Vec::new();

    match m.checked_sub(1).map(|p| (p, toks[p].text(source))) {
        Some((p, "void")) => edits.push(Edit {
            at: toks[p].start,
            remove: toks[p].end - toks[p].start,
            insert: "int".into(),
        }),
        Some((_, "int" | "signed" | "unsigned" | "long" | "short" | "char" | "auto")) => {}
        Some((_, prev)) if toks[m - 1].kind == TokKind::Ident && !matches!(prev, "return") => {}
        _ => edits.push(Edit {
            at: toks[m].start,
            remove: 0,
            insert: "int ".into(),
        }),
    }

    let Some(close_paren) = lex::matching(source, &toks, m + 1) else {
        return source.to_string();
    };
    let open = close_paren + 1;
    let Some(close) = lex::matching(source, &toks, open) else {
        return source.to_string();
    };
    let body = &toks[open + 1..close];
    for (k, t) in body.iter().enumerate() {
        if t.is(source, "return") && body.get(k + 1).is_some_and(|n| n.is(source, ";")) {
            edits.push(Edit {
                at: t.end,
                remove: 0,
                insert: " 0".into(),
            });
        }
    }
    if !ends_with_return(source, body) {
        edits.push(Edit {
            at: toks[close].start,
            remove: 0,
            insert: "return 0;".into(),
        });
    }
    apply_edits(source, edits)
}

/// Whether the last statement at the top level of a body is `return ...;`.
fn ends_with_return(source: &str, body: &[Tok]) -> bool {
    let mut depth = 0i32;
    let mut last_stmt_start = None;
    let mut at_stmt_start = true;
    for (k, t) in body.iter().enumerate() {
        let s = t.text(source);
        if depth == 0 && at_stmt_start {
            last_stmt_start = Some(k);
            at_stmt_start = false;
        }
        match s {
            "{" | "(" | "[" => depth += 1,
            "}" | ")" | "]" => {
                depth -= 1;
                if depth == 0 && s == "}" {
                    at_stmt_start = true;
                }
            }
            ";" if depth == 0 => at_stmt_start = true,
            _ => {}
        }
    }
    match (last_stmt_start, body.last()) {
        (Some(k), Some(last)) => body[k].is(source, "return") && last.is(source, ";"),
        _ => false,
    }
}

/// Renames every identifier token `name` to `fixed_<name>`, leaving member
/// accesses and qualified names (`.name`, `->name`, `::name`) alone.
pub fn rename_identifier(source: &str, name: &str) -> String {
    let toks = lex::tokenize(source);
    let edits = toks
        .iter()
        .enumerate()
        .filter(|(i, t)| {
            t.kind == TokKind::Ident
                && t.is(source, name)
                && !i
                    .checked_sub(1)
                    .is_some_and(|p| matches!(toks[p].text(source), "." | "->" | "::"))
        })
        .map(|(_, t)| Edit {
            at: t.start,
            remove: 0,
            insert: "fixed_".into(),
        })
        .collect();
    apply_edits(source, edits)
}

fn prev_non_ws(source: &str, before: usize) -> Option<usize> {
    source[..before].char_indices().rev().find(|(_, c)| !c.is_whitespace()).map(|(i, _)| i)
}

fn next_non_ws(source: &str, from: usize) -> Option<usize> {
    source[from..].char_indices().find(|(_, c)| !c.is_whitespace()).map(|(i, _)| from + i)
}

/// Inserts the `;` a struct/class definition (or its last member) is missing.
pub fn insert_struct_semicolon(source: &str, diag: &Diagnostic) -> String {
    let Some(loc) = diag.location else {
        return source.to_string();
    };
    let Some(off) = lex::offset_of(source, loc.line, loc.column) else {
        return source.to_string();
    };
    let b = source.as_bytes();
    let member = diag.raw_message.contains("end of declaration list") || diag.raw_message.contains("member declaration");
    if member {
        // The member list ends at the next `}`; the `;` goes after its last token.
        let Some(brace) = source[off..].find('}').map(|n| off + n) else {
            return source.to_string();
        };
        let Some(last) = prev_non_ws(source, brace) else {
            return source.to_string();
        };
        if matches!(b[last], b';' | b'{' | b'}') {
            return source.to_string();
        }
        let mut out = source.to_string();
        out.insert(last + 1, ';');
        return out;
    }
    // Clang/gcc point just past the closing brace; tolerate pointing at it.
    let brace = if b.get(off) == Some(&b'}') {
        Some(off)
    } else {
        prev_non_ws(source, off.min(source.len())).filter(|&i| b[i] == b'}')
    };
    let Some(brace) = brace else {
        return source.to_string();
    };
    if next_non_ws(source, brace + 1).is_some_and(|i| b[i] == b';') {
        return source.to_string();
    }
    let mut out = source.to_string();
    out.insert(brace + 1, ';');
    out
}

/// Emits `const int <name> = <value>;` (or `const long long`) at file
/// scope, after the leading preprocessor/using lines.
pub fn define_constant(source: &str, name: &str, value: i64) -> String {
    let toks = lex::tokenize(source);
    let already = toks.windows(3).any(|w| {
        w[1].is(source, name) && w[2].is(source, "=") && matches!(w[0].text(source), "int" | "long")
    });
    if already || !toks.iter().any(|t| t.is(source, name)) {
        return source.to_string();
    }
    let wide = source.lines().any(|l| {
        lex::tokenize(l).iter().any(|t| t.is(l, name))
            && (l.contains("long long") || l.contains("int64") || l.contains("LL") || l.contains("%lld"))
    }) || value > i64::from(i32::MAX)
        || value < i64::from(i32::MIN);
    let ty = if wide { "long long" } else { "int" };

    let first_use = toks.iter().find(|t| t.is(source, name)).map_or(0, |t| t.start);
    let mut insert_at = 0;
    let mut offset = 0;
    for line in source.split_inclusive('\n') {
        if offset >= first_use {
            break;
        }
        let t = line.trim_start();
        let header_line = t.starts_with('#') && !t.contains(name)
            || t.starts_with("using namespace")
            || t.starts_with(UMBRELLA_MARKER);
        offset += line.len();
        if header_line {
            insert_at = offset;
        }
    }
    let mut out = String::with_capacity(source.len() + 40);
    out.push_str(&source[..insert_at]);
    if insert_at > 0 && !source[..insert_at].ends_with('\n') {
        out.push('\n');
    }
    out.push_str(&format!("const {ty} {name} = {value};\n"));
    out.push_str(&source[insert_at..]);
    out
}
