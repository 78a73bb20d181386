//! Just enough of a C++ lexer to find identifiers and punctuation outside of
//! comments, string/char literals and `#include` lines.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    Punct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tok {
    pub kind: TokKind,
    pub start: usize,
    pub end: usize,
}

impl Tok {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is(&self, src: &str, s: &str) -> bool {
        self.text(src) == s
    }
}

fn is_ident_start(b: u8) -> bool {
    b == b'_' || b.is_ascii_alphabetic() || b >= 0x80
}

fn is_ident_continue(b: u8) -> bool {
    is_ident_start(b) || b.is_ascii_digit()
}

const PUNCT2: [&str; 12] = ["->", "::", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "++", "--"];

pub fn tokenize(src: &str) -> Vec<Tok> {
    let b = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line_start = true;
    while i < b.len() {
        let c = b[i];
        if c == b'\n' {
            line_start = true;
            i += 1;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if line_start && c == b'#' {
            // `#include <...>` / `#include "..."` lines carry no identifiers we care about.
            let eol = src[i..].find('\n').map_or(b.len(), |n| i + n);
            let directive = src[i + 1..eol].trim_start();
            if directive.starts_with("include") || directive.starts_with("import") || directive.starts_with("pragma") {
                i = eol;
                continue;
            }
        }
        line_start = false;
        if c == b'/' && b.get(i + 1) == Some(&b'/') {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && b.get(i + 1) == Some(&b'*') {
            i += 2;
            while i + 1 < b.len() && !(b[i] == b'*' && b[i + 1] == b'/') {
                i += 1;
            }
            i = (i + 2).min(b.len());
            continue;
        }
        if c == b'"' || c == b'\'' {
            i += 1;
            while i < b.len() && b[i] != c && b[i] != b'\n' {
                if b[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            i = (i + 1).min(b.len());
            continue;
        }
        let start = i;
        if is_ident_start(c) {
            while i < b.len() && is_ident_continue(b[i]) {
                i += 1;
            }
            // string literal prefixes such as L"..." / u8"..."
            if i < b.len() && (b[i] == b'"' || b[i] == b'\'') && matches!(&src[start..i], "L" | "u" | "U" | "u8") {
                continue;
            }
            toks.push(Tok {
                kind: TokKind::Ident,
                start,
                end: i,
            });
            continue;
        }
        if c.is_ascii_digit() || (c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'.' || b[i] == b'_') {
                i += 1;
            }
            toks.push(Tok {
                kind: TokKind::Number,
                start,
                end: i,
            });
            continue;
        }
        let len = if i + 1 < b.len() && src.is_char_boundary(i + 2) && PUNCT2.contains(&&src[i..i + 2]) {
            2
        } else {
            src[i..].chars().next().map_or(1, char::len_utf8)
        };
        i += len;
        toks.push(Tok {
            kind: TokKind::Punct,
            start,
            end: i,
        });
    }
    toks
}

/// Byte offset of a 1-based (line, column) position; column counts bytes.
pub fn offset_of(src: &str, line: u32, col: u32) -> Option<usize> {
    if line == 0 || col == 0 {
        return None;
    }
    let mut offset = 0;
    for (n, l) in src.split_inclusive('\n').enumerate() {
        if n + 1 == line as usize {
            let c = (col - 1) as usize;
            return (c <= l.len()).then_some(offset + c);
        }
        offset += l.len();
    }
    None
}

/// Index of the token matching the opening bracket at `open`.
pub fn matching(src: &str, toks: &[Tok], open: usize) -> Option<usize> {
    let (o, c) = match toks[open].text(src) {
        "{" => ("{", "}"),
        "(" => ("(", ")"),
        "[" => ("[", "]"),
        _ => return None,
    };
    let mut depth = 0usize;
    for (k, t) in toks.iter().enumerate().skip(open) {
        if t.kind != TokKind::Punct {
            continue;
        }
        let s = t.text(src);
        if s == o {
            depth += 1;
        } else if s == c {
            depth -= 1;
            if depth == 0 {
                return Some(k);
            }
        }
    }
    None
}
