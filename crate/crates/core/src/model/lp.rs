//! Reader and writer for the binary subset of the CPLEX LP text format.
//!
//! Accepted sections are `Minimize`, `Subject To`, `Binary` and `End`. Lines
//! starting with `\` are comments. Every variable must be declared binary.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{IlpInstance, LinearConstraint, Relation, MAX_COEFFICIENT, MAX_RHS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("unexpected character `{0}`")]
    UnexpectedChar(char),
    #[error("expected {expected}, found {found}")]
    Unexpected { expected: &'static str, found: String },
    #[error("variable `{0}` is not declared in the Binary section")]
    NonBinaryVariable(String),
    #[error("variable `{0}` appears twice in one constraint")]
    DuplicateTerm(String),
    #[error("coefficient `{0}` is not an integer")]
    NonIntegerCoefficient(String),
    #[error("integer `{0}` is out of range")]
    IntegerOverflow(String),
    #[error("duplicate constraint name `{0}`")]
    DuplicateConstraint(String),
    #[error("missing Minimize section")]
    MissingObjective,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Colon,
    Plus,
    Minus,
    Rel(Relation),
    Minimize,
    SubjectTo,
    Binary,
    End,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Colon => "`:`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Rel(r) => format!("`{r}`"),
            Tok::Minimize => "`Minimize`".into(),
            Tok::SubjectTo => "`Subject To`".into(),
            Tok::Binary => "`Binary`".into(),
            Tok::End => "`End`".into(),
            Tok::Eof => "end of input".into(),
        }
    }

    fn is_section(&self) -> bool {
        matches!(
            self,
            Tok::Minimize | Tok::SubjectTo | Tok::Binary | Tok::End | Tok::Eof
        )
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

fn keyword(word: &str) -> Option<Tok> {
    match word.to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Tok::Minimize),
        "binary" | "binaries" | "bin" => Some(Tok::Binary),
        "end" => Some(Tok::End),
        "st" => Some(Tok::SubjectTo),
        _ => None,
    }
}

fn tokenize(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut k = 0;
        while k < chars.len() {
            let c = chars[k];
            let column = k + 1;
            let push = |out: &mut Vec<Spanned>, tok| {
                out.push(Spanned {
                    tok,
                    line: lineno + 1,
                    column,
                })
            };
            if c.is_whitespace() {
                k += 1;
            } else if c == '\\' {
                break;
            } else if is_ident_start(c) {
                let start = k;
                while k < chars.len() && is_ident_char(chars[k]) {
                    k += 1;
                }
                let word: String = chars[start..k].iter().collect();
                if word.eq_ignore_ascii_case("subject") {
                    // `Subject To` spans two words.
                    let mut p = k;
                    while p < chars.len() && chars[p].is_whitespace() {
                        p += 1;
                    }
                    let mut q = p;
                    while q < chars.len() && is_ident_char(chars[q]) {
                        q += 1;
                    }
                    let next: String = chars[p..q].iter().collect();
                    if next.eq_ignore_ascii_case("to") {
                        k = q;
                        push(&mut out, Tok::SubjectTo);
                        continue;
                    }
                }
                match keyword(&word) {
                    Some(tok) => push(&mut out, tok),
                    None => push(&mut out, Tok::Ident(word)),
                }
            } else if c.is_ascii_digit() || c == '.' {
                let start = k;
                while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                    k += 1;
                }
                if k < chars.len() && matches!(chars[k], 'e' | 'E') {
                    let mut p = k + 1;
                    if p < chars.len() && matches!(chars[p], '+' | '-') {
                        p += 1;
                    }
                    if p < chars.len() && chars[p].is_ascii_digit() {
                        while p < chars.len() && chars[p].is_ascii_digit() {
                            p += 1;
                        }
                        k = p;
                    }
                }
                push(&mut out, Tok::Number(chars[start..k].iter().collect()));
            } else {
                let two = chars.get(k + 1).copied();
                let (tok, width) = match (c, two) {
                    (':', _) => (Tok::Colon, 1),
                    ('+', _) => (Tok::Plus, 1),
                    ('-', _) => (Tok::Minus, 1),
                    ('<', Some('=')) | ('=', Some('<')) => (Tok::Rel(Relation::Le), 2),
                    ('>', Some('=')) | ('=', Some('>')) => (Tok::Rel(Relation::Ge), 2),
                    ('<', _) => (Tok::Rel(Relation::Le), 1),
                    ('>', _) => (Tok::Rel(Relation::Ge), 1),
                    ('=', _) => (Tok::Rel(Relation::Eq), 1),
                    _ => {
                        return Err(ParseError {
                            line: lineno + 1,
                            column,
                            kind: ParseErrorKind::UnexpectedChar(c),
                        })
                    }
                };
                push(&mut out, tok);
                k += width;
            }
        }
    }
    let line = text.lines().count().max(1);
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: 1,
    });
    Ok(out)
}

/// A term as written: optional coefficient, optional variable.
struct RawTerm {
    coef: String,
    negative: bool,
    var: Option<(String, usize, usize)>,
    line: usize,
    column: usize,
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, ahead: usize) -> &Tok {
        let k = (self.pos + ahead).min(self.toks.len() - 1);
        &self.toks[k].tok
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, kind: ParseErrorKind) -> ParseError {
        let t = &self.toks[self.pos];
        ParseError {
            line: t.line,
            column: t.column,
            kind,
        }
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        self.error_here(ParseErrorKind::Unexpected {
            expected,
            found: self.peek().describe(),
        })
    }

    fn optional_label(&mut self) -> Option<String> {
        if let (Tok::Ident(name), Tok::Colon) = (self.peek(), self.peek_at(1)) {
            let name = name.clone();
            self.pos += 2;
            Some(name)
        } else {
            None
        }
    }

    /// Reads `[±] [k] [var]` terms until something that cannot continue a sum.
    fn terms(&mut self, allow_constant: bool) -> Result<Vec<RawTerm>, ParseError> {
        let mut out = Vec::new();
        loop {
            let start = self.toks[self.pos].clone();
            let mut negative = false;
            let mut signed = false;
            while matches!(self.peek(), Tok::Plus | Tok::Minus) {
                if *self.peek() == Tok::Minus {
                    negative = !negative;
                }
                signed = true;
                self.bump();
            }
            if !signed && !out.is_empty() {
                return Ok(out);
            }
            let coef = match self.peek() {
                Tok::Number(s) => {
                    let s = s.clone();
                    self.bump();
                    Some(s)
                }
                _ => None,
            };
            let var = match (self.peek(), self.peek_at(1)) {
                // `name:` begins the next row.
                (Tok::Ident(_), Tok::Colon) => None,
                (Tok::Ident(name), _) => {
                    let t = &self.toks[self.pos];
                    let v = (name.clone(), t.line, t.column);
                    self.bump();
                    Some(v)
                }
                _ => None,
            };
            match (&coef, &var) {
                (None, None) => {
                    if signed {
                        return Err(self.unexpected("a coefficient or variable"));
                    }
                    return Ok(out);
                }
                (Some(_), None) if !allow_constant => {
                    return Err(self.unexpected("a variable"));
                }
                _ => {}
            }
            out.push(RawTerm {
                coef: coef.unwrap_or_else(|| "1".into()),
                negative,
                var,
                line: start.line,
                column: start.column,
            });
        }
    }
}

fn parse_integer(text: &str, bound: i64, line: usize, column: usize) -> Result<i64, ParseError> {
    let err = |kind| ParseError { line, column, kind };
    if text.contains(['.', 'e', 'E']) {
        return Err(err(ParseErrorKind::NonIntegerCoefficient(text.into())));
    }
    let value: i64 = text
        .parse()
        .map_err(|_| err(ParseErrorKind::IntegerOverflow(text.into())))?;
    if value > bound {
        return Err(err(ParseErrorKind::IntegerOverflow(text.into())));
    }
    Ok(value)
}

struct RawConstraint {
    name: String,
    terms: Vec<RawTerm>,
    relation: Relation,
    rhs: i64,
}

/// Parses LP text into an instance. Variables are numbered in the order they
/// are first listed in the `Binary` section.
pub fn parse_lp(text: &str) -> Result<IlpInstance, ParseError> {
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };

    if *p.peek() != Tok::Minimize {
        if *p.peek() == Tok::Eof {
            return Err(p.error_here(ParseErrorKind::MissingObjective));
        }
        return Err(p.unexpected("`Minimize`"));
    }
    p.bump();
    p.optional_label();
    let objective_terms = p.terms(true)?;
    if !p.peek().is_section() {
        return Err(p.unexpected("a section keyword"));
    }

    let mut raw_constraints = Vec::new();
    if *p.peek() == Tok::SubjectTo {
        p.bump();
        while !p.peek().is_section() {
            let label = p.optional_label();
            let terms = p.terms(false)?;
            if terms.is_empty() {
                return Err(p.unexpected("a constraint term"));
            }
            let relation = match p.peek() {
                Tok::Rel(r) => *r,
                _ => return Err(p.unexpected("`<=`, `>=` or `=`")),
            };
            p.bump();
            let mut negative = false;
            while matches!(p.peek(), Tok::Plus | Tok::Minus) {
                if *p.peek() == Tok::Minus {
                    negative = !negative;
                }
                p.bump();
            }
            let rhs = match p.peek() {
                Tok::Number(s) => {
                    let t = &p.toks[p.pos];
                    let v = parse_integer(s, MAX_RHS, t.line, t.column)?;
                    p.bump();
                    if negative {
                        -v
                    } else {
                        v
                    }
                }
                _ => return Err(p.unexpected("a right-hand side")),
            };
            let name = label.unwrap_or_else(|| format!("c{}", raw_constraints.len() + 1));
            raw_constraints.push(RawConstraint {
                name,
                terms,
                relation,
                rhs,
            });
        }
    }

    let mut var_names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    if *p.peek() == Tok::Binary {
        p.bump();
        while let Tok::Ident(name) = p.peek() {
            if !index.contains_key(name) {
                index.insert(name.clone(), var_names.len());
                var_names.push(name.clone());
            }
            p.bump();
        }
    }
    match p.peek() {
        Tok::End => {
            p.bump();
            if *p.peek() != Tok::Eof {
                return Err(p.unexpected("end of input after `End`"));
            }
        }
        Tok::Eof => {}
        _ => return Err(p.unexpected("`End`")),
    }

    let lookup = |name: &str, line: usize, column: usize| {
        index.get(name).copied().ok_or_else(|| ParseError {
            line,
            column,
            kind: ParseErrorKind::NonBinaryVariable(name.into()),
        })
    };

    let mut objective = vec![0.0; var_names.len()];
    let mut objective_offset = 0.0;
    for t in &objective_terms {
        let value: f64 = t.coef.parse().map_err(|_| ParseError {
            line: t.line,
            column: t.column,
            kind: ParseErrorKind::Unexpected {
                expected: "a number",
                found: format!("`{}`", t.coef),
            },
        })?;
        let value = if t.negative { -value } else { value };
        match &t.var {
            Some((name, line, column)) => objective[lookup(name, *line, *column)?] += value,
            None => objective_offset += value,
        }
    }

    let mut names_seen = HashMap::new();
    let mut constraints = Vec::with_capacity(raw_constraints.len());
    for rc in raw_constraints {
        if names_seen.insert(rc.name.clone(), ()).is_some() {
            let first = &rc.terms[0];
            return Err(ParseError {
                line: first.line,
                column: first.column,
                kind: ParseErrorKind::DuplicateConstraint(rc.name),
            });
        }
        let mut terms: Vec<(usize, i64)> = Vec::with_capacity(rc.terms.len());
        for t in &rc.terms {
            let (name, line, column) = t.var.as_ref().expect("constraint terms carry variables");
            let var = lookup(name, *line, *column)?;
            if terms.iter().any(|&(v, _)| v == var) {
                return Err(ParseError {
                    line: *line,
                    column: *column,
                    kind: ParseErrorKind::DuplicateTerm(name.clone()),
                });
            }
            let a = parse_integer(&t.coef, MAX_COEFFICIENT, t.line, t.column)?;
            let a = if t.negative { -a } else { a };
            if a != 0 {
                terms.push((var, a));
            }
        }
        constraints.push(LinearConstraint {
            name: rc.name,
            terms,
            relation: rc.relation,
            rhs: rc.rhs,
        });
    }

    Ok(IlpInstance {
        var_names,
        objective,
        objective_offset,
        constraints,
    })
}

fn push_term(out: &mut String, first: bool, coef: impl std::fmt::Display, negative: bool, var: &str) {
    if negative {
        out.push_str(if first { "- " } else { " - " });
    } else if !first {
        out.push_str(" + ");
    }
    let _ = write!(out, "{coef} {var}");
}

/// Serializes an instance back to LP text; `parse_lp` inverts this exactly.
pub fn write_lp(instance: &IlpInstance) -> String {
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    let mut first = true;
    for (name, &c) in instance.var_names.iter().zip(&instance.objective) {
        if c == 0.0 {
            continue;
        }
        if first {
            out.push(' ');
        }
        push_term(&mut out, first, c.abs(), c < 0.0, name);
        first = false;
    }
    let offset = instance.objective_offset;
    if offset != 0.0 {
        let sign = match (first, offset < 0.0) {
            (true, true) => " - ",
            (true, false) => " ",
            (false, true) => " - ",
            (false, false) => " + ",
        };
        let _ = write!(out, "{sign}{}", offset.abs());
    }
    out.push('\n');

    out.push_str("Subject To\n");
    for c in &instance.constraints {
        let _ = write!(out, " {}: ", c.name);
        for (k, &(v, a)) in c.terms.iter().enumerate() {
            push_term(&mut out, k == 0, a.abs(), a < 0, &instance.var_names[v]);
        }
        if c.terms.is_empty() {
            // Rows without support cannot be written as a sum.
            let _ = write!(out, "0 {}", instance.var_names.first().map_or("x", |s| s));
        }
        let _ = writeln!(out, " {} {}", c.relation, c.rhs);
    }

    out.push_str("Binary\n");
    for chunk in instance.var_names.chunks(16) {
        let _ = writeln!(out, " {}", chunk.join(" "));
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_covering_problem() {
        let inst =
            parse_lp("Minimize\n obj: x + 2 y\nSubject To\n c1: x + y >= 1\nBinary\n x y\nEnd")
                .unwrap();
        assert_eq!(inst.num_vars(), 2);
        assert_eq!(inst.objective, vec![1.0, 2.0]);
        assert_eq!(inst.constraints.len(), 1);
        let c = &inst.constraints[0];
        assert_eq!(c.name, "c1");
        assert_eq!(c.terms, vec![(0, 1), (1, 1)]);
        assert_eq!(c.relation, Relation::Ge);
        assert_eq!(c.rhs, 1);
    }

    #[test]
    fn simplex_row() {
        let inst = parse_lp(
            "Minimize\n obj: x1 + x3 + x7\nSubject To\n s: x1 + x3 + x7 = 1\nBinary\n x1 x3 x7\nEnd",
        )
        .unwrap();
        assert_eq!(inst.var_names, vec!["x1", "x3", "x7"]);
        assert_eq!(inst.constraints[0].relation, Relation::Eq);
        assert_eq!(inst.constraints[0].terms.len(), 3);
    }

    #[test]
    fn no_constraints() {
        let inst = parse_lp("Minimize\n obj: - x\nBinary\n x\nEnd").unwrap();
        assert!(inst.constraints.is_empty());
        assert_eq!(inst.objective, vec![-1.0]);
    }

    #[test]
    fn binary_order_and_defaults() {
        let inst = parse_lp(
            "\\ comment line\nMinimize\n obj: 3 b - 0.5 a + 4\nSubject To\n r: -2 a + b <= -1\nBinary\n b a c\nEnd\n",
        )
        .unwrap();
        assert_eq!(inst.var_names, vec!["b", "a", "c"]);
        assert_eq!(inst.objective, vec![3.0, -0.5, 0.0]);
        assert_eq!(inst.objective_offset, 4.0);
        assert_eq!(inst.constraints[0].terms, vec![(1, -2), (0, 1)]);
        assert_eq!(inst.constraints[0].rhs, -1);
    }

    #[test]
    fn undeclared_variable() {
        let err = parse_lp("Minimize\n obj: x + y\nBinary\n x\nEnd").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NonBinaryVariable("y".into()));
        assert_eq!((err.line, err.column), (2, 11));
    }

    #[test]
    fn duplicate_term() {
        let err =
            parse_lp("Minimize\n obj: x\nSubject To\n c: x + 2 x <= 1\nBinary\n x\nEnd").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::DuplicateTerm("x".into()));
        assert_eq!(err.line, 4);
    }

    #[test]
    fn coefficient_overflow() {
        let err = parse_lp(
            "Minimize\n obj: x\nSubject To\n c: 99999999999999999999 x <= 1\nBinary\n x\nEnd",
        )
        .unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::IntegerOverflow(_)));
        let err = parse_lp("Minimize\n obj: x\nSubject To\n c: 2000000 x <= 1\nBinary\n x\nEnd")
            .unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::IntegerOverflow(_)));
        let err = parse_lp("Minimize\n obj: x\nSubject To\n c: 1.5 x <= 1\nBinary\n x\nEnd")
            .unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::NonIntegerCoefficient(_)));
    }

    #[test]
    fn syntax_error_location() {
        let err = parse_lp("Minimize\n obj: x\nSubject To\n c: x <= \nBinary\n x\nEnd").unwrap_err();
        assert_eq!(err.line, 5);
        assert!(matches!(err.kind, ParseErrorKind::Unexpected { .. }));
        let err = parse_lp("Minimize\n obj: x * y\nBinary\n x y\nEnd").unwrap_err();
        assert_eq!((err.line, err.column), (2, 9));
        assert_eq!(err.kind, ParseErrorKind::UnexpectedChar('*'));
    }

    #[test]
    fn write_then_parse() {
        let text =
            "Minimize\n obj: - 1.25 x + 2 y - 3\nSubject To\n c1: x - 3 y >= -2\n c2: x + y = 1\nBinary\n x y z\nEnd\n";
        let inst = parse_lp(text).unwrap();
        let written = write_lp(&inst);
        assert_eq!(parse_lp(&written).unwrap(), inst);
    }
}
