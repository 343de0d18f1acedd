//! Hand-written lexer and recursive-descent parser for the pipeline DSL.
//!
//! ```text
//! pipeline := source ( '|' op )*
//! source   := 'scan' '(' ident ')'
//! op       := name '(' args ')'
//! args     := [ arg ( ',' arg )* ]
//! arg      := string | integer | ident | '{' field ( ',' field )* [','] '}'
//! field    := ident ':' type          type := text | number | boolean | list
//! ```
//!
//! Strings are double-quoted with `\"`, `\\`, `\n`, `\t`, `\r` escapes.
//! Whitespace is insignificant and `#` starts a comment to end of line.

use super::ast::{FieldType, LogicalOp, LogicalPlan, OutputField};
use crate::error::{Error, ParseError, Result, Span};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Int(u64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Pipe,
    Eof,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Ident(s) => s.clone(),
            Tok::Str(s) => super::ast::quote(s),
            Tok::Int(n) => n.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::LBrace => "{".into(),
            Tok::RBrace => "}".into(),
            Tok::Comma => ",".into(),
            Tok::Colon => ":".into(),
            Tok::Pipe => "|".into(),
            Tok::Eof => "<end of input>".into(),
        }
    }
}

fn err(span: Span, token: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError { span, token: token.into(), message: message.into() }
}

fn lex(src: &str) -> std::result::Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let span = Span { line, column: col };
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump!();
                }
            }
            '(' | ')' | '{' | '}' | ',' | ':' | '|' => {
                bump!();
                out.push((
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '{' => Tok::LBrace,
                        '}' => Tok::RBrace,
                        ',' => Tok::Comma,
                        ':' => Tok::Colon,
                        _ => Tok::Pipe,
                    },
                    span,
                ));
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None => return Err(err(span, "\"", "unterminated string literal")),
                        Some('"') => break,
                        Some('\\') => {
                            let esc_span = Span { line, column: col - 1 };
                            match bump!() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some('r') => s.push('\r'),
                                Some(other) => {
                                    return Err(err(esc_span, format!("\\{other}"), "unknown escape sequence"))
                                }
                                None => return Err(err(span, "\"", "unterminated string literal")),
                            }
                        }
                        Some(c) => s.push(c),
                    }
                }
                out.push((Tok::Str(s), span));
            }
            c if c.is_ascii_digit() => {
                let mut digits = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    digits.push(d);
                    bump!();
                }
                let n = digits.parse().map_err(|_| err(span, digits.clone(), "integer out of range"))?;
                out.push((Tok::Int(n), span));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&d) = chars.peek() {
                    if !(d.is_ascii_alphanumeric() || d == '_') {
                        break;
                    }
                    ident.push(d);
                    bump!();
                }
                out.push((Tok::Ident(ident), span));
            }
            other => return Err(err(span, other.to_string(), "unexpected character")),
        }
    }
    out.push((Tok::Eof, Span { line, column: col }));
    Ok(out)
}

#[derive(Debug)]
enum Arg {
    Str(String),
    Int(u64),
    Ident(String),
    Fields(Vec<OutputField>),
}

impl Arg {
    fn kind(&self) -> &'static str {
        match self {
            Arg::Str(_) => "string",
            Arg::Int(_) => "integer",
            Arg::Ident(_) => "identifier",
            Arg::Fields(_) => "field list",
        }
    }
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &(Tok, Span) {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> std::result::Result<Span, ParseError> {
        let (tok, span) = self.next();
        if tok == want {
            Ok(span)
        } else {
            Err(err(span, tok.text(), format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> std::result::Result<(String, Span), ParseError> {
        match self.next() {
            (Tok::Ident(s), span) => Ok((s, span)),
            (tok, span) => Err(err(span, tok.text(), format!("expected {what}"))),
        }
    }

    fn pipeline(&mut self) -> std::result::Result<Vec<LogicalOp>, ParseError> {
        let (name, span) = self.ident("`scan`")?;
        if name != "scan" {
            return Err(err(span, name, "pipeline must start with `scan(<context>)`"));
        }
        self.expect(Tok::LParen, "`(`")?;
        let (context, _) = self.ident("context name")?;
        self.expect(Tok::RParen, "`)`")?;
        let mut ops = vec![LogicalOp::Scan { context }];
        loop {
            match self.next() {
                (Tok::Eof, _) => return Ok(ops),
                (Tok::Pipe, _) => ops.push(self.op()?),
                (tok, span) => return Err(err(span, tok.text(), "expected `|` or end of input")),
            }
        }
    }

    fn args(&mut self) -> std::result::Result<Vec<(Arg, Span)>, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if self.peek().0 == Tok::RParen {
            self.next();
            return Ok(args);
        }
        loop {
            let (tok, span) = self.next();
            let arg = match tok {
                Tok::Str(s) => Arg::Str(s),
                Tok::Int(n) => Arg::Int(n),
                Tok::Ident(s) => Arg::Ident(s),
                Tok::LBrace => Arg::Fields(self.field_list()?),
                other => return Err(err(span, other.text(), "expected an argument")),
            };
            args.push((arg, span));
            match self.next() {
                (Tok::Comma, _) => continue,
                (Tok::RParen, _) => return Ok(args),
                (tok, span) => return Err(err(span, tok.text(), "expected `,` or `)`")),
            }
        }
    }

    fn field_list(&mut self) -> std::result::Result<Vec<OutputField>, ParseError> {
        let mut fields: Vec<OutputField> = Vec::new();
        loop {
            if self.peek().0 == Tok::RBrace {
                let (_, span) = self.next();
                if fields.is_empty() {
                    return Err(err(span, "}", "field list is empty"));
                }
                return Ok(fields);
            }
            let (name, name_span) = self.ident("field name")?;
            if fields.iter().any(|f| f.name == name) {
                return Err(err(name_span, name, "duplicate output field"));
            }
            self.expect(Tok::Colon, "`:`")?;
            let (ty, ty_span) = self.ident("field type")?;
            let ty = match ty.as_str() {
                "text" => FieldType::Text,
                "number" => FieldType::Number,
                "boolean" => FieldType::Boolean,
                "list" => FieldType::List,
                _ => return Err(err(ty_span, ty, "unknown field type (expected text, number, boolean or list)")),
            };
            fields.push(OutputField { name, ty });
            match self.next() {
                (Tok::Comma, _) => continue,
                (Tok::RBrace, _) => return Ok(fields),
                (tok, span) => return Err(err(span, tok.text(), "expected `,` or `}`")),
            }
        }
    }

    fn op(&mut self) -> std::result::Result<LogicalOp, ParseError> {
        let (name, span) = self.ident("operator name")?;
        let expected: &[&str] = match name.as_str() {
            "sem_filter" | "compute" | "search" => &["string"],
            "sem_map" => &["string", "field list"],
            "limit" => &["integer"],
            "project" => &[],
            "scan" => return Err(err(span, name, "`scan` may only appear as the pipeline source")),
            _ => return Err(err(span, name.clone(), format!("unknown operator `{name}`"))),
        };
        let args = self.args()?;
        if name == "project" {
            if args.is_empty() {
                return Err(err(span, name, "arity mismatch: project expects at least 1 field"));
            }
            let mut fields = Vec::with_capacity(args.len());
            for (arg, arg_span) in args {
                match arg {
                    Arg::Ident(f) | Arg::Str(f) if super::ast::is_ident(&f) => fields.push(f),
                    other => return Err(err(arg_span, format!("{other:?}"), "project expects field names")),
                }
            }
            return Ok(LogicalOp::Project { fields });
        }
        if args.len() != expected.len() {
            return Err(err(
                span,
                name.clone(),
                format!("arity mismatch: {name} expects {} argument(s), got {}", expected.len(), args.len()),
            ));
        }
        for ((arg, arg_span), want) in args.iter().zip(expected) {
            if arg.kind() != *want {
                return Err(err(
                    *arg_span,
                    format!("{arg:?}"),
                    format!("{name} expects a {want} here, got a {}", arg.kind()),
                ));
            }
        }
        let mut args = args.into_iter();
        let mut text = || match args.next() {
            Some((Arg::Str(s), span)) if s.trim().is_empty() => {
                Err(err(span, "\"\"", "text argument must not be empty"))
            }
            Some((Arg::Str(s), _)) => Ok(s),
            _ => unreachable!("checked above"),
        };
        Ok(match name.as_str() {
            "sem_filter" => LogicalOp::SemFilter { predicate: text()? },
            "compute" => LogicalOp::Compute { instruction: text()? },
            "search" => LogicalOp::Search { instruction: text()? },
            "sem_map" => {
                let instruction = text()?;
                match args.next() {
                    Some((Arg::Fields(outputs), _)) => LogicalOp::SemMap { instruction, outputs },
                    _ => unreachable!("checked above"),
                }
            }
            "limit" => match args.next() {
                Some((Arg::Int(0), s)) => return Err(err(s, "0", "limit must be at least 1")),
                Some((Arg::Int(n), _)) => LogicalOp::Limit { n },
                _ => unreachable!("checked above"),
            },
            _ => unreachable!("names filtered above"),
        })
    }
}

/// Parses pipeline text into a validated logical plan.
pub fn parse_pipeline(text: &str) -> Result<LogicalPlan> {
    let toks = lex(text)?;
    let mut parser = Parser { toks, pos: 0 };
    let ops = parser.pipeline()?;
    LogicalPlan::new(ops).map_err(|e| match e {
        Error::InvalidPlan(msg) => Error::Parse(err(Span { line: 1, column: 1 }, "", msg)),
        other => other,
    })
}

/// Canonical single-line text; `parse_pipeline(&print_pipeline(p))` equals `p`.
pub fn print_pipeline(plan: &LogicalPlan) -> String {
    plan.canonical()
}
