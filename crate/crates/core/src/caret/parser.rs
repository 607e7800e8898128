//! Recursive-descent parser for the ASCII formula syntax.
//!
//! Precedence from tightest to loosest: unary operators, until, `&`, `|`,
//! `->`. Untils and implication associate to the right.

use super::{Formula, Path};
use crate::alphabet::Class;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Not,
    And,
    Or,
    Arrow,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i] as char;
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '!' => Tok::Not,
            '&' => Tok::And,
            '|' => Tok::Or,
            '-' if b.get(i + 1) == Some(&b'>') => {
                i += 1;
                Tok::Arrow
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'\'') {
                    i += 1;
                }
                out.push((col, Tok::Ident(text[start..i].to_string())));
                continue;
            }
            other => return Err(Error::Syntax { col, msg: format!("unexpected character `{other}`") }),
        };
        out.push((col, tok));
        i += 1;
    }
    Ok(out)
}

fn modality(word: &str) -> Option<(char, Path)> {
    let mut cs = word.chars();
    let (op, p) = (cs.next()?, cs.next()?);
    if cs.next().is_some() || !matches!(op, 'X' | 'F' | 'G' | 'U') {
        return None;
    }
    let path = match p {
        'g' => Path::Global,
        'a' => Path::Abstract,
        'c' => Path::Caller,
        _ => return None,
    };
    Some((op, path))
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Syntax { col: self.col(), msg: msg.into() })
    }

    fn implies(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let rhs = self.implies()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula> {
        let lhs = self.unary()?;
        if let Some(Tok::Ident(w)) = self.peek() {
            if let Some(('U', path)) = modality(w) {
                self.pos += 1;
                let rhs = self.until()?;
                return Ok(Formula::until(path, lhs, rhs));
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of formula");
        };
        match tok {
            Tok::Not => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Tok::LParen => {
                self.pos += 1;
                let f = self.implies()?;
                if self.peek() != Some(&Tok::RParen) {
                    return self.err("expected `)`");
                }
                self.pos += 1;
                Ok(f)
            }
            Tok::Ident(w) => {
                if let Some((op, path)) = modality(&w) {
                    if op == 'U' {
                        return self.err(format!("`{w}` needs a left operand"));
                    }
                    self.pos += 1;
                    let a = self.unary()?;
                    return Ok(match op {
                        'X' => Formula::next(path, a),
                        'F' => Formula::eventually(path, a),
                        _ => Formula::always(path, a),
                    });
                }
                self.pos += 1;
                Ok(match w.as_str() {
                    "true" => Formula::True,
                    "false" => Formula::False,
                    _ => match Class::from_keyword(&w) {
                        Some(c) => Formula::Class(c),
                        None => Formula::Atom(w),
                    },
                })
            }
            _ => self.err("expected a formula"),
        }
    }
}

/// Parses a formula; errors carry the 1-based column.
pub fn parse_caret(text: &str) -> Result<Formula> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() + 1 };
    let f = p.implies()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(f)
}
