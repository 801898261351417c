//! Parser for a strict subset of the HOA format.
//!
//! Accepted: `HOA: v1`, `name:`, `tool:`, `properties:`, one `Start:`,
//! `States:`, `AP:`, `acc-name: Buchi`, `Acceptance: 1 Inf(0)`; a body of
//! `State: n` blocks whose edges all carry an explicit `[label]` and an
//! optional `{0}` mark. Label expressions are expanded to explicit letters.
//! Anything else fails with [`AutomatonError::UnsupportedFeature`].

use super::{AutomatonError, BuchiAutomaton};
use crate::alphabet::{alphabet_size, Letter, MAX_APS};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Header(String),
    Body,
    End,
    Int(usize),
    Str(String),
    Ident(String),
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Not,
    And,
    Or,
    Alias(String),
}

fn err(line: usize, reason: impl Into<String>) -> AutomatonError {
    AutomatonError::Parse { line, reason: reason.into() }
}

fn unsupported(what: impl Into<String>) -> AutomatonError {
    AutomatonError::UnsupportedFeature(what.into())
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, AutomatonError> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '\n' => {
                line += 1;
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            '/' if chars.get(i + 1) == Some(&'*') => {
                let start = line;
                i += 2;
                loop {
                    match chars.get(i) {
                        None => return Err(err(start, "unterminated comment")),
                        Some('*') if chars.get(i + 1) == Some(&'/') => {
                            i += 2;
                            break;
                        }
                        Some('\n') => line += 1,
                        _ => {}
                    }
                    i += 1;
                }
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(err(line, "unterminated string")),
                        Some('"') => break,
                        Some('\\') => {
                            if let Some(&n) = chars.get(i + 1) {
                                s.push(n);
                            }
                            i += 1;
                        }
                        Some(&ch) => {
                            if ch == '\n' {
                                line += 1;
                            }
                            s.push(ch);
                        }
                    }
                    i += 1;
                }
                i += 1;
                toks.push((Tok::Str(s), line));
            }
            '[' => {
                toks.push((Tok::LBracket, line));
                i += 1;
            }
            ']' => {
                toks.push((Tok::RBracket, line));
                i += 1;
            }
            '{' => {
                toks.push((Tok::LBrace, line));
                i += 1;
            }
            '}' => {
                toks.push((Tok::RBrace, line));
                i += 1;
            }
            '(' => {
                toks.push((Tok::LParen, line));
                i += 1;
            }
            ')' => {
                toks.push((Tok::RParen, line));
                i += 1;
            }
            '!' => {
                toks.push((Tok::Not, line));
                i += 1;
            }
            '&' => {
                toks.push((Tok::And, line));
                i += 1;
            }
            '|' => {
                toks.push((Tok::Or, line));
                i += 1;
            }
            '-' if chars[i..].starts_with(&['-', '-']) => {
                let word: String = chars[i..].iter().take_while(|c| !c.is_whitespace()).collect();
                i += word.chars().count();
                match word.as_str() {
                    "--BODY--" => toks.push((Tok::Body, line)),
                    "--END--" => toks.push((Tok::End, line)),
                    "--ABORT--" => return Err(unsupported("--ABORT--")),
                    other => return Err(err(line, format!("unexpected token {other:?}"))),
                }
            }
            '@' => {
                let word: String = chars[i + 1..]
                    .iter()
                    .take_while(|c| c.is_alphanumeric() || **c == '_' || **c == '-')
                    .collect();
                i += 1 + word.chars().count();
                toks.push((Tok::Alias(word), line));
            }
            c if c.is_ascii_digit() => {
                let word: String = chars[i..].iter().take_while(|c| c.is_ascii_digit()).collect();
                i += word.len();
                let v = word.parse().map_err(|_| err(line, format!("integer {word} too large")))?;
                toks.push((Tok::Int(v), line));
            }
            c if c.is_alphabetic() || c == '_' => {
                let word: String = chars[i..]
                    .iter()
                    .take_while(|c| c.is_alphanumeric() || **c == '_' || **c == '-' || **c == '.')
                    .collect();
                i += word.chars().count();
                if chars.get(i) == Some(&':') {
                    i += 1;
                    toks.push((Tok::Header(word), line));
                } else {
                    toks.push((Tok::Ident(word), line));
                }
            }
            other => return Err(err(line, format!("unexpected character {other:?}"))),
        }
    }
    Ok(toks)
}

#[derive(Debug)]
enum Expr {
    Const(bool),
    Ap(usize),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

impl Expr {
    fn eval(&self, l: Letter) -> bool {
        match self {
            Expr::Const(b) => *b,
            Expr::Ap(i) => l.holds(*i),
            Expr::Not(e) => !e.eval(l),
            Expr::And(a, b) => a.eval(l) && b.eval(l),
            Expr::Or(a, b) => a.eval(l) || b.eval(l),
        }
    }
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    last_line: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map_or(self.last_line, |(_, l)| *l)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect_int(&mut self, what: &str) -> Result<usize, AutomatonError> {
        let line = self.line();
        match self.next() {
            Some(Tok::Int(v)) => Ok(v),
            other => Err(err(line, format!("expected {what}, found {other:?}"))),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), AutomatonError> {
        let line = self.line();
        match self.next() {
            Some(t) if t == tok => Ok(()),
            other => Err(err(line, format!("expected {tok:?}, found {other:?}"))),
        }
    }

    /// Remaining tokens of the current header line.
    fn header_values(&mut self) -> Vec<Tok> {
        let mut v = Vec::new();
        while let Some(t) = self.peek() {
            if matches!(t, Tok::Header(_) | Tok::Body) {
                break;
            }
            v.push(self.next().unwrap());
        }
        v
    }

    fn label_or(&mut self, n_aps: usize) -> Result<Expr, AutomatonError> {
        let mut lhs = self.label_and(n_aps)?;
        while self.peek() == Some(&Tok::Or) {
            self.next();
            let rhs = self.label_and(n_aps)?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn label_and(&mut self, n_aps: usize) -> Result<Expr, AutomatonError> {
        let mut lhs = self.label_not(n_aps)?;
        while self.peek() == Some(&Tok::And) {
            self.next();
            let rhs = self.label_not(n_aps)?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn label_not(&mut self, n_aps: usize) -> Result<Expr, AutomatonError> {
        let line = self.line();
        match self.next() {
            Some(Tok::Not) => Ok(Expr::Not(Box::new(self.label_not(n_aps)?))),
            Some(Tok::Ident(w)) if w == "t" => Ok(Expr::Const(true)),
            Some(Tok::Ident(w)) if w == "f" => Ok(Expr::Const(false)),
            Some(Tok::Int(i)) if i < n_aps => Ok(Expr::Ap(i)),
            Some(Tok::Int(i)) => Err(err(line, format!("proposition index {i} not declared"))),
            Some(Tok::LParen) => {
                let e = self.label_or(n_aps)?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Alias(a)) => Err(unsupported(format!("alias @{a}"))),
            other => Err(err(line, format!("bad label expression at {other:?}"))),
        }
    }
}

pub fn parse_automaton(text: &str) -> Result<BuchiAutomaton, AutomatonError> {
    let toks = tokenize(text)?;
    let last_line = toks.last().map_or(1, |(_, l)| *l);
    let mut p = Parser { toks, pos: 0, last_line };

    match (p.next(), p.next()) {
        (Some(Tok::Header(h)), Some(Tok::Ident(v))) if h == "HOA" && v == "v1" => {}
        _ => return Err(err(1, "document must start with `HOA: v1`")),
    }

    let mut states: Option<usize> = None;
    let mut start: Option<usize> = None;
    let mut aps: Option<Vec<String>> = None;
    let mut acc_name_ok = false;
    let mut acceptance_ok = false;

    loop {
        let line = p.line();
        match p.next() {
            Some(Tok::Body) => break,
            Some(Tok::Header(h)) => {
                let vals = p.header_values();
                match h.as_str() {
                    "name" | "tool" => {}
                    "properties" => {
                        for v in &vals {
                            if let Tok::Ident(w) = v {
                                if matches!(w.as_str(), "state-acc" | "implicit-labels" | "univ-branch") {
                                    return Err(unsupported(format!("property {w}")));
                                }
                            }
                        }
                    }
                    "States" => match vals.as_slice() {
                        [Tok::Int(n)] => states = Some(*n),
                        _ => return Err(err(line, "States: expects one integer")),
                    },
                    "Start" => {
                        if start.is_some() {
                            return Err(unsupported("multiple initial states"));
                        }
                        match vals.as_slice() {
                            [Tok::Int(n)] => start = Some(*n),
                            [Tok::Int(_), Tok::And, ..] => return Err(unsupported("alternating start conjunction")),
                            _ => return Err(err(line, "Start: expects one integer")),
                        }
                    }
                    "AP" => {
                        let Some((Tok::Int(n), rest)) = vals.split_first() else {
                            return Err(err(line, "AP: expects a count"));
                        };
                        let names: Vec<String> = rest
                            .iter()
                            .map(|t| match t {
                                Tok::Str(s) => Ok(s.clone()),
                                _ => Err(err(line, "AP: names must be quoted strings")),
                            })
                            .collect::<Result<_, _>>()?;
                        if names.len() != *n {
                            return Err(err(line, format!("AP: declared {n} names, found {}", names.len())));
                        }
                        if names.len() > MAX_APS {
                            return Err(unsupported(format!("more than {MAX_APS} atomic propositions")));
                        }
                        aps = Some(names);
                    }
                    "acc-name" => match vals.as_slice() {
                        [Tok::Ident(w)] if w == "Buchi" => acc_name_ok = true,
                        [Tok::Ident(w), ..] => return Err(unsupported(format!("acceptance {w}"))),
                        _ => return Err(err(line, "acc-name: expects a name")),
                    },
                    "Acceptance" => match vals.as_slice() {
                        [Tok::Int(1), Tok::Ident(inf), Tok::LParen, Tok::Int(0), Tok::RParen] if inf == "Inf" => {
                            acceptance_ok = true
                        }
                        _ => return Err(unsupported("acceptance condition other than `1 Inf(0)`")),
                    },
                    "Alias" => return Err(unsupported("aliases")),
                    other => return Err(unsupported(format!("header {other}"))),
                }
            }
            other => return Err(err(line, format!("expected header, found {other:?}"))),
        }
    }

    if !acc_name_ok {
        return Err(unsupported("missing `acc-name: Buchi`"));
    }
    if !acceptance_ok {
        return Err(unsupported("missing `Acceptance: 1 Inf(0)`"));
    }
    let n = states.ok_or_else(|| err(p.line(), "missing States: header"))?;
    let initial = start.ok_or_else(|| err(p.line(), "missing Start: header"))?;
    let aps = aps.unwrap_or_default();
    let sigma = alphabet_size(aps.len());

    let mut edges = Vec::new();
    let mut current: Option<usize> = None;
    loop {
        let line = p.line();
        match p.next() {
            Some(Tok::End) => break,
            Some(Tok::Header(h)) if h == "State" => {
                if p.peek() == Some(&Tok::LBracket) {
                    return Err(unsupported("state labels"));
                }
                let q = p.expect_int("state number")?;
                if q >= n {
                    return Err(err(line, format!("state {q} out of range")));
                }
                if let Some(Tok::Str(_)) = p.peek() {
                    p.next();
                }
                if p.peek() == Some(&Tok::LBrace) {
                    return Err(unsupported("state-based acceptance marks"));
                }
                current = Some(q);
            }
            Some(Tok::LBracket) => {
                let q = current.ok_or_else(|| err(line, "edge before any State:"))?;
                let expr = p.label_or(aps.len())?;
                p.expect(Tok::RBracket)?;
                let to = p.expect_int("edge target")?;
                if to >= n {
                    return Err(err(line, format!("edge target {to} out of range")));
                }
                if p.peek() == Some(&Tok::And) {
                    return Err(unsupported("universal branching"));
                }
                let mut accepting = false;
                if p.peek() == Some(&Tok::LBrace) {
                    p.next();
                    loop {
                        let l = p.line();
                        match p.next() {
                            Some(Tok::RBrace) => break,
                            Some(Tok::Int(0)) => accepting = true,
                            Some(Tok::Int(k)) => return Err(err(l, format!("acceptance set {k} not declared"))),
                            other => return Err(err(l, format!("bad acceptance mark {other:?}"))),
                        }
                    }
                }
                for l in 0..sigma {
                    let letter = Letter(l as u32);
                    if expr.eval(letter) {
                        edges.push((q, letter, to, accepting));
                    }
                }
            }
            Some(Tok::Int(_)) => return Err(unsupported("implicit edge labels")),
            Some(Tok::Header(h)) => return Err(err(line, format!("unexpected header {h}: in body"))),
            None => return Err(err(line, "missing --END--")),
            other => return Err(err(line, format!("unexpected token {other:?} in body"))),
        }
    }
    if initial >= n {
        return Err(err(1, format!("start state {initial} out of range")));
    }
    BuchiAutomaton::new(aps, n, initial, edges)
}
