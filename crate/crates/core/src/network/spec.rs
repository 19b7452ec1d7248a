//! Line-oriented text format for networks. One statement per line:
//!
//! ```text
//! source S -> a0
//! bs BS1 t=0.70710678 r=0.70710678 in=a0,vac1 out=A,B
//! ps PS1 phi=0.01 in=C out=C2
//! shift SH1 delta=0.02 in=E out=E2
//! mirror M1 in=x out=y
//! block BL1 in=F
//! det D in=d0
//! stage L3 arms=A,C,E
//! ```
//!
//! `#` starts a comment. The full grammar lives in `docs/network-spec.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::{Element, ElementKind, Network, StageCut, SPLITTER_TOLERANCE};

/// Splitter coefficients typed with fewer digits than `t² + r² = 1` needs
/// are accepted within this slack and renormalized.
const TEXT_SPLITTER_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push(Token {
                    text: &code[s..i],
                    column: code[..s].chars().count() + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push(Token {
            text: &code[s..],
            column: code[..s].chars().count() + 1,
        });
    }
    tokens
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '\'' | '~' | ':' | '.'))
}

struct LineParser<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
}

impl<'a> LineParser<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn end_column(&self) -> usize {
        self.tokens
            .last()
            .map(|t| t.column + t.text.chars().count())
            .unwrap_or(1)
    }

    fn name(&self, idx: usize, what: &str) -> Result<&'a str> {
        let tok = self
            .tokens
            .get(idx)
            .ok_or_else(|| self.err(self.end_column(), format!("missing {what}")))?;
        if !is_identifier(tok.text) {
            return Err(self.err(tok.column, format!("invalid {what} `{}`", tok.text)));
        }
        Ok(tok.text)
    }

    /// `key=value` pairs from token `from` on; rejects unknown, duplicate
    /// and missing keys.
    fn keys(&self, from: usize, allowed: &[&str]) -> Result<BTreeMap<&'a str, Token<'a>>> {
        let mut out = BTreeMap::new();
        for tok in &self.tokens[from.min(self.tokens.len())..] {
            let (key, value) = tok
                .text
                .split_once('=')
                .ok_or_else(|| self.err(tok.column, format!("expected key=value, found `{}`", tok.text)))?;
            if !allowed.contains(&key) {
                return Err(self.err(tok.column, format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(self.err(tok.column, format!("empty value for `{key}`")));
            }
            let value_tok = Token {
                text: value,
                column: tok.column + key.chars().count() + 1,
            };
            if out.insert(key, value_tok).is_some() {
                return Err(self.err(tok.column, format!("duplicate key `{key}`")));
            }
        }
        for key in allowed {
            if !out.contains_key(key) {
                return Err(self.err(self.end_column(), format!("missing key `{key}`")));
            }
        }
        Ok(out)
    }

    fn number(&self, tok: Token<'_>, key: &str) -> Result<f64> {
        let v: f64 = tok
            .text
            .parse()
            .map_err(|_| self.err(tok.column, format!("`{key}` expects a number, found `{}`", tok.text)))?;
        if !v.is_finite() {
            return Err(self.err(tok.column, format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    fn arm_list(&self, tok: Token<'_>, expected: Option<usize>) -> Result<Vec<String>> {
        let mut arms = Vec::new();
        let mut col = tok.column;
        for part in tok.text.split(',') {
            if !is_identifier(part) {
                return Err(self.err(col, format!("invalid arm label `{part}`")));
            }
            arms.push(part.to_string());
            col += part.chars().count() + 1;
        }
        if let Some(n) = expected {
            if arms.len() != n {
                return Err(self.err(tok.column, format!("expected {n} arm(s), found {}", arms.len())));
            }
        }
        Ok(arms)
    }
}

enum Statement {
    Element(Element),
    Stage(StageCut),
}

fn parse_line(p: &LineParser<'_>) -> Result<Statement> {
    let kw = p.tokens[0];
    let name = p.name(1, "name")?;
    let element = |kind, ins, outs| {
        Statement::Element(Element {
            name: name.to_string(),
            kind,
            in_arms: ins,
            out_arms: outs,
        })
    };
    Ok(match kw.text {
        "source" => {
            match p.tokens.get(2) {
                Some(t) if t.text == "->" => {}
                Some(t) => return Err(p.err(t.column, format!("expected `->`, found `{}`", t.text))),
                None => return Err(p.err(p.end_column(), "expected `->`")),
            }
            let arm = p.name(3, "arm label")?;
            if let Some(extra) = p.tokens.get(4) {
                return Err(p.err(extra.column, format!("unexpected `{}`", extra.text)));
            }
            element(ElementKind::Source, vec![], vec![arm.to_string()])
        }
        "bs" => {
            let k = p.keys(2, &["t", "r", "in", "out"])?;
            let mut t = p.number(k["t"], "t")?;
            let mut r = p.number(k["r"], "r")?;
            if t < 0.0 || r < 0.0 {
                return Err(Error::validation(name, "beam splitter needs t >= 0 and r >= 0"));
            }
            let s = t * t + r * r;
            if (s - 1.0).abs() > TEXT_SPLITTER_SLACK {
                return Err(Error::validation(
                    name,
                    format!("beam splitter not unitary (t^2 + r^2 = {s})"),
                ));
            }
            if (s - 1.0).abs() > SPLITTER_TOLERANCE {
                let n = s.sqrt();
                t /= n;
                r /= n;
            }
            element(
                ElementKind::BeamSplitter { t, r },
                p.arm_list(k["in"], Some(2))?,
                p.arm_list(k["out"], Some(2))?,
            )
        }
        "ps" => {
            let k = p.keys(2, &["phi", "in", "out"])?;
            element(
                ElementKind::PhaseShifter {
                    phi: p.number(k["phi"], "phi")?,
                },
                p.arm_list(k["in"], Some(1))?,
                p.arm_list(k["out"], Some(1))?,
            )
        }
        "shift" => {
            let k = p.keys(2, &["delta", "in", "out"])?;
            element(
                ElementKind::TransversalShifter {
                    delta: p.number(k["delta"], "delta")?,
                },
                p.arm_list(k["in"], Some(1))?,
                p.arm_list(k["out"], Some(1))?,
            )
        }
        "mirror" => {
            let k = p.keys(2, &["in", "out"])?;
            element(
                ElementKind::Mirror,
                p.arm_list(k["in"], Some(1))?,
                p.arm_list(k["out"], Some(1))?,
            )
        }
        "block" => {
            let k = p.keys(2, &["in"])?;
            element(ElementKind::Block, p.arm_list(k["in"], Some(1))?, vec![])
        }
        "det" => {
            let k = p.keys(2, &["in"])?;
            element(ElementKind::Detector, p.arm_list(k["in"], Some(1))?, vec![])
        }
        "stage" => {
            let k = p.keys(2, &["arms"])?;
            Statement::Stage(StageCut {
                name: name.to_string(),
                arms: p.arm_list(k["arms"], None)?,
            })
        }
        other => return Err(p.err(kw.column, format!("unknown statement `{other}`"))),
    })
}

/// Parse and validate a network description.
pub fn parse_network(text: &str) -> Result<Network> {
    let mut elements = Vec::new();
    let mut stages = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens = tokenize(line);
        if tokens.is_empty() {
            continue;
        }
        let p = LineParser { line: i + 1, tokens };
        match parse_line(&p)? {
            Statement::Element(e) => elements.push(e),
            Statement::Stage(s) => stages.push(s),
        }
    }
    Network::new(elements, stages)
}

/// Render a network in the text format. `parse_network` reads it back to an
/// identical network.
pub fn to_spec_text(n: &Network) -> String {
    let mut out = String::new();
    for e in n.elements() {
        let ins = e.in_arms.join(",");
        let outs = e.out_arms.join(",");
        let _ = match e.kind {
            ElementKind::Source => writeln!(out, "source {} -> {}", e.name, outs),
            ElementKind::BeamSplitter { t, r } => {
                writeln!(out, "bs {} t={t:?} r={r:?} in={ins} out={outs}", e.name)
            }
            ElementKind::PhaseShifter { phi } => writeln!(out, "ps {} phi={phi:?} in={ins} out={outs}", e.name),
            ElementKind::TransversalShifter { delta } => {
                writeln!(out, "shift {} delta={delta:?} in={ins} out={outs}", e.name)
            }
            ElementKind::Mirror => writeln!(out, "mirror {} in={ins} out={outs}", e.name),
            ElementKind::Block => writeln!(out, "block {} in={ins}", e.name),
            ElementKind::Detector => writeln!(out, "det {} in={ins}", e.name),
        };
    }
    for s in n.stages() {
        let _ = writeln!(out, "stage {} arms={}", s.name, s.arms.join(","));
    }
    out
}
