// Licensed under the Apache-2.0 license

//! Line and operand syntax.

use std::fmt;

use crate::isa::Reg;

/// A possibly symbolic integer: `symbol + addend`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub symbol: Option<String>,
    pub addend: i64,
    pub modifier: Modifier,
}

/// How a symbolic expression is split across an `auipc` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modifier {
    None,
    /// Upper 20 bits of `target - pc`.
    PcrelHi,
    /// Low 12 bits of `target - pc_of_preceding_auipc`.
    PcrelLo,
}

impl Expr {
    pub fn constant(value: i64) -> Expr {
        Expr { symbol: None, addend: value, modifier: Modifier::None }
    }

    pub fn symbol(name: &str, addend: i64) -> Expr {
        Expr { symbol: Some(name.to_string()), addend, modifier: Modifier::None }
    }

    pub fn with_modifier(mut self, modifier: Modifier) -> Expr {
        self.modifier = modifier;
        self
    }

    pub fn as_constant(&self) -> Option<i64> {
        match self.symbol {
            None => Some(self.addend),
            Some(_) => None,
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = match (&self.symbol, self.addend) {
            (None, a) => a.to_string(),
            (Some(s), 0) => s.clone(),
            (Some(s), a) if a > 0 => format!("{s}+{a}"),
            (Some(s), a) => format!("{s}{a}"),
        };
        match self.modifier {
            Modifier::None => write!(f, "{body}"),
            Modifier::PcrelHi => write!(f, "%pcrel_hi({body})"),
            Modifier::PcrelLo => write!(f, "%pcrel_lo({body})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Reg(Reg),
    Expr(Expr),
    Mem { offset: Expr, base: Reg },
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{}", r.abi_name()),
            Operand::Expr(e) => write!(f, "{e}"),
            Operand::Mem { offset, base } => write!(f, "{offset}({})", base.abi_name()),
        }
    }
}

/// One instruction as written, before or after pseudo expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub mnemonic: String,
    pub operands: Vec<Operand>,
}

impl Statement {
    pub fn new(mnemonic: &str, operands: Vec<Operand>) -> Statement {
        Statement { mnemonic: mnemonic.to_string(), operands }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.mnemonic)?;
        for (i, op) in self.operands.iter().enumerate() {
            write!(f, "{}{op}", if i == 0 { " " } else { ", " })?;
        }
        Ok(())
    }
}

/// A source line split into labels and an optional statement head with
/// its raw comma-separated arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Line {
    pub number: usize,
    pub labels: Vec<String>,
    pub head: Option<String>,
    pub args: Vec<String>,
}

pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.' || c == '$' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

pub fn split_line(number: usize, raw: &str) -> Result<Line, String> {
    let mut rest = match raw.find('#') {
        Some(i) => &raw[..i],
        None => raw,
    }
    .trim();
    let mut labels = Vec::new();
    while let Some(colon) = rest.find(':') {
        let candidate = rest[..colon].trim();
        if !is_ident(candidate) {
            return Err(format!("bad label `{candidate}`"));
        }
        labels.push(candidate.to_string());
        rest = rest[colon + 1..].trim();
    }
    if rest.is_empty() {
        return Ok(Line { number, labels, head: None, args: Vec::new() });
    }
    let (head, tail) = match rest.find(char::is_whitespace) {
        Some(i) => (&rest[..i], rest[i..].trim()),
        None => (rest, ""),
    };
    let args = if tail.is_empty() { Vec::new() } else { tail.split(',').map(|a| a.trim().to_string()).collect() };
    if args.iter().any(String::is_empty) {
        return Err("empty operand".to_string());
    }
    Ok(Line { number, labels, head: Some(head.to_ascii_lowercase()), args })
}

pub fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse::<i64>().ok()?
    } else {
        return None;
    };
    if v > u32::MAX as i64 {
        return None;
    }
    Some(if neg { -v } else { v })
}

/// Parses `term (('+'|'-') term)*` where a term is a number or an
/// identifier. Identifiers known to `constant` are folded; at most one
/// other identifier may appear, with a positive sign.
pub fn parse_expr(s: &str) -> Result<Expr, String> {
    parse_expr_with(s, &|_| None)
}

pub fn parse_expr_with(s: &str, constant: &dyn Fn(&str) -> Option<i64>) -> Result<Expr, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("missing expression".to_string());
    }
    let mut symbol: Option<String> = None;
    let mut addend: i64 = 0;
    let bytes = s.as_bytes();
    let mut i = 0;
    let mut first = true;
    while i < bytes.len() {
        let mut negative = false;
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        if !first || bytes[i] == b'-' || bytes[i] == b'+' {
            match bytes.get(i) {
                Some(b'+') => i += 1,
                Some(b'-') => {
                    negative = true;
                    i += 1
                }
                _ => return Err(format!("bad expression `{s}`")),
            }
        }
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !matches!(bytes[i], b'+' | b'-' | b' ') {
            i += 1;
        }
        let term = &s[start..i];
        if let Some(v) = parse_int(term) {
            addend = if negative { addend - v } else { addend + v };
        } else if let Some(v) = constant(term) {
            addend = if negative { addend - v } else { addend + v };
        } else if is_ident(term) {
            if negative || symbol.is_some() {
                return Err(format!("unsupported symbol arithmetic in `{s}`"));
            }
            symbol = Some(term.to_string());
        } else {
            return Err(format!("bad term `{term}`"));
        }
        while i < bytes.len() && bytes[i] == b' ' {
            i += 1;
        }
        first = false;
    }
    Ok(Expr { symbol, addend, modifier: Modifier::None })
}

pub fn parse_operand(s: &str) -> Result<Operand, String> {
    parse_operand_with(s, &|_| None)
}

pub fn parse_operand_with(s: &str, constant: &dyn Fn(&str) -> Option<i64>) -> Result<Operand, String> {
    let s = s.trim();
    if let Some(r) = Reg::parse(s) {
        return Ok(Operand::Reg(r));
    }
    if let (Some(open), true) = (s.find('('), s.ends_with(')')) {
        let base_name = s[open + 1..s.len() - 1].trim();
        let base = Reg::parse(base_name).ok_or_else(|| format!("bad base register `{base_name}`"))?;
        let off = s[..open].trim();
        let offset = if off.is_empty() { Expr::constant(0) } else { parse_expr_with(off, constant)? };
        return Ok(Operand::Mem { offset, base });
    }
    parse_expr_with(s, constant).map(Operand::Expr)
}
