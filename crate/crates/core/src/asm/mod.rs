// Licensed under the Apache-2.0 license

//! Two-pass RV32IM + Zicsr assembler.
//!
//! Pass 1 expands pseudo-instructions and lays out every label; pass 2
//! encodes. References that stay inside one section are resolved here.
//! Everything else becomes a [`Relocation`] for the linker. The accepted
//! syntax is described in `docs/asm.md`.

mod encode;
mod parse;
mod pseudo;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

pub use encode::{encode_instruction, hi20, lo12, lower, Encoded};
pub use parse::{parse_expr, parse_operand, Expr, Modifier, Operand, Statement};
pub use pseudo::{expand_pseudo, split_hi_lo};

use crate::isa::NOP;

pub(crate) const PSEUDOS: &[&str] = &[
    "nop", "li", "la", "mv", "not", "neg", "seqz", "snez", "j", "jr", "ret", "call", "tail", "csrr", "csrw", "csrs",
    "csrc", "csrwi", "csrsi", "csrci", "beqz", "bnez", "bltz", "bgez", "blez", "bgtz", "bgt", "ble", "bgtu", "bleu",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SectionId {
    Text,
    Data,
    Bss,
}

impl SectionId {
    pub const ALL: [SectionId; 3] = [SectionId::Text, SectionId::Data, SectionId::Bss];

    pub fn name(self) -> &'static str {
        match self {
            SectionId::Text => ".text",
            SectionId::Data => ".data",
            SectionId::Bss => ".bss",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelocKind {
    Hi20,
    Lo12I,
    Lo12S,
    Branch,
    Jal,
    /// Full 32-bit address stored by `.word sym`.
    Abs32,
}

impl fmt::Display for RelocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelocKind::Hi20 => "HI20",
            RelocKind::Lo12I => "LO12_I",
            RelocKind::Lo12S => "LO12_S",
            RelocKind::Branch => "BRANCH",
            RelocKind::Jal => "JAL",
            RelocKind::Abs32 => "ABS32",
        })
    }
}

/// What a relocation points at. Labels local to the unit are rewritten
/// to section offsets so only global names are left for the linker.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RelocTarget {
    Symbol(String),
    Section(SectionId, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relocation {
    pub section: SectionId,
    pub offset: u32,
    pub kind: RelocKind,
    pub target: RelocTarget,
    pub addend: i64,
    /// For LO12 kinds: offset of the paired `auipc`, which is the base of
    /// the pc-relative displacement.
    pub pair_offset: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symbol {
    pub section: SectionId,
    pub offset: u32,
    pub global: bool,
}

/// An assembled translation unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectUnit {
    pub name: String,
    pub text: Vec<u8>,
    pub data: Vec<u8>,
    pub bss_size: u32,
    /// Largest alignment requested in each section, in bytes.
    pub alignment: [u32; 3],
    pub symbols: BTreeMap<String, Symbol>,
    pub relocations: Vec<Relocation>,
}

impl ObjectUnit {
    pub fn section_size(&self, s: SectionId) -> u32 {
        match s {
            SectionId::Text => self.text.len() as u32,
            SectionId::Data => self.data.len() as u32,
            SectionId::Bss => self.bss_size,
        }
    }

    pub fn section_align(&self, s: SectionId) -> u32 {
        self.alignment[s.index()]
    }

    pub fn globals(&self) -> impl Iterator<Item = (&String, &Symbol)> {
        self.symbols.iter().filter(|(_, s)| s.global)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{unit}:{line}: {reason}")]
pub struct AsmError {
    pub unit: String,
    pub line: usize,
    pub reason: String,
}

enum Item {
    Instr(Statement),
    Word(Expr),
    Byte(i64),
    Zeros(u32),
    /// Padding that runs as `nop` when it lands in `.text`.
    Pad(u32),
}

struct Placed {
    line: usize,
    section: SectionId,
    offset: u32,
    item: Item,
}

fn item_size(item: &Item) -> u32 {
    match item {
        Item::Instr(_) | Item::Word(_) => 4,
        Item::Byte(_) => 1,
        Item::Zeros(n) | Item::Pad(n) => *n,
    }
}

fn expr(raw: &str, equs: &HashMap<String, i64>) -> Result<Expr, String> {
    parse::parse_expr_with(raw, &|n| equs.get(n).copied())
}

fn const_arg(args: &[String], i: usize, equs: &HashMap<String, i64>) -> Result<i64, String> {
    let raw = args.get(i).ok_or("missing operand")?;
    expr(raw, equs)?.as_constant().ok_or_else(|| format!("`{raw}` is not a constant"))
}

fn symbolic(s: &Statement) -> Option<&Expr> {
    s.operands.iter().find_map(|op| match op {
        Operand::Expr(e) | Operand::Mem { offset: e, .. } if e.symbol.is_some() => Some(e),
        _ => None,
    })
}

/// Assembles one source unit. Undefined symbols are allowed; they are
/// left as relocations for the linker.
pub fn assemble_unit(source: &str, name: &str) -> Result<ObjectUnit, AsmError> {
    let err = |line: usize, reason: String| AsmError { unit: name.to_string(), line, reason };

    let mut lines = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        lines.push(parse::split_line(i + 1, raw).map_err(|r| err(i + 1, r))?);
    }

    // Constants first, so `li` sizes are known during layout.
    let mut equs: HashMap<String, i64> = HashMap::new();
    for l in &lines {
        if l.head.as_deref() != Some(".equ") {
            continue;
        }
        if l.args.len() != 2 || !parse::is_ident(&l.args[0]) {
            return Err(err(l.number, "expected `.equ NAME, value`".to_string()));
        }
        let v = const_arg(&l.args, 1, &equs).map_err(|r| err(l.number, r))?;
        if equs.insert(l.args[0].clone(), v).is_some() {
            return Err(err(l.number, format!("duplicate constant `{}`", l.args[0])));
        }
    }

    // Pass 1: layout.
    let mut section = SectionId::Text;
    let mut loc = [0u32; 3];
    let mut alignment = [4u32; 3];
    let mut symbols: BTreeMap<String, Symbol> = BTreeMap::new();
    let mut globals: BTreeSet<String> = BTreeSet::new();
    let mut placed: Vec<Placed> = Vec::new();

    for l in &lines {
        let n = l.number;
        for label in &l.labels {
            if equs.contains_key(label) || symbols.contains_key(label) {
                return Err(err(n, format!("duplicate label `{label}`")));
            }
            symbols.insert(label.clone(), Symbol { section, offset: loc[section.index()], global: false });
        }
        let Some(head) = l.head.as_deref() else { continue };
        let mut items: Vec<Item> = Vec::new();
        match head {
            ".section" => {
                section = match l.args.first().map(String::as_str) {
                    Some(".text") if l.args.len() == 1 => SectionId::Text,
                    Some(".data" | ".rodata") if l.args.len() == 1 => SectionId::Data,
                    Some(".bss") if l.args.len() == 1 => SectionId::Bss,
                    _ => return Err(err(n, format!("unsupported section `{}`", l.args.join(", ")))),
                }
            }
            ".text" | ".data" | ".bss" => {
                if !l.args.is_empty() {
                    return Err(err(n, format!("`{head}` takes no operands")));
                }
                section = match head {
                    ".text" => SectionId::Text,
                    ".data" => SectionId::Data,
                    _ => SectionId::Bss,
                };
            }
            ".globl" | ".global" => {
                if l.args.is_empty() {
                    return Err(err(n, "`.globl` needs a symbol".to_string()));
                }
                for a in &l.args {
                    if !parse::is_ident(a) {
                        return Err(err(n, format!("bad symbol `{a}`")));
                    }
                    if equs.contains_key(a) {
                        return Err(err(n, format!("constant `{a}` cannot be global")));
                    }
                    globals.insert(a.clone());
                }
            }
            ".equ" => {}
            ".word" | ".byte" => {
                if l.args.is_empty() {
                    return Err(err(n, format!("`{head}` needs a value")));
                }
                if section == SectionId::Bss {
                    return Err(err(n, format!("`{head}` in .bss")));
                }
                for a in &l.args {
                    let e = expr(a, &equs).map_err(|r| err(n, r))?;
                    if head == ".word" {
                        if e.symbol.is_none() && !(i32::MIN as i64..=u32::MAX as i64).contains(&e.addend) {
                            return Err(err(n, format!("value {} does not fit in a word", e.addend)));
                        }
                        items.push(Item::Word(e));
                    } else {
                        let v = e.as_constant().ok_or_else(|| err(n, format!("`.byte` needs a constant, got `{a}`")))?;
                        if !(-128..=255).contains(&v) {
                            return Err(err(n, format!("value {v} does not fit in a byte")));
                        }
                        items.push(Item::Byte(v));
                    }
                }
            }
            ".space" | ".zero" => {
                if l.args.len() != 1 {
                    return Err(err(n, format!("`{head}` takes one operand")));
                }
                let v = const_arg(&l.args, 0, &equs).map_err(|r| err(n, r))?;
                if !(0..=(1 << 24)).contains(&v) {
                    return Err(err(n, format!("bad size {v}")));
                }
                items.push(Item::Zeros(v as u32));
            }
            ".align" | ".p2align" => {
                if l.args.len() != 1 {
                    return Err(err(n, format!("`{head}` takes one operand")));
                }
                let p = const_arg(&l.args, 0, &equs).map_err(|r| err(n, r))?;
                if !(0..=12).contains(&p) {
                    return Err(err(n, format!("alignment 2^{p} out of range")));
                }
                let a = 1u32 << p;
                alignment[section.index()] = alignment[section.index()].max(a);
                let at = loc[section.index()];
                let pad = at.next_multiple_of(a) - at;
                if pad > 0 {
                    items.push(Item::Pad(pad));
                }
            }
            d if d.starts_with('.') => return Err(err(n, format!("unknown directive `{d}`"))),
            mnemonic => {
                if section != SectionId::Text {
                    return Err(err(n, format!("instruction in {}", section.name())));
                }
                if loc[0] % 4 != 0 {
                    return Err(err(n, "instruction is not 4-byte aligned".to_string()));
                }
                let mut operands = Vec::new();
                for a in &l.args {
                    operands.push(parse::parse_operand_with(a, &|k| equs.get(k).copied()).map_err(|r| err(n, r))?);
                }
                let stmt = Statement { mnemonic: mnemonic.to_string(), operands };
                if stmt.mnemonic == "li" {
                    if let Some(Operand::Expr(e)) = stmt.operands.get(1) {
                        if let Some(sym) = &e.symbol {
                            return Err(err(n, format!("`li` needs a constant; `{sym}` is a label (use `la`)")));
                        }
                        if !(i32::MIN as i64..=u32::MAX as i64).contains(&e.addend) {
                            return Err(err(n, format!("`li` value {} does not fit in 32 bits", e.addend)));
                        }
                    }
                }
                items.extend(expand_pseudo(&stmt).into_iter().map(Item::Instr));
            }
        }
        for item in items {
            let offset = loc[section.index()];
            loc[section.index()] += item_size(&item);
            placed.push(Placed { line: n, section, offset, item });
        }
    }

    if loc[0] % 4 != 0 {
        return Err(err(lines.len().max(1), format!(".text length {} is not a multiple of 4", loc[0])));
    }
    for g in &globals {
        if let Some(sym) = symbols.get_mut(g) {
            sym.global = true;
        }
    }

    // Pass 2: encode.
    let mut text = Vec::with_capacity(loc[0] as usize);
    let mut data = Vec::with_capacity(loc[1] as usize);
    let mut relocations = Vec::new();
    for p in placed {
        let buf = match p.section {
            SectionId::Text => &mut text,
            SectionId::Data => &mut data,
            SectionId::Bss => {
                continue;
            }
        };
        let resolve = |e: &Expr| -> (Option<i64>, Option<(RelocTarget, i64)>) {
            let name = e.symbol.as_ref().unwrap();
            match symbols.get(name) {
                Some(s) if s.section == p.section => {
                    (Some(s.offset as i64 + e.addend), None)
                }
                Some(s) if !s.global => (None, Some((RelocTarget::Section(s.section, s.offset), e.addend))),
                _ => (None, Some((RelocTarget::Symbol(name.clone()), e.addend))),
            }
        };
        match p.item {
            Item::Instr(stmt) => {
                let sym = symbolic(&stmt).cloned();
                let (symval, pending) = match &sym {
                    Some(e) => resolve(e),
                    None => (None, None),
                };
                let enc = encode_instruction(&stmt, p.offset, symval).map_err(|r| err(p.line, r))?;
                if let (Some(kind), Some((target, addend))) = (enc.reloc, pending) {
                    let pair_offset = matches!(kind, RelocKind::Lo12I | RelocKind::Lo12S).then(|| p.offset - 4);
                    relocations.push(Relocation { section: p.section, offset: p.offset, kind, target, addend, pair_offset });
                }
                buf.extend_from_slice(&enc.word.to_le_bytes());
            }
            Item::Word(e) => {
                match &e.symbol {
                    None => buf.extend_from_slice(&(e.addend as u32).to_le_bytes()),
                    Some(name) => {
                        let (target, addend) = match symbols.get(name) {
                            Some(s) if !s.global => (RelocTarget::Section(s.section, s.offset), e.addend),
                            _ => (RelocTarget::Symbol(name.clone()), e.addend),
                        };
                        relocations.push(Relocation {
                            section: p.section,
                            offset: p.offset,
                            kind: RelocKind::Abs32,
                            target,
                            addend,
                            pair_offset: None,
                        });
                        buf.extend_from_slice(&[0; 4]);
                    }
                }
            }
            Item::Byte(v) => buf.push(v as u8),
            Item::Zeros(k) => buf.resize(buf.len() + k as usize, 0),
            Item::Pad(k) => {
                if p.section == SectionId::Text && k % 4 == 0 && p.offset % 4 == 0 {
                    for _ in 0..k / 4 {
                        buf.extend_from_slice(&NOP.to_le_bytes());
                    }
                } else {
                    buf.resize(buf.len() + k as usize, 0);
                }
            }
        }
    }

    Ok(ObjectUnit { name: name.to_string(), text, data, bss_size: loc[2], alignment, symbols, relocations })
}
