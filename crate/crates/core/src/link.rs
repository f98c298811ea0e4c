// Licensed under the Apache-2.0 license

//! Flat-image linker.
//!
//! Sections are laid out `.text`, `.data`, `.bss` starting at the layout
//! base, each class holding the units' contributions in unit order. The
//! output is a raw byte image (text and data; bss is left to the guest's
//! boot code) plus a symbol map.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::asm::{hi20, lo12, ObjectUnit, RelocKind, RelocTarget, SectionId};
use crate::isa::{b_fields, check_b_offset, check_j_offset, j_fields, s_fields};
use crate::kernel::parse_number;

/// Names the linker always defines.
pub const BUILTIN_SYMBOLS: [&str; 5] = ["edata", "_bss_start", "_bss_end", "_end", "_stack_top"];

pub const DEFAULT_BASE: u32 = 0x0001_0000;
pub const DEFAULT_RAM: u32 = 0x0010_0000;
pub const DEFAULT_STACK: u32 = 0x1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayoutConfig {
    pub base: u32,
    pub ram_size: u32,
    /// Room reserved below `_stack_top` for the boot stack.
    pub stack_size: u32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig { base: DEFAULT_BASE, ram_size: DEFAULT_RAM, stack_size: DEFAULT_STACK }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: String| Err(LinkError::Config(m));
        if self.base < DEFAULT_BASE {
            return bad(format!("base {:#x} is below {DEFAULT_BASE:#x}", self.base));
        }
        if self.base % 4 != 0 {
            return bad(format!("base {:#x} is not word aligned", self.base));
        }
        if self.ram_size == 0 || self.base as u64 + self.ram_size as u64 > 1 << 32 {
            return bad(format!("ram size {:#x} does not fit above base", self.ram_size));
        }
        if self.stack_size > self.ram_size {
            return bad("stack is larger than ram".to_string());
        }
        Ok(())
    }

    pub fn stack_top(&self) -> u32 {
        ((self.base as u64 + self.ram_size as u64) & !15) as u32
    }
}

/// Parses `key=value` lines (`base`, `ram`, `stack`); `#` starts a comment.
impl FromStr for LayoutConfig {
    type Err = LinkError;

    fn from_str(s: &str) -> Result<Self, LinkError> {
        let mut cfg = LayoutConfig::default();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let bad = || LinkError::Config(format!("line {}: bad layout entry `{line}`", i + 1));
            let (key, value) = line.split_once('=').ok_or_else(bad)?;
            let value: u32 = parse_number(value.trim()).and_then(|v| u32::try_from(v).ok()).ok_or_else(bad)?;
            match key.trim() {
                "base" => cfg.base = value,
                "ram" => cfg.ram_size = value,
                "stack" => cfg.stack_size = value,
                _ => return Err(bad()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryImage {
    pub base: u32,
    pub entry: u32,
    /// Text followed by data; bss is not materialized.
    pub bytes: Vec<u8>,
    /// Global and builtin symbols.
    pub symbols: BTreeMap<String, u32>,
}

impl MemoryImage {
    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    /// One `"%08x %s\n"` line per symbol, ordered by address then name.
    pub fn map_text(&self) -> String {
        let mut entries: Vec<(u32, &str)> = self.symbols.iter().map(|(n, a)| (*a, n.as_str())).collect();
        entries.sort();
        let mut out = String::new();
        for (addr, name) in entries {
            let _ = writeln!(out, "{addr:08x} {name}");
        }
        out
    }
}

/// Reads a map file back into `name -> address`.
pub fn parse_map(text: &str) -> Result<BTreeMap<String, u32>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (addr, name) = line.split_once(' ').ok_or_else(|| format!("map line {}: `{line}`", i + 1))?;
        let addr = u32::from_str_radix(addr, 16).map_err(|_| format!("map line {}: bad address `{addr}`", i + 1))?;
        out.insert(name.trim().to_string(), addr);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Undefined {
    pub symbol: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("undefined symbols: {}", .0.iter().map(|u| format!("`{}` (referenced from {})", u.symbol, u.unit)).collect::<Vec<_>>().join(", "))]
    UndefinedSymbol(Vec<Undefined>),
    #[error("duplicate symbol `{name}` defined in {first} and {second}")]
    DuplicateSymbol { name: String, first: String, second: String },
    #[error("no global `_start` symbol")]
    NoEntry,
    #[error("image needs {needed:#x} bytes but ram is {ram:#x}")]
    ImageOverflow { needed: u64, ram: u32 },
    #[error("{unit}: {kind} relocation at {site:#010x}: {detail}")]
    Range { unit: String, kind: RelocKind, site: u32, detail: String },
    #[error("layout: {0}")]
    Config(String),
}

/// Address ranges of each section class after layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SectionExtents {
    pub text: (u32, u32),
    pub data: (u32, u32),
    pub bss: (u32, u32),
}

/// Values of the builtin symbols for a finished layout.
pub fn define_builtin_symbols(layout: &LayoutConfig, ext: &SectionExtents) -> BTreeMap<String, u32> {
    let edata = if ext.data.1 > ext.data.0 { ext.data.1 } else { ext.text.1 };
    BTreeMap::from([
        ("edata".to_string(), edata),
        ("_bss_start".to_string(), ext.bss.0),
        ("_bss_end".to_string(), ext.bss.1),
        ("_end".to_string(), ext.bss.1),
        ("_stack_top".to_string(), layout.stack_top()),
    ])
}

/// Patches `word` for a relocation of `kind` at `site` referring to
/// `target`. LO12 kinds measure from `pair_site`, the address of the
/// matching `auipc`. Displacements wrap modulo 2^32, as the hart's
/// address arithmetic does.
pub fn apply_relocation(kind: RelocKind, word: u32, site: u32, target: u32, pair_site: Option<u32>) -> Result<u32, String> {
    let pc_delta = |from: u32| target.wrapping_sub(from) as i32 as i64;
    Ok(match kind {
        RelocKind::Hi20 => (word & 0xfff) | (hi20(pc_delta(site))? << 12),
        RelocKind::Lo12I | RelocKind::Lo12S => {
            let pair = pair_site.ok_or("LO12 relocation without its auipc")?;
            let lo = lo12(pc_delta(pair));
            if kind == RelocKind::Lo12I {
                (word & 0x000f_ffff) | ((lo as u32 & 0xfff) << 20)
            } else {
                (word & 0x01ff_f07f) | s_fields(lo)
            }
        }
        RelocKind::Branch => {
            let off = check_b_offset(pc_delta(site)).map_err(|e| e.to_string())?;
            (word & 0x01ff_f07f) | b_fields(off)
        }
        RelocKind::Jal => {
            let off = check_j_offset(pc_delta(site)).map_err(|e| e.to_string())?;
            (word & 0xfff) | j_fields(off)
        }
        RelocKind::Abs32 => target,
    })
}

fn align_up(v: u64, a: u32) -> u64 {
    v.next_multiple_of(a as u64)
}

/// Links `units` into a flat image.
pub fn link(units: &[ObjectUnit], layout: &LayoutConfig) -> Result<MemoryImage, LinkError> {
    layout.validate()?;
    let base = layout.base;

    // Layout: per unit, the start address of each section class.
    let mut starts = vec![[0u32; 3]; units.len()];
    let mut cursor = base as u64;
    let mut ext = SectionExtents::default();
    for (class, s) in SectionId::ALL.into_iter().enumerate() {
        let class_start = cursor;
        for (u, unit) in units.iter().enumerate() {
            cursor = align_up(cursor, unit.section_align(s));
            starts[u][class] = cursor.min(u32::MAX as u64) as u32;
            cursor += unit.section_size(s) as u64;
        }
        let first = units.first().map(|_| starts[0][class] as u64).unwrap_or(class_start);
        let range = (first.min(u32::MAX as u64) as u32, cursor.min(u32::MAX as u64) as u32);
        match s {
            SectionId::Text => ext.text = range,
            SectionId::Data => ext.data = range,
            SectionId::Bss => ext.bss = range,
        }
        cursor = align_up(cursor, 4);
    }
    let needed = ext.bss.1 as u64 - base as u64 + layout.stack_size as u64;
    if cursor > base as u64 + layout.ram_size as u64 || needed > layout.ram_size as u64 {
        return Err(LinkError::ImageOverflow { needed: needed.max(cursor - base as u64), ram: layout.ram_size });
    }

    // Symbols.
    let mut globals: BTreeMap<String, (u32, usize)> = BTreeMap::new();
    for (u, unit) in units.iter().enumerate() {
        for (name, sym) in &unit.symbols {
            if BUILTIN_SYMBOLS.contains(&name.as_str()) {
                return Err(LinkError::DuplicateSymbol {
                    name: name.clone(),
                    first: "<linker>".to_string(),
                    second: unit.name.clone(),
                });
            }
            if !sym.global {
                continue;
            }
            let addr = starts[u][sym.section as usize] + sym.offset;
            if let Some((_, prev)) = globals.insert(name.clone(), (addr, u)) {
                return Err(LinkError::DuplicateSymbol {
                    name: name.clone(),
                    first: units[prev].name.clone(),
                    second: unit.name.clone(),
                });
            }
        }
    }
    let mut symbols: BTreeMap<String, u32> = globals.iter().map(|(n, (a, _))| (n.clone(), *a)).collect();
    symbols.extend(define_builtin_symbols(layout, &ext));

    // Bytes.
    let mut bytes = vec![0u8; (ext.data.1.max(ext.text.1) - base) as usize];
    for (u, unit) in units.iter().enumerate() {
        let t = (starts[u][0] - base) as usize;
        bytes[t..t + unit.text.len()].copy_from_slice(&unit.text);
        let d = (starts[u][1] - base) as usize;
        bytes[d..d + unit.data.len()].copy_from_slice(&unit.data);
    }

    // Relocations.
    let mut undefined = Vec::new();
    for (u, unit) in units.iter().enumerate() {
        for r in &unit.relocations {
            let resolved = match &r.target {
                RelocTarget::Section(s, off) => Some(starts[u][*s as usize] + off),
                RelocTarget::Symbol(name) => symbols.get(name).copied(),
            };
            let Some(sym_addr) = resolved else {
                if let RelocTarget::Symbol(name) = &r.target {
                    let entry = Undefined { symbol: name.clone(), unit: unit.name.clone() };
                    if !undefined.contains(&entry) {
                        undefined.push(entry);
                    }
                }
                continue;
            };
            let section_start = starts[u][r.section as usize];
            let site = section_start + r.offset;
            let target = (sym_addr as i64 + r.addend) as u32;
            let pair_site = r.pair_offset.map(|p| section_start + p);
            let at = (site - base) as usize;
            let word = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
            let patched = apply_relocation(r.kind, word, site, target, pair_site).map_err(|detail| LinkError::Range {
                unit: unit.name.clone(),
                kind: r.kind,
                site,
                detail,
            })?;
            bytes[at..at + 4].copy_from_slice(&patched.to_le_bytes());
        }
    }
    if !undefined.is_empty() {
        undefined.sort_by(|a, b| (&a.symbol, &a.unit).cmp(&(&b.symbol, &b.unit)));
        return Err(LinkError::UndefinedSymbol(undefined));
    }

    let entry = symbols.get("_start").copied().filter(|_| globals.contains_key("_start")).ok_or(LinkError::NoEntry)?;
    Ok(MemoryImage { base, entry, bytes, symbols })
}
