// Licensed under the Apache-2.0 license

//! System descriptions and the component build.
//!
//! A project keeps its sources under `components/`. A file's dotted module
//! name is its path below that directory with `/` replaced by `.` and the
//! extension dropped, so `components/riscv/context-switch.s` is
//! `riscv.context-switch`. Extensions select the kind:
//!
//! * `.s` assembly source
//! * `.gen` generator; may have a companion `.s` of the same name
//! * `.ld` layout (`key=value`, see [`crate::link::LayoutConfig`])
//! * `.prx` system description
//!
//! Outputs go under `out/`. The `.prx` schema is documented in
//! `docs/prx.md`.

mod generate;
mod parse;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use generate::{generate_config_sources, QUEUE_STATE_WORDS, RIGEL_CONFIG, TASK_STATE_WORDS, UNMAPPED_IRQ_TASK};
pub use parse::parse_prx;

use crate::asm::{assemble_unit, AsmError, ObjectUnit};
use crate::kernel::KernelConfig;
use crate::link::{link, LayoutConfig, LinkError, MemoryImage};

pub const COMPONENTS_DIR: &str = "components";
pub const OUT_DIR: &str = "out";
pub const INDEX_FILE: &str = "components.idx";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleRef {
    pub name: String,
    /// Line of the `<module>` element.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemDescription {
    pub name: String,
    pub modules: Vec<ModuleRef>,
    pub kernel: Option<KernelConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSource {
    pub name: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrxError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ComponentKind {
    Assembly,
    Generator,
    LinkerConfig,
}

impl ComponentKind {
    pub fn label(self) -> &'static str {
        match self {
            ComponentKind::Assembly => "asm",
            ComponentKind::Generator => "gen",
            ComponentKind::LinkerConfig => "layout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub name: String,
    pub kind: ComponentKind,
    /// Main file, relative to the project root.
    pub path: PathBuf,
    /// Assembly that travels with a generator.
    pub companion: Option<PathBuf>,
}

impl Component {
    /// Short human name: the last segment, tagged `-riscv` for the
    /// architecture area.
    pub fn display_name(&self) -> String {
        display_name(&self.name)
    }
}

pub fn display_name(dotted: &str) -> String {
    let last = dotted.rsplit('.').next().unwrap_or(dotted);
    if dotted.split('.').next() == Some("riscv") && dotted.contains('.') {
        format!("{last}-riscv")
    } else {
        last.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComponentIndex {
    pub root: PathBuf,
    pub components: BTreeMap<String, Component>,
    /// System descriptions by dotted name, relative paths.
    pub systems: BTreeMap<String, PathBuf>,
}

impl ComponentIndex {
    pub fn get(&self, name: &str) -> Option<&Component> {
        self.components.get(name)
    }

    pub fn display_names(&self) -> Vec<String> {
        self.components.values().map(Component::display_name).collect()
    }

    /// Tab-separated `name kind display path` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in self.components.values() {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", c.name, c.kind.label(), c.display_name(), c.path.display());
        }
        for (name, path) in &self.systems {
            let _ = writeln!(out, "{name}\tsystem\t{}\t{}", display_name(name), path.display());
        }
        out
    }

    pub fn out_dir(&self) -> PathBuf {
        self.root.join(OUT_DIR)
    }

    pub fn load_system(&self, name: &str) -> Result<SystemDescription, BuildError> {
        let rel = self.systems.get(name).ok_or_else(|| BuildError::UnknownSystem(name.to_string()))?;
        let path = self.root.join(rel);
        let text = fs::read_to_string(&path).map_err(|e| BuildError::Io { path: path.clone(), reason: e.to_string() })?;
        parse_prx(&text, name).map_err(|error| BuildError::Prx { system: name.to_string(), error })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComponentError {
    #[error("components root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{0}: not a valid component file name")]
    BadName(PathBuf),
    #[error("component `{name}` is defined by both {first} and {second}")]
    Duplicate { name: String, first: PathBuf, second: PathBuf },
    #[error("component `{component}`: {error}")]
    Assembly { component: String, error: AsmError },
    #[error("component `{component}`: {error}")]
    Layout { component: String, error: LinkError },
    #[error("component `{component}`: {reason}")]
    Generator { component: String, reason: String },
    #[error("system `{component}`: {error}")]
    System { component: String, error: PrxError },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("line {line}: unknown module `{module}`")]
    UnknownModule { module: String, line: usize },
    #[error("system `{system}`: {error}")]
    Prx { system: String, error: PrxError },
    #[error("module `{module}`: {reason}")]
    Module { module: String, reason: String },
    #[error("{0}")]
    Assembly(AsmError),
    #[error("link: {0}")]
    Link(LinkError),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

fn io_err(path: &Path, e: std::io::Error) -> ComponentError {
    ComponentError::Io { path: path.to_path_buf(), reason: e.to_string() }
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ComponentError> {
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir).map_err(|e| io_err(dir, e))?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>().map_err(|e| io_err(dir, e))?;
    entries.sort();
    for p in entries {
        if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')) {
            continue;
        }
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Reads `generator = <name>` files.
pub fn parse_generator_file(text: &str) -> Result<String, String> {
    let mut generator = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("generator", v)) if generator.is_none() => generator = Some(v.to_string()),
            _ => return Err(format!("line {}: unexpected `{line}`", i + 1)),
        }
    }
    match generator {
        Some(g) if g == RIGEL_CONFIG => Ok(g),
        Some(g) => Err(format!("unknown generator `{g}`")),
        None => Err("missing `generator = ...`".to_string()),
    }
}

/// Indexes `<project>/components` without validating contents.
pub fn scan_components(project_root: &Path) -> Result<ComponentIndex, ComponentError> {
    let comp_root = project_root.join(COMPONENTS_DIR);
    if !comp_root.is_dir() {
        return Err(ComponentError::MissingRoot(comp_root));
    }
    let mut files = Vec::new();
    walk(&comp_root, &mut files)?;

    let mut index = ComponentIndex { root: project_root.to_path_buf(), ..Default::default() };
    let mut sources: BTreeMap<String, PathBuf> = BTreeMap::new();
    for f in files {
        let rel_comp = f.strip_prefix(&comp_root).unwrap();
        let Some(ext) = f.extension().and_then(|e| e.to_str()) else { continue };
        if !matches!(ext, "s" | "gen" | "ld" | "prx") {
            continue;
        }
        let stem_path = rel_comp.with_extension("");
        let segments: Vec<&str> = stem_path.iter().map(|s| s.to_str().unwrap_or("")).collect();
        if !segments.iter().all(|s| valid_segment(s)) {
            return Err(ComponentError::BadName(f));
        }
        let name = segments.join(".");
        let rel = f.strip_prefix(project_root).unwrap().to_path_buf();
        match ext {
            "prx" => {
                index.systems.insert(name, rel);
            }
            "s" => {
                sources.insert(name, rel);
            }
            _ => {
                let kind = if ext == "gen" { ComponentKind::Generator } else { ComponentKind::LinkerConfig };
                if let Some(prev) = index.components.get(&name) {
                    return Err(ComponentError::Duplicate { name, first: prev.path.clone(), second: rel });
                }
                index.components.insert(name.clone(), Component { name, kind, path: rel, companion: None });
            }
        }
    }
    for (name, path) in sources {
        match index.components.get_mut(&name) {
            Some(c) if c.kind == ComponentKind::Generator => c.companion = Some(path),
            Some(c) => return Err(ComponentError::Duplicate { name, first: c.path.clone(), second: path }),
            None => {
                index.components.insert(name.clone(), Component { name, kind: ComponentKind::Assembly, path, companion: None });
            }
        }
    }
    Ok(index)
}

/// Checks that every component and system is well formed and writes the
/// index to `out/components.idx`. Assembly is checked standalone, so
/// undefined symbols are fine.
pub fn build_packages(project_root: &Path) -> Result<ComponentIndex, ComponentError> {
    let index = scan_components(project_root)?;
    let read = |rel: &Path| {
        let p = project_root.join(rel);
        fs::read_to_string(&p).map_err(|e| io_err(&p, e))
    };
    for c in index.components.values() {
        let text = read(&c.path)?;
        match c.kind {
            ComponentKind::Assembly => {
                assemble_unit(&text, &c.name).map_err(|error| ComponentError::Assembly { component: c.name.clone(), error })?;
            }
            ComponentKind::LinkerConfig => {
                text.parse::<LayoutConfig>().map_err(|error| ComponentError::Layout { component: c.name.clone(), error })?;
            }
            ComponentKind::Generator => {
                parse_generator_file(&text).map_err(|reason| ComponentError::Generator { component: c.name.clone(), reason })?;
                if let Some(companion) = &c.companion {
                    assemble_unit(&read(companion)?, &c.name)
                        .map_err(|error| ComponentError::Assembly { component: c.name.clone(), error })?;
                }
            }
        }
    }
    for (name, path) in &index.systems {
        parse_prx(&read(path)?, name).map_err(|error| ComponentError::System { component: name.clone(), error })?;
    }
    let out = project_root.join(OUT_DIR);
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let idx = out.join(INDEX_FILE);
    fs::write(&idx, index.to_text()).map_err(|e| io_err(&idx, e))?;
    Ok(index)
}

/// Assembles the system's modules in order plus generated sources, links
/// them and writes `out/<system>/system.img` and `system.map`.
pub fn build_system(desc: &SystemDescription, index: &ComponentIndex) -> Result<MemoryImage, BuildError> {
    let read = |rel: &Path| {
        let p = index.root.join(rel);
        fs::read_to_string(&p).map_err(|e| BuildError::Io { path: p, reason: e.to_string() })
    };
    let out = index.out_dir().join(&desc.name);
    let mut units: Vec<ObjectUnit> = Vec::new();
    let mut layout: Option<(LayoutConfig, String)> = None;
    let mut generated = Vec::new();
    for m in &desc.modules {
        let c = index.get(&m.name).ok_or_else(|| BuildError::UnknownModule { module: m.name.clone(), line: m.line })?;
        let module_err = |reason: String| BuildError::Module { module: m.name.clone(), reason };
        match c.kind {
            ComponentKind::Assembly => {
                units.push(assemble_unit(&read(&c.path)?, &c.name).map_err(BuildError::Assembly)?);
            }
            ComponentKind::LinkerConfig => {
                if let Some((_, prev)) = &layout {
                    return Err(module_err(format!("layout already given by `{prev}`")));
                }
                let cfg = read(&c.path)?.parse::<LayoutConfig>().map_err(|e| module_err(e.to_string()))?;
                layout = Some((cfg, c.name.clone()));
            }
            ComponentKind::Generator => {
                parse_generator_file(&read(&c.path)?).map_err(module_err)?;
                let sources =
                    generate_config_sources(desc).map_err(|error| BuildError::Prx { system: desc.name.clone(), error })?;
                for g in sources {
                    units.push(assemble_unit(&g.text, &g.name).map_err(BuildError::Assembly)?);
                    generated.push(g);
                }
                if let Some(companion) = &c.companion {
                    units.push(assemble_unit(&read(companion)?, &c.name).map_err(BuildError::Assembly)?);
                }
            }
        }
    }
    let layout = layout.map(|(l, _)| l).unwrap_or_default();
    let image = link(&units, &layout).map_err(BuildError::Link)?;

    let io = |p: &Path, e: std::io::Error| BuildError::Io { path: p.to_path_buf(), reason: e.to_string() };
    fs::create_dir_all(&out).map_err(|e| io(&out, e))?;
    for g in &generated {
        let p = out.join(format!("{}.s", g.name));
        fs::write(&p, &g.text).map_err(|e| io(&p, e))?;
    }
    let img = out.join("system.img");
    fs::write(&img, &image.bytes).map_err(|e| io(&img, e))?;
    let map = out.join("system.map");
    fs::write(&map, image.map_text()).map_err(|e| io(&map, e))?;
    Ok(image)
}
