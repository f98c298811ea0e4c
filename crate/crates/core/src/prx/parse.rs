// Licensed under the Apache-2.0 license

use roxmltree::{Document, Node};

use super::{ModuleRef, PrxError, SystemDescription};
use crate::kernel::{parse_number, IrqEventConfig, KernelConfig, QueueConfig, SignalSet, TaskConfig, TaskId};

fn line_of(doc: &Document, node: Node) -> usize {
    doc.text_pos_at(node.range().start).row as usize
}

struct Ctx<'a, 'input> {
    doc: &'a Document<'input>,
}

impl<'a, 'input> Ctx<'a, 'input> {
    fn err<T>(&self, node: Node, reason: impl Into<String>) -> Result<T, PrxError> {
        Err(PrxError::Syntax { line: line_of(self.doc, node), reason: reason.into() })
    }

    /// Element children, rejecting stray text.
    fn elements(&self, node: Node<'a, 'input>) -> Result<Vec<Node<'a, 'input>>, PrxError> {
        let mut out = Vec::new();
        for c in node.children() {
            if c.is_element() {
                out.push(c);
            } else if c.is_text() && !c.text().unwrap_or("").trim().is_empty() {
                return self.err(c, format!("unexpected text in <{}>", node.tag_name().name()));
            }
        }
        Ok(out)
    }

    fn no_attributes(&self, node: Node) -> Result<(), PrxError> {
        match node.attributes().next() {
            Some(a) => self.err(node, format!("unknown attribute `{}` on <{}>", a.name(), node.tag_name().name())),
            None => Ok(()),
        }
    }

    /// Children of `node` that are all `<tag>`.
    fn list(&self, node: Node<'a, 'input>, tag: &str) -> Result<Vec<Node<'a, 'input>>, PrxError> {
        self.no_attributes(node)?;
        let items = self.elements(node)?;
        for i in &items {
            if i.tag_name().name() != tag {
                return self.err(*i, format!("unknown element <{}> in <{}>", i.tag_name().name(), node.tag_name().name()));
            }
        }
        Ok(items)
    }

    /// Reads a record whose fields are single-text child elements.
    fn record(&self, node: Node<'a, 'input>, fields: &[&str]) -> Result<Vec<(String, Node<'a, 'input>)>, PrxError> {
        self.no_attributes(node)?;
        let mut found: Vec<Option<(String, Node)>> = vec![None; fields.len()];
        for c in self.elements(node)? {
            let tag = c.tag_name().name();
            let Some(i) = fields.iter().position(|f| *f == tag) else {
                return self.err(c, format!("unknown element <{tag}> in <{}>", node.tag_name().name()));
            };
            if found[i].is_some() {
                return self.err(c, format!("duplicate <{tag}>"));
            }
            if c.children().any(|n| n.is_element()) {
                return self.err(c, format!("<{tag}> must contain text only"));
            }
            self.no_attributes(c)?;
            let text = c.text().unwrap_or("").trim().to_string();
            if text.is_empty() {
                return self.err(c, format!("empty <{tag}>"));
            }
            found[i] = Some((text, c));
        }
        let mut out = Vec::new();
        for (i, f) in found.into_iter().enumerate() {
            match f {
                Some(v) => out.push(v),
                None => return self.err(node, format!("<{}> is missing <{}>", node.tag_name().name(), fields[i])),
            }
        }
        Ok(out)
    }

    fn number(&self, (text, node): &(String, Node), max: u64) -> Result<u64, PrxError> {
        match parse_number(text) {
            Some(v) if v <= max => Ok(v),
            _ => self.err(*node, format!("bad number `{text}`")),
        }
    }
}

/// Parses a `.prx` system description named `name`.
pub fn parse_prx(text: &str, name: &str) -> Result<SystemDescription, PrxError> {
    let doc = Document::parse(text).map_err(|e| PrxError::Syntax { line: e.pos().row as usize, reason: e.to_string() })?;
    let cx = Ctx { doc: &doc };
    let root = doc.root_element();
    if root.tag_name().name() != "system" {
        return cx.err(root, format!("root element must be <system>, found <{}>", root.tag_name().name()));
    }
    cx.no_attributes(root)?;
    let top = cx.elements(root)?;
    let mut modules_node = None;
    for c in top {
        match c.tag_name().name() {
            "modules" if modules_node.is_none() => modules_node = Some(c),
            "modules" => return cx.err(c, "duplicate <modules>"),
            other => return cx.err(c, format!("unknown element <{other}> in <system>")),
        }
    }
    let Some(modules_node) = modules_node else {
        return cx.err(root, "<system> is missing <modules>");
    };

    let mut modules = Vec::new();
    let mut kernel: Option<(KernelConfig, Node)> = None;
    for m in cx.list(modules_node, "module")? {
        let mut module_name = None;
        for a in m.attributes() {
            match a.name() {
                "name" => module_name = Some(a.value().trim().to_string()),
                other => return cx.err(m, format!("unknown attribute `{other}` on <module>")),
            }
        }
        let Some(module_name) = module_name.filter(|n| !n.is_empty()) else {
            return cx.err(m, "<module> needs a name attribute");
        };
        let children = cx.elements(m)?;
        if !children.is_empty() {
            if let Some((_, first)) = &kernel {
                return cx.err(m, format!("kernel configuration already given at line {}", line_of(&doc, *first)));
            }
            kernel = Some((parse_kernel(&cx, &children)?, m));
        }
        modules.push(ModuleRef { name: module_name, line: line_of(&doc, m) });
    }
    if modules.is_empty() {
        return cx.err(modules_node, "<modules> is empty");
    }

    let kernel = kernel.map(|(k, _)| k);
    if let Some(k) = &kernel {
        k.validate().map_err(|e| PrxError::Config(e.to_string()))?;
        for t in &k.tasks {
            if t.stack_size < 64 || t.stack_size % 16 != 0 {
                return Err(PrxError::Config(format!("task `{}` stack size {} must be a multiple of 16 and at least 64", t.name, t.stack_size)));
            }
        }
    }
    Ok(SystemDescription { name: name.to_string(), modules, kernel })
}

fn parse_kernel<'a, 'i>(cx: &Ctx<'a, 'i>, children: &[Node<'a, 'i>]) -> Result<KernelConfig, PrxError> {
    let mut cfg = KernelConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let mut irq_nodes = Vec::new();
    for c in children {
        let tag = c.tag_name().name();
        if seen.contains(&tag) {
            return cx.err(*c, format!("duplicate <{tag}>"));
        }
        seen.push(tag);
        match tag {
            "tasks" => {
                for t in cx.list(*c, "task")? {
                    let f = cx.record(t, &["name", "entry", "priority", "stack_size"])?;
                    cfg.tasks.push(TaskConfig {
                        name: f[0].0.clone(),
                        entry: f[1].0.clone(),
                        priority: cx.number(&f[2], 255)? as u8,
                        stack_size: cx.number(&f[3], u32::MAX as u64)? as u32,
                    });
                }
            }
            "mutexes" => {
                for m in cx.list(*c, "mutex")? {
                    cfg.mutexes.push(cx.record(m, &["name"])?[0].0.clone());
                }
            }
            "message_queues" => {
                for q in cx.list(*c, "message_queue")? {
                    let f = cx.record(q, &["name", "capacity"])?;
                    cfg.queues.push(QueueConfig { name: f[0].0.clone(), capacity: cx.number(&f[1], u32::MAX as u64)? as u32 });
                }
            }
            "interrupt_events" => irq_nodes = cx.list(*c, "interrupt_event")?,
            other => return cx.err(*c, format!("unknown element <{other}> in <module>")),
        }
    }

    let mut by_priority = cfg.tasks.clone();
    by_priority.sort_by_key(|t| t.priority);
    for w in by_priority.windows(2) {
        if w[0].priority == w[1].priority {
            return Err(PrxError::Config(format!("tasks `{}` and `{}` share priority {}", w[0].name, w[1].name, w[0].priority)));
        }
    }
    cfg.tasks = by_priority;

    for e in irq_nodes {
        let f = cx.record(e, &["name", "id", "task", "sig_set"])?;
        let Some(task) = cfg.tasks.iter().position(|t| t.name == f[2].0) else {
            return cx.err(f[2].1, format!("unknown task `{}`", f[2].0));
        };
        cfg.irq_events.push(IrqEventConfig {
            name: f[0].0.clone(),
            id: cx.number(&f[1], 255)? as u8,
            task: TaskId(task as u8),
            sigs: SignalSet(cx.number(&f[3], 0xffff)? as u16),
        });
    }
    Ok(cfg)
}
