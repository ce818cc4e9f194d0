//! Text serialization of SPN models.
//!
//! Models are written in canonical form: reachable nodes only, in
//! depth-first post-order from the root, single-child inner nodes collapsed,
//! ids equal to positions, floats with 17 significant digits. Loading a
//! canonical file and saving it again reproduces it byte for byte.
//!
//! ```text
//! {
//!   "n_vars": 2,
//!   "root": 2,
//!   "nodes": [
//!     {"id": 0, "kind": "leaf", "children": [], "var": 0, "p": 2.9999999999999999e-1},
//!     {"id": 1, "kind": "leaf", "children": [], "var": 1, "p": 5.0000000000000000e-1},
//!     {"id": 2, "kind": "product", "children": [0, 1]}
//!   ]
//! }
//! ```
//!
//! Training slices are not part of the model; they go to an optional sidecar
//! file (`{"slices": [[rows...] | null, ...]}`) indexed by canonical id.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Result, SpnError};
use crate::graph::{Node, NodeId, SliceInfo, SpnGraph};
use crate::scope::VarId;
use crate::validate::validate;

fn fmt_f64(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").unwrap();
}

fn join_ids(out: &mut String, ids: &[NodeId]) {
    out.push('[');
    for (i, c) in ids.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{}", c.0).unwrap();
    }
    out.push(']');
}

fn canonical(graph: &SpnGraph) -> Result<SpnGraph> {
    let report = validate(graph);
    if !report.is_valid() {
        return Err(SpnError::Invalid(report));
    }
    let root = graph.root_or_err()?;
    Ok(graph.compacted(&[root]).0)
}

/// Serializes the network below the root in canonical form.
pub fn to_model_string(graph: &SpnGraph) -> Result<String> {
    let g = canonical(graph)?;
    Ok(render(&g))
}

fn render(g: &SpnGraph) -> String {
    let mut out = String::new();
    writeln!(out, "{{").unwrap();
    writeln!(out, "  \"n_vars\": {},", g.n_vars()).unwrap();
    writeln!(out, "  \"root\": {},", g.root().expect("canonical graphs are rooted").0).unwrap();
    writeln!(out, "  \"nodes\": [").unwrap();
    for (i, node) in g.nodes().iter().enumerate() {
        write!(out, "    {{\"id\": {i}, \"kind\": \"{}\", \"children\": ", node.kind_name()).unwrap();
        join_ids(&mut out, node.children());
        match node {
            Node::Sum { weights, .. } => {
                out.push_str(", \"weights\": [");
                for (j, w) in weights.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    fmt_f64(&mut out, *w);
                }
                out.push(']');
            }
            Node::Product { .. } => {}
            Node::Leaf { var, p } => {
                write!(out, ", \"var\": {}, \"p\": ", var.0).unwrap();
                fmt_f64(&mut out, *p);
            }
        }
        out.push('}');
        if i + 1 < g.len() {
            out.push(',');
        }
        out.push('\n');
    }
    writeln!(out, "  ]").unwrap();
    out.push_str("}\n");
    out
}

fn render_slices(g: &SpnGraph) -> String {
    let mut out = String::from("{\"slices\": [\n");
    for i in 0..g.len() {
        match g.slice(NodeId(i as u32)) {
            Some(s) => {
                out.push('[');
                for (j, r) in s.rows().iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    write!(out, "{r}").unwrap();
                }
                out.push(']');
            }
            None => out.push_str("null"),
        }
        if i + 1 < g.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]}\n");
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| SpnError::io(path, e))
}

pub fn save_model(graph: &SpnGraph, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &to_model_string(graph)?)
}

/// Writes the model plus a slice sidecar aligned with its canonical ids.
pub fn save_model_with_slices(graph: &SpnGraph, model_path: impl AsRef<Path>, slices_path: impl AsRef<Path>) -> Result<()> {
    let g = canonical(graph)?;
    write_file(model_path.as_ref(), &render(&g))?;
    write_file(slices_path.as_ref(), &render_slices(&g))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    n_vars: usize,
    root: u32,
    nodes: Vec<NodeRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: u32,
    kind: String,
    #[serde(default)]
    children: Vec<u32>,
    weights: Option<Vec<f64>>,
    var: Option<u32>,
    p: Option<f64>,
}

#[derive(Deserialize)]
struct SlicesFile {
    slices: Vec<Option<Vec<u32>>>,
}

fn json_err(path: &Path, e: serde_json::Error) -> SpnError {
    SpnError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses and validates a model. `origin` only labels error messages.
pub fn from_model_str(text: &str, origin: &Path) -> Result<SpnGraph> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| json_err(origin, e))?;
    let bad = |message: String| SpnError::Parse {
        path: origin.to_path_buf(),
        line: 0,
        column: 0,
        message,
    };
    let mut position: HashMap<u32, u32> = HashMap::with_capacity(file.nodes.len());
    for (i, rec) in file.nodes.iter().enumerate() {
        if position.insert(rec.id, i as u32).is_some() {
            return Err(bad(format!("duplicate node id {}", rec.id)));
        }
    }
    // Unknown ids map past the arena end so validation reports them.
    let remap = |id: u32| NodeId(position.get(&id).copied().unwrap_or(file.nodes.len() as u32 + id));
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for rec in &file.nodes {
        let children: Vec<NodeId> = rec.children.iter().map(|&c| remap(c)).collect();
        let node = match rec.kind.as_str() {
            "sum" => Node::Sum {
                children,
                weights: rec
                    .weights
                    .clone()
                    .ok_or_else(|| bad(format!("sum node {} has no weights", rec.id)))?,
            },
            "product" => Node::Product { children },
            "leaf" => {
                if !children.is_empty() {
                    return Err(bad(format!("leaf node {} has children", rec.id)));
                }
                Node::Leaf {
                    var: VarId(rec.var.ok_or_else(|| bad(format!("leaf node {} has no var", rec.id)))?),
                    p: rec.p.ok_or_else(|| bad(format!("leaf node {} has no p", rec.id)))?,
                }
            }
            other => return Err(bad(format!("unknown node kind {other:?}"))),
        };
        nodes.push(node);
    }
    let root = position
        .get(&file.root)
        .map(|&p| NodeId(p))
        .ok_or_else(|| bad(format!("root {} is not a node", file.root)))?;
    let graph = SpnGraph::from_parts(file.n_vars, nodes, Some(root));
    let report = validate(&graph);
    if !report.is_valid() {
        return Err(SpnError::Invalid(report));
    }
    Ok(graph)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SpnGraph> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SpnError::io(path, e))?;
    from_model_str(&text, path)
}

/// Attaches slices from a sidecar file to an already loaded graph.
pub fn load_slices(graph: &mut SpnGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SpnError::io(path, e))?;
    let file: SlicesFile = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    if file.slices.len() != graph.len() {
        return Err(SpnError::Parse {
            path: path.to_path_buf(),
            line: 0,
            column: 0,
            message: format!("{} slices for {} nodes", file.slices.len(), graph.len()),
        });
    }
    for (i, s) in file.slices.into_iter().enumerate() {
        if let Some(rows) = s {
            graph.set_slice(NodeId(i as u32), SliceInfo::new(rows));
        }
    }
    Ok(())
}

pub fn load_model_with_slices(model_path: impl AsRef<Path>, slices_path: impl AsRef<Path>) -> Result<SpnGraph> {
    let mut g = load_model(model_path)?;
    load_slices(&mut g, slices_path)?;
    Ok(g)
}
