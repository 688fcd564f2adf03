//! GUI hierarchy dumps, hit testing and element-to-function mapping.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{lookup_function, ContextSpace, FunctionEntry, GuiBinding, LookupError, Selector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bounds {
    pub left: i64,
    pub top: i64,
    pub right: i64,
    pub bottom: i64,
}

impl Bounds {
    pub fn new(left: i64, top: i64, right: i64, bottom: i64) -> Self {
        Bounds { left, top, right, bottom }
    }

    /// Half-open containment: the right and bottom edges are outside.
    pub fn contains(&self, x: i64, y: i64) -> bool {
        self.left <= x && x < self.right && self.top <= y && y < self.bottom
    }

    pub fn overlaps(&self, other: &Bounds) -> bool {
        self.left < other.right && other.left < self.right && self.top < other.bottom && other.top < self.bottom
    }

    pub fn parse(text: &str) -> Option<Bounds> {
        let rest = text.trim().strip_prefix('[')?;
        let (first, rest) = rest.split_once("][")?;
        let second = rest.strip_suffix(']')?;
        let pair = |s: &str| -> Option<(i64, i64)> {
            let (a, b) = s.split_once(',')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        };
        let (left, top) = pair(first)?;
        let (right, bottom) = pair(second)?;
        (left <= right && top <= bottom).then_some(Bounds { left, top, right, bottom })
    }
}

impl std::fmt::Display for Bounds {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{},{}][{},{}]", self.left, self.top, self.right, self.bottom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuiNode {
    pub bounds: Bounds,
    pub package: String,
    pub class: String,
    pub resource_id: String,
    pub clickable: bool,
    pub children: Vec<GuiNode>,
    pub doc_index: usize,
    /// Remaining attributes in document order.
    pub extra: Vec<(String, String)>,
}

impl GuiNode {
    pub fn new(bounds: Bounds, clickable: bool) -> Self {
        GuiNode {
            bounds,
            package: String::new(),
            class: String::new(),
            resource_id: String::new(),
            clickable,
            children: Vec::new(),
            doc_index: 0,
            extra: Vec::new(),
        }
    }

    pub fn binding(&self) -> GuiBinding {
        GuiBinding::new(&self.package, &self.class, &self.resource_id)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GuiTree {
    pub roots: Vec<GuiNode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuiParseError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("node {doc_index}: malformed bounds `{text}`")]
    Bounds { doc_index: usize, text: String },
    #[error("node {doc_index}: missing bounds")]
    MissingBounds { doc_index: usize },
    #[error("node {doc_index}: clickable must be \"true\" or \"false\", got `{text}`")]
    Clickable { doc_index: usize, text: String },
}

const KNOWN: [&str; 5] = ["bounds", "package", "class", "resource-id", "clickable"];

fn convert(node: roxmltree::Node, next: &mut usize) -> Result<GuiNode, GuiParseError> {
    let doc_index = *next;
    *next += 1;
    let bounds_text = node.attribute("bounds").ok_or(GuiParseError::MissingBounds { doc_index })?;
    let bounds = Bounds::parse(bounds_text)
        .ok_or_else(|| GuiParseError::Bounds { doc_index, text: bounds_text.to_owned() })?;
    let clickable = match node.attribute("clickable") {
        None | Some("false") => false,
        Some("true") => true,
        Some(other) => return Err(GuiParseError::Clickable { doc_index, text: other.to_owned() }),
    };
    let attr = |name| node.attribute(name).unwrap_or_default().to_owned();
    let extra = node
        .attributes()
        .filter(|a| !KNOWN.contains(&a.name()))
        .map(|a| (a.name().to_owned(), a.value().to_owned()))
        .collect();
    let mut out = GuiNode {
        bounds,
        package: attr("package"),
        class: attr("class"),
        resource_id: attr("resource-id"),
        clickable,
        children: Vec::new(),
        doc_index,
        extra,
    };
    collect_nodes(node, next, &mut out.children)?;
    Ok(out)
}

/// Converts the nearest `node` descendants of `parent`, looking through any
/// non-`node` wrapper elements.
fn collect_nodes(parent: roxmltree::Node, next: &mut usize, out: &mut Vec<GuiNode>) -> Result<(), GuiParseError> {
    for child in parent.children().filter(|c| c.is_element()) {
        if child.has_tag_name("node") {
            out.push(convert(child, next)?);
        } else {
            collect_nodes(child, next, out)?;
        }
    }
    Ok(())
}

pub fn parse_tree(document: &[u8]) -> Result<GuiTree, GuiParseError> {
    let text = std::str::from_utf8(document).map_err(|e| GuiParseError::Xml(e.to_string()))?;
    let doc = roxmltree::Document::parse(text).map_err(|e| GuiParseError::Xml(e.to_string()))?;
    let mut next = 0;
    let mut roots = Vec::new();
    let root = doc.root_element();
    if root.has_tag_name("node") {
        roots.push(convert(root, &mut next)?);
    } else {
        collect_nodes(root, &mut next, &mut roots)?;
    }
    Ok(GuiTree { roots })
}

fn escape(text: &str, out: &mut String) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\n' => out.push_str("&#10;"),
            '\t' => out.push_str("&#9;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(c),
        }
    }
}

fn write_node(node: &GuiNode, depth: usize, out: &mut String) {
    out.push_str(&"  ".repeat(depth + 1));
    out.push_str("<node");
    let mut attr = |name: &str, value: &str| {
        let _ = write!(out, " {name}=\"");
        escape(value, out);
        out.push('"');
    };
    attr("package", &node.package);
    attr("class", &node.class);
    attr("resource-id", &node.resource_id);
    attr("clickable", if node.clickable { "true" } else { "false" });
    attr("bounds", &node.bounds.to_string());
    for (k, v) in &node.extra {
        attr(k, v);
    }
    if node.children.is_empty() {
        out.push_str(" />\n");
    } else {
        out.push_str(">\n");
        for c in &node.children {
            write_node(c, depth + 1, out);
        }
        out.push_str(&"  ".repeat(depth + 1));
        out.push_str("</node>\n");
    }
}

/// Writes the tree in the dump dialect accepted by [`parse_tree`].
pub fn serialize_tree(tree: &GuiTree) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<hierarchy>\n");
    for r in &tree.roots {
        write_node(r, 0, &mut out);
    }
    out.push_str("</hierarchy>\n");
    out
}

impl GuiTree {
    /// Renumbers `doc_index` in document order.
    pub fn reindex(&mut self) {
        fn walk(n: &mut GuiNode, next: &mut usize) {
            n.doc_index = *next;
            *next += 1;
            for c in &mut n.children {
                walk(c, next);
            }
        }
        let mut next = 0;
        for r in &mut self.roots {
            walk(r, &mut next);
        }
    }

    /// Every node with its depth, in document order.
    pub fn nodes(&self) -> Vec<(usize, &GuiNode)> {
        fn walk<'a>(n: &'a GuiNode, depth: usize, out: &mut Vec<(usize, &'a GuiNode)>) {
            out.push((depth, n));
            for c in &n.children {
                walk(c, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        for r in &self.roots {
            walk(r, 0, &mut out);
        }
        out
    }
}

/// The deepest clickable node containing the point; equal depths go to the
/// later node in document order. Non-clickable containers are transparent.
pub fn locate(tree: &GuiTree, x: i64, y: i64) -> Option<&GuiNode> {
    tree.nodes()
        .into_iter()
        .filter(|(_, n)| n.clickable && n.bounds.contains(x, y))
        .max_by_key(|(depth, n)| (*depth, n.doc_index))
        .map(|(_, n)| n)
}

pub fn map_to_function<'s>(space: &'s ContextSpace, node: &GuiNode) -> Result<Option<&'s FunctionEntry>, LookupError> {
    lookup_function(space, Selector::Gui(&node.binding()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GuiActionKind {
    Click,
    LongClick,
    Input { text: String },
    Scroll { direction: String },
}

/// A coordinate-based agent action. Input and scroll are hit-tested at their
/// anchor point like clicks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiAction {
    #[serde(flatten)]
    pub kind: GuiActionKind,
    pub x: u32,
    pub y: u32,
}

impl GuiAction {
    pub fn click(x: u32, y: u32) -> Self {
        GuiAction { kind: GuiActionKind::Click, x, y }
    }

    /// Parameters exposed to function-parameter contexts.
    pub fn params(&self) -> std::collections::BTreeMap<String, serde_json::Value> {
        let mut p = std::collections::BTreeMap::new();
        match &self.kind {
            GuiActionKind::Input { text } => {
                p.insert("text".to_owned(), text.clone().into());
            }
            GuiActionKind::Scroll { direction } => {
                p.insert("direction".to_owned(), direction.clone().into());
            }
            GuiActionKind::Click | GuiActionKind::LongClick => {}
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FunctionEntry, SecurityLevel};

    const NESTED: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<hierarchy rotation="0">
  <node package="com.bank" class="android.widget.FrameLayout" resource-id="" clickable="false" bounds="[0,0][1080,1920]">
    <node package="com.bank" class="android.widget.LinearLayout" resource-id="com.bank:id/row" clickable="true" bounds="[0,100][1080,300]">
      <node package="com.bank" class="android.widget.Button" resource-id="com.bank:id/send" clickable="true" bounds="[800,150][1000,250]" text="Send" />
    </node>
  </node>
</hierarchy>
"#;

    #[test]
    fn bounds_parse() {
        assert_eq!(Bounds::parse("[0,0][100,50]"), Some(Bounds::new(0, 0, 100, 50)));
        assert_eq!(Bounds::parse("[0,0][100"), None);
        assert_eq!(Bounds::parse("[10,0][5,5]"), None);
        assert_eq!(Bounds::parse("[a,0][5,5]"), None);
    }

    #[test]
    fn single_node() {
        let t = parse_tree(br#"<node bounds="[0,0][100,50]" clickable="true"/>"#).unwrap();
        assert_eq!(t.roots[0].bounds, Bounds::new(0, 0, 100, 50));
        assert!(matches!(
            parse_tree(br#"<node bounds="[0,0][100"/>"#),
            Err(GuiParseError::Bounds { doc_index: 0, .. })
        ));
        assert!(matches!(parse_tree(b"<node"), Err(GuiParseError::Xml(_))));
    }

    #[test]
    fn nested_depth_and_indices() {
        let t = parse_tree(NESTED.as_bytes()).unwrap();
        let nodes = t.nodes();
        assert_eq!(nodes.iter().map(|(d, n)| (*d, n.doc_index)).collect::<Vec<_>>(), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(nodes[2].1.extra, vec![("text".to_string(), "Send".to_string())]);
    }

    #[test]
    fn locate_rules() {
        let t = parse_tree(NESTED.as_bytes()).unwrap();
        assert_eq!(locate(&t, 900, 200).unwrap().resource_id, "com.bank:id/send");
        assert_eq!(locate(&t, 100, 200).unwrap().resource_id, "com.bank:id/row");
        // the right edge is outside
        assert_eq!(locate(&t, 1000, 200).unwrap().resource_id, "com.bank:id/row");
        // only the non-clickable root contains this point
        assert!(locate(&t, 100, 1000).is_none());
        assert!(locate(&t, 5000, 5000).is_none());
    }

    #[test]
    fn overlapping_siblings_prefer_later() {
        let xml = r#"<hierarchy>
<node bounds="[0,0][100,100]" clickable="true" resource-id="a"/>
<node bounds="[50,50][150,150]" clickable="true" resource-id="b"/>
</hierarchy>"#;
        let t = parse_tree(xml.as_bytes()).unwrap();
        assert_eq!(locate(&t, 75, 75).unwrap().resource_id, "b");
        assert_eq!(locate(&t, 25, 25).unwrap().resource_id, "a");
    }

    #[test]
    fn serialize_round_trip() {
        let t = parse_tree(NESTED.as_bytes()).unwrap();
        let again = parse_tree(serialize_tree(&t).as_bytes()).unwrap();
        assert_eq!(t, again);
        let mut odd = t.clone();
        odd.roots[0].extra.push(("text".into(), "a \"q\" & <b>\n".into()));
        assert_eq!(parse_tree(serialize_tree(&odd).as_bytes()).unwrap(), odd);
    }

    #[test]
    fn mapping_precedence() {
        let mut space = ContextSpace::new("bank", "1");
        let mut full = FunctionEntry::new("send", SecurityLevel::Normal);
        full.gui_binding = Some(GuiBinding::new("com.bank", "android.widget.Button", "com.bank:id/send"));
        let mut wild = FunctionEntry::new("open_row", SecurityLevel::Normal);
        wild.gui_binding = Some(GuiBinding::new("com.bank", "", "com.bank:id/row"));
        space.functions.as_mut().unwrap().extend([full, wild]);
        let t = parse_tree(NESTED.as_bytes()).unwrap();
        let nodes = t.nodes();
        assert_eq!(map_to_function(&space, nodes[2].1).unwrap().unwrap().function_id, "send");
        assert_eq!(map_to_function(&space, nodes[1].1).unwrap().unwrap().function_id, "open_row");
        assert!(map_to_function(&space, nodes[0].1).unwrap().is_none());
    }

    #[test]
    fn action_json_shape() {
        let a: GuiAction = serde_json::from_str(r#"{"kind":"input","text":"hi","x":3,"y":4}"#).unwrap();
        assert_eq!(a.kind, GuiActionKind::Input { text: "hi".into() });
        assert_eq!(a.params()["text"], "hi");
        assert!(serde_json::from_str::<GuiAction>(r#"{"kind":"click","x":-1,"y":4}"#).is_err());
    }
}
