//! Seeded random GUI trees and a reference hit test.

use ctxguard_core::gui::{Bounds, GuiNode, GuiTree};
use rand::seq::SliceRandom;
use rand::Rng;

fn uid(n: &GuiNode) -> &str {
    n.extra.iter().find(|(k, _)| k == "uid").map(|(_, v)| v.as_str()).expect("fixture nodes carry uid")
}

pub fn node_uid(n: &GuiNode) -> String {
    uid(n).to_owned()
}

fn sub_rect(rng: &mut impl Rng, b: Bounds) -> Bounds {
    let (w, h) = (b.right - b.left, b.bottom - b.top);
    let l = b.left + rng.gen_range(0..=w / 2);
    let t = b.top + rng.gen_range(0..=h / 2);
    let r = (l + 1 + rng.gen_range(0..=(b.right - l).max(1))).min(b.right);
    let bt = (t + 1 + rng.gen_range(0..=(b.bottom - t).max(1))).min(b.bottom);
    Bounds::new(l, t, r.max(l), bt.max(t))
}

/// Splits `b` into `k` non-overlapping vertical strips.
fn strips(b: Bounds, k: usize) -> Vec<Bounds> {
    let w = (b.right - b.left) / k as i64;
    (0..k as i64).map(|i| Bounds::new(b.left + i * w, b.top, b.left + (i + 1) * w, b.bottom)).collect()
}

fn build(rng: &mut impl Rng, b: Bounds, depth: usize, overlapping: bool, next_uid: &mut usize) -> GuiNode {
    let mut n = GuiNode::new(b, rng.gen_bool(0.6));
    n.resource_id = format!("app:id/n{}", *next_uid);
    n.class = ["Button", "View", "TextView"][rng.gen_range(0..3)].to_owned();
    n.package = "com.fixture".into();
    n.extra.push(("uid".into(), next_uid.to_string()));
    *next_uid += 1;
    if depth < 4 && b.right - b.left >= 8 && b.bottom - b.top >= 8 {
        let k = rng.gen_range(0..=3);
        let rects: Vec<Bounds> = if overlapping {
            (0..k).map(|_| sub_rect(rng, b)).collect()
        } else if k > 0 {
            strips(b, k).into_iter().map(|s| sub_rect(rng, s)).collect()
        } else {
            Vec::new()
        };
        n.children = rects.into_iter().map(|r| build(rng, r, depth + 1, overlapping, next_uid)).collect();
    }
    n
}

/// A random tree rooted at a 1080x1920 screen. With `overlapping == false`
/// sibling bounds never intersect.
pub fn random_tree(rng: &mut impl Rng, overlapping: bool) -> GuiTree {
    let mut next = 0;
    let mut root = build(rng, Bounds::new(0, 0, 1080, 1920), 0, overlapping, &mut next);
    root.clickable = rng.gen_bool(0.3);
    let mut t = GuiTree { roots: vec![root] };
    t.reindex();
    t
}

/// A point inside a random clickable node, if the tree has one with area.
pub fn point_in_clickable(rng: &mut impl Rng, tree: &GuiTree) -> Option<(i64, i64)> {
    let clickable: Vec<&GuiNode> = tree
        .nodes()
        .into_iter()
        .map(|(_, n)| n)
        .filter(|n| n.clickable && n.bounds.right > n.bounds.left && n.bounds.bottom > n.bounds.top)
        .collect();
    let n = clickable.choose(rng)?;
    Some((rng.gen_range(n.bounds.left..n.bounds.right), rng.gen_range(n.bounds.top..n.bounds.bottom)))
}

/// Reference hit test by exhaustive scan.
pub fn reference_locate(tree: &GuiTree, x: i64, y: i64) -> Option<String> {
    let mut best: Option<(usize, usize, String)> = None;
    for (depth, n) in tree.nodes() {
        let b = n.bounds;
        let inside = b.left <= x && x < b.right && b.top <= y && y < b.bottom;
        if n.clickable && inside {
            let key = (depth, n.doc_index);
            if best.as_ref().is_none_or(|(d, i, _)| key > (*d, *i)) {
                best = Some((depth, n.doc_index, uid(n).to_owned()));
            }
        }
    }
    best.map(|(_, _, u)| u)
}

/// Recursively shuffles sibling order and renumbers document indices.
pub fn shuffle_siblings(rng: &mut impl Rng, tree: &GuiTree) -> GuiTree {
    fn walk(rng: &mut impl Rng, n: &mut GuiNode) {
        n.children.shuffle(rng);
        for c in &mut n.children {
            walk(rng, c);
        }
    }
    let mut t = tree.clone();
    for r in &mut t.roots {
        walk(rng, r);
    }
    t.reindex();
    t
}
