//! Independent oracles shared by the integration and acceptance tests.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use testmap_core::classfile::{MethodModel, Operand};
use testmap_core::metrics::TrivialKind;
use testmap_core::treemap::{squarify_layout, LayoutBox, MapTree, Rect};

/// Labels taken from reading the fixture sources, not from the detector.
pub fn hand_labels() -> Vec<(&'static str, Option<TrivialKind>)> {
    use TrivialKind::*;
    vec![
        ("metrics/Accessors.<init>()V", Some(ParamAssignConstructor)),
        ("metrics/Accessors.<init>(Ljava/lang/String;I)V", Some(ParamAssignConstructor)),
        ("metrics/Accessors.<init>(I)V", None),
        ("metrics/Accessors.getName()Ljava/lang/String;", Some(Getter)),
        ("metrics/Accessors.getCount()I", Some(Getter)),
        ("metrics/Accessors.getTotal()J", Some(Getter)),
        ("metrics/Accessors.getRef()Ljava/lang/Object;", Some(Getter)),
        ("metrics/Accessors.setName(Ljava/lang/String;)V", Some(Setter)),
        ("metrics/Accessors.setTotal(J)V", Some(Setter)),
        ("metrics/Accessors.noop()V", Some(Empty)),
        ("metrics/Accessors.answer()I", Some(ConstantReturn)),
        ("metrics/Accessors.label()Ljava/lang/String;", Some(ConstantReturn)),
        ("metrics/Accessors.nothing()Ljava/lang/Object;", Some(ConstantReturn)),
        ("metrics/Accessors.yes()Z", Some(ConstantReturn)),
        ("metrics/Accessors.big()J", Some(ConstantReturn)),
        ("metrics/Accessors.getBoxed()I", None),
        ("metrics/Accessors.setBoxed(I)V", None),
        ("metrics/Accessors.getUpper()Ljava/lang/String;", None),
        ("metrics/Accessors.setCountPlusOne(I)V", None),
        ("metrics/Accessors.twice(I)I", None),
        ("metrics/Accessors.copyFrom(Lmetrics/Accessors;)V", None),
        ("metrics/Branches.<init>()V", Some(ParamAssignConstructor)),
        ("metrics/Branches.abs(I)I", None),
        ("metrics/Branches.sign(I)I", None),
        ("metrics/Branches.check(Ljava/lang/Object;)V", None),
        ("fig7/Product.setClock(Ljava/time/Clock;)V", Some(Setter)),
        ("fig7/Product.isExpired()Z", None),
        ("fig9/Message.getBody()[B", Some(Getter)),
        ("fig9/Message.<init>([B)V", Some(ParamAssignConstructor)),
        ("fig9/App.<init>()V", None),
        ("fig10/App.<init>(Lfig10/Client;)V", Some(ParamAssignConstructor)),
        ("mail/MailSender.isConnected()Z", None),
        ("shapes/Square.name()Ljava/lang/String;", Some(ConstantReturn)),
        ("shapes/Unit.<init>()V", None),
        ("shapes/Circle.area()D", None),
    ]
}

/// Complexity read off the source: one plus each `if`, loop condition,
/// short-circuit operand and ternary, plus distinct switch arms beyond the first.
pub fn hand_complexity() -> Vec<(&'static str, u32)> {
    vec![
        ("metrics/Branches.abs(I)I", 2),
        ("metrics/Branches.sign(I)I", 3),
        ("metrics/Branches.sum([I)I", 2),
        ("metrics/Branches.dense(I)I", 4),
        ("metrics/Branches.sparse(I)I", 4),
        ("metrics/Branches.shared(I)I", 3),
        ("metrics/Branches.both(ZZ)Z", 3),
        ("metrics/Branches.either(ZZZ)Z", 4),
        ("metrics/Branches.indexOf([II)I", 3),
        ("metrics/Branches.safe(Ljava/lang/Object;)Ljava/lang/String;", 2),
        ("metrics/Branches.nested(II)I", 3),
        ("metrics/Branches.countdown(I)I", 2),
        ("metrics/Branches.doLoop(I)I", 2),
        ("metrics/Branches.check(Ljava/lang/Object;)V", 2),
        ("metrics/Branches.grade(I)Ljava/lang/String;", 5),
        ("metrics/Branches.mixed(I[I)I", 5),
        ("metrics/Accessors.twice(I)I", 1),
    ]
}

const IF_FIRST: u8 = 153;
const IF_LAST: u8 = 166;
const IFNULL: u8 = 198;
const IFNONNULL: u8 = 199;
const GOTO: u8 = 167;
const GOTO_W: u8 = 200;
const TABLESWITCH: u8 = 170;
const LOOKUPSWITCH: u8 = 171;
const ATHROW: u8 = 191;

fn is_conditional(op: u8) -> bool {
    (IF_FIRST..=IF_LAST).contains(&op) || op == IFNULL || op == IFNONNULL
}

fn ends_block(op: u8) -> bool {
    is_conditional(op) || matches!(op, GOTO | GOTO_W | TABLESWITCH | LOOKUPSWITCH | ATHROW | 169 | 172..=177)
}

/// `E - N + 2` over basic blocks with one virtual exit and no exception edges.
pub fn cfg_complexity(m: &MethodModel) -> u32 {
    let code = &m.instructions;
    let index: BTreeMap<u32, usize> = code.iter().enumerate().map(|(i, ins)| (ins.offset, i)).collect();
    let mut leaders: BTreeSet<usize> = BTreeSet::from([0]);
    for (i, ins) in code.iter().enumerate() {
        match &ins.operand {
            Operand::Branch(t) => {
                leaders.insert(index[t]);
            }
            Operand::Switch(s) => {
                leaders.insert(index[&s.default]);
                leaders.extend(s.cases.iter().map(|(_, t)| index[t]));
            }
            _ => {}
        }
        if ends_block(ins.opcode.0) && i + 1 < code.len() {
            leaders.insert(i + 1);
        }
    }
    for h in &m.exception_table {
        leaders.insert(index[&h.handler]);
    }
    let starts: Vec<usize> = leaders.into_iter().collect();
    let block_of = |i: usize| starts.partition_point(|&s| s <= i) - 1;
    let exit = starts.len();
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    for b in 0..starts.len() {
        let end = starts.get(b + 1).copied().unwrap_or(code.len()) - 1;
        let last = &code[end];
        let op = last.opcode.0;
        let next = || if end + 1 < code.len() { block_of(end + 1) } else { exit };
        match &last.operand {
            Operand::Branch(t) => {
                edges.insert((b, block_of(index[t])));
                if is_conditional(op) {
                    edges.insert((b, next()));
                }
            }
            Operand::Switch(s) => {
                edges.insert((b, block_of(index[&s.default])));
                for (_, t) in &s.cases {
                    edges.insert((b, block_of(index[t])));
                }
            }
            _ if ends_block(op) => {
                edges.insert((b, exit));
            }
            _ => {
                edges.insert((b, next()));
            }
        }
    }
    let n = starts.len() + 1;
    (edges.len() + 2 - n) as u32
}

pub fn arb_tree() -> impl Strategy<Value = MapTree> {
    let leaf = (1u32..1000).prop_map(|w| MapTree::leaf("leaf", w as f64));
    let tree = leaf.prop_recursive(3, 200, 12, |inner| {
        proptest::collection::vec(inner, 1..12).prop_map(|children| MapTree::group("group", children))
    });
    proptest::collection::vec(tree, 1..12)
        .prop_map(|children| MapTree::group("root", children))
        .prop_filter("at most 200 leaves", |t| t.leaf_count() <= 200)
}

fn inside(inner: &Rect, outer: &Rect) -> bool {
    let eps = 1e-7 * (1.0 + outer.w.max(outer.h));
    inner.x >= outer.x - eps
        && inner.y >= outer.y - eps
        && inner.x + inner.w <= outer.x + outer.w + eps
        && inner.y + inner.h <= outer.y + outer.h + eps
}

fn overlap(a: &Rect, b: &Rect) -> f64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    w.max(0.0) * h.max(0.0)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Leaf areas within 0.5% of their weight share, children exactly tiling
/// their parent, and no two siblings overlapping.
pub fn check_layout(tree: &MapTree, canvas: Rect) -> Result<(), String> {
    let boxes = squarify_layout(tree, canvas, 0.0).map_err(|e| e.to_string())?;
    let nodes = tree.preorder();
    if boxes.len() != nodes.len() {
        return Err(format!("{} boxes for {} nodes", boxes.len(), nodes.len()));
    }
    let total = tree.total_weight();
    let mut children: Vec<Vec<&LayoutBox>> = vec![Vec::new(); boxes.len()];
    for b in &boxes {
        if let Some(p) = b.parent {
            children[p].push(b);
        }
        if b.leaf {
            let want = nodes[b.index].weight / total;
            let got = b.rect.area() / canvas.area();
            if (got - want).abs() / want > 0.005 {
                return Err(format!("leaf {} area share {got} vs {want}", b.index));
            }
        }
    }
    for (p, kids) in children.iter().enumerate() {
        if kids.is_empty() {
            continue;
        }
        let parent = &boxes[p].rect;
        let sum: f64 = kids.iter().map(|k| k.rect.area()).sum();
        if !close(sum, parent.area()) {
            return Err(format!("children of {p} cover {sum} of {}", parent.area()));
        }
        for (i, a) in kids.iter().enumerate() {
            if !inside(&a.rect, parent) {
                return Err(format!("{a:?} leaves its parent {parent:?}"));
            }
            for b in &kids[i + 1..] {
                if overlap(&a.rect, &b.rect) > 1e-9 * parent.area() {
                    return Err(format!("{a:?} overlaps {b:?}"));
                }
            }
        }
    }
    Ok(())
}
