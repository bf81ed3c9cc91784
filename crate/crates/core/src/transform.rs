//! Normalization into 0-reduced, alternating, 1-complete form.
//!
//! Each stage is a separate pass that builds a fresh node table, so each
//! postcondition can be checked on its own. All stages keep the relative
//! order of Or children.

use std::collections::HashMap;

use fixedbitset::FixedBitSet;

use crate::diagram::{LayerIndex, Nfbdd, NfbddBuilder, Node, NodeId, Var};

/// Result of [`normalize`].
#[derive(Clone, Debug)]
pub enum NormalForm {
    Normalized { diagram: Nfbdd, layers: LayerIndex },
    /// The input has no models.
    ConstantFalse,
}

impl NormalForm {
    pub fn diagram(&self) -> Option<&Nfbdd> {
        match self {
            NormalForm::Normalized { diagram, .. } => Some(diagram),
            NormalForm::ConstantFalse => None,
        }
    }

    pub fn is_constant_false(&self) -> bool {
        matches!(self, NormalForm::ConstantFalse)
    }
}

fn mapped(map: &[Option<NodeId>], q: NodeId) -> NodeId {
    map[q.index()].expect("children are mapped before parents")
}

/// Removes `ite(x, 0, 0)` nodes and 0-sink children of Or nodes, to a fixed
/// point. Returns `None` when the source collapses to the 0-sink.
pub fn zero_reduce(b: &Nfbdd) -> Option<Nfbdd> {
    let mut out = NfbddBuilder::new(b.n_vars());
    let mut map: Vec<Option<NodeId>> = vec![None; b.num_nodes()];
    let zero = out.sink(false);
    for &q in b.topological() {
        let new = match b.node(q) {
            Node::False => zero,
            Node::True => out.sink(true),
            Node::Decision { var, hi, lo } => {
                let (hi, lo) = (mapped(&map, *hi), mapped(&map, *lo));
                if hi == zero && lo == zero {
                    zero
                } else {
                    out.decision(*var, hi, lo)
                }
            }
            Node::Or(children) => {
                let kept: Vec<NodeId> =
                    children.iter().map(|&c| mapped(&map, c)).filter(|&c| c != zero).collect();
                if kept.is_empty() {
                    zero
                } else {
                    out.or(kept)
                }
            }
        };
        map[q.index()] = Some(new);
    }
    let source = mapped(&map, b.source());
    if source == zero {
        return None;
    }
    Some(out.build(source).expect("zero reduction keeps the diagram valid"))
}

/// Replaces Or nodes having the 1-sink as a child by the 1-sink, then inlines
/// Or children of Or nodes in place. Expects a 0-reduced input.
pub fn flatten_or(b: &Nfbdd) -> Nfbdd {
    let mut out = NfbddBuilder::new(b.n_vars());
    let mut map: Vec<Option<NodeId>> = vec![None; b.num_nodes()];
    for &q in b.topological() {
        let new = match b.node(q) {
            Node::False => out.sink(false),
            Node::True => out.sink(true),
            Node::Decision { var, hi, lo } => {
                let (hi, lo) = (mapped(&map, *hi), mapped(&map, *lo));
                out.decision(*var, hi, lo)
            }
            Node::Or(children) => {
                let mut flat = Vec::with_capacity(children.len());
                let mut to_true = false;
                for &c in children {
                    let c = mapped(&map, c);
                    match out.node(c) {
                        Node::True => {
                            to_true = true;
                            break;
                        }
                        Node::Or(grandchildren) => flat.extend_from_slice(grandchildren),
                        _ => flat.push(c),
                    }
                }
                if to_true {
                    out.sink(true)
                } else {
                    out.or(flat)
                }
            }
        };
        map[q.index()] = Some(new);
    }
    let source = mapped(&map, b.source());
    out.build(source).expect("flattening keeps the diagram valid")
}

/// Shares padding chains `ite(x, c, c)` per (node, missing variables).
struct Padder {
    memo: HashMap<(NodeId, FixedBitSet), NodeId>,
}

impl Padder {
    /// `c` wrapped in decisions on every variable of `missing`, smallest index
    /// at the top.
    fn pad(&mut self, out: &mut NfbddBuilder, c: NodeId, missing: &FixedBitSet) -> NodeId {
        let slots: Vec<usize> = missing.ones().collect();
        let mut node = c;
        let mut suffix = FixedBitSet::with_capacity(missing.len());
        for &slot in slots.iter().rev() {
            suffix.insert(slot);
            node = *self
                .memo
                .entry((c, suffix.clone()))
                .or_insert_with(|| out.decision(Var::from_slot(slot), node, node));
        }
        node
    }
}

/// Pads children so that every source-to-1-sink path reads every variable
/// exactly once. Expects a 0-reduced, Or-flattened input.
pub fn one_complete(b: &Nfbdd) -> Nfbdd {
    let n = b.n_vars();
    let mut out = NfbddBuilder::new(n);
    let mut map: Vec<Option<NodeId>> = vec![None; b.num_nodes()];
    let mut padder = Padder { memo: HashMap::new() };
    let is_false = |q: NodeId| matches!(b.node(q), Node::False);
    let missing = |want: &FixedBitSet, have: &FixedBitSet| {
        let mut m = want.clone();
        m.difference_with(have);
        m
    };
    for &q in b.topological() {
        let here = b.var_set(q);
        let new = match b.node(q) {
            Node::False => out.sink(false),
            Node::True => out.sink(true),
            Node::Decision { var, hi, lo } => {
                let mut want = here.clone();
                want.set(var.slot(), false);
                let mut pad_child = |c: NodeId, out: &mut NfbddBuilder| {
                    let new_c = mapped(&map, c);
                    if is_false(c) {
                        new_c
                    } else {
                        padder.pad(out, new_c, &missing(&want, b.var_set(c)))
                    }
                };
                let hi = pad_child(*hi, &mut out);
                let lo = pad_child(*lo, &mut out);
                out.decision(*var, hi, lo)
            }
            Node::Or(children) => {
                let padded = children
                    .iter()
                    .map(|&c| padder.pad(&mut out, mapped(&map, c), &missing(here, b.var_set(c))))
                    .collect();
                out.or(padded)
            }
        };
        map[q.index()] = Some(new);
    }
    let mut all = FixedBitSet::with_capacity(n);
    all.insert_range(..);
    let source = padder.pad(&mut out, mapped(&map, b.source()), &missing(&all, b.var_set(b.source())));
    out.build(source).expect("padding keeps the diagram valid")
}

/// Inserts singleton Or nodes so that Or and decision nodes alternate and
/// the source is an Or node. Expects a 0-reduced, flattened, 1-complete
/// input.
pub fn alternate(b: &Nfbdd) -> Nfbdd {
    let mut out = NfbddBuilder::new(b.n_vars());
    let mut map: Vec<Option<NodeId>> = vec![None; b.num_nodes()];
    let mut wrapper: HashMap<NodeId, NodeId> = HashMap::new();
    let mut wrap = |out: &mut NfbddBuilder, c: NodeId| -> NodeId {
        if out.node(c).is_decision() {
            *wrapper.entry(c).or_insert_with(|| out.or(vec![c]))
        } else {
            c
        }
    };
    for &q in b.topological() {
        let new = match b.node(q) {
            Node::False => out.sink(false),
            Node::True => out.sink(true),
            Node::Decision { var, hi, lo } => {
                let hi = wrap(&mut out, mapped(&map, *hi));
                let lo = wrap(&mut out, mapped(&map, *lo));
                out.decision(*var, hi, lo)
            }
            Node::Or(children) => out.or(children.iter().map(|&c| mapped(&map, c)).collect()),
        };
        map[q.index()] = Some(new);
    }
    let source = wrap(&mut out, mapped(&map, b.source()));
    out.build(source).expect("alternation keeps the diagram valid")
}

/// Runs every stage and layers the result.
pub fn normalize(b: &Nfbdd) -> NormalForm {
    let Some(reduced) = zero_reduce(b) else {
        return NormalForm::ConstantFalse;
    };
    debug_assert!(reduced.is_zero_reduced());
    let diagram = if reduced.n_vars() == 0 {
        // Only the 1-sink is left; there are no layers above L_0.
        reduced
    } else {
        let flat = flatten_or(&reduced);
        debug_assert!(flat.is_zero_reduced() && flat.is_or_flat());
        let complete = one_complete(&flat);
        debug_assert!(complete.is_zero_reduced() && complete.is_one_complete());
        let alternating = alternate(&complete);
        debug_assert!(alternating.is_zero_reduced() && alternating.is_alternating());
        alternating
    };
    let layers = diagram.layers().expect("normalized diagrams are layered");
    NormalForm::Normalized { diagram, layers }
}
