//! Derivation paths: the canonical accepting path of a model, resolving Or
//! nodes by the first child the model satisfies.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::diagram::{Assignment, DiagramError, Nfbdd, Node, NodeId};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("assignment {alpha} is not a model of node {node}")]
    NotAModel { node: NodeId, alpha: String },
    #[error(transparent)]
    Diagram(#[from] DiagramError),
}

/// Label of the edge entering a path vertex from its predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    /// Decision edge by the value of the tested variable.
    Bit(bool),
    /// Or edge by child position.
    Child(usize),
}

/// Vertices run from the 1-sink up to the target node; `edges[i]` connects
/// `vertices[i]` to `vertices[i + 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DerivationPath {
    pub vertices: Vec<NodeId>,
    pub edges: Vec<EdgeLabel>,
}

impl DerivationPath {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn target(&self) -> NodeId {
        *self.vertices.last().expect("paths contain the 1-sink")
    }

    pub fn position(&self, q: NodeId) -> Option<usize> {
        self.vertices.iter().position(|&v| v == q)
    }
}

/// `path(α, q)`. `alpha` must bind `var(q)`.
pub fn derivation_path(b: &Nfbdd, q: NodeId, alpha: &Assignment) -> Result<DerivationPath, PathError> {
    if !b.evaluate(q, alpha)? {
        return Err(PathError::NotAModel { node: q, alpha: alpha.to_string() });
    }
    let mut top_down = Vec::new();
    let mut node = q;
    loop {
        match b.node(node) {
            Node::True => break,
            Node::False => unreachable!("models never reach the 0-sink"),
            Node::Decision { var, hi, lo } => {
                let bit = alpha.get(*var).expect("evaluate checked var(q)");
                top_down.push((node, EdgeLabel::Bit(bit)));
                node = if bit { *hi } else { *lo };
            }
            Node::Or(children) => {
                let (i, &c) = children
                    .iter()
                    .enumerate()
                    .find(|(_, &c)| b.evaluate(c, alpha).unwrap_or(false))
                    .expect("a model of an Or node satisfies some child");
                top_down.push((node, EdgeLabel::Child(i)));
                node = c;
            }
        }
    }
    let mut vertices = vec![node];
    let mut edges = Vec::with_capacity(top_down.len());
    for (v, e) in top_down.into_iter().rev() {
        edges.push(e);
        vertices.push(v);
    }
    Ok(DerivationPath { vertices, edges })
}

/// Index `i` of the last common prefix node: the largest `i` with equal
/// `vertices[..=i]` and `edges[..i]`.
pub fn lcpn_index(p: &DerivationPath, other: &DerivationPath) -> usize {
    let mut i = 0;
    while i + 1 < p.vertices.len()
        && i + 1 < other.vertices.len()
        && p.edges[i] == other.edges[i]
        && p.vertices[i + 1] == other.vertices[i + 1]
    {
        i += 1;
    }
    i
}

/// The last common prefix node of two paths. Both start at the 1-sink.
pub fn lcpn(p: &DerivationPath, other: &DerivationPath) -> NodeId {
    debug_assert_eq!(p.vertices[0], other.vertices[0]);
    p.vertices[lcpn_index(p, other)]
}

/// Classes `I(α, q, ℓ)` keyed by path position `ℓ`: the models of `q` whose
/// derivation path has its last common prefix node with `path(α, q)` at
/// position `ℓ`. `α` itself lands in the top class. Positions without
/// members are present with empty classes.
pub fn divergence_classes(
    b: &Nfbdd,
    q: NodeId,
    alpha: &Assignment,
    cap: usize,
) -> Result<(DerivationPath, BTreeMap<usize, Vec<Assignment>>), PathError> {
    let path = derivation_path(b, q, alpha)?;
    let mut classes: BTreeMap<usize, Vec<Assignment>> =
        (0..path.vertices.len()).map(|l| (l, Vec::new())).collect();
    for other in b.models(q, cap)? {
        let other_path = derivation_path(b, q, &other)?;
        classes.entry(lcpn_index(&path, &other_path)).or_default().push(other);
    }
    Ok((path, classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{NfbddBuilder, Var};

    fn v(i: u32) -> Var {
        Var::new(i)
    }

    #[test]
    fn sink_path_is_trivial() {
        let d = Nfbdd::new(0, vec![Node::True], NodeId::new(0)).unwrap();
        let p = derivation_path(&d, d.source(), &Assignment::empty(0)).unwrap();
        assert_eq!(p.vertices, vec![d.source()]);
        assert!(p.edges.is_empty());
    }

    #[test]
    fn decision_path_takes_the_assigned_edge() {
        let mut b = NfbddBuilder::new(1);
        let t = b.sink(true);
        let f = b.sink(false);
        let root = b.decision(v(1), t, f);
        let d = b.build(root).unwrap();
        let alpha = Assignment::from_pairs(1, [(v(1), true)]);
        let p = derivation_path(&d, d.source(), &alpha).unwrap();
        assert_eq!(p.vertices, vec![d.true_sink().unwrap(), d.source()]);
        assert_eq!(p.edges, vec![EdgeLabel::Bit(true)]);
        let not_model = Assignment::from_pairs(1, [(v(1), false)]);
        assert!(matches!(
            derivation_path(&d, d.source(), &not_model),
            Err(PathError::NotAModel { .. })
        ));
    }

    #[test]
    fn or_routes_through_first_child() {
        let mut b = NfbddBuilder::new(1);
        let t = b.sink(true);
        let f = b.sink(false);
        let a = b.decision(v(1), t, f);
        let c = b.decision(v(1), t, t);
        let root = b.or(vec![c, a]);
        let d = b.build(root).unwrap();
        let Node::Or(children) = d.node(d.source()).clone() else { panic!() };
        let alpha = Assignment::from_pairs(1, [(v(1), true)]);
        let p = derivation_path(&d, d.source(), &alpha).unwrap();
        assert_eq!(p.vertices[1], children[0]);
        assert_eq!(p.edges[1], EdgeLabel::Child(0));
    }

    #[test]
    fn parallel_edges_diverge_below_the_shared_node() {
        // ite(x1, c, c) with c = ite(x2, T, T)
        let mut b = NfbddBuilder::new(2);
        let t = b.sink(true);
        let c = b.decision(v(2), t, t);
        let root = b.decision(v(1), c, c);
        let d = b.build(root).unwrap();
        let a0 = Assignment::from_pairs(2, [(v(1), false), (v(2), true)]);
        let a1 = Assignment::from_pairs(2, [(v(1), true), (v(2), true)]);
        let p0 = derivation_path(&d, d.source(), &a0).unwrap();
        let p1 = derivation_path(&d, d.source(), &a1).unwrap();
        assert_eq!(lcpn(&p0, &p1), p0.vertices[1]);
        assert_eq!(lcpn(&p0, &p0), d.source());
        let a2 = Assignment::from_pairs(2, [(v(1), true), (v(2), false)]);
        let p2 = derivation_path(&d, d.source(), &a2).unwrap();
        assert_eq!(lcpn(&p1, &p2), d.true_sink().unwrap());
    }

    #[test]
    fn single_model_has_only_the_self_class() {
        let mut b = NfbddBuilder::new(2);
        let t = b.sink(true);
        let f = b.sink(false);
        let x2 = b.decision(v(2), t, f);
        let root = b.decision(v(1), x2, f);
        let d = b.build(root).unwrap();
        let alpha = Assignment::from_pairs(2, [(v(1), true), (v(2), true)]);
        let (path, classes) = divergence_classes(&d, d.source(), &alpha, 8).unwrap();
        let top = path.vertices.len() - 1;
        for (l, members) in &classes {
            assert_eq!(members.len(), usize::from(*l == top), "class {l}");
        }
    }
}
