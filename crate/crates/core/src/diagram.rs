//! Non-deterministic free BDDs: the node table, validation, model checking,
//! layering and the brute-force counting oracle.

use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of variables up to which [`Nfbdd::count_exact`] runs.
pub const DEFAULT_EXACT_CAP: usize = 24;

/// A Boolean variable, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(u32);

impl Var {
    /// Panics on 0; variables are numbered from 1.
    pub fn new(index: u32) -> Self {
        assert!(index >= 1, "variables are 1-based");
        Var(index)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    /// 0-based slot used by bit vectors.
    pub fn slot(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_slot(slot: usize) -> Self {
        Var(slot as u32 + 1)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Handle into the node table of one diagram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(u32);

impl NodeId {
    pub fn new(index: usize) -> Self {
        NodeId(index as u32)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    /// The 0-sink.
    False,
    /// The 1-sink.
    True,
    /// `ite(var, hi, lo)`; `hi` is followed when `var` is 1.
    Decision { var: Var, hi: NodeId, lo: NodeId },
    /// Guess node. Children are an ordered sequence and may repeat.
    Or(Vec<NodeId>),
}

impl Node {
    /// Children in edge order: `hi` then `lo` for decisions, list order for
    /// Or nodes.
    pub fn children(&self) -> impl Iterator<Item = NodeId> + '_ {
        let (pair, list): ([Option<NodeId>; 2], &[NodeId]) = match self {
            Node::Decision { hi, lo, .. } => ([Some(*hi), Some(*lo)], &[]),
            Node::Or(children) => ([None, None], children.as_slice()),
            Node::False | Node::True => ([None, None], &[]),
        };
        pair.into_iter().flatten().chain(list.iter().copied())
    }

    pub fn out_degree(&self) -> usize {
        match self {
            Node::Decision { .. } => 2,
            Node::Or(children) => children.len(),
            Node::False | Node::True => 0,
        }
    }

    pub fn is_sink(&self) -> bool {
        matches!(self, Node::False | Node::True)
    }

    pub fn is_or(&self) -> bool {
        matches!(self, Node::Or(_))
    }

    pub fn is_decision(&self) -> bool {
        matches!(self, Node::Decision { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SinkKind {
    Zero,
    One,
}

/// One broken structural invariant found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    SourceOutOfRange { source: NodeId },
    DanglingChild { node: NodeId, child: NodeId },
    EmptyOr { node: NodeId },
    VarOutOfRange { node: NodeId, var: u32 },
    DuplicateSink { kind: SinkKind, node: NodeId },
    Cycle { node: NodeId },
    SourceHasParent { source: NodeId },
    MultipleSources { node: NodeId },
    RepeatedVariable { node: NodeId, var: Var },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SourceOutOfRange { source } => {
                write!(f, "source {source} is not a node")
            }
            Violation::DanglingChild { node, child } => {
                write!(f, "node {node} points to undefined node {child}")
            }
            Violation::EmptyOr { node } => write!(f, "or-node {node} has no children"),
            Violation::VarOutOfRange { node, var } => {
                write!(f, "node {node} is labeled by out-of-range variable {var}")
            }
            Violation::DuplicateSink { kind, node } => {
                write!(f, "node {node} duplicates the {kind:?} sink")
            }
            Violation::Cycle { node } => write!(f, "cycle through node {node}"),
            Violation::SourceHasParent { source } => {
                write!(f, "source {source} has incoming edges")
            }
            Violation::MultipleSources { node } => {
                write!(f, "node {node} has no incoming edges but is not the source")
            }
            Violation::RepeatedVariable { node, var } => {
                write!(f, "variable {var} repeated on a path through node {node}")
            }
        }
    }
}

impl Violation {
    /// The same violation with every node id passed through `f`.
    pub fn renumbered(&self, f: impl Fn(NodeId) -> NodeId) -> Violation {
        use Violation::*;
        match *self {
            SourceOutOfRange { source } => SourceOutOfRange { source: f(source) },
            DanglingChild { node, child } => DanglingChild { node: f(node), child: f(child) },
            EmptyOr { node } => EmptyOr { node: f(node) },
            VarOutOfRange { node, var } => VarOutOfRange { node: f(node), var },
            DuplicateSink { kind, node } => DuplicateSink { kind, node: f(node) },
            Cycle { node } => Cycle { node: f(node) },
            SourceHasParent { source } => SourceHasParent { source: f(source) },
            MultipleSources { node } => MultipleSources { node: f(node) },
            RepeatedVariable { node, var } => RepeatedVariable { node: f(node), var },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DiagramError {
    #[error("invalid diagram: {0}")]
    Invalid(ValidationReport),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("assignment does not bind {var}, which node {node} depends on")]
    MissingVariable { node: NodeId, var: Var },
    #[error("{n} variables exceed the brute-force cap of {cap}")]
    CapExceeded { n: usize, cap: usize },
    #[error("diagram is not in normal form: {0}")]
    NotNormalForm(String),
}

/// Partial or total map from variables to bits.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment {
    values: FixedBitSet,
    mask: FixedBitSet,
}

impl Assignment {
    /// The empty assignment over a universe of `n_vars` variables.
    pub fn empty(n_vars: usize) -> Self {
        Assignment {
            values: FixedBitSet::with_capacity(n_vars),
            mask: FixedBitSet::with_capacity(n_vars),
        }
    }

    /// Panics when a variable is listed twice or is out of range.
    pub fn from_pairs(n_vars: usize, pairs: impl IntoIterator<Item = (Var, bool)>) -> Self {
        let mut a = Assignment::empty(n_vars);
        for (var, bit) in pairs {
            assert!(a.get(var).is_none(), "{var} bound twice");
            a.bind(var, bit);
        }
        a
    }

    /// Total assignment over `x1..xn` read from the low bits of `bits`.
    pub fn from_u64(n_vars: usize, bits: u64) -> Self {
        let mut a = Assignment::empty(n_vars);
        for slot in 0..n_vars {
            a.bind(Var::from_slot(slot), bits >> slot & 1 == 1);
        }
        a
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn get(&self, var: Var) -> Option<bool> {
        let slot = var.slot();
        (slot < self.mask.len() && self.mask[slot]).then(|| self.values[slot])
    }

    /// Binds or rebinds `var`.
    pub fn bind(&mut self, var: Var, bit: bool) {
        let slot = var.slot();
        self.mask.insert(slot);
        self.values.set(slot, bit);
    }

    /// `self ⊗ {var ↦ bit}`.
    pub fn extended(&self, var: Var, bit: bool) -> Self {
        let mut a = self.clone();
        a.bind(var, bit);
        a
    }

    pub fn restricted(&self, vars: &FixedBitSet) -> Self {
        let mut mask = self.mask.clone();
        mask.intersect_with(vars);
        let mut values = self.values.clone();
        values.intersect_with(&mask);
        Assignment { values, mask }
    }

    pub fn bound(&self) -> &FixedBitSet {
        &self.mask
    }

    pub fn binds_all(&self, vars: &FixedBitSet) -> bool {
        vars.is_subset(&self.mask)
    }

    /// Bit of a variable by 0-based slot; unbound slots read as 0.
    pub fn bit(&self, slot: usize) -> bool {
        self.values[slot]
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values packed little-endian into 64-bit words, unbound slots as 0.
    pub fn to_words(&self) -> Vec<u64> {
        let mut words = vec![0u64; self.universe().div_ceil(64).max(1)];
        for slot in self.values.ones() {
            words[slot / 64] |= 1 << (slot % 64);
        }
        words
    }

    /// Inverse of [`Assignment::to_words`] for the variables in `vars`.
    pub fn from_words(n_vars: usize, vars: &FixedBitSet, words: &[u64]) -> Self {
        let mut a = Assignment::empty(n_vars);
        for slot in vars.ones() {
            a.bind(Var::from_slot(slot), words[slot / 64] >> (slot % 64) & 1 == 1);
        }
        a
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, slot) in self.mask.ones().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}↦{}", Var::from_slot(slot), self.values[slot] as u8)?;
        }
        write!(f, "}}")
    }
}

/// Checks every structural invariant of a raw node table.
pub fn validate(n_vars: usize, nodes: &[Node], source: NodeId) -> ValidationReport {
    let mut violations = Vec::new();
    let len = nodes.len();
    if source.index() >= len {
        violations.push(Violation::SourceOutOfRange { source });
    }

    let mut seen_false = None;
    let mut seen_true = None;
    let mut in_degree = vec![0usize; len];
    for (i, node) in nodes.iter().enumerate() {
        let id = NodeId::new(i);
        match node {
            Node::False => {
                if seen_false.replace(id).is_some() {
                    violations.push(Violation::DuplicateSink { kind: SinkKind::Zero, node: id });
                }
            }
            Node::True => {
                if seen_true.replace(id).is_some() {
                    violations.push(Violation::DuplicateSink { kind: SinkKind::One, node: id });
                }
            }
            Node::Decision { var, .. } => {
                if var.index() as usize > n_vars {
                    violations.push(Violation::VarOutOfRange { node: id, var: var.index() });
                }
            }
            Node::Or(children) => {
                if children.is_empty() {
                    violations.push(Violation::EmptyOr { node: id });
                }
            }
        }
        for child in node.children() {
            if child.index() >= len {
                violations.push(Violation::DanglingChild { node: id, child });
            } else {
                in_degree[child.index()] += 1;
            }
        }
    }

    for (i, &deg) in in_degree.iter().enumerate() {
        if deg == 0 && i != source.index() {
            violations.push(Violation::MultipleSources { node: NodeId::new(i) });
        }
    }
    if source.index() < len && in_degree[source.index()] > 0 {
        violations.push(Violation::SourceHasParent { source });
    }

    let order = match topological_order(nodes) {
        Ok(order) => order,
        Err(node) => {
            violations.push(Violation::Cycle { node });
            return ValidationReport { violations };
        }
    };
    if violations.iter().any(|v| {
        matches!(v, Violation::DanglingChild { .. } | Violation::VarOutOfRange { .. })
    }) {
        return ValidationReport { violations };
    }

    let vars = var_sets(n_vars, nodes, &order);
    for &id in &order {
        if let Node::Decision { var, hi, lo } = &nodes[id.index()] {
            let slot = var.slot();
            if vars[hi.index()][slot] || vars[lo.index()][slot] {
                violations.push(Violation::RepeatedVariable { node: id, var: *var });
            }
        }
    }
    ValidationReport { violations }
}

/// Children-first order over all nodes, or a node on a cycle. Dangling
/// children are ignored.
fn topological_order(nodes: &[Node]) -> Result<Vec<NodeId>, NodeId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; nodes.len()];
    let mut order = Vec::with_capacity(nodes.len());
    let mut stack: Vec<(usize, Vec<NodeId>, usize)> = Vec::new();
    for start in 0..nodes.len() {
        if mark[start] != Mark::New {
            continue;
        }
        mark[start] = Mark::Open;
        stack.push((start, nodes[start].children().collect(), 0));
        while let Some((node, children, next)) = stack.last_mut() {
            if let Some(&child) = children.get(*next) {
                *next += 1;
                let c = child.index();
                if c >= nodes.len() {
                    continue;
                }
                match mark[c] {
                    Mark::Open => return Err(child),
                    Mark::Done => {}
                    Mark::New => {
                        mark[c] = Mark::Open;
                        stack.push((c, nodes[c].children().collect(), 0));
                    }
                }
            } else {
                let node = *node;
                mark[node] = Mark::Done;
                order.push(NodeId::new(node));
                stack.pop();
            }
        }
    }
    Ok(order)
}

fn var_sets(n_vars: usize, nodes: &[Node], order: &[NodeId]) -> Vec<FixedBitSet> {
    let mut vars = vec![FixedBitSet::with_capacity(n_vars); nodes.len()];
    for &id in order {
        let mut set = FixedBitSet::with_capacity(n_vars);
        if let Node::Decision { var, .. } = &nodes[id.index()] {
            set.insert(var.slot());
        }
        for child in nodes[id.index()].children() {
            set.union_with(&vars[child.index()]);
        }
        vars[id.index()] = set;
    }
    vars
}

/// An immutable, validated nFBDD.
#[derive(Clone, Debug)]
pub struct Nfbdd {
    n_vars: usize,
    nodes: Vec<Node>,
    source: NodeId,
    vars: Vec<FixedBitSet>,
    topo: Vec<NodeId>,
    size: usize,
}

impl Nfbdd {
    /// Validates and wraps a node table. Node ids are kept as given.
    pub fn new(n_vars: usize, nodes: Vec<Node>, source: NodeId) -> Result<Self, DiagramError> {
        let report = validate(n_vars, &nodes, source);
        if !report.is_valid() {
            return Err(DiagramError::Invalid(report));
        }
        let topo = topological_order(&nodes).expect("validated diagrams are acyclic");
        let vars = var_sets(n_vars, &nodes, &topo);
        let size = nodes.iter().map(Node::out_degree).sum();
        Ok(Nfbdd { n_vars, nodes, source, vars, topo, size })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    /// Number of edges.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, q: NodeId) -> &Node {
        &self.nodes[q.index()]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId::new)
    }

    /// All nodes, children before parents.
    pub fn topological(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn contains(&self, q: NodeId) -> bool {
        q.index() < self.nodes.len()
    }

    pub fn false_sink(&self) -> Option<NodeId> {
        self.node_ids().find(|&q| matches!(self.node(q), Node::False))
    }

    pub fn true_sink(&self) -> Option<NodeId> {
        self.node_ids().find(|&q| matches!(self.node(q), Node::True))
    }

    pub fn validate(&self) -> ValidationReport {
        validate(self.n_vars, &self.nodes, self.source)
    }

    /// `var(q)`: the variables labeling decision nodes reachable from `q`.
    pub fn vars(&self, q: NodeId) -> Result<&FixedBitSet, DiagramError> {
        self.vars.get(q.index()).ok_or(DiagramError::UnknownNode(q))
    }

    /// `var(q)` without the range check.
    pub fn var_set(&self, q: NodeId) -> &FixedBitSet {
        &self.vars[q.index()]
    }

    pub fn var_list(&self, q: NodeId) -> Result<Vec<Var>, DiagramError> {
        Ok(self.vars(q)?.ones().map(Var::from_slot).collect())
    }

    /// Whether `alpha` is a model of `q`. `alpha` must bind `var(q)`.
    pub fn evaluate(&self, q: NodeId, alpha: &Assignment) -> Result<bool, DiagramError> {
        let vars = self.vars(q)?;
        if let Some(slot) = vars.ones().find(|&s| s >= alpha.universe() || !alpha.bound()[s]) {
            return Err(DiagramError::MissingVariable { node: q, var: Var::from_slot(slot) });
        }
        Ok(Evaluator::new(self).eval(q, |slot| alpha.bit(slot)))
    }

    /// Exact model count over all `n_vars` variables by enumeration.
    pub fn count_exact(&self) -> Result<u64, DiagramError> {
        self.count_exact_with_cap(DEFAULT_EXACT_CAP)
    }

    pub fn count_exact_with_cap(&self, cap: usize) -> Result<u64, DiagramError> {
        let n = self.n_vars;
        if n > cap || n > 63 {
            return Err(DiagramError::CapExceeded { n, cap: cap.min(63) });
        }
        let mut ev = Evaluator::new(self);
        let mut count = 0;
        for bits in 0..1u64 << n {
            if ev.eval(self.source, |slot| bits >> slot & 1 == 1) {
                count += 1;
            }
        }
        Ok(count)
    }

    /// `mod(q)` as assignments over exactly `var(q)`, in increasing binary
    /// order of the listed variables.
    pub fn models(&self, q: NodeId, cap: usize) -> Result<Vec<Assignment>, DiagramError> {
        let slots: Vec<usize> = self.vars(q)?.ones().collect();
        if slots.len() > cap || slots.len() > 63 {
            return Err(DiagramError::CapExceeded { n: slots.len(), cap: cap.min(63) });
        }
        let mut ev = Evaluator::new(self);
        let mut models = Vec::new();
        let mut values = FixedBitSet::with_capacity(self.n_vars);
        for bits in 0..1u64 << slots.len() {
            values.clear();
            for (i, &slot) in slots.iter().enumerate() {
                values.set(slot, bits >> i & 1 == 1);
            }
            if ev.eval(q, |slot| values[slot]) {
                let mut a = Assignment::empty(self.n_vars);
                for &slot in &slots {
                    a.bind(Var::from_slot(slot), values[slot]);
                }
                models.push(a);
            }
        }
        Ok(models)
    }

    /// `|mod(q)|` over `var(q)`.
    pub fn count_models(&self, q: NodeId, cap: usize) -> Result<u64, DiagramError> {
        let slots: Vec<usize> = self.vars(q)?.ones().collect();
        if slots.len() > cap || slots.len() > 63 {
            return Err(DiagramError::CapExceeded { n: slots.len(), cap: cap.min(63) });
        }
        let mut ev = Evaluator::new(self);
        let mut count = 0;
        let mut values = FixedBitSet::with_capacity(self.n_vars);
        for bits in 0..1u64 << slots.len() {
            for (i, &slot) in slots.iter().enumerate() {
                values.set(slot, bits >> i & 1 == 1);
            }
            if ev.eval(q, |slot| values[slot]) {
                count += 1;
            }
        }
        Ok(count)
    }

    /// No `ite(x, 0, 0)` and no Or node with the 0-sink as a child.
    pub fn is_zero_reduced(&self) -> bool {
        self.nodes.iter().all(|node| match node {
            Node::Decision { hi, lo, .. } => {
                !(self.is_false(*hi) && self.is_false(*lo))
            }
            Node::Or(children) => children.iter().all(|&c| !self.is_false(c)),
            _ => true,
        })
    }

    /// No Or node has an Or node or a sink among its children.
    pub fn is_or_flat(&self) -> bool {
        self.nodes.iter().all(|node| match node {
            Node::Or(children) => children.iter().all(|&c| self.node(c).is_decision()),
            _ => true,
        })
    }

    /// Every source-to-1-sink path reads every variable exactly once.
    pub fn is_one_complete(&self) -> bool {
        if self.var_set(self.source).count_ones(..) != self.n_vars {
            return false;
        }
        self.node_ids().all(|q| {
            let here = self.var_set(q);
            match self.node(q) {
                Node::Decision { var, hi, lo } => [*hi, *lo].iter().all(|&c| {
                    if self.is_false(c) {
                        return true;
                    }
                    let mut expected = here.clone();
                    expected.set(var.slot(), false);
                    *self.var_set(c) == expected
                }),
                Node::Or(children) => children
                    .iter()
                    .all(|&c| self.is_false(c) || self.var_set(c) == here),
                _ => true,
            }
        })
    }

    /// Source is an Or node, Or nodes have only decision children and
    /// decision nodes have only Or or sink children.
    pub fn is_alternating(&self) -> bool {
        if !self.node(self.source).is_or() {
            return false;
        }
        self.nodes.iter().all(|node| match node {
            Node::Or(children) => children.iter().all(|&c| self.node(c).is_decision()),
            Node::Decision { hi, lo, .. } => [*hi, *lo].iter().all(|&c| {
                let child = self.node(c);
                child.is_or() || child.is_sink()
            }),
            _ => true,
        })
    }

    /// Whether the diagram is the degenerate `n_vars = 0` tautology, the one
    /// satisfiable input with no alternating form.
    pub fn is_constant_true(&self) -> bool {
        matches!(self.node(self.source), Node::True)
    }

    pub fn is_constant_false(&self) -> bool {
        matches!(self.node(self.source), Node::False)
    }

    /// Layering of a 1-complete, 0-reduced, alternating diagram.
    pub fn layers(&self) -> Result<LayerIndex, DiagramError> {
        let trivial = self.n_vars == 0 && self.is_constant_true();
        if !trivial {
            if !self.is_zero_reduced() {
                return Err(DiagramError::NotNormalForm("not 0-reduced".into()));
            }
            if !self.is_alternating() {
                return Err(DiagramError::NotNormalForm("not alternating".into()));
            }
            if !self.is_one_complete() {
                return Err(DiagramError::NotNormalForm("not 1-complete".into()));
            }
        }
        let layer_of: Vec<usize> = self
            .node_ids()
            .map(|q| {
                let k = self.var_set(q).count_ones(..);
                match self.node(q) {
                    Node::False | Node::True => 0,
                    Node::Decision { .. } => 2 * k - 1,
                    Node::Or(_) => 2 * k,
                }
            })
            .collect();
        for q in self.node_ids() {
            for c in self.node(q).children() {
                if !self.is_false(c) && layer_of[c.index()] + 1 != layer_of[q.index()] {
                    return Err(DiagramError::NotNormalForm(format!(
                        "child {c} of {q} is not in the layer below"
                    )));
                }
            }
        }
        let top = 2 * self.n_vars;
        debug_assert_eq!(layer_of[self.source.index()], top);
        let mut layers = vec![Vec::new(); top + 1];
        for q in self.node_ids() {
            layers[layer_of[q.index()]].push(q);
        }
        Ok(LayerIndex { layers, layer_of })
    }

    fn is_false(&self, q: NodeId) -> bool {
        matches!(self.node(q), Node::False)
    }
}

/// Layers `L_0 .. L_2n` of a normal-form diagram.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerIndex {
    layers: Vec<Vec<NodeId>>,
    layer_of: Vec<usize>,
}

impl LayerIndex {
    pub fn layer(&self, i: usize) -> &[NodeId] {
        &self.layers[i]
    }

    pub fn layer_of(&self, q: NodeId) -> usize {
        self.layer_of[q.index()]
    }

    /// Highest layer index, `2n`.
    pub fn top(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = &[NodeId]> {
        self.layers.iter().map(Vec::as_slice)
    }
}

/// Memoized model checker reusable across many queries on one diagram.
pub struct Evaluator<'a> {
    diagram: &'a Nfbdd,
    stamp: Vec<u32>,
    value: Vec<bool>,
    epoch: u32,
}

impl<'a> Evaluator<'a> {
    pub fn new(diagram: &'a Nfbdd) -> Self {
        let n = diagram.num_nodes();
        Evaluator { diagram, stamp: vec![0; n], value: vec![false; n], epoch: 0 }
    }

    /// Evaluates `q` reading variable bits through `lookup` (0-based slots).
    /// Each node is visited at most once per call.
    pub fn eval(&mut self, q: NodeId, lookup: impl Fn(usize) -> bool) -> bool {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        self.visit(q, &lookup)
    }

    fn visit(&mut self, q: NodeId, lookup: &impl Fn(usize) -> bool) -> bool {
        let i = q.index();
        if self.stamp[i] == self.epoch {
            return self.value[i];
        }
        let result = match self.diagram.node(q) {
            Node::False => false,
            Node::True => true,
            Node::Decision { var, hi, lo } => {
                let next = if lookup(var.slot()) { *hi } else { *lo };
                self.visit(next, lookup)
            }
            Node::Or(children) => {
                let mut any = false;
                for &c in children {
                    if self.visit(c, lookup) {
                        any = true;
                        break;
                    }
                }
                any
            }
        };
        self.stamp[i] = self.epoch;
        self.value[i] = result;
        result
    }
}

/// Append-only node table that merges duplicate sinks.
#[derive(Clone, Debug, Default)]
pub struct NfbddBuilder {
    n_vars: usize,
    nodes: Vec<Node>,
    false_sink: Option<NodeId>,
    true_sink: Option<NodeId>,
}

impl NfbddBuilder {
    pub fn new(n_vars: usize) -> Self {
        NfbddBuilder { n_vars, ..Default::default() }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn sink(&mut self, value: bool) -> NodeId {
        let slot = if value { &mut self.true_sink } else { &mut self.false_sink };
        if let Some(id) = *slot {
            return id;
        }
        let id = NodeId::new(self.nodes.len());
        *slot = Some(id);
        self.nodes.push(if value { Node::True } else { Node::False });
        id
    }

    pub fn decision(&mut self, var: Var, hi: NodeId, lo: NodeId) -> NodeId {
        self.push(Node::Decision { var, hi, lo })
    }

    pub fn or(&mut self, children: Vec<NodeId>) -> NodeId {
        self.push(Node::Or(children))
    }

    pub fn node(&self, q: NodeId) -> &Node {
        &self.nodes[q.index()]
    }

    pub fn push(&mut self, node: Node) -> NodeId {
        match node {
            Node::False => self.sink(false),
            Node::True => self.sink(true),
            node => {
                let id = NodeId::new(self.nodes.len());
                self.nodes.push(node);
                id
            }
        }
    }

    /// Keeps the nodes reachable from `source`, renumbered canonically: the
    /// sinks first (0 then 1), then the rest in depth-first post-order
    /// visiting children in edge order.
    pub fn build(self, source: NodeId) -> Result<Nfbdd, DiagramError> {
        let (nodes, source) = canonical_order(&self.nodes, source);
        Nfbdd::new(self.n_vars, nodes, source)
    }
}

/// Renumbers the part of `nodes` reachable from `source` canonically.
/// Panics on cycles or dangling ids.
pub(crate) fn canonical_order(nodes: &[Node], source: NodeId) -> (Vec<Node>, NodeId) {
    const UNSEEN: u32 = u32::MAX;
    let mut new_id = vec![UNSEEN; nodes.len()];
    let mut order: Vec<usize> = Vec::new();

    let mut reachable = vec![false; nodes.len()];
    let mut stack = vec![source.index()];
    reachable[source.index()] = true;
    while let Some(i) = stack.pop() {
        for c in nodes[i].children() {
            if !reachable[c.index()] {
                reachable[c.index()] = true;
                stack.push(c.index());
            }
        }
    }
    for kind in [Node::False, Node::True] {
        if let Some(i) = (0..nodes.len()).find(|&i| reachable[i] && nodes[i] == kind) {
            new_id[i] = order.len() as u32;
            order.push(i);
        }
    }

    let mut stack: Vec<(usize, usize)> = Vec::new();
    if new_id[source.index()] == UNSEEN {
        stack.push((source.index(), 0));
    }
    let mut open = vec![false; nodes.len()];
    open[source.index()] = true;
    while let Some(&mut (i, ref mut next)) = stack.last_mut() {
        if let Some(c) = nodes[i].children().nth(*next) {
            *next += 1;
            let c = c.index();
            if new_id[c] == UNSEEN {
                assert!(!open[c], "cycle through node {c}");
                open[c] = true;
                stack.push((c, 0));
            }
        } else {
            new_id[i] = order.len() as u32;
            order.push(i);
            stack.pop();
        }
    }

    let remap = |q: NodeId| NodeId(new_id[q.index()]);
    let table = order
        .iter()
        .map(|&i| match &nodes[i] {
            Node::Decision { var, hi, lo } => {
                Node::Decision { var: *var, hi: remap(*hi), lo: remap(*lo) }
            }
            Node::Or(children) => Node::Or(children.iter().map(|&c| remap(c)).collect()),
            sink => sink.clone(),
        })
        .collect();
    (table, remap(source))
}
