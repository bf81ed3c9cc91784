//! Text formats, the DNF compiler and random instance generators.
//!
//! nFBDD files are line oriented:
//!
//! ```text
//! c comment
//! p nfbdd <n_vars> <n_nodes>
//! <id> F
//! <id> T
//! <id> d <var> <hi_id> <lo_id>
//! <id> o <k> <child_1> ... <child_k>
//! s <source_id>
//! ```
//!
//! Ids are positive and may be referenced before their defining line. The
//! order of Or children in the file is the children order of the node, and
//! the sampler's union step depends on it.
//!
//! DNF files use `p dnf <n_vars> <n_terms>` followed by one term per line,
//! written as signed literals terminated by `0`.

use std::collections::HashMap;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use thiserror::Error;

use crate::diagram::{canonical_order, validate, Nfbdd, NfbddBuilder, Node, NodeId, Var};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: node id {id} defined twice")]
    RepeatedId { line: usize, id: u64 },
    #[error("undefined node id {id} (referenced on line {line})")]
    UndefinedId { line: usize, id: u64 },
    #[error("line {line}: variable {var} out of range 1..={n_vars}")]
    VarOutOfRange { line: usize, var: i64, n_vars: usize },
    #[error("line {line}: contradictory term, variable {var} repeated")]
    RepeatedVariable { line: usize, var: u32 },
    #[error("invalid diagram: {0}")]
    Invalid(String),
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.first() {
            None => None,
            Some(t) if t.starts_with('c') => None,
            Some(_) => Some((i + 1, tokens)),
        }
    })
}

fn number<T: std::str::FromStr>(line: usize, token: Option<&&str>, what: &str) -> Result<T, ParseError> {
    let token = token.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    token.parse().map_err(|_| syntax(line, format!("expected {what}, found `{token}`")))
}

enum RawNode {
    False,
    True,
    Decision { var: u32, hi: u64, lo: u64 },
    Or(Vec<u64>),
}

pub fn parse_nfbdd(text: &str) -> Result<Nfbdd, ParseError> {
    let mut header: Option<(usize, usize)> = None;
    let mut raw: Vec<(usize, u64, RawNode)> = Vec::new();
    let mut source: Option<(usize, u64)> = None;
    let mut last_line = 0;

    for (line, tokens) in content_lines(text) {
        last_line = line;
        match tokens[0] {
            "p" => {
                if header.is_some() {
                    return Err(syntax(line, "second header line"));
                }
                if tokens.get(1) != Some(&"nfbdd") {
                    return Err(syntax(line, "expected `p nfbdd <n_vars> <n_nodes>`"));
                }
                let n_vars = number(line, tokens.get(2), "variable count")?;
                let n_nodes = number(line, tokens.get(3), "node count")?;
                if tokens.len() > 4 {
                    return Err(syntax(line, "trailing tokens after header"));
                }
                header = Some((n_vars, n_nodes));
            }
            "s" => {
                if header.is_none() {
                    return Err(syntax(line, "source line before header"));
                }
                if source.is_some() {
                    return Err(syntax(line, "second source line"));
                }
                let id = number(line, tokens.get(1), "source id")?;
                if tokens.len() > 2 {
                    return Err(syntax(line, "trailing tokens after source id"));
                }
                source = Some((line, id));
            }
            _ => {
                let Some((n_vars, _)) = header else {
                    return Err(syntax(line, "node line before header"));
                };
                if source.is_some() {
                    return Err(syntax(line, "node line after source line"));
                }
                let id: u64 = number(line, tokens.first(), "node id")?;
                if id == 0 {
                    return Err(syntax(line, "node ids must be positive"));
                }
                let kind = tokens.get(1).ok_or_else(|| syntax(line, "missing node kind"))?;
                let (node, arity) = match *kind {
                    "F" => (RawNode::False, 2),
                    "T" => (RawNode::True, 2),
                    "d" => {
                        let var: i64 = number(line, tokens.get(2), "variable")?;
                        if var < 1 || var as usize > n_vars {
                            return Err(ParseError::VarOutOfRange { line, var, n_vars });
                        }
                        let hi = number(line, tokens.get(3), "hi child id")?;
                        let lo = number(line, tokens.get(4), "lo child id")?;
                        (RawNode::Decision { var: var as u32, hi, lo }, 5)
                    }
                    "o" => {
                        let k: usize = number(line, tokens.get(2), "child count")?;
                        let children = (0..k)
                            .map(|i| number(line, tokens.get(3 + i), "child id"))
                            .collect::<Result<Vec<u64>, _>>()?;
                        (RawNode::Or(children), 3 + k)
                    }
                    other => return Err(syntax(line, format!("unknown node kind `{other}`"))),
                };
                if tokens.len() != arity {
                    return Err(syntax(line, "wrong number of tokens for node"));
                }
                raw.push((line, id, node));
            }
        }
    }

    let Some((n_vars, n_nodes)) = header else {
        return Err(syntax(last_line.max(1), "missing header"));
    };
    let Some((source_line, source_id)) = source else {
        return Err(syntax(last_line.max(1), "missing source line"));
    };
    if raw.len() != n_nodes {
        return Err(syntax(
            last_line,
            format!("header declares {n_nodes} nodes, found {}", raw.len()),
        ));
    }

    // File id -> table index; duplicate sinks share one entry.
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut file_id: Vec<u64> = Vec::new();
    let mut sinks = [None, None];
    for (line, id, node) in &raw {
        if index.contains_key(id) {
            return Err(ParseError::RepeatedId { line: *line, id: *id });
        }
        let slot = match node {
            RawNode::False | RawNode::True => {
                let which = matches!(node, RawNode::True) as usize;
                *sinks[which].get_or_insert_with(|| {
                    file_id.push(*id);
                    file_id.len() - 1
                })
            }
            _ => {
                file_id.push(*id);
                file_id.len() - 1
            }
        };
        index.insert(*id, slot);
    }
    let resolve = |line: usize, id: u64| {
        index.get(&id).map(|&i| NodeId::new(i)).ok_or(ParseError::UndefinedId { line, id })
    };

    let mut nodes: Vec<Option<Node>> = vec![None; file_id.len()];
    for (line, id, node) in &raw {
        let slot = index[id];
        let node = match node {
            RawNode::False => Node::False,
            RawNode::True => Node::True,
            RawNode::Decision { var, hi, lo } => Node::Decision {
                var: Var::new(*var),
                hi: resolve(*line, *hi)?,
                lo: resolve(*line, *lo)?,
            },
            RawNode::Or(children) => Node::Or(
                children.iter().map(|&c| resolve(*line, c)).collect::<Result<_, _>>()?,
            ),
        };
        nodes[slot].get_or_insert(node);
    }
    let nodes: Vec<Node> = nodes.into_iter().map(|n| n.expect("every slot defined")).collect();
    let source = resolve(source_line, source_id)?;

    let report = validate(n_vars, &nodes, source);
    if !report.is_valid() {
        let message = report
            .violations
            .iter()
            .map(|v| v.renumbered(|q| NodeId::new(file_id[q.index()] as usize)).to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(ParseError::Invalid(message));
    }
    let (nodes, source) = canonical_order(&nodes, source);
    Nfbdd::new(n_vars, nodes, source).map_err(|e| ParseError::Invalid(e.to_string()))
}

/// Writes `b` with ids `1..` in topological order (children first).
pub fn serialize_nfbdd(b: &Nfbdd) -> String {
    let order = b.topological();
    let mut id = vec![0usize; b.num_nodes()];
    for (i, q) in order.iter().enumerate() {
        id[q.index()] = i + 1;
    }
    let mut out = String::new();
    writeln!(out, "p nfbdd {} {}", b.n_vars(), order.len()).unwrap();
    for &q in order {
        let i = id[q.index()];
        match b.node(q) {
            Node::False => writeln!(out, "{i} F"),
            Node::True => writeln!(out, "{i} T"),
            Node::Decision { var, hi, lo } => {
                writeln!(out, "{i} d {} {} {}", var.index(), id[hi.index()], id[lo.index()])
            }
            Node::Or(children) => {
                write!(out, "{i} o {}", children.len()).unwrap();
                for c in children {
                    write!(out, " {}", id[c.index()]).unwrap();
                }
                writeln!(out)
            }
        }
        .unwrap();
    }
    writeln!(out, "s {}", id[b.source().index()]).unwrap();
    out
}

/// A literal is a variable with a polarity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Literal {
    pub var: Var,
    pub positive: bool,
}

impl Literal {
    pub fn from_dimacs(lit: i64) -> Self {
        Literal { var: Var::new(lit.unsigned_abs() as u32), positive: lit > 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DnfFormula {
    pub n_vars: usize,
    pub terms: Vec<Vec<Literal>>,
}

impl DnfFormula {
    /// Truth value under the assignment packed in the low bits of `bits`.
    pub fn evaluate(&self, bits: u64) -> bool {
        self.terms.iter().any(|term| {
            term.iter().all(|lit| (bits >> lit.var.slot() & 1 == 1) == lit.positive)
        })
    }

    /// Model count by truth table. Panics past 63 variables.
    pub fn count_truth_table(&self) -> u64 {
        assert!(self.n_vars < 64);
        (0..1u64 << self.n_vars).filter(|&bits| self.evaluate(bits)).count() as u64
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p dnf {} {}\n", self.n_vars, self.terms.len());
        for term in &self.terms {
            for lit in term {
                let v = lit.var.index() as i64;
                write!(out, "{} ", if lit.positive { v } else { -v }).unwrap();
            }
            out.push_str("0\n");
        }
        out
    }
}

pub fn parse_dnf(text: &str) -> Result<DnfFormula, ParseError> {
    let mut header: Option<(usize, usize)> = None;
    let mut terms = Vec::new();
    let mut last_line = 0;
    for (line, tokens) in content_lines(text) {
        last_line = line;
        if tokens[0] == "p" {
            if header.is_some() {
                return Err(syntax(line, "second header line"));
            }
            if tokens.get(1) != Some(&"dnf") {
                return Err(syntax(line, "expected `p dnf <n_vars> <n_terms>`"));
            }
            let n_vars = number(line, tokens.get(2), "variable count")?;
            let n_terms = number(line, tokens.get(3), "term count")?;
            if tokens.len() > 4 {
                return Err(syntax(line, "trailing tokens after header"));
            }
            header = Some((n_vars, n_terms));
            continue;
        }
        let Some((n_vars, _)) = header else {
            return Err(syntax(line, "term before header"));
        };
        let lits: Vec<i64> = tokens
            .iter()
            .map(|t| t.parse().map_err(|_| syntax(line, format!("expected literal, found `{t}`"))))
            .collect::<Result<_, _>>()?;
        let Some((&0, body)) = lits.split_last() else {
            return Err(syntax(line, "term must end with 0"));
        };
        let mut seen = FixedBitSet::with_capacity(n_vars);
        let mut term = Vec::with_capacity(body.len());
        for &lit in body {
            if lit == 0 {
                return Err(syntax(line, "0 inside a term"));
            }
            let var = lit.unsigned_abs();
            if var as usize > n_vars {
                return Err(ParseError::VarOutOfRange { line, var: lit, n_vars });
            }
            let slot = var as usize - 1;
            if seen.put(slot) {
                return Err(ParseError::RepeatedVariable { line, var: var as u32 });
            }
            term.push(Literal::from_dimacs(lit));
        }
        terms.push(term);
    }
    let Some((n_vars, n_terms)) = header else {
        return Err(syntax(last_line.max(1), "missing header"));
    };
    if terms.len() != n_terms {
        return Err(syntax(
            last_line,
            format!("header declares {n_terms} terms, found {}", terms.len()),
        ));
    }
    Ok(DnfFormula { n_vars, terms })
}

/// One decision chain per term below a root Or node. Chains test variables
/// in ascending index order. A formula without terms compiles to the bare
/// 0-sink.
pub fn dnf_to_nfbdd(f: &DnfFormula) -> Nfbdd {
    let mut b = NfbddBuilder::new(f.n_vars);
    if f.terms.is_empty() {
        let zero = b.sink(false);
        return b.build(zero).expect("0-sink diagram is valid");
    }
    let one = b.sink(true);
    let chains: Vec<NodeId> = f
        .terms
        .iter()
        .map(|term| {
            let mut lits = term.clone();
            lits.sort_by_key(|l| l.var);
            let mut node = one;
            for lit in lits.iter().rev() {
                let zero = b.sink(false);
                node = if lit.positive {
                    b.decision(lit.var, node, zero)
                } else {
                    b.decision(lit.var, zero, node)
                };
            }
            node
        })
        .collect();
    let root = b.or(chains);
    b.build(root).expect("term chains are free")
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenError {
    #[error("need at least one variable")]
    NoVariables,
    #[error("target of {0} edges is below the minimum of 4")]
    TargetTooSmall(usize),
}

/// Random free nFBDD over `n` variables with roughly `target_edges` edges.
///
/// Nodes are built bottom-up. A decision node only picks a variable absent
/// from both children's variable sets, so freeness holds by construction.
/// Parentless nodes are preferred as children and whatever remains at the
/// end is joined under one Or source.
pub fn gen_random(n: usize, target_edges: usize, seed: u64) -> Result<Nfbdd, GenError> {
    if n == 0 {
        return Err(GenError::NoVariables);
    }
    if target_edges < 4 {
        return Err(GenError::TargetTooSmall(target_edges));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut b = NfbddBuilder::new(n);
    let zero = b.sink(false);
    let one = b.sink(true);
    let mut vars: Vec<FixedBitSet> = vec![FixedBitSet::with_capacity(n); 2];
    let mut inner: Vec<NodeId> = Vec::new();
    let mut roots: Vec<NodeId> = Vec::new();
    let mut edges = 0usize;

    loop {
        let pending = if roots.len() > 1 { roots.len() } else { 0 };
        if !roots.is_empty() && edges + pending >= target_edges {
            break;
        }
        let pick = |rng: &mut Xoshiro256PlusPlus, roots: &[NodeId], inner: &[NodeId]| {
            if !roots.is_empty() && rng.gen_bool(0.6) {
                roots[rng.gen_range(0..roots.len())]
            } else if !inner.is_empty() && rng.gen_bool(0.3) {
                inner[rng.gen_range(0..inner.len())]
            } else if rng.gen_bool(0.65) {
                one
            } else {
                zero
            }
        };

        let node = if roots.len() >= 2 && rng.gen_bool(0.3) {
            let k = rng.gen_range(2..=3).min(roots.len());
            Node::Or(roots.choose_multiple(&mut rng, k).copied().collect())
        } else {
            let mut hi = pick(&mut rng, &roots, &inner);
            let mut lo = pick(&mut rng, &roots, &inner);
            let free = |hi: NodeId, lo: NodeId| {
                let mut used = vars[hi.index()].clone();
                used.union_with(&vars[lo.index()]);
                (0..n).filter(|&s| !used[s]).collect::<Vec<usize>>()
            };
            let mut options = free(hi, lo);
            if options.is_empty() {
                lo = if rng.gen_bool(0.5) { one } else { zero };
                options = free(hi, lo);
            }
            if options.is_empty() {
                hi = one;
                options = free(hi, lo);
            }
            let slot = *options.choose(&mut rng).expect("sinks leave every variable free");
            Node::Decision { var: Var::from_slot(slot), hi, lo }
        };

        let mut set = FixedBitSet::with_capacity(n);
        if let Node::Decision { var, .. } = &node {
            set.insert(var.slot());
        }
        for c in node.children() {
            set.union_with(&vars[c.index()]);
            roots.retain(|&r| r != c);
        }
        edges += node.out_degree();
        let id = b.push(node);
        vars.push(set);
        inner.push(id);
        roots.push(id);
    }

    let source = if roots.len() == 1 { roots[0] } else { b.or(roots) };
    Ok(b.build(source).expect("generator output is free by construction"))
}

/// Random DNF with `n_terms` terms of 1 to `max_len` distinct literals.
pub fn gen_random_dnf(n: usize, n_terms: usize, max_len: usize, seed: u64) -> DnfFormula {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let slots: Vec<usize> = (0..n).collect();
    let terms = (0..n_terms)
        .map(|_| {
            let len = rng.gen_range(1..=max_len.clamp(1, n.max(1)));
            slots
                .choose_multiple(&mut rng, len.min(n))
                .map(|&s| Literal { var: Var::from_slot(s), positive: rng.gen_bool(0.5) })
                .collect()
        })
        .collect();
    DnfFormula { n_vars: n, terms }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_decision() {
        let b = parse_nfbdd("p nfbdd 1 3\n1 F\n2 T\n3 d 1 2 1\ns 3\n").unwrap();
        assert_eq!(b.count_exact().unwrap(), 1);
        assert_eq!(b.size(), 2);
    }

    #[test]
    fn forward_references_and_comments() {
        let text = "c a comment\np nfbdd 2 5\n5 o 2 3 4\n3 d 1 2 1\n4 d 2 2 1\n1 F\n2 T\ns 5\n";
        let b = parse_nfbdd(text).unwrap();
        assert_eq!(b.count_exact().unwrap(), 3);
    }

    #[test]
    fn undefined_id_is_named() {
        let err = parse_nfbdd("p nfbdd 1 2\n1 T\n2 d 1 1 9\ns 2\n").unwrap_err();
        assert_eq!(err, ParseError::UndefinedId { line: 3, id: 9 });
        assert!(err.to_string().contains('9'));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_nfbdd("p nfbdd 1 1\n1 X\ns 1\n").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { line: 2, .. }));
        let err = parse_nfbdd("p nfbdd 1 2\n1 T\n1 F\ns 1\n").unwrap_err();
        assert_eq!(err, ParseError::RepeatedId { line: 3, id: 1 });
        let err = parse_nfbdd("p nfbdd 1 2\n1 T\n2 d 2 1 1\ns 2\n").unwrap_err();
        assert!(matches!(err, ParseError::VarOutOfRange { line: 3, var: 2, .. }));
    }

    #[test]
    fn duplicate_sinks_are_merged() {
        let text = "p nfbdd 1 4\n1 T\n2 F\n3 T\n4 d 1 3 2\ns 4\n";
        let b = parse_nfbdd(text).unwrap();
        assert_eq!(b.num_nodes(), 3);
        assert_eq!(b.count_exact().unwrap(), 1);
    }

    #[test]
    fn non_free_file_is_rejected() {
        let text = "p nfbdd 1 4\n1 T\n2 F\n3 d 1 1 2\n4 d 1 3 2\ns 4\n";
        let err = parse_nfbdd(text).unwrap_err();
        assert!(matches!(err, ParseError::Invalid(ref m) if m.contains("x1 repeated")));
    }

    #[test]
    fn sink_only_serializes_to_two_body_lines() {
        let b = parse_nfbdd("p nfbdd 0 1\n1 T\ns 1\n").unwrap();
        assert_eq!(serialize_nfbdd(&b), "p nfbdd 0 1\n1 T\ns 1\n");
    }

    #[test]
    fn dnf_parsing() {
        let f = parse_dnf("p dnf 2 2\n1 0\n2 0\n").unwrap();
        assert_eq!(f.terms.len(), 2);
        assert_eq!(f.terms[0], vec![Literal::from_dimacs(1)]);
        let f = parse_dnf("p dnf 3 1\n1 -2 3 0\n").unwrap();
        assert_eq!(
            f.terms[0],
            vec![Literal::from_dimacs(1), Literal::from_dimacs(-2), Literal::from_dimacs(3)]
        );
        assert_eq!(f.count_truth_table(), 1);
        let err = parse_dnf("p dnf 1 1\n1 -1 0\n").unwrap_err();
        assert_eq!(err, ParseError::RepeatedVariable { line: 2, var: 1 });
        assert!(parse_dnf("p dnf 1 1\n1\n").is_err());
        assert!(parse_dnf("p dnf 1 2\n1 0\n").is_err());
    }

    #[test]
    fn dnf_compilation_counts() {
        let f = parse_dnf("p dnf 2 2\n1 0\n2 0\n").unwrap();
        assert_eq!(dnf_to_nfbdd(&f).count_exact().unwrap(), 3);
        let f = parse_dnf("p dnf 2 1\n1 -2 0\n").unwrap();
        assert_eq!(dnf_to_nfbdd(&f).count_exact().unwrap(), 1);
        let empty = DnfFormula { n_vars: 3, terms: vec![] };
        let b = dnf_to_nfbdd(&empty);
        assert!(b.is_constant_false());
        assert_eq!(serialize_nfbdd(&b), "p nfbdd 3 1\n1 F\ns 1\n");
    }

    #[test]
    fn generator_rejects_infeasible_targets() {
        assert_eq!(gen_random(0, 10, 1).unwrap_err(), GenError::NoVariables);
        assert_eq!(gen_random(3, 3, 1).unwrap_err(), GenError::TargetTooSmall(3));
    }

    #[test]
    fn generator_single_variable() {
        for seed in 0..20 {
            let b = gen_random(1, 4, seed).unwrap();
            assert!(b.validate().is_valid());
            assert_eq!(b.n_vars(), 1);
            assert!(b.size() >= 2 && b.size() <= 8, "size {}", b.size());
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_random(6, 30, 42).unwrap();
        let b = gen_random(6, 30, 42).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.source(), b.source());
    }
}
