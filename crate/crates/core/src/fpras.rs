//! The randomized counter.
//!
//! Every node `q` of a normal-form diagram carries a value `p(q)` estimating
//! `1/|mod(q)|` and `n_s·n_t` sample sets `S^r(q) ⊆ mod(q)`. Nodes are
//! processed layer by layer from the sinks up. Decision nodes combine their
//! children deterministically and thin the child samples; Or nodes thin the
//! child samples to a common rate, merge them keeping each model only from
//! the first child it satisfies, and estimate `|mod(q)|` by a median of
//! means over the merged set sizes.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagram::{Assignment, Evaluator, LayerIndex, Nfbdd, Node, NodeId};
use crate::transform::{normalize, NormalForm};

/// Copies per parallel work item and per random stream.
const CHUNK: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum FprasError {
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("keep probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("node {0} processed before its children")]
    ChildrenUnprocessed(NodeId),
}

/// A probability in `(0, 1]` or `∞`, with `1/∞ = 0` and `1/0 = ∞`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ExtProb(f64);

impl ExtProb {
    pub const ONE: ExtProb = ExtProb(1.0);
    pub const INFINITY: ExtProb = ExtProb(f64::INFINITY);

    /// `None` unless `value ∈ (0, 1]` or `value = ∞`.
    pub fn new(value: f64) -> Option<Self> {
        (value == f64::INFINITY || (value > 0.0 && value <= 1.0)).then_some(ExtProb(value))
    }

    /// `1/x`, mapping 0 to `∞`. Values above 1 are kept: the estimate of
    /// `1/|mod(q)|` is never above 1 in exact arithmetic but a median of
    /// means may undershoot 1.
    pub fn from_recip(x: f64) -> Self {
        if x == 0.0 {
            ExtProb::INFINITY
        } else {
            ExtProb(1.0 / x)
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1/self`, with `1/∞ = 0`.
    pub fn recip(self) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            1.0 / self.0
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    pub fn min(self, other: ExtProb) -> ExtProb {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    /// `self / other` as a keep probability, with `t/∞ = 0`.
    pub fn ratio(self, other: ExtProb) -> f64 {
        if other.is_infinite() {
            0.0
        } else {
            self.0 / other.0
        }
    }
}

/// `⌈x⌉`, except that values within floating-point noise of an integer are
/// taken as that integer.
fn ceil_snapped(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as u64
    } else {
        x.ceil() as u64
    }
}

/// Parameters of one counting call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FprasParams {
    pub epsilon: f64,
    pub delta: f64,
    pub kappa: f64,
    /// Sets per batch in the median of means.
    pub n_s: usize,
    /// Number of batches.
    pub n_t: usize,
    /// Interrupt threshold on sample-set sizes; `None` never interrupts.
    pub theta: Option<u64>,
    /// Independent core runs.
    pub m: usize,
    pub seed: u64,
}

impl FprasParams {
    pub fn copies(&self) -> usize {
        self.n_s * self.n_t
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn without_interrupt(mut self) -> Self {
        self.theta = None;
        self
    }
}

/// κ = ε/(1+ε), n_s = ⌈4n/κ²⌉, n_t = ⌈8 ln(16|B|)⌉,
/// θ = ⌈16 n_s n_t (1+κ) |B|⌉ and m = ⌈8 ln(1/δ)⌉, each at least 1.
pub fn params_from(epsilon: f64, delta: f64, n: usize, size: usize) -> Result<FprasParams, FprasError> {
    check_inputs(epsilon, delta)?;
    let kappa = epsilon / (1.0 + epsilon);
    // 4n/κ² = 4n(1+ε)²/ε², computed without going through κ.
    let n_s = ceil_snapped(4.0 * n as f64 * (1.0 + epsilon).powi(2) / (epsilon * epsilon)).max(1);
    let n_t = ceil_snapped(8.0 * (16.0 * size as f64).ln()).max(1);
    // (1+κ) = (1+2ε)/(1+ε)
    let theta = ceil_snapped(
        16.0 * n_s as f64 * n_t as f64 * size as f64 * (1.0 + 2.0 * epsilon) / (1.0 + epsilon),
    )
    .max(1);
    let m = ceil_snapped(8.0 * (1.0 / delta).ln()).max(1);
    Ok(FprasParams {
        epsilon,
        delta,
        kappa,
        n_s: n_s as usize,
        n_t: n_t as usize,
        theta: Some(theta),
        m: m as usize,
        seed: 0,
    })
}

fn check_inputs(epsilon: f64, delta: f64) -> Result<(), FprasError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(FprasError::InvalidEpsilon(epsilon));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(FprasError::InvalidDelta(delta));
    }
    Ok(())
}

/// Element at index `⌊(k−1)/2⌋` of the sorted values. Panics on empty input.
pub fn lower_median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[(sorted.len() - 1) / 2]
}

fn mix(x: u64) -> u64 {
    SplitMix64::seed_from_u64(x).next_u64()
}

/// Independent stream for one (run, node, chunk of copies, phase)
/// coordinate.
pub fn substream(seed: u64, run: u64, node: u64, chunk: u64, phase: u64) -> Xoshiro256PlusPlus {
    let mut h = mix(seed);
    for part in [run, node, chunk << 1 | phase] {
        h = mix(h ^ part);
    }
    Xoshiro256PlusPlus::seed_from_u64(h)
}

/// Seed for trial `index` of a family of independent counting calls.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(mix(seed ^ 0x5eed) ^ index)
}

#[inline]
fn keep(rng: &mut impl Rng, p: f64) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.gen::<f64>() < p
    }
}

/// A set of assignments over a common variable set, each packed into
/// `stride` 64-bit words.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleSet {
    stride: usize,
    words: Vec<u64>,
}

impl SampleSet {
    pub fn new(stride: usize) -> Self {
        SampleSet { stride, words: Vec::new() }
    }

    pub fn from_assignments<'a>(stride: usize, items: impl IntoIterator<Item = &'a Assignment>) -> Self {
        let mut set = SampleSet::new(stride);
        for a in items {
            let mut words = a.to_words();
            words.resize(stride, 0);
            set.push(&words);
        }
        set
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.words.len() / self.stride
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u64]> {
        self.words.chunks_exact(self.stride)
    }

    pub fn push(&mut self, item: &[u64]) {
        debug_assert_eq!(item.len(), self.stride);
        self.words.extend_from_slice(item);
    }

    pub fn contains(&self, item: &[u64]) -> bool {
        self.iter().any(|x| x == item)
    }
}

#[inline]
fn push_item(out: &mut Vec<u64>, item: &[u64]) {
    if let [word] = item {
        out.push(*word);
    } else {
        out.extend_from_slice(item);
    }
}

#[inline]
fn bit(words: &[u64], slot: usize) -> bool {
    words[slot / 64] >> (slot % 64) & 1 == 1
}

/// Keeps each element of `set` independently with probability `p`.
pub fn reduce_set(set: &SampleSet, p: f64, rng: &mut impl Rng) -> Result<SampleSet, FprasError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(FprasError::InvalidProbability(p));
    }
    let mut out = SampleSet::new(set.stride);
    for item in set.iter() {
        if keep(rng, p) {
            out.push(item);
        }
    }
    Ok(out)
}

/// Merges sample sets aligned with the children of Or node `q`: an element
/// of `sets[i]` is kept iff `i` is the first child it is a model of.
pub fn union_first_model(b: &Nfbdd, q: NodeId, sets: &[SampleSet]) -> SampleSet {
    let Node::Or(children) = b.node(q) else {
        panic!("union_first_model on non-Or node {q}");
    };
    assert_eq!(children.len(), sets.len(), "one sample set per child");
    let stride = sets.first().map_or(1, |s| s.stride);
    let mut ev = Evaluator::new(b);
    let mut out = SampleSet::new(stride);
    for (i, set) in sets.iter().enumerate() {
        for item in set.iter() {
            if !children[..i].iter().any(|&c| ev.eval(c, |slot| bit(item, slot))) {
                out.push(item);
            }
        }
    }
    out
}

/// The `n_s·n_t` sample sets of one node, stored contiguously.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleBank {
    stride: usize,
    /// `offsets[r]..offsets[r+1]` indexes the items of copy `r`.
    offsets: Vec<usize>,
    words: Vec<u64>,
}

impl SampleBank {
    fn with_copies(stride: usize, copies: usize, item: Option<&[u64]>) -> Self {
        let mut bank = SampleBank { stride, offsets: Vec::with_capacity(copies + 1), words: Vec::new() };
        bank.offsets.push(0);
        for _ in 0..copies {
            if let Some(item) = item {
                bank.words.extend_from_slice(item);
            }
            bank.offsets.push(bank.words.len() / stride);
        }
        bank
    }

    pub fn copies(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn len_of(&self, r: usize) -> usize {
        self.offsets[r + 1] - self.offsets[r]
    }

    pub fn items(&self, r: usize) -> impl Iterator<Item = &[u64]> {
        self.words[self.offsets[r] * self.stride..self.offsets[r + 1] * self.stride]
            .chunks_exact(self.stride)
    }

    pub fn set(&self, r: usize) -> SampleSet {
        let mut set = SampleSet::new(self.stride);
        for item in self.items(r) {
            set.push(item);
        }
        set
    }

    pub fn contains(&self, r: usize, item: &[u64]) -> bool {
        self.items(r).any(|x| x == item)
    }

    pub fn max_len(&self) -> usize {
        (0..self.copies()).map(|r| self.len_of(r)).max().unwrap_or(0)
    }

    pub fn total_len(&self) -> usize {
        self.words.len() / self.stride
    }

    /// Runs `fill(r, out)` for every copy in parallel chunks and concatenates
    /// the results in copy order.
    /// Copies are grouped in chunks of [`CHUNK`]; `init(chunk)` creates the
    /// scratch state shared by the copies of one chunk in copy order.
    fn build<S>(
        stride: usize,
        copies: usize,
        init: impl Fn(usize) -> S + Sync,
        fill: impl Fn(&mut S, usize, &mut Vec<u64>) + Sync,
    ) -> SampleBank {
        let chunks: Vec<(Vec<usize>, Vec<u64>)> = (0..copies.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let start = chunk * CHUNK;
                let end = (start + CHUNK).min(copies);
                let mut scratch = init(chunk);
                let mut lens = Vec::with_capacity(end - start);
                let mut words = Vec::new();
                for r in start..end {
                    let before = words.len();
                    fill(&mut scratch, r, &mut words);
                    lens.push((words.len() - before) / stride);
                }
                (lens, words)
            })
            .collect();
        let mut bank = SampleBank {
            stride,
            offsets: Vec::with_capacity(copies + 1),
            words: Vec::with_capacity(chunks.iter().map(|c| c.1.len()).sum()),
        };
        bank.offsets.push(0);
        let mut total = 0;
        for (lens, words) in chunks {
            for len in lens {
                total += len;
                bank.offsets.push(total);
            }
            bank.words.extend_from_slice(&words);
        }
        bank
    }
}

/// Per-node values and sample sets of one core run.
#[derive(Clone, Debug)]
pub struct SamplerState {
    pub p: Vec<Option<ExtProb>>,
    pub sets: Vec<Option<SampleBank>>,
    /// Merged sets `Ŝ^r(q)` of Or nodes, kept only on request.
    pub shat: Vec<Option<SampleBank>>,
    stride: usize,
    copies: usize,
}

impl SamplerState {
    /// Sinks initialized: `p = 1` and `{α_∅}` for the 1-sink, `p = ∞` and `∅`
    /// for the 0-sink.
    pub fn new(b: &Nfbdd, copies: usize) -> Self {
        let stride = b.n_vars().div_ceil(64).max(1);
        let n = b.num_nodes();
        let mut state = SamplerState {
            p: vec![None; n],
            sets: vec![None; n],
            shat: vec![None; n],
            stride,
            copies,
        };
        let empty_assignment = vec![0u64; stride];
        for q in b.node_ids() {
            match b.node(q) {
                Node::True => {
                    state.p[q.index()] = Some(ExtProb::ONE);
                    state.sets[q.index()] =
                        Some(SampleBank::with_copies(stride, copies, Some(&empty_assignment)));
                }
                Node::False => {
                    state.p[q.index()] = Some(ExtProb::INFINITY);
                    state.sets[q.index()] = Some(SampleBank::with_copies(stride, copies, None));
                }
                _ => {}
            }
        }
        state
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn copies(&self) -> usize {
        self.copies
    }

    fn child(&self, parent: NodeId, c: NodeId) -> Result<(ExtProb, &SampleBank), FprasError> {
        match (self.p[c.index()], self.sets[c.index()].as_ref()) {
            (Some(p), Some(sets)) => Ok((p, sets)),
            _ => Err(FprasError::ChildrenUnprocessed(parent)),
        }
    }
}

/// Where the randomness of one node step comes from.
#[derive(Clone, Copy, Debug)]
pub struct StepContext {
    pub seed: u64,
    pub run: u64,
}

impl StepContext {
    fn rng(&self, q: NodeId, chunk: usize, phase: u64) -> Xoshiro256PlusPlus {
        substream(self.seed, self.run, q.index() as u64, chunk as u64, phase)
    }
}

/// `p(q) = (1/p(q0) + 1/p(q1))^{-1}` and
/// `S^r(q) = reduce(S^r(q0), p(q)/p(q0)) ⊗ {x↦0} ∪ reduce(S^r(q1), p(q)/p(q1)) ⊗ {x↦1}`.
pub fn step_decision(
    b: &Nfbdd,
    q: NodeId,
    state: &mut SamplerState,
    ctx: StepContext,
) -> Result<ExtProb, FprasError> {
    let Node::Decision { var, hi, lo } = *b.node(q) else {
        panic!("step_decision on non-decision node {q}");
    };
    let (p_hi, s_hi) = state.child(q, hi)?;
    let (p_lo, s_lo) = state.child(q, lo)?;
    let p = ExtProb::from_recip(p_lo.recip() + p_hi.recip());
    let keep_lo = p.ratio(p_lo).min(1.0);
    let keep_hi = p.ratio(p_hi).min(1.0);
    let slot = var.slot();
    let (word, mask) = (slot / 64, 1u64 << (slot % 64));
    let stride = state.stride;

    let init = |chunk| ctx.rng(q, chunk, 0);
    let bank = SampleBank::build(stride, state.copies, init, |rng, r, out| {
        for item in s_lo.items(r) {
            if keep(rng, keep_lo) {
                push_item(out, item);
            }
        }
        for item in s_hi.items(r) {
            if keep(rng, keep_hi) {
                let at = out.len();
                push_item(out, item);
                out[at + word] |= mask;
            }
        }
    });
    state.p[q.index()] = Some(p);
    state.sets[q.index()] = Some(bank);
    Ok(p)
}

/// Intermediate quantities of one Or step.
#[derive(Clone, Debug)]
pub struct OrStep {
    pub rho: ExtProb,
    /// Batch means `M_j`, already divided by `ρ·n_s`.
    pub means: Vec<f64>,
    pub rho_hat: ExtProb,
    pub p: ExtProb,
    pub shat: SampleBank,
}

/// Thins child samples to the common rate `ρ = min p(q_i)`, merges them with
/// [`union_first_model`]'s rule, sets `p(q) = min(ρ, 1/median_j M_j)` and
/// thins the merged sets by `p(q)/ρ`.
pub fn step_or(
    b: &Nfbdd,
    q: NodeId,
    state: &mut SamplerState,
    ctx: StepContext,
    n_s: usize,
) -> Result<OrStep, FprasError> {
    let Node::Or(children) = b.node(q) else {
        panic!("step_or on non-Or node {q}");
    };
    let mut kids = Vec::with_capacity(children.len());
    for &c in children {
        kids.push(state.child(q, c)?);
    }
    let rho = kids.iter().map(|k| k.0).fold(ExtProb::INFINITY, ExtProb::min);
    let rates: Vec<f64> = kids.iter().map(|(p, _)| rho.ratio(*p).min(1.0)).collect();
    let stride = state.stride;
    let copies = state.copies;

    let init = |chunk| (ctx.rng(q, chunk, 0), Evaluator::new(b));
    let shat = SampleBank::build(stride, copies, init, |(rng, ev), r, out| {
        for (i, (_, sets)) in kids.iter().enumerate() {
            for item in sets.items(r) {
                if !keep(rng, rates[i]) {
                    continue;
                }
                let earlier = &children[..i];
                if !earlier.iter().any(|&c| ev.eval(c, |slot| bit(item, slot))) {
                    push_item(out, item);
                }
            }
        }
    });

    let n_t = copies / n_s;
    let means: Vec<f64> = (0..n_t)
        .map(|j| {
            let total: usize = (j * n_s..(j + 1) * n_s).map(|r| shat.len_of(r)).sum();
            total as f64 / (rho.value() * n_s as f64)
        })
        .collect();
    let rho_hat = ExtProb::from_recip(lower_median(&means));
    let p = rho.min(rho_hat);
    let rate = p.ratio(rho).min(1.0);

    let init = |chunk| ctx.rng(q, chunk, 1);
    let sets = SampleBank::build(stride, copies, init, |rng, r, out| {
        for item in shat.items(r) {
            if keep(rng, rate) {
                push_item(out, item);
            }
        }
    });
    state.p[q.index()] = Some(p);
    state.sets[q.index()] = Some(sets);
    Ok(OrStep { rho, means, rho_hat, p, shat })
}

/// What an [`Observer`] sees after each node.
pub struct NodeEvent<'a> {
    pub node: NodeId,
    pub layer: usize,
    pub p: ExtProb,
    /// Or nodes only.
    pub or_step: Option<&'a OrStep>,
    pub sets: &'a SampleBank,
}

/// Instrumentation hook; the unit observer ignores everything.
pub trait Observer {
    fn node_processed(&mut self, _event: &NodeEvent<'_>) {}
    fn interrupted(&mut self, _node: NodeId, _size: usize) {}
}

impl Observer for () {}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Keep `S^r(q)` of every node instead of dropping sets whose parents
    /// are all processed.
    pub retain_sets: bool,
    /// Keep `Ŝ^r(q)` of Or nodes.
    pub retain_shat: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreDiagnostics {
    /// Largest `|S^r(q)|` over `r`, per node in processing order.
    pub max_set_sizes: Vec<(usize, usize)>,
    pub interrupted_at: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreOutcome {
    pub estimate: f64,
    pub interrupted: bool,
    pub diagnostics: CoreDiagnostics,
}

/// One run on a normal-form diagram; returns `1/p(source)`, or 0 when some
/// sample set reaches `θ`.
pub fn core_run(b: &Nfbdd, layers: &LayerIndex, params: &FprasParams, run: u64) -> CoreOutcome {
    core_run_with(b, layers, params, run, RunOptions::default(), &mut ()).0
}

pub fn core_run_with<O: Observer>(
    b: &Nfbdd,
    layers: &LayerIndex,
    params: &FprasParams,
    run: u64,
    options: RunOptions,
    observer: &mut O,
) -> (CoreOutcome, SamplerState) {
    let copies = params.copies();
    let mut state = SamplerState::new(b, copies);
    let ctx = StepContext { seed: params.seed, run };
    let mut diagnostics = CoreDiagnostics { max_set_sizes: Vec::new(), interrupted_at: None };
    let theta = params.theta.unwrap_or(u64::MAX) as usize;

    let mut pending_parents = vec![0usize; b.num_nodes()];
    for q in b.node_ids() {
        for c in b.node(q).children() {
            pending_parents[c.index()] += 1;
        }
    }

    let interrupted = |diagnostics: &mut CoreDiagnostics, observer: &mut O, q: NodeId, size| {
        diagnostics.interrupted_at = Some(q.index());
        observer.interrupted(q, size);
        CoreOutcome { estimate: 0.0, interrupted: true, diagnostics: diagnostics.clone() }
    };

    for &q in layers.layer(0) {
        let size = state.sets[q.index()].as_ref().map_or(0, SampleBank::max_len);
        diagnostics.max_set_sizes.push((q.index(), size));
        if size >= theta {
            return (interrupted(&mut diagnostics, observer, q, size), state);
        }
    }

    for layer in 1..=layers.top() {
        for &q in layers.layer(layer) {
            let (p, or_step) = match b.node(q) {
                Node::Decision { .. } => {
                    (step_decision(b, q, &mut state, ctx).expect("layer order"), None)
                }
                Node::Or(_) => {
                    let step = step_or(b, q, &mut state, ctx, params.n_s).expect("layer order");
                    (step.p, Some(step))
                }
                Node::False | Node::True => unreachable!("sinks live in layer 0"),
            };
            let sets = state.sets[q.index()].as_ref().expect("just computed");
            let size = sets.max_len();
            diagnostics.max_set_sizes.push((q.index(), size));
            observer.node_processed(&NodeEvent { node: q, layer, p, or_step: or_step.as_ref(), sets });
            if options.retain_shat {
                state.shat[q.index()] = or_step.map(|s| s.shat);
            }
            if size >= theta {
                return (interrupted(&mut diagnostics, observer, q, size), state);
            }
            if !options.retain_sets {
                for c in b.node(q).children() {
                    pending_parents[c.index()] -= 1;
                    if pending_parents[c.index()] == 0 {
                        state.sets[c.index()] = None;
                    }
                }
            }
        }
    }

    let p_source = state.p[b.source().index()].expect("source processed");
    let outcome = CoreOutcome {
        estimate: p_source.recip(),
        interrupted: false,
        diagnostics,
    };
    (outcome, state)
}

/// How a [`CountReport`] obtained its estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    /// The normalized input has no models.
    ConstantFalse,
    /// No variables and a model: the count is 1.
    ConstantTrue,
    /// Brute-force enumeration.
    Exact,
    Sampler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub estimate: f64,
    pub interrupted: bool,
    pub millis: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub estimate: f64,
    pub exact: Option<u64>,
    pub method: CountMethod,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    pub n_vars: usize,
    pub input_size: usize,
    pub normalized_size: Option<usize>,
    pub params: Option<FprasParams>,
    pub runs: Vec<RunOutcome>,
    pub interrupted_runs: usize,
    pub wall_millis: u64,
}

impl CountReport {
    /// The report with every timing field zeroed, which makes it a pure
    /// function of the inputs.
    pub fn without_timing(mut self) -> Self {
        self.wall_millis = 0;
        for run in &mut self.runs {
            run.millis = 0;
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
    /// Apply the `θ` interrupt (off only for calibration).
    pub interrupt: bool,
}

impl CountConfig {
    pub fn new(epsilon: f64, delta: f64, seed: u64) -> Self {
        CountConfig { epsilon, delta, seed, interrupt: true }
    }
}

/// Normalizes `b` and returns the lower median of `m` independent core runs.
pub fn approx_count(b: &Nfbdd, epsilon: f64, delta: f64, seed: u64) -> Result<CountReport, FprasError> {
    approx_count_with(b, CountConfig::new(epsilon, delta, seed))
}

pub fn approx_count_with(b: &Nfbdd, config: CountConfig) -> Result<CountReport, FprasError> {
    check_inputs(config.epsilon, config.delta)?;
    let started = Instant::now();
    let normal = normalize(b);
    approx_count_normalized(b, &normal, config, started)
}

/// Same as [`approx_count_with`] for a diagram already normalized into
/// `normal`; `b` only supplies the reported input size.
pub fn approx_count_normalized(
    b: &Nfbdd,
    normal: &NormalForm,
    config: CountConfig,
    started: Instant,
) -> Result<CountReport, FprasError> {
    check_inputs(config.epsilon, config.delta)?;
    let mut report = CountReport {
        estimate: 0.0,
        exact: None,
        method: CountMethod::ConstantFalse,
        epsilon: config.epsilon,
        delta: config.delta,
        seed: config.seed,
        n_vars: b.n_vars(),
        input_size: b.size(),
        normalized_size: None,
        params: None,
        runs: Vec::new(),
        interrupted_runs: 0,
        wall_millis: 0,
    };
    let (diagram, layers) = match normal {
        NormalForm::ConstantFalse => {
            report.exact = Some(0);
            report.wall_millis = started.elapsed().as_millis() as u64;
            return Ok(report);
        }
        NormalForm::Normalized { diagram, layers } => (diagram, layers),
    };
    report.normalized_size = Some(diagram.size());
    if diagram.n_vars() == 0 {
        report.estimate = 1.0;
        report.exact = Some(1);
        report.method = CountMethod::ConstantTrue;
        report.wall_millis = started.elapsed().as_millis() as u64;
        return Ok(report);
    }

    let mut params = params_from(config.epsilon, config.delta, diagram.n_vars(), diagram.size())?
        .with_seed(config.seed);
    if !config.interrupt {
        params = params.without_interrupt();
    }
    let runs: Vec<RunOutcome> = (0..params.m as u64)
        .into_par_iter()
        .map(|run| {
            let t = Instant::now();
            let outcome = core_run(diagram, layers, &params, run);
            RunOutcome {
                estimate: outcome.estimate,
                interrupted: outcome.interrupted,
                millis: t.elapsed().as_millis() as u64,
            }
        })
        .collect();
    let estimates: Vec<f64> = runs.iter().map(|r| r.estimate).collect();
    report.estimate = lower_median(&estimates);
    report.interrupted_runs = runs.iter().filter(|r| r.interrupted).count();
    report.method = CountMethod::Sampler;
    report.params = Some(params);
    report.runs = runs;
    report.wall_millis = started.elapsed().as_millis() as u64;
    Ok(report)
}
