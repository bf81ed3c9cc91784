//! Executable checks of the sampler's probabilistic and structural claims.
//!
//! Every check is deterministic given its seed and returns a serializable
//! report with a `passed` verdict and the raw statistics behind it.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagram::{Assignment, DiagramError, LayerIndex, Nfbdd, Node, NodeId};
use crate::fpras::{
    approx_count_normalized, core_run, core_run_with, derive_seed, params_from, reduce_set, union_first_model,
    CountConfig, ExtProb, FprasParams, NodeEvent, Observer, RunOptions, SampleSet,
};
use crate::io::{dnf_to_nfbdd, gen_random, gen_random_dnf};
use crate::paths::{derivation_path, lcpn_index, EdgeLabel};
use crate::transform::{normalize, NormalForm};

/// A named diagram of a test corpus.
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub diagram: Nfbdd,
}

impl Instance {
    pub fn new(name: impl Into<String>, diagram: Nfbdd) -> Self {
        Instance { name: name.into(), diagram }
    }
}

/// The normalized diagram with its layers; `None` for constant false.
pub fn normalized(b: &Nfbdd) -> Option<(Nfbdd, LayerIndex)> {
    match normalize(b) {
        NormalForm::Normalized { diagram, layers } => Some((diagram, layers)),
        NormalForm::ConstantFalse => None,
    }
}

/// Satisfiable generated instances with `n` cycling through `n_range` and a
/// normalized size of at most `max_normalized`.
pub fn generated_corpus(
    count: usize,
    n_range: std::ops::RangeInclusive<usize>,
    max_normalized: usize,
    seed: u64,
) -> Vec<Instance> {
    let ns: Vec<usize> = n_range.collect();
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        let n = ns[out.len() % ns.len()];
        let s = derive_seed(seed, attempt);
        attempt += 1;
        let target = 6 + (s % (2 * n as u64 + 6)) as usize;
        let b = gen_random(n, target, s).expect("n ≥ 1 and target ≥ 4");
        let fits = normalized(&b).is_some_and(|(d, _)| d.size() <= max_normalized);
        if fits {
            out.push(Instance::new(format!("gen-n{n}-{s:016x}"), b));
        }
    }
    out
}

/// Satisfiable DNF-compiled instances with a normalized size of at most
/// `max_normalized`.
pub fn dnf_corpus(
    count: usize,
    n_range: std::ops::RangeInclusive<usize>,
    max_normalized: usize,
    seed: u64,
) -> Vec<Instance> {
    let ns: Vec<usize> = n_range.collect();
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        let n = ns[out.len() % ns.len()];
        let s = derive_seed(seed ^ 0xd9f, attempt);
        attempt += 1;
        let f = gen_random_dnf(n, 2 + (s % 3) as usize, 3, s);
        let b = dnf_to_nfbdd(&f);
        let fits = normalized(&b).is_some_and(|(d, _)| d.size() <= max_normalized);
        if fits {
            out.push(Instance::new(format!("dnf-n{n}-{s:016x}"), b));
        }
    }
    out
}

/// Ten generated instances with `n ∈ [4, 8]` and five DNF-compiled ones,
/// all with normalized size at most 80.
pub fn standard_corpus(seed: u64) -> Vec<Instance> {
    let mut corpus = generated_corpus(10, 4..=8, 80, seed);
    corpus.extend(dnf_corpus(5, 4..=8, 80, seed));
    corpus
}

fn sigma_band(p: f64, trials: usize) -> f64 {
    4.0 * (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReduceReport {
    pub p: f64,
    pub trials: usize,
    pub elements: usize,
    pub frequencies: Vec<f64>,
    /// Allowed deviation of a frequency from `p`.
    pub frequency_band: f64,
    pub max_frequency_deviation: f64,
    /// Allowed absolute pairwise covariance.
    pub covariance_band: f64,
    pub max_abs_covariance: f64,
    pub passed: bool,
}

/// Thins a set of `elements` items `trials` times and compares retention
/// frequencies and pairwise covariances with independent Bernoulli(`p`)
/// draws at 4σ.
pub fn check_reduce_distribution(trials: usize, p: f64, elements: usize, seed: u64) -> ReduceReport {
    let mut set = SampleSet::new(1);
    for i in 0..elements as u64 {
        set.push(&[i]);
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut hits = vec![0u64; elements];
    let mut joint = vec![0u64; elements * elements];
    let mut kept = Vec::with_capacity(elements);
    for _ in 0..trials {
        let out = reduce_set(&set, p, &mut rng).expect("p within [0, 1]");
        kept.clear();
        kept.extend(out.iter().map(|item| item[0] as usize));
        for (a, &i) in kept.iter().enumerate() {
            hits[i] += 1;
            for &j in &kept[a + 1..] {
                joint[i * elements + j] += 1;
            }
        }
    }
    let t = trials as f64;
    let frequencies: Vec<f64> = hits.iter().map(|&h| h as f64 / t).collect();
    let max_frequency_deviation = frequencies.iter().map(|f| (f - p).abs()).fold(0.0, f64::max);
    let mut max_abs_covariance: f64 = 0.0;
    for i in 0..elements {
        for j in i + 1..elements {
            let cov = joint[i * elements + j] as f64 / t - frequencies[i] * frequencies[j];
            max_abs_covariance = max_abs_covariance.max(cov.abs());
        }
    }
    let frequency_band = sigma_band(p, trials);
    // The product of two independent indicators has variance p²(1−p²)
    // around p²; the plug-in covariance inherits σ ≈ p(1−p)/√t.
    let covariance_band = 4.0 * p * (1.0 - p) / t.sqrt();
    let degenerate = p <= 0.0 || p >= 1.0;
    let passed = if degenerate {
        max_frequency_deviation == 0.0 && max_abs_covariance == 0.0
    } else {
        max_frequency_deviation <= frequency_band && max_abs_covariance <= covariance_band
    };
    ReduceReport {
        p,
        trials,
        elements,
        frequencies,
        frequency_band,
        max_frequency_deviation,
        covariance_band,
        max_abs_covariance,
        passed,
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct UnionReport {
    pub or_nodes: usize,
    pub cases: usize,
    pub exhaustive_nodes: usize,
    pub mismatches: usize,
    /// Models whose derivation path leaves an Or node through a different
    /// child than the merge rule credits.
    pub routing_mismatches: usize,
    pub passed: bool,
}

/// Largest total child-model count enumerated exhaustively at one Or node.
const EXHAUSTIVE_UNION_LIMIT: usize = 12;
const RANDOM_UNION_CASES: usize = 256;

/// Compares [`union_first_model`] with the rule applied directly to oracle
/// model sets, on every Or node of every (normalized) instance. Child
/// sample sets range over all subsets of the child model sets when those
/// are small and over seeded random subsets otherwise.
pub fn check_union_oracle(corpus: &[Nfbdd], cap: usize, seed: u64) -> Result<UnionReport, DiagramError> {
    let mut report = UnionReport::default();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for b in corpus {
        let stride = b.n_vars().div_ceil(64).max(1);
        for q in b.node_ids() {
            let Node::Or(children) = b.node(q) else { continue };
            report.or_nodes += 1;
            let child_models: Vec<Vec<Vec<u64>>> = children
                .iter()
                .map(|&c| Ok(b.models(c, cap)?.iter().map(|a| padded(a, stride)).collect()))
                .collect::<Result<_, DiagramError>>()?;
            let member: Vec<HashSet<&Vec<u64>>> =
                child_models.iter().map(|ms| ms.iter().collect()).collect();

            for models in &child_models {
                for item in models {
                    let first = member.iter().position(|m| m.contains(item)).expect("own child");
                    let alpha = Assignment::from_words(b.n_vars(), b.var_set(q), item);
                    let path = derivation_path(b, q, &alpha).expect("model of a child");
                    if path.edges.last() != Some(&EdgeLabel::Child(first)) {
                        report.routing_mismatches += 1;
                    }
                }
            }

            let total: usize = child_models.iter().map(Vec::len).sum();
            let exhaustive = total <= EXHAUSTIVE_UNION_LIMIT;
            report.exhaustive_nodes += usize::from(exhaustive);
            let cases = if exhaustive { 1usize << total } else { RANDOM_UNION_CASES };
            for case in 0..cases {
                let mut bit = 0;
                let sets: Vec<SampleSet> = child_models
                    .iter()
                    .map(|models| {
                        let mut set = SampleSet::new(stride);
                        for item in models {
                            let take = if exhaustive { case >> bit & 1 == 1 } else { rng.gen_bool(0.5) };
                            bit += 1;
                            if take {
                                set.push(item);
                            }
                        }
                        set
                    })
                    .collect();
                let mut expected = SampleSet::new(stride);
                for (i, set) in sets.iter().enumerate() {
                    for item in set.iter() {
                        let item = item.to_vec();
                        if !member[..i].iter().any(|m| m.contains(&item)) {
                            expected.push(&item);
                        }
                    }
                }
                report.cases += 1;
                if union_first_model(b, q, &sets) != expected {
                    report.mismatches += 1;
                }
            }
        }
    }
    report.passed = report.mismatches == 0 && report.routing_mismatches == 0;
    Ok(report)
}

fn padded(a: &Assignment, stride: usize) -> Vec<u64> {
    let mut words = a.to_words();
    words.resize(stride, 0);
    words
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DivergenceViolation {
    pub node: NodeId,
    pub alpha: String,
    pub position: usize,
    pub class_size: usize,
    pub mod_at_position: u64,
    pub mod_at_node: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub instances: usize,
    pub nodes: usize,
    /// (node, model, position) triples checked.
    pub triples: usize,
    pub violations: Vec<DivergenceViolation>,
    pub passed: bool,
}

/// For every node `q`, model `α` of `q` and position `ℓ` of `path(α, q)`,
/// checks `|I(α, q, ℓ)| · |mod(q_ℓ)| ≤ |mod(q)|` against oracle counts.
pub fn check_divergence_bound(corpus: &[Nfbdd], cap: usize) -> Result<DivergenceReport, DiagramError> {
    let mut report = DivergenceReport::default();
    for b in corpus {
        report.instances += 1;
        let counts: Vec<u64> =
            b.node_ids().map(|q| b.count_models(q, cap)).collect::<Result<_, _>>()?;
        for q in b.node_ids() {
            let models = b.models(q, cap)?;
            if models.is_empty() {
                continue;
            }
            report.nodes += 1;
            let paths: Vec<_> = models
                .iter()
                .map(|a| derivation_path(b, q, a).expect("enumerated model"))
                .collect();
            for (a, path) in paths.iter().enumerate() {
                let mut class_sizes = vec![0usize; path.vertices.len()];
                for other in &paths {
                    class_sizes[lcpn_index(path, other)] += 1;
                }
                for (l, &size) in class_sizes.iter().enumerate() {
                    report.triples += 1;
                    let at = counts[path.vertices[l].index()];
                    if size as u64 * at > counts[q.index()] {
                        report.violations.push(DivergenceViolation {
                            node: q,
                            alpha: models[a].to_string(),
                            position: l,
                            class_size: size,
                            mod_at_position: at,
                            mod_at_node: counts[q.index()],
                        });
                    }
                }
            }
        }
    }
    report.passed = report.violations.is_empty();
    Ok(report)
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PathConsistencyReport {
    pub runs: usize,
    pub interrupted_runs: usize,
    /// (node, copy, sample) triples checked.
    pub samples: usize,
    /// Path vertices at which a sample's restriction was missing.
    pub violations: usize,
    pub passed: bool,
}

/// Runs the sampler with every sample set retained and checks that each
/// `α ∈ S^r(q)` has `α|var(q_j) ∈ S^r(q_j)` for every vertex `q_j` of
/// `path(α, q)`.
pub fn check_path_consistency(
    b: &Nfbdd,
    layers: &LayerIndex,
    params: &FprasParams,
    runs: usize,
) -> PathConsistencyReport {
    let per_run: Vec<(bool, usize, usize)> = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let options = RunOptions { retain_sets: true, retain_shat: false };
            let (outcome, state) = core_run_with(b, layers, params, run, options, &mut ());
            let stride = state.stride();
            let mut samples = 0;
            let mut violations = 0;
            for q in b.node_ids() {
                let Some(bank) = &state.sets[q.index()] else { continue };
                for r in 0..bank.copies() {
                    for item in bank.items(r) {
                        samples += 1;
                        let alpha = Assignment::from_words(b.n_vars(), b.var_set(q), item);
                        let path = derivation_path(b, q, &alpha).expect("samples are models");
                        for &v in &path.vertices {
                            let restricted = padded(&alpha.restricted(b.var_set(v)), stride);
                            let present = state.sets[v.index()]
                                .as_ref()
                                .is_some_and(|s| s.contains(r, &restricted));
                            if !present {
                                violations += 1;
                            }
                        }
                    }
                }
            }
            (outcome.interrupted, samples, violations)
        })
        .collect();
    let mut report = PathConsistencyReport { runs, ..Default::default() };
    for (interrupted, samples, violations) in per_run {
        report.interrupted_runs += usize::from(interrupted);
        report.samples += samples;
        report.violations += violations;
    }
    report.passed = report.violations == 0;
    report
}

/// Per-node instrumentation captured by [`Probe`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub node: NodeId,
    pub layer: usize,
    pub p_value: ExtProb,
    /// `|S^r(q)|` per copy.
    pub set_sizes: Vec<usize>,
    /// `|Ŝ^r(q)|` per copy; Or nodes only.
    pub shat_sizes: Option<Vec<usize>>,
    /// Or nodes only.
    pub rho: Option<ExtProb>,
    /// Batch means `M_j`; Or nodes only.
    pub means: Vec<f64>,
}

/// Observer recording one [`ProbeRecord`] per processed node.
#[derive(Debug, Default)]
pub struct Probe {
    pub records: Vec<ProbeRecord>,
    pub interrupted: Option<(NodeId, usize)>,
}

impl Observer for Probe {
    fn node_processed(&mut self, event: &NodeEvent<'_>) {
        let copies = event.sets.copies();
        let or = event.or_step;
        self.records.push(ProbeRecord {
            node: event.node,
            layer: event.layer,
            p_value: event.p,
            set_sizes: (0..copies).map(|r| event.sets.len_of(r)).collect(),
            shat_sizes: or.map(|s| (0..copies).map(|r| s.shat.len_of(r)).collect()),
            rho: or.map(|s| s.rho),
            means: or.map(|s| s.means.clone()).unwrap_or_default(),
        });
    }

    fn interrupted(&mut self, node: NodeId, size: usize) {
        self.interrupted = Some((node, size));
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnbiasedReport {
    pub node: NodeId,
    pub copies: usize,
    pub oracle: u64,
    /// Mean of `ρ⁻¹|Ŝ^r(q)|` over all copies.
    pub mean: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Mean of `ρ⁻¹|Ŝ^r(q)|` at Or node `node` over `n_s · n_t` copies of one
/// run without interrupt, against the oracle `|mod(node)|`.
pub fn check_unbiased_or(
    b: &Nfbdd,
    layers: &LayerIndex,
    node: NodeId,
    n_s: usize,
    n_t: usize,
    seed: u64,
    tolerance: f64,
) -> Result<UnbiasedReport, DiagramError> {
    assert!(b.node(node).is_or(), "{node} is not an Or node");
    let params = FprasParams {
        epsilon: 1.0,
        delta: 0.5,
        kappa: 0.5,
        n_s,
        n_t,
        theta: None,
        m: 1,
        seed,
    };
    let mut probe = Probe::default();
    core_run_with(b, layers, &params, 0, RunOptions::default(), &mut probe);
    let record = probe.records.iter().find(|r| r.node == node).expect("every node is processed");
    let rho = record.rho.expect("Or record");
    let shat = record.shat_sizes.as_ref().expect("Or record");
    let copies = shat.len();
    let mean = shat.iter().map(|&s| s as f64).sum::<f64>() * rho.recip() / copies as f64;
    let oracle = b.count_models(node, crate::diagram::DEFAULT_EXACT_CAP)?;
    let relative_error = (mean - oracle as f64).abs() / oracle as f64;
    Ok(UnbiasedReport {
        node,
        copies,
        oracle,
        mean,
        relative_error,
        tolerance,
        passed: relative_error <= tolerance,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceCalibration {
    pub name: String,
    pub n_vars: usize,
    pub size: usize,
    pub normalized_size: Option<usize>,
    pub exact: u64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_relative_error: f64,
    pub core_runs: usize,
    pub interrupted_runs: usize,
    pub interrupt_rate: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub epsilon: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub interrupt: bool,
    /// Minimum per-instance success rate for a pass.
    pub threshold: f64,
    pub instances: Vec<InstanceCalibration>,
    pub wall_millis: u64,
    pub passed: bool,
}

/// Whether `estimate ∈ (1 ± ε)·exact`; an exact count of 0 needs an
/// estimate of exactly 0.
pub fn within(estimate: f64, exact: u64, epsilon: f64) -> bool {
    if exact == 0 {
        return estimate == 0.0;
    }
    let exact = exact as f64;
    (estimate - exact).abs() < epsilon * exact
}

/// Slack below the guaranteed success rate `1 − δ`, about 3σ of a binomial
/// proportion at 100 trials.
pub const GUARANTEE_SLACK: f64 = 0.10;

pub fn guarantee_threshold(delta: f64) -> f64 {
    1.0 - delta - GUARANTEE_SLACK
}

/// Runs `trials` independently seeded counting calls per instance and
/// compares each estimate with the brute-force count.
pub fn calibrate(
    corpus: &[Instance],
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
    interrupt: bool,
    cap: usize,
) -> Result<CalibrationReport, DiagramError> {
    let started = Instant::now();
    let threshold = guarantee_threshold(delta);
    let mut instances = Vec::with_capacity(corpus.len());
    for (index, instance) in corpus.iter().enumerate() {
        let b = &instance.diagram;
        let exact = b.count_exact_with_cap(cap)?;
        let normal = normalize(b);
        let instance_seed = derive_seed(seed, index as u64);
        let outcomes: Vec<(f64, usize, usize)> = (0..trials as u64)
            .into_par_iter()
            .map(|trial| {
                let config = CountConfig {
                    epsilon,
                    delta,
                    seed: derive_seed(instance_seed, trial),
                    interrupt,
                };
                let report = approx_count_normalized(b, &normal, config, Instant::now())
                    .expect("parameters validated by the caller");
                (report.estimate, report.runs.len(), report.interrupted_runs)
            })
            .collect();
        let successes = outcomes.iter().filter(|o| within(o.0, exact, epsilon)).count();
        let mean_relative_error = if exact == 0 {
            0.0
        } else {
            outcomes.iter().map(|o| (o.0 - exact as f64).abs() / exact as f64).sum::<f64>() / trials as f64
        };
        let core_runs: usize = outcomes.iter().map(|o| o.1).sum();
        let interrupted_runs: usize = outcomes.iter().map(|o| o.2).sum();
        let success_rate = successes as f64 / trials as f64;
        instances.push(InstanceCalibration {
            name: instance.name.clone(),
            n_vars: b.n_vars(),
            size: b.size(),
            normalized_size: normal.diagram().map(Nfbdd::size),
            exact,
            trials,
            successes,
            success_rate,
            mean_relative_error,
            core_runs,
            interrupted_runs,
            interrupt_rate: if core_runs == 0 { 0.0 } else { interrupted_runs as f64 / core_runs as f64 },
            passed: success_rate >= threshold,
        });
    }
    let passed = instances.iter().all(|i| i.passed);
    Ok(CalibrationReport {
        epsilon,
        delta,
        trials,
        seed,
        interrupt,
        threshold,
        instances,
        wall_millis: started.elapsed().as_millis() as u64,
        passed,
    })
}

/// [`calibrate`] with the interrupt on.
pub fn check_guarantee(
    corpus: &[Instance],
    epsilon: f64,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<CalibrationReport, DiagramError> {
    calibrate(corpus, epsilon, delta, trials, seed, true, crate::diagram::DEFAULT_EXACT_CAP)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterruptReport {
    pub runs: usize,
    pub interrupted: usize,
    pub rate: f64,
    pub bound: f64,
    pub per_instance: HashMap<String, usize>,
    pub passed: bool,
}

/// Spreads `runs` core runs with the default parameters round-robin over
/// the corpus and reports the fraction that hit the interrupt.
pub fn check_interrupt_rate(
    corpus: &[Instance],
    epsilon: f64,
    delta: f64,
    runs: usize,
    seed: u64,
    bound: f64,
) -> InterruptReport {
    let prepared: Vec<(String, Nfbdd, LayerIndex, FprasParams)> = corpus
        .iter()
        .filter_map(|i| {
            let (d, layers) = normalized(&i.diagram)?;
            let params = params_from(epsilon, delta, d.n_vars(), d.size()).ok()?.with_seed(seed);
            Some((i.name.clone(), d, layers, params))
        })
        .collect();
    assert!(!prepared.is_empty(), "corpus has no satisfiable instance");
    let flags: Vec<(usize, bool)> = (0..runs)
        .into_par_iter()
        .map(|k| {
            let which = k % prepared.len();
            let (_, d, layers, params) = &prepared[which];
            (which, core_run(d, layers, params, k as u64).interrupted)
        })
        .collect();
    let mut per_instance = HashMap::new();
    let mut interrupted = 0;
    for (which, flag) in flags {
        if flag {
            interrupted += 1;
            *per_instance.entry(prepared[which].0.clone()).or_insert(0) += 1;
        }
    }
    let rate = interrupted as f64 / runs as f64;
    InterruptReport { runs, interrupted, rate, bound, per_instance, passed: rate <= bound }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduce_extremes_are_exact() {
        assert!(check_reduce_distribution(100, 1.0, 4, 1).frequencies.iter().all(|&f| f == 1.0));
        assert!(check_reduce_distribution(100, 0.0, 4, 1).frequencies.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn within_is_an_open_interval() {
        assert!(within(1.4, 1, 0.5));
        assert!(!within(1.5, 1, 0.5));
        assert!(within(0.0, 0, 0.5));
        assert!(!within(0.1, 0, 0.5));
    }

    #[test]
    fn threshold_for_quarter_delta() {
        assert!((guarantee_threshold(0.25) - 0.65).abs() < 1e-12);
    }

    #[test]
    fn corpora_respect_their_bounds() {
        for i in standard_corpus(3) {
            let (d, _) = normalized(&i.diagram).expect("satisfiable");
            assert!(d.size() <= 80);
            assert!((4..=8).contains(&i.diagram.n_vars()));
        }
    }
}
