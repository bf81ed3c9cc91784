//! Acceptance suite. Every test writes one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) before asserting.

use std::io::Write;
use std::sync::OnceLock;

use nfbdd::diagram::{Assignment, Nfbdd, NfbddBuilder, Node, NodeId, Var, DEFAULT_EXACT_CAP};
use nfbdd::fpras::{approx_count, params_from, CountMethod, FprasParams};
use nfbdd::harness::{
    check_guarantee, check_interrupt_rate, check_divergence_bound, check_path_consistency, check_reduce_distribution,
    check_unbiased_or, generated_corpus, normalized, standard_corpus, dnf_corpus, Instance,
};
use nfbdd::io::{dnf_to_nfbdd, gen_random, gen_random_dnf, DnfFormula};
use nfbdd::transform::{normalize, NormalForm};

const CORPUS_SEED: u64 = 2024;

fn verdict(name: &str, passed: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn corpus() -> &'static [Instance] {
    static CORPUS: OnceLock<Vec<Instance>> = OnceLock::new();
    CORPUS.get_or_init(|| standard_corpus(CORPUS_SEED))
}

#[test]
fn accuracy_guarantee_per_instance() {
    let report = check_guarantee(corpus(), 0.5, 0.25, 100, 7).unwrap();
    let worst = report
        .instances
        .iter()
        .min_by(|a, b| a.success_rate.total_cmp(&b.success_rate))
        .unwrap();
    let passed = report.instances.len() == 15 && report.instances.iter().all(|i| i.success_rate >= 0.65);
    verdict(
        "accuracy guarantee",
        passed,
        &format!(
            "15 instances x 100 trials, eps 0.5, delta 0.25; lowest success rate {:.2} on {} (need >= 0.65)",
            worst.success_rate, worst.name
        ),
    );
    for i in &report.instances {
        assert!(i.success_rate >= 0.65, "{}: success rate {}", i.name, i.success_rate);
    }
    assert!(passed);
}

/// `(ε, δ, n, |B|, κ, n_s, n_t, θ, m)`.
type ParameterRow = (f64, f64, usize, usize, f64, usize, usize, u64, usize);

/// Rows computed with exact rationals and 50-digit logarithms.
const PARAMETER_TABLE: [ParameterRow; 10] = [
    (1.0, 0.5, 4, 10, 0.5, 64, 41, 629_760, 6),
    (0.5, 0.25, 5, 30, 1.0 / 3.0, 180, 50, 5_760_000, 12),
    (0.25, 0.1, 8, 80, 0.2, 800, 58, 71_270_400, 19),
    (0.1, 0.01, 3, 7, 1.0 / 11.0, 1452, 38, 6_741_504, 37),
    (2.0, 0.5, 10, 100, 2.0 / 3.0, 90, 60, 14_400_000, 6),
    (1.0, 0.05, 6, 45, 0.5, 96, 53, 5_495_040, 24),
    // θ = 90480640/13 before rounding up
    (0.3, 0.15, 5, 20, 3.0 / 13.0, 376, 47, 6_960_050, 16),
    (0.2, 0.2, 12, 200, 1.0 / 6.0, 1728, 65, 419_328_000, 13),
    (0.5, 0.9, 1, 3, 1.0 / 3.0, 36, 31, 71_424, 1),
    (5.0, 0.001, 20, 1000, 5.0 / 6.0, 116, 78, 265_408_000, 56),
];

#[test]
fn parameter_formulas_match_table() {
    let mut mismatches = Vec::new();
    for (eps, delta, n, size, kappa, n_s, n_t, theta, m) in PARAMETER_TABLE {
        let p = params_from(eps, delta, n, size).unwrap();
        let ok = (p.kappa - kappa).abs() <= 1e-12
            && p.n_s == n_s
            && p.n_t == n_t
            && p.theta == Some(theta)
            && p.m == m;
        if !ok {
            mismatches.push(format!("{:?} got {p:?}", (eps, delta, n, size)));
        }
    }
    verdict(
        "parameter formulas",
        mismatches.is_empty(),
        &format!("{} tuples, {} mismatches", PARAMETER_TABLE.len(), mismatches.len()),
    );
    assert!(mismatches.is_empty(), "{mismatches:#?}");
}

/// Fifty instances with `n ≤ 10`: generated, DNF-compiled and a few with
/// unsatisfiable or tautological parts.
fn normalization_corpus() -> Vec<Nfbdd> {
    let mut out: Vec<Nfbdd> = generated_corpus(30, 1..=10, usize::MAX, 11).into_iter().map(|i| i.diagram).collect();
    out.extend(dnf_corpus(12, 1..=10, usize::MAX, 12).into_iter().map(|i| i.diagram));
    for seed in 0..5 {
        out.push(gen_random(3 + seed as usize, 4 + 3 * seed as usize, 900 + seed).unwrap());
    }
    let mut b = NfbddBuilder::new(3);
    let f = b.sink(false);
    let t = b.sink(true);
    let dead = b.decision(Var::new(2), f, f);
    let live = b.decision(Var::new(3), t, f);
    let root = b.or(vec![dead, live]);
    out.push(b.build(root).unwrap());
    let mut b = NfbddBuilder::new(2);
    let f = b.sink(false);
    let root = b.decision(Var::new(1), f, f);
    out.push(b.build(root).unwrap());
    out.push(dnf_to_nfbdd(&DnfFormula { n_vars: 4, terms: vec![] }));
    assert_eq!(out.len(), 50);
    out
}

#[test]
fn normalization_preserves_function_and_shape() {
    let corpus = normalization_corpus();
    let mut failures = Vec::new();
    let mut evaluations = 0u64;
    for (k, b) in corpus.iter().enumerate() {
        let n = b.n_vars();
        match normalize(b) {
            NormalForm::ConstantFalse => {
                if b.count_exact().unwrap() != 0 {
                    failures.push(format!("#{k}: satisfiable input reported constant false"));
                }
                evaluations += 1 << n;
            }
            NormalForm::Normalized { diagram, layers } => {
                for bits in 0..1u64 << n {
                    let a = Assignment::from_u64(n, bits);
                    evaluations += 1;
                    if b.evaluate(b.source(), &a).unwrap() != diagram.evaluate(diagram.source(), &a).unwrap() {
                        failures.push(format!("#{k}: disagreement on {a}"));
                        break;
                    }
                }
                let shape = diagram.is_one_complete()
                    && diagram.is_zero_reduced()
                    && diagram.is_alternating()
                    && layers.top() == 2 * n
                    && diagram.layers().is_ok();
                if !shape {
                    failures.push(format!("#{k}: structural predicate failed"));
                }
            }
        }
    }
    verdict(
        "normalization soundness",
        failures.is_empty(),
        &format!("50 instances, {evaluations} evaluations, {} failures", failures.len()),
    );
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn divergence_class_bound_holds_exhaustively() {
    let mut instances: Vec<Nfbdd> = generated_corpus(14, 2..=8, 80, 31)
        .into_iter()
        .chain(dnf_corpus(6, 2..=8, 80, 32))
        .map(|i| normalized(&i.diagram).expect("corpus instances are satisfiable").0)
        .collect();
    instances.truncate(20);
    let report = check_divergence_bound(&instances, DEFAULT_EXACT_CAP).unwrap();
    verdict(
        "divergence-class bound",
        report.passed,
        &format!(
            "{} instances, {} nodes, {} (node, model, position) triples, {} violations",
            report.instances,
            report.nodes,
            report.triples,
            report.violations.len()
        ),
    );
    assert_eq!(report.instances, 20);
    assert!(report.passed, "{:#?}", report.violations);
}

#[test]
fn sample_restrictions_follow_derivation_paths() {
    let instances: Vec<(Nfbdd, _)> = generated_corpus(3, 4..=6, 80, 41)
        .into_iter()
        .chain(dnf_corpus(2, 4..=6, 80, 42))
        .map(|i| normalized(&i.diagram).unwrap())
        .collect();
    let mut samples = 0;
    let mut violations = 0;
    let mut runs = 0;
    for (k, (d, layers)) in instances.iter().enumerate() {
        // Fewer copies than the default parameters keep the per-sample path
        // checks cheap; the claim holds for any copy count.
        let params = FprasParams { n_s: 32, n_t: 8, theta: None, ..params_from(0.5, 0.25, d.n_vars(), d.size()).unwrap() }
            .with_seed(500 + k as u64);
        let report = check_path_consistency(d, layers, &params, 10);
        runs += report.runs;
        samples += report.samples;
        violations += report.violations;
    }
    let passed = violations == 0 && runs == 50 && samples > 0;
    verdict(
        "sample-path consistency",
        passed,
        &format!("{runs} runs on 5 instances, {samples} samples checked, {violations} violations"),
    );
    assert!(passed);
}

fn overlapping_or() -> Nfbdd {
    // Or(ite(x1,T,F), ite(x1,T,T), ite(x1,F,T)), |mod| = 2
    let mut b = NfbddBuilder::new(1);
    let t = b.sink(true);
    let f = b.sink(false);
    let a = b.decision(Var::new(1), t, f);
    let c = b.decision(Var::new(1), t, t);
    let e = b.decision(Var::new(1), f, t);
    let root = b.or(vec![a, c, e]);
    b.build(root).unwrap()
}

fn two_term_dnf() -> Nfbdd {
    // (x1 ∧ x2) ∨ (¬x1 ∧ x3) ∨ x2, |mod| = 5
    let mut b = NfbddBuilder::new(3);
    let t = b.sink(true);
    let f = b.sink(false);
    let x2 = b.decision(Var::new(2), t, f);
    let t1 = b.decision(Var::new(1), x2, f);
    let x3 = b.decision(Var::new(3), t, f);
    let t2 = b.decision(Var::new(1), f, x3);
    let t3 = b.decision(Var::new(2), t, f);
    let root = b.or(vec![t1, t2, t3]);
    b.build(root).unwrap()
}

#[test]
fn or_node_estimates_are_unbiased() {
    let generated = generated_corpus(1, 5..=5, 60, 61).remove(0).diagram;
    let cases = [("overlapping children", overlapping_or()), ("three-term DNF", two_term_dnf()), ("generated n=5", generated)];
    let mut lines = Vec::new();
    let mut passed = true;
    for (k, (name, b)) in cases.iter().enumerate() {
        let (d, layers) = normalized(b).unwrap();
        let report = check_unbiased_or(&d, &layers, d.source(), 100, 100, 70 + k as u64, 0.05).unwrap();
        passed &= report.passed && report.copies == 10_000;
        lines.push(format!("{name}: mean {:.3} vs {}", report.mean, report.oracle));
    }
    verdict("Or-node unbiasedness", passed, &format!("10^4 copies each; {}", lines.join("; ")));
    assert!(passed);
}

#[test]
fn interrupt_rate_is_small() {
    let report = check_interrupt_rate(corpus(), 0.5, 0.25, 200, 8, 0.20);
    verdict(
        "interrupt rate",
        report.passed,
        &format!("{} of {} core runs interrupted (bound 0.20)", report.interrupted, report.runs),
    );
    assert!(report.passed);
}

#[test]
fn reduce_matches_independent_bernoulli() {
    let mut passed = true;
    let mut parts = Vec::new();
    for (k, p) in [0.1, 0.3, 0.9].into_iter().enumerate() {
        let r = check_reduce_distribution(100_000, p, 8, 80 + k as u64);
        passed &= r.passed;
        parts.push(format!(
            "p={p}: max |freq-p| {:.5} (band {:.5}), max |cov| {:.6} (band {:.6})",
            r.max_frequency_deviation, r.frequency_band, r.max_abs_covariance, r.covariance_band
        ));
        if p == 0.3 {
            assert!(r.frequencies.iter().all(|f| (0.2942..=0.3058).contains(f)));
        }
    }
    verdict("reduce distribution", passed, &parts.join("; "));
    assert!(passed);
}

fn report_bytes(b: &Nfbdd, threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let report = pool.install(|| approx_count(b, 0.5, 0.25, 99).unwrap()).without_timing();
    serde_json::to_vec(&report).unwrap()
}

#[test]
fn reports_are_deterministic() {
    let b = &corpus()[0].diagram;
    let first = report_bytes(b, 1);
    let second = report_bytes(b, 1);
    let wide = report_bytes(b, 8);
    let passed = first == second && first == wide;
    verdict(
        "determinism",
        passed,
        &format!("{} report bytes; repeat equal {}, 1 vs 8 workers equal {}", first.len(), first == second, first == wide),
    );
    assert!(passed);
}

#[test]
fn degenerate_inputs_are_exact() {
    let mut b = NfbddBuilder::new(3);
    let f = b.sink(false);
    let t = b.sink(true);
    let dead = b.decision(Var::new(2), f, f);
    let also_dead = b.decision(Var::new(1), dead, f);
    let root = b.or(vec![also_dead, f]);
    let _ = t;
    let unsat_or = b.build(root).unwrap();
    let unsat_dnf = dnf_to_nfbdd(&DnfFormula { n_vars: 5, terms: vec![] });
    let false_sink = Nfbdd::new(2, vec![Node::False], NodeId::new(0)).unwrap();
    let tautology = Nfbdd::new(0, vec![Node::True], NodeId::new(0)).unwrap();

    let mut passed = true;
    for b in [&unsat_or, &unsat_dnf, &false_sink] {
        let r = approx_count(b, 0.5, 0.25, 1).unwrap();
        passed &= r.estimate == 0.0 && r.runs.is_empty() && r.params.is_none() && r.method == CountMethod::ConstantFalse;
    }
    let r = approx_count(&tautology, 0.5, 0.25, 1).unwrap();
    passed &= r.estimate == 1.0 && r.runs.is_empty() && r.params.is_none() && r.method == CountMethod::ConstantTrue;
    verdict("degenerate exactness", passed, "3 unsatisfiable inputs give 0, the n=0 tautology gives 1, no sampler runs");
    assert!(passed);
}

#[test]
fn random_dnf_instances_have_positive_counts() {
    // Guards the corpus builders: DNF terms never contain complementary
    // literals, so every nonempty formula is satisfiable.
    for seed in 0..50 {
        let f = gen_random_dnf(6, 3, 3, seed);
        assert!(f.count_truth_table() > 0);
    }
}
