//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::cell::Cell;
use std::path::Path;
use std::time::{Duration, Instant};

use oodshift::corpusio::load_corpus;
use oodshift::exec::run_sweep;
use oodshift::output::sweep_csv;
use oodshift::scoreio::load_records;
use oodshift_core::detectors::{fit_lda, ppl_score, OracleDetector, OracleScorer, TokenLogProbs};
use oodshift_core::math::mix64;
use oodshift_core::metrics::{auroc, far95};
use oodshift_core::records::{evaluate_records, Payload, PayloadKind, TextDetector};
use oodshift_core::runner::{SweepConfig, SweepKind, SweepResult};
use oodshift_core::simcore::{build_id_spec, sample, GmmSpec, Origin};
use oodshift_core::textshift::{oracle_detect, BowConfig, BowObjective, SparseCounts};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestRunner};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(checks: &[(&str, bool)], extra: String) -> Self {
        let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(name, _)| *name).collect();
        let detail = if failed.is_empty() {
            extra
        } else {
            format!("failed: {}; {extra}", failed.join(", "))
        };
        Self {
            pass: failed.is_empty(),
            detail,
        }
    }
}

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn timed_sweep(kind: SweepKind, threads: Option<usize>) -> (SweepResult, Duration) {
    let start = Instant::now();
    let result = run_sweep(kind, &SweepConfig::default(), threads).expect("sweep runs");
    (result, start.elapsed())
}

fn means(result: &SweepResult, detector: OracleDetector, n: usize) -> Vec<f64> {
    result.series(detector, n).iter().map(|c| c.mean_auroc).collect()
}

fn fmt(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
}

fn semantic_sweep(result: &SweepResult, elapsed: Duration) -> Outcome {
    let n = result.config.n_semantic;
    let msp = means(result, OracleDetector::MspOracle, n);
    let density = means(result, OracleDetector::DensityOracle, n);
    let grid = result.config.grid_for(SweepKind::Semantic);
    let last = grid.len() - 1;
    let chance = |v: f64| (0.48..=0.52).contains(&v);
    let checks = [
        (
            "(a) chance at overlap 1.0",
            grid[last] == 1.0 && chance(msp[last]) && chance(density[last]),
        ),
        ("(b) msp >= 0.99 at overlap 0.0", grid[0] == 0.0 && msp[0] >= 0.99),
        (
            "(c) msp >= density everywhere",
            msp.iter().zip(&density).all(|(m, d)| m >= d),
        ),
        ("(d) msp strictly decreasing", msp.windows(2).all(|w| w[0] > w[1])),
        ("runtime <= 180 s", elapsed <= Duration::from_secs(180)),
    ];
    Outcome::new(
        &checks,
        format!(
            "msp [{}] density [{}] in {:.1}s",
            fmt(&msp),
            fmt(&density),
            elapsed.as_secs_f64()
        ),
    )
}

fn background_sweep(result: &SweepResult, elapsed: Duration) -> Outcome {
    let d = result.config.total_dims;
    let mut msp_all = Vec::new();
    let mut monotone = true;
    let mut strongest = f64::NAN;
    for &n in &result.config.dims_splits {
        msp_all.extend(means(result, OracleDetector::MspOracle, n));
        let density = means(result, OracleDetector::DensityOracle, n);
        monotone &= density.windows(2).all(|w| w[0] <= w[1]);
        if d - n == 160 {
            strongest = *density.last().unwrap();
        }
    }
    let (lo, hi) = msp_all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let grid = result.config.grid_for(SweepKind::Background);
    let checks = [
        ("msp in [0.48, 0.52] every cell", lo >= 0.48 && hi <= 0.52),
        ("density nondecreasing in alpha", monotone),
        (
            "density >= 0.90 at alpha 1.0, m 160",
            *grid.last().unwrap() == 1.0 && strongest >= 0.90,
        ),
        ("runtime <= 300 s", elapsed <= Duration::from_secs(300)),
    ];
    Outcome::new(
        &checks,
        format!(
            "msp range [{lo:.4}, {hi:.4}], density at alpha 1.0 m 160 {strongest:.4}, in {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn translation_invariance() -> Outcome {
    let cases = Cell::new(0usize);
    let mut runner = TestRunner::new(Config {
        cases: 200,
        ..Config::default()
    });
    let strategy = (
        2usize..60,
        any::<u64>(),
        0.1f64..3.0,
        proptest::collection::vec(-50.0f64..50.0, 60),
    );
    let result = runner.run(&strategy, |(d, seed, mag, shift)| {
        let n = 1 + (seed % (d as u64 - 1)) as usize;
        let spec = build_id_spec(d, n, mag, seed).unwrap();
        let samples = sample(&spec, 64, seed ^ 1, Origin::InDistribution).unwrap();
        let mut z = vec![0.0; d];
        for &i in spec.partition().background_indices() {
            z[i] = shift[i];
        }
        let moved = samples.translated(&z).unwrap();
        let scorer = OracleScorer::new(&spec);
        let before = scorer.score(&samples, OracleDetector::MspOracle).unwrap();
        let after = scorer.score(&moved, OracleDetector::MspOracle).unwrap();
        let exact = before
            .values()
            .iter()
            .zip(after.values())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        cases.set(cases.get() + 1);
        prop_assert!(exact);
        Ok(())
    });
    Outcome::new(
        &[("bit-identical msp scores", result.is_ok())],
        format!("{} random specs x 64 samples", cases.get()),
    )
}

fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &x in id {
        for &y in ood {
            wins += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (id.len() * ood.len()) as f64
}

/// Scans every candidate threshold for the smallest one that keeps at least
/// 95% of OOD scores at or below it, then counts ID scores at or below it.
fn brute_far95(id: &[f64], ood: &[f64]) -> f64 {
    let mut candidates: Vec<f64> = ood.to_vec();
    candidates.sort_by(f64::total_cmp);
    let threshold = candidates
        .iter()
        .copied()
        .find(|&t| 100 * ood.iter().filter(|&&y| y <= t).count() >= 95 * ood.len())
        .unwrap();
    id.iter().filter(|&&x| x <= threshold).count() as f64 / id.len() as f64
}

fn tied_scores(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    let value = prop_oneof![
        (0i32..6).prop_map(|k| k as f64 * 0.25),
        -1.0f64..2.0,
        Just(0.0),
        Just(-0.0),
    ];
    proptest::collection::vec(value, 1..=max_len)
}

fn metric_equivalence() -> Outcome {
    let cases = Cell::new(0usize);
    let mut runner = TestRunner::new(Config {
        cases: 2000,
        ..Config::default()
    });
    let result = runner.run(&(tied_scores(100), tied_scores(100)), |(id, ood)| {
        cases.set(cases.get() + 1);
        prop_assert_eq!(auroc(&id, &ood).unwrap(), brute_auroc(&id, &ood));
        prop_assert_eq!(far95(&id, &ood).unwrap(), brute_far95(&id, &ood));
        Ok(())
    });
    Outcome::new(
        &[
            ("auroc and far95 equal brute force", result.is_ok()),
            (">= 1000 instances", cases.get() >= 1000),
        ],
        format!("{} instances, up to 200 scores each", cases.get()),
    )
}

fn length_bias() -> Outcome {
    let path = fixture("repetition.jsonl");
    let records = load_records(&path, PayloadKind::TokenLogprobs).expect("fixture loads");
    let ppl = evaluate_records(&records, TextDetector::Ppl).unwrap().auroc;
    let logpx = evaluate_records(&records, TextDetector::Logpx).unwrap().auroc;

    let mut payloads: Vec<TokenLogProbs> = records
        .iter()
        .filter_map(|r| match r.payload() {
            Payload::TokenLogprobs(t) => Some(t.clone()),
            Payload::ClassProbs(_) => None,
        })
        .collect();
    let mut runner = TestRunner::new(Config {
        cases: 500,
        ..Config::default()
    });
    let strategy = proptest::collection::vec(prop_oneof![-40.0f64..=0.0, Just(-0.0), Just(-1e-300)], 1..64);
    let mut generated = Vec::new();
    for _ in 0..500 {
        let tree = strategy.new_tree(&mut runner).unwrap();
        generated.push(TokenLogProbs::new(tree.current()).unwrap());
    }
    payloads.extend(generated);
    let invariant = payloads.iter().all(|t| {
        let base = ppl_score(t).to_bits();
        [2, 3, 5, 10]
            .iter()
            .all(|&k| ppl_score(&t.repeated(k)).to_bits() == base)
    });
    Outcome::new(
        &[
            ("ppl auroc 0.5 +- 0.01", (ppl - 0.5).abs() <= 0.01),
            ("logpx auroc 1.0", logpx == 1.0),
            ("ppl bit-exact for k in {2,3,5,10}", invariant),
        ],
        format!(
            "ppl {ppl:.4}, logpx {logpx:.4}, {} payloads checked for repetition",
            payloads.len()
        ),
    )
}

/// Bayes rule from the two class densities, written in distance form.
fn bayes_posterior(spec: &GmmSpec, x: &[f64]) -> f64 {
    let sq = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let var = spec.covariance_scale();
    let log_odds = (spec.class1_prior() / (1.0 - spec.class1_prior())).ln()
        - (sq(spec.centroid(1)) - sq(spec.centroid(0))) / (2.0 * var);
    1.0 / (1.0 + (-log_odds).exp())
}

fn posterior_consistency() -> Outcome {
    let mut worst = 0.0f64;
    for (d, n) in [(2, 1), (10, 3), (200, 40)] {
        let spec = build_id_spec(d, n, 1.0, 17 + d as u64).unwrap();
        let lda = fit_lda(&spec);
        let points = sample(&spec, 10_000, 99, Origin::InDistribution).unwrap();
        for x in points.rows() {
            worst = worst.max((lda.posterior(x) - bayes_posterior(&spec, x)).abs());
        }
    }
    Outcome::new(
        &[("max |difference| <= 1e-9", worst <= 1e-9)],
        format!("max difference {worst:.3e} over 3 x 10000 points"),
    )
}

fn gradient_check() -> (bool, f64) {
    let mut worst = 0.0f64;
    for trial in 0..20u64 {
        let rand = |i: u64| (mix64(trial * 1_000_003 + i) >> 11) as f64 / (1u64 << 53) as f64;
        let dims = 12;
        let docs: Vec<SparseCounts> = (0..30)
            .map(|j| {
                (0..dims)
                    .filter(|&i| rand(j * 100 + i as u64) < 0.4)
                    .map(|i| (i, (1.0 + 3.0 * rand(5000 + j * 100 + i as u64)).floor()))
                    .collect()
            })
            .collect();
        let labels: Vec<f64> = (0..30).map(|j| (rand(9000 + j) < 0.5) as u8 as f64).collect();
        let objective = BowObjective::new(docs, labels, dims, 0.01 * trial as f64).unwrap();
        let params: Vec<f64> = (0..objective.n_params())
            .map(|i| rand(20_000 + i as u64) * 2.0 - 1.0)
            .collect();
        let analytic = objective.gradient(&params);
        let h = 1e-5;
        let numeric: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut up = params.clone();
                let mut down = params.clone();
                up[i] += h;
                down[i] -= h;
                (objective.loss(&up) - objective.loss(&down)) / (2.0 * h)
            })
            .collect();
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    (worst <= 1e-5, worst)
}

fn oracle_detector() -> Outcome {
    let (grad_ok, grad_err) = gradient_check();

    let id = load_corpus(&fixture("separable_id.jsonl")).unwrap();
    let ood = load_corpus(&fixture("separable_ood.jsonl")).unwrap();
    let separable = oracle_detect(&id.texts(), &ood.texts(), 0.8, 0, &BowConfig::default()).unwrap();

    let vocab = [
        "river", "stone", "light", "paper", "green", "quiet", "window", "market", "signal", "garden", "silver",
        "north", "table", "cloud", "engine", "letter",
    ];
    let texts: Vec<String> = (0..200u64)
        .map(|j| {
            (0..10u64)
                .map(|i| vocab[(mix64(j * 64 + i) % vocab.len() as u64) as usize])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let null = oracle_detect(&refs, &refs, 0.8, 0, &BowConfig::default()).unwrap();

    Outcome::new(
        &[
            ("gradient relative error <= 1e-5", grad_ok),
            (
                "separable auroc 1.0 and far95 0.0",
                separable.report.auroc == 1.0 && separable.report.far95 == 0.0,
            ),
            (
                "identical-corpus auroc within 0.1 of 0.5",
                (null.report.auroc - 0.5).abs() <= 0.1,
            ),
        ],
        format!(
            "gradient error {grad_err:.2e}, separable auroc {:.4} far95 {:.4}, null auroc {:.4}",
            separable.report.auroc, separable.report.far95, null.report.auroc
        ),
    )
}

fn determinism(first: &[(SweepKind, String)]) -> Outcome {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let mut identical = true;
    for (kind, csv) in first {
        let (again, _) = timed_sweep(*kind, Some(threads));
        identical &= sweep_csv(&again) == *csv;
    }
    Outcome::new(
        &[("byte-identical csvs", identical)],
        format!("first runs on 1 thread, second runs on {threads} threads"),
    )
}

fn main() {
    let (semantic, semantic_time) = timed_sweep(SweepKind::Semantic, Some(1));
    let (background, background_time) = timed_sweep(SweepKind::Background, Some(1));
    let csvs = [
        (SweepKind::Semantic, sweep_csv(&semantic)),
        (SweepKind::Background, sweep_csv(&background)),
    ];

    let results = [
        ("semantic sweep reproduction", semantic_sweep(&semantic, semantic_time)),
        (
            "background sweep reproduction",
            background_sweep(&background, background_time),
        ),
        (
            "exact msp invariance under background translation",
            translation_invariance(),
        ),
        ("metric oracle equivalence", metric_equivalence()),
        ("length bias of ppl vs logpx", length_bias()),
        ("posterior consistency", posterior_consistency()),
        ("bag-of-words oracle detector", oracle_detector()),
        ("determinism across thread counts", determinism(&csvs)),
    ];

    let mut failures = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {status} {name} ({})", i + 1, outcome.detail);
        failures += !outcome.pass as usize;
    }
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failures,
        results.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
