//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every criterion prints exactly one PASS/FAIL line.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nc_forge::analytic::{ls_optimal_classifier, verify_maxmin_cosine, verify_self_duality};
use nc_forge::collapse::{compute_class_stats, is_simplex_etf, nc2_metrics, simplex_etf_frame};
use nc_forge::data::idx::{encode_images, parse_images, to_idx};
use nc_forge::data::{build_task, load_idx, quantize_unit, write_idx, Dataset, TaskSpec};
use nc_forge::numerics::{grad_check, DenseMatrix, DiffGraph, NodeId};
use nc_forge::objectives::{
    between_class_node, centered_means_node, cross_entropy_node, mse_node, within_class_node,
    ClassWeights, RegConfig,
};
use nc_forge::trainkit::{
    build_objective, evaluate, noise_robustness, parallel_runs, train, Buckets, TrainConfig,
    TrainState,
};
use nc_forge::Error;

type Outcome = (bool, String);
/// Name, check, wall-clock budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, f64);

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.5..1.5))
}

fn labels_covering(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n)
        .map(|i| if i < k { i } else { rng.random_range(0..k) })
        .collect()
}

/// Worst relative error of a scalar function of one matrix argument.
fn check_matrix<F>(x0: &DenseMatrix, build: F) -> f64
where
    F: Fn(&mut DiffGraph, NodeId) -> nc_forge::Result<NodeId>,
{
    let (r, c) = x0.shape();
    let f = |x: &[f64]| {
        let mut g = DiffGraph::new();
        let p = g.param(DenseMatrix::from_vec(r, c, x.to_vec())?);
        let out = build(&mut g, p)?;
        let v = g.value(out).item()?;
        Ok((v, g.backward(out)?.get(p).into_vec()))
    };
    grad_check(f, x0.data(), 1e-6).expect("grad_check")
}

fn set_params(state: &mut TrainState, flat: &[f64]) {
    let mut at = 0;
    let mut params = state.extractor.params_mut();
    params.extend(state.classifier.params_mut());
    for p in params {
        let n = p.data().len();
        p.data_mut().copy_from_slice(&flat[at..at + n]);
        at += n;
    }
}

fn flat_params(state: &mut TrainState) -> Vec<f64> {
    let mut params = state.extractor.params_mut();
    params.extend(state.classifier.params_mut());
    params.iter().flat_map(|p| p.data().to_vec()).collect()
}

/// Full objective (supervised + both regularizers) over every network
/// parameter on a random 8-sample batch.
fn check_composed(seed: u64, mse: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 3;
    let x = random(8, 5, &mut rng);
    let labels = labels_covering(8, k, &mut rng);
    let ds = Dataset::new(x.clone(), labels.clone(), k, "batch").unwrap();
    let mut cfg = TrainConfig::with_epochs(4);
    cfg.hidden = vec![6];
    cfg.feature_dim = 4;
    cfg.seed = seed;
    cfg.reg = RegConfig {
        lambda1: 0.3,
        lambda2: 0.7,
        start_epoch: 0,
    };
    if mse {
        cfg.loss = nc_forge::trainkit::LossKind::Mse;
    }
    let mut state = TrainState::init(&cfg, &ds).unwrap();
    let x0 = flat_params(&mut state);
    let weights = ClassWeights::normalized(vec![1.0, 2.0, 0.5]).unwrap();
    let f = |p: &[f64]| {
        let mut s = state.clone();
        set_params(&mut s, p);
        let mut g = DiffGraph::new();
        let (obj, _, leaves) = build_objective(&mut g, &s, &cfg, &x, &labels, &weights, 1)?;
        let v = g.value(obj).item()?;
        let grads = g.backward(obj)?;
        Ok((
            v,
            leaves
                .iter()
                .flat_map(|&l| grads.get(l).into_vec())
                .collect(),
        ))
    };
    grad_check(f, &x0, 1e-6).expect("grad_check")
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut instances = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let k = 4;
        let labels = labels_covering(10, k, &mut rng);
        let w =
            ClassWeights::normalized((0..k).map(|_| rng.random_range(0.2..3.0)).collect()).unwrap();
        let z = random(10, k, &mut rng);
        worst = worst.max(check_matrix(&z, |g, z| {
            cross_entropy_node(g, z, &labels, &w)
        }));
        worst = worst.max(check_matrix(&z, |g, z| mse_node(g, z, &labels)));
        let h = random(10, 6, &mut rng);
        worst = worst.max(check_matrix(&h, |g, h| within_class_node(g, h, &labels)));
        worst = worst.max(check_matrix(&h, |g, h| {
            let c = centered_means_node(g, h, &labels)?;
            between_class_node(g, c)
        }));
        worst = worst.max(check_composed(200 + seed, seed % 2 == 1));
        instances += 5;
    }
    (
        worst <= 1e-4,
        format!("{instances} instances, max relative error {worst:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, p) in [(2, 2), (4, 8), (10, 64)] {
        let r = verify_maxmin_cosine(k, p, 3000, 0).unwrap();
        let bound = -1.0 / (k as f64 - 1.0);
        let gap = (r.max_cosine - bound).abs();
        ok &= gap <= 1e-2;
        detail.push(format!(
            "(K={k},P={p}) max_cos={:.5} gap={gap:.1e}",
            r.max_cosine
        ));
    }
    (ok, detail.join(" "))
}

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn mse(h: &DMatrix<f64>, y: &DMatrix<f64>, w: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let ones = DMatrix::from_element(n, 1, 1.0);
    (h * w + ones * b - y).norm_squared() / (2.0 * n as f64)
}

fn criterion_3() -> Outcome {
    let mut worst = 0.0f64;
    let mut decreases = 0;
    for inst in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + inst);
        let (n, p, k) = (40 + 4 * inst as usize, 6, 4);
        let h = random(n, p, &mut rng);
        let labels = labels_covering(n, k, &mut rng);
        let sol = ls_optimal_classifier(&h, &labels, k).unwrap();

        // Oracle: normal equations of the augmented design [H | 1].
        let hn = to_na(&h);
        let a = DMatrix::from_fn(n, p + 1, |i, j| if j < p { hn[(i, j)] } else { 1.0 });
        let y = DMatrix::from_fn(n, k, |i, j| if labels[i] == j { 1.0 } else { 0.0 });
        let x = (a.transpose() * &a)
            .lu()
            .solve(&(a.transpose() * &y))
            .expect("full rank");
        let mut ours = DMatrix::zeros(p + 1, k);
        for j in 0..k {
            for i in 0..p {
                ours[(i, j)] = sol.w[(i, j)];
            }
            ours[(p, j)] = sol.b[j];
        }
        worst = worst.max((&ours - &x).norm() / x.norm());

        let w = ours.rows(0, p).into_owned();
        let b = ours.rows(p, 1).into_owned();
        let base = mse(&hn, &y, &w, &b);
        for _ in 0..10 {
            let dw: DMatrix<f64> = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0));
            let db: DMatrix<f64> = DMatrix::from_fn(1, k, |_, _| rng.random_range(-1.0..1.0));
            let scale = 1e-3 / (dw.norm_squared() + db.norm_squared()).sqrt();
            if mse(&hn, &y, &(&w + dw * scale), &(&b + db * scale)) < base {
                decreases += 1;
            }
        }
    }
    (
        worst <= 1e-6 && decreases == 0,
        format!("max relative error {worst:.2e}, loss decreases in 100 perturbations: {decreases}"),
    )
}

fn criterion_4() -> Outcome {
    let r = verify_self_duality(10, 64, 5.0, 0).unwrap();
    (
        r.min_alignment >= 0.999 && r.imbalanced_min_alignment < r.min_alignment,
        format!(
            "balanced min alignment {:.6}, r=100 min alignment {:.6}",
            r.min_alignment, r.imbalanced_min_alignment
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut ok = true;
    let mut worst = 0.0f64;
    for k in 2..=16 {
        for p in [k - 1, k, k + 5] {
            if p == 0 {
                continue;
            }
            let m = simplex_etf_frame(k, p, 2.5, k as u64).unwrap();
            let c = is_simplex_etf(&m, 1e-8).unwrap();
            ok &= c.verdict && c.residual <= 1e-8;
            worst = worst.max(c.residual);
        }
        let ortho = DenseMatrix::from_fn(k + 2, k, |i, j| if i == j { 1.0 } else { 0.0 });
        ok &= !is_simplex_etf(&ortho, 1e-8).unwrap().verdict;
    }

    // Pairwise angle for K = 10, measured through the class-mean statistics
    // of features sitting exactly on the frame.
    let m = simplex_etf_frame(10, 12, 1.0, 9).unwrap();
    let (n_per, k) = (3, 10);
    let h = DenseMatrix::from_fn(n_per * k, 12, |i, d| m[(d, i % k)]);
    let labels: Vec<usize> = (0..n_per * k).map(|i| i % k).collect();
    let stats = compute_class_stats(&h, &labels, k).unwrap();
    let angles = nc2_metrics(&stats).unwrap().angle_matrix;
    let expected = (-1.0f64 / 9.0).acos().to_degrees();
    let mut angle_err = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                angle_err = angle_err.max((angles[(i, j)] - expected).abs());
            }
        }
    }
    ok &= angle_err <= 1e-6 && (expected - 96.38).abs() < 5e-3;
    (
        ok,
        format!(
            "max residual {worst:.1e}, K=10 angle {:.4} deg (max error {angle_err:.1e} deg)",
            expected
        ),
    )
}

/// One ablation run: final metrics of a seed/variant pair.
#[derive(Debug, Clone)]
struct Run {
    seed: u64,
    variant: usize,
    acc: f64,
    nc1: f64,
    cos_dev: f64,
    noise: [f64; 2],
}

const VARIANTS: [&str; 4] = ["CE", "CE+L_W", "CE+L_B", "CE+both"];

/// Twelve runs (four variants, three seeds) shared by criteria 6 and 7.
fn ablation() -> &'static (Vec<Run>, Duration) {
    static RUNS: OnceLock<(Vec<Run>, Duration)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let t0 = Instant::now();
        let runs = parallel_runs(12, |i| {
            let seed = (i / 4) as u64;
            let variant = i % 4;
            let spec = TaskSpec {
                seed,
                ..TaskSpec::default()
            };
            let (train_set, test_set) = build_task(&spec).unwrap();
            let mut cfg = TrainConfig::desk_default();
            cfg.seed = seed;
            cfg.drw_epoch = Some(TrainConfig::default_drw_epoch(cfg.epochs));
            let (l1, l2) = (3e-4, 0.3);
            cfg.reg = RegConfig {
                lambda1: if variant & 1 == 1 { l1 } else { 0.0 },
                lambda2: if variant & 2 == 2 { l2 } else { 0.0 },
                start_epoch: 0,
            };
            let state = train(&cfg, &train_set).unwrap();
            let acc = evaluate(&state, &test_set, &Buckets::default())
                .unwrap()
                .accuracy;
            let noisy = noise_robustness(&state, &test_set, &[0.3, 0.4], 1000 + seed).unwrap();
            let last = state.log.last().unwrap();
            Run {
                seed,
                variant,
                acc,
                nc1: last.nc.nc1,
                cos_dev: last.nc.nc2_cos_dev,
                noise: [noisy[0].accuracy, noisy[1].accuracy],
            }
        });
        (runs, t0.elapsed())
    })
}

fn mean_of(runs: &[Run], variant: usize, f: impl Fn(&Run) -> f64) -> f64 {
    let v: Vec<f64> = runs
        .iter()
        .filter(|r| r.variant == variant)
        .map(f)
        .collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_6() -> Outcome {
    let (runs, elapsed) = ablation();
    let acc: Vec<f64> = (0..4).map(|v| mean_of(runs, v, |r| r.acc)).collect();
    let ordering = acc[0] < acc[1] && acc[0] < acc[2] && acc[3] >= acc[1] && acc[3] >= acc[2];
    let gain = acc[3] - acc[0];
    let mut per_seed = true;
    for seed in 0..3 {
        let get = |v: usize| {
            runs.iter()
                .find(|r| r.seed == seed && r.variant == v)
                .unwrap()
        };
        let (ce, both) = (get(0), get(3));
        per_seed &= both.nc1 < ce.nc1 && both.cos_dev < ce.cos_dev;
    }
    let means = VARIANTS
        .iter()
        .zip(&acc)
        .map(|(n, a)| format!("{n}={a:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    (
        ordering && gain >= 0.02 && per_seed && *elapsed < Duration::from_secs(15 * 60),
        format!(
            "{means}; gain {:.2} pts; nc1 and cos_dev lower on every seed: {per_seed}; {:.0} s",
            100.0 * gain,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Outcome {
    let (runs, _) = ablation();
    let base = mean_of(runs, 0, |r| (r.noise[0] + r.noise[1]) / 2.0);
    let reg = mean_of(runs, 3, |r| (r.noise[0] + r.noise[1]) / 2.0);
    let by_sigma: Vec<String> = [0.3, 0.4]
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "sigma {s}: CE {:.4} vs both {:.4}",
                mean_of(runs, 0, |r| r.noise[i]),
                mean_of(runs, 3, |r| r.noise[i])
            )
        })
        .collect();
    (reg >= base, by_sigma.join(", "))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = TaskSpec {
        head_per_class: 120,
        test_per_class: 10,
        ..TaskSpec::default()
    };
    let (train_set, _) = build_task(&spec).unwrap();
    let q = quantize_unit(&train_set).unwrap();
    let (img, lbl) = (dir.path().join("x.idx"), dir.path().join("y.idx"));
    write_idx(&q, 4, 8, &img, &lbl).unwrap();
    let back = load_idx(&img, &lbl).unwrap();
    let bits = |d: &Dataset| {
        d.features()
            .data()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    let exact = bits(&back) == bits(&q) && back.labels() == q.labels();

    let (images, _) = to_idx(&q, 4, 8).unwrap();
    let mut bytes = encode_images(&images);
    let file_exact = std::fs::read(&img).unwrap() == bytes;
    bytes[2] ^= 0x40;
    let rejected = matches!(parse_images(&bytes), Err(Error::Format(_)));
    std::fs::write(&img, &bytes).unwrap();
    let rejected_file = matches!(load_idx(&img, &lbl), Err(Error::Format(_)));
    (
        exact && file_exact && rejected && rejected_file,
        format!(
            "{} samples bit-exact: {exact}, bytes stable: {file_exact}, corrupted magic -> FormatError: {}",
            q.len(),
            rejected && rejected_file
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "preset = cifar10lt-style\nepochs = 5\nhead_per_class = 200\ntest_per_class = 20\nlambda1 = 0.001\ndrw_epoch = auto\n",
    )
    .unwrap();
    let run = |out: &Path| {
        let run = Command::new(env!("CARGO_BIN_EXE_nc-forge"))
            .args(["train", "--config"])
            .arg(&config)
            .args(["--seed", "11", "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
        std::fs::read(out.join("metrics.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    let lines = String::from_utf8_lossy(&a).lines().count();
    (
        a == b && lines == 7,
        format!("{} bytes, {lines} lines, identical: {}", a.len(), a == b),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 gradient correctness", criterion_1, 10.0),
        ("2 max-min cosine", criterion_2, 30.0),
        ("3 least-squares head", criterion_3, 10.0),
        ("4 self-duality under balanced sampling", criterion_4, 10.0),
        ("5 simplex ETF geometry", criterion_5, 10.0),
        ("6 long-tail ablation", criterion_6, 900.0),
        ("7 noise robustness", criterion_7, 900.0),
        ("8 IDX round trip", criterion_8, 10.0),
        ("9 deterministic metrics.csv", criterion_9, 300.0),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let (ok, detail) = check();
        let secs = t0.elapsed().as_secs_f64();
        let ok = ok && secs < budget;
        println!(
            "criterion {name}: {} ({detail}) [{secs:.1} s]",
            if ok { "PASS" } else { "FAIL" }
        );
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
