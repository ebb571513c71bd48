//! Acceptance report: one line per criterion.
//!
//! Criteria backed by full-size runs read `run_record.json` files from
//! `$ZDDA_ACCEPTANCE_RUNS` (default: `runs/` at the workspace root), one
//! directory per config name. A missing run prints SKIP. Their failures are
//! reported, and only fail the test under `ZDDA_ACCEPTANCE_STRICT=1`; the
//! synthetic criteria always assert.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use zdda::datasets::{blacken_augment, colorize, ImageTensor, NoiseModel};
use zdda::eval::grid::{NAIVE, ZDDA3};
use zdda::eval::{
    evaluate, evaluate_dual, fuse_probabilities, noise_grid_eval, semantic_similarity, EmbeddingTable, EvalReport,
    NaiveFusion, NoiseGridResult, Predictor, DEFAULT_LEVELS,
};
use zdda::experiment::RunRecord;
use zdda::model::loss::{l2_alignment_loss, softmax_cross_entropy};
use zdda::model::network::{build_branch, BranchTag, SplitNetworkSpec};
use zdda::model::train::TrainHyper;
use zdda::pipeline::{
    assemble_fusion, assemble_zdda2, pretrain_target, step1_align, step2_joint, step3_fusion, FusionAugment,
    FusionMode, Provenance, ZddaArtifacts,
};
use zdda::seed;

// criterion 1
const C1_SOURCE_ONLY_MAX: f64 = 0.55;
const C1_ZDDA2_MIN: f64 = 0.85;
const C1_TARGET_ONLY_MIN: f64 = 0.95;
const C1_GAIN_MIN: f64 = 0.25;
const C1_BUDGET_SECONDS: f64 = 45.0 * 60.0;
// criterion 2
const C2_FASHION_MIN: f64 = 0.60;
const C2_EMNIST_MARGIN: f64 = 0.05;
// criterion 3
const C3_GAIN_MIN: f64 = 0.15;
// criterion 4
const C4_ALL_CELLS_FRACTION: f64 = 0.5;
const C4_TARGET_HEAVY_FRACTION: f64 = 0.6;
const C4_TARGET_HEAVY_LEVEL: f64 = 40.0;
// criterion 5
const C5_SIGMAS: f64 = 3.0;
// criterion 6
const C6_BUDGET_SECONDS: f64 = 120.0;
const C6_GRAD_REL_ERR: f64 = 1e-4;
const C6_GRAD_STEP: f64 = 1e-3;
// criterion 8
const C8_CAT_DOG: f64 = 0.761;
const C8_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Line {
    id: &'static str,
    status: Status,
    detail: String,
    /// Whether a failure fails the test target.
    hard: bool,
}

fn runs_dir() -> PathBuf {
    std::env::var_os("ZDDA_ACCEPTANCE_RUNS")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../runs"))
}

fn load_run(name: &str) -> Option<RunRecord> {
    RunRecord::load(&runs_dir().join(name)).ok()
}

fn acc(r: &RunRecord, key: &str) -> Option<f64> {
    r.accuracy(key)
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn status_of(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn criterion1() -> Line {
    let id = "1 MNIST->MNIST-M adaptation gap (EMNIST T-I)";
    let Some(r) = load_run("mnist-emnist") else {
        let partial = load_run("mnist-fashion")
            .map(|f| {
                format!(
                    "; from the Fashion-T-I run: source-only {} (<= {}), target-only {} (>= {})",
                    acc(&f, "source_only").map_or("n/a".into(), pct),
                    pct(C1_SOURCE_ONLY_MAX),
                    acc(&f, "target_only").map_or("n/a".into(), pct),
                    pct(C1_TARGET_ONLY_MIN)
                )
            })
            .unwrap_or_default();
        return Line {
            id,
            status: Status::Skip,
            detail: format!("no mnist-emnist run (EMNIST letters not available){partial}"),
            hard: false,
        };
    };
    let (so, z, to) = (acc(&r, "source_only"), acc(&r, "zdda2"), acc(&r, "target_only"));
    let (Some(so), Some(z), Some(to)) = (so, z, to) else {
        return Line {
            id,
            status: Status::Fail,
            detail: "run lacks source_only/zdda2/target_only reports".into(),
            hard: false,
        };
    };
    let secs: f64 = r.stages.values().map(|s| s.wall_seconds).sum();
    let ok = so <= C1_SOURCE_ONLY_MAX
        && z >= C1_ZDDA2_MIN
        && to >= C1_TARGET_ONLY_MIN
        && z - so >= C1_GAIN_MIN
        && secs <= C1_BUDGET_SECONDS;
    Line {
        id,
        status: status_of(ok),
        detail: format!(
            "source-only {} zdda2 {} target-only {} gain {:+.2} pts, training {:.0}s",
            pct(so),
            pct(z),
            pct(to),
            100.0 * (z - so),
            secs
        ),
        hard: false,
    }
}

fn criterion2() -> Line {
    let id = "2 T-I ordering (Fashion vs EMNIST)";
    let Some(f) = load_run("mnist-fashion").and_then(|r| acc(&r, "zdda2")) else {
        return Line {
            id,
            status: Status::Skip,
            detail: "no mnist-fashion run".into(),
            hard: false,
        };
    };
    let fashion_ok = f >= C2_FASHION_MIN;
    match load_run("mnist-emnist").and_then(|r| acc(&r, "zdda2")) {
        Some(e) => Line {
            id,
            status: status_of(fashion_ok && e >= f + C2_EMNIST_MARGIN),
            detail: format!("fashion T-I {} (>= {}), emnist T-I {}", pct(f), pct(C2_FASHION_MIN), pct(e)),
            hard: false,
        },
        None => Line {
            id,
            status: if fashion_ok { Status::Skip } else { Status::Fail },
            detail: format!(
                "fashion T-I zdda2 {} ({} {}); EMNIST half not run (dataset not available)",
                pct(f),
                if fashion_ok { ">=" } else { "<" },
                pct(C2_FASHION_MIN)
            ),
            hard: false,
        },
    }
}

fn criterion3() -> Line {
    let id = "3 Fashion->Fashion-M gain";
    let runs: Vec<RunRecord> = ["fashion-mnist", "fashion-emnist"].iter().filter_map(|n| load_run(n)).collect();
    if runs.is_empty() {
        return Line {
            id,
            status: Status::Skip,
            detail: "no fashion-mnist / fashion-emnist run".into(),
            hard: false,
        };
    }
    let mut best: Option<(String, f64, f64)> = None;
    for r in &runs {
        if let (Some(so), Some(z)) = (acc(r, "source_only"), acc(r, "zdda2")) {
            if best.as_ref().is_none_or(|b| z - so > b.2 - b.1) {
                best = Some((r.name.clone(), so, z));
            }
        }
    }
    match best {
        Some((name, so, z)) => Line {
            id,
            status: status_of(z - so >= C3_GAIN_MIN),
            detail: format!("{name}: source-only {} zdda2 {} gain {:+.2} pts", pct(so), pct(z), 100.0 * (z - so)),
            hard: false,
        },
        None => Line {
            id,
            status: Status::Fail,
            detail: "runs lack source_only/zdda2 reports".into(),
            hard: false,
        },
    }
}

fn grid_of(run: &str, r: &RunRecord, tag: &str) -> Option<NoiseGridResult> {
    r.grids.get(tag).and_then(|rel| NoiseGridResult::read_json(&runs_dir().join(run).join(rel)).ok())
}

fn majority_ok(g: &NoiseGridResult) -> (bool, String) {
    let (won, total) = g.wins(|_, _| true);
    let (won_t, total_t) = g.wins(|_, pt| pt >= C4_TARGET_HEAVY_LEVEL);
    let ok = won as f64 > C4_ALL_CELLS_FRACTION * total as f64
        && won_t as f64 >= C4_TARGET_HEAVY_FRACTION * total_t as f64;
    (ok, format!("{won}/{total} cells, {won_t}/{total_t} with p_target >= {C4_TARGET_HEAVY_LEVEL}"))
}

fn criterion4() -> Line {
    let id = "4 fusion robustness (ZDDA3 >= naive)";
    let Some(r) = load_run("mnist-fashion") else {
        return Line {
            id,
            status: Status::Skip,
            detail: "no mnist-fashion run".into(),
            hard: false,
        };
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for tag in ["black_image", "black_rectangle"] {
        match grid_of("mnist-fashion", &r, tag) {
            Some(g) => {
                let (o, d) = majority_ok(&g);
                ok &= o;
                parts.push(format!("{tag}: {d}"));
            }
            None => {
                ok = false;
                parts.push(format!("{tag}: missing"));
            }
        }
    }
    Line {
        id,
        status: status_of(ok),
        detail: parts.join("; "),
        hard: false,
    }
}

/// Cell (0,0) equals the clean accuracies; the all-corrupted black-image
/// cell sits within a few binomial sigmas of the majority prior.
fn degenerate_checks(g: &NoiseGridResult, clean_z: f64, clean_n: f64) -> (bool, String) {
    let last = (g.p_source_levels.len() - 1, g.p_target_levels.len() - 1);
    let prior = g.majority_prior;
    let sigma = (prior * (1.0 - prior) / g.n as f64).sqrt();
    let corner = [g.accuracy[ZDDA3][last.0][last.1], g.accuracy[NAIVE][last.0][last.1]];
    let clean_ok = g.accuracy[ZDDA3][0][0] == clean_z && g.accuracy[NAIVE][0][0] == clean_n;
    let corner_ok = corner.iter().all(|a| (a - prior).abs() <= C5_SIGMAS * sigma);
    (
        clean_ok && corner_ok,
        format!(
            "(0,0) {}/{} vs clean {}/{}; (100,100) {}/{} vs prior {} +- {}",
            pct(g.accuracy[ZDDA3][0][0]),
            pct(g.accuracy[NAIVE][0][0]),
            pct(clean_z),
            pct(clean_n),
            pct(corner[0]),
            pct(corner[1]),
            pct(prior),
            pct(C5_SIGMAS * sigma)
        ),
    )
}

fn hyper(bs: usize, lr: f64, it: usize, seed: u64) -> TrainHyper {
    let mut h = TrainHyper::new(bs, lr, it, seed);
    h.monitor_every = 0;
    h
}

fn miniature_artifacts(m: &common::Miniature, iters: usize) -> ZddaArtifacts {
    let ti_target = m.pairs.target_dataset().unwrap();
    let (t, r0) = pretrain_target(&ti_target, &SplitNetworkSpec::lenet(3), &hyper(16, 0.01, iters, 1)).unwrap();
    let s1_init = build_branch::<f32>(&SplitNetworkSpec::lenet(1), 2, BranchTag::S1).unwrap();
    let (s1, r1) = step1_align(&m.pairs, &t, s1_init, &hyper(16, 1e-4, iters, 2)).unwrap();
    let (s2, head, r2) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &hyper(16, 1e-5, iters, 3)).unwrap();
    let (f, r3) = step3_fusion(&m.tr_source, &s2, &s1, FusionAugment::default(), &hyper(16, 1e-2, iters, 4)).unwrap();
    ZddaArtifacts {
        t,
        s1,
        s2,
        source_classifier: head,
        fusion: Some(f),
        provenance: Provenance {
            steps: vec![r0, r1, r2, r3],
            ..Default::default()
        },
    }
}

fn criterion5_miniature() -> Line {
    let m = common::miniature(8, 10);
    let a = miniature_artifacts(&m, 30);
    let (c_src, c_tgt) = assemble_zdda2(&a.s2, &a.t, &a.source_classifier).unwrap();
    let dual = assemble_fusion(&a, FusionMode::TestDual).unwrap();
    let g = noise_grid_eval(&dual, &c_src, &c_tgt, &m.test_pairs, &DEFAULT_LEVELS, &DEFAULT_LEVELS, NoiseModel::BlackImage, 5)
        .unwrap();
    let (src, tgt) = (m.test_pairs.source_dataset().unwrap(), m.test_pairs.target_dataset().unwrap());
    let naive = NaiveFusion {
        source: &c_src,
        target: &c_tgt,
    };
    let cz = evaluate_dual(&dual, &src, &tgt).unwrap().overall_accuracy;
    let cn = evaluate_dual(&naive, &src, &tgt).unwrap().overall_accuracy;
    let (ok, d) = degenerate_checks(&g, cz, cn);
    Line {
        id: "5 degenerate noise (synthetic miniature)",
        status: status_of(ok),
        detail: d,
        hard: true,
    }
}

fn criterion5_full() -> Line {
    let id = "5 degenerate noise (mnist-fashion run)";
    let Some(r) = load_run("mnist-fashion") else {
        return Line {
            id,
            status: Status::Skip,
            detail: "no mnist-fashion run".into(),
            hard: false,
        };
    };
    let (Some(g), Some(cz), Some(cn)) = (
        grid_of("mnist-fashion", &r, "black_image"),
        acc(&r, "zdda3_grid_clean"),
        acc(&r, "naive_fusion_grid_clean"),
    ) else {
        return Line {
            id,
            status: Status::Fail,
            detail: "run lacks the black-image grid or its clean references".into(),
            hard: false,
        };
    };
    let (ok, d) = degenerate_checks(&g, cz, cn);
    Line {
        id,
        status: status_of(ok),
        detail: d,
        hard: false,
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn fd_ok(x: &Array2<f64>, analytic: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> bool {
    let mut xp = x.clone();
    ndarray::indices(x.dim()).into_iter().all(|idx| {
        let orig = xp[idx];
        xp[idx] = orig + C6_GRAD_STEP;
        let up = f(&xp);
        xp[idx] = orig - C6_GRAD_STEP;
        let down = f(&xp);
        xp[idx] = orig;
        rel_err(analytic[idx], (up - down) / (2.0 * C6_GRAD_STEP)) < C6_GRAD_REL_ERR
    })
}

struct PixelPredictor;

impl Predictor for PixelPredictor {
    fn class_count(&self) -> usize {
        3
    }

    fn scores(&self, images: &[ImageTensor]) -> zdda::Result<Array2<f32>> {
        Ok(Array2::from_shape_fn((images.len(), 3), |(i, c)| {
            let cls = ((images[i].data()[0] * 3.0) as usize).min(2);
            f32::from(u8::from(c == cls))
        }))
    }
}

fn property_suite() -> Vec<(&'static str, bool)> {
    let mut out = Vec::new();
    let mut rng = seed::rng(6);

    // frozen checksums and lineage across the three steps
    let m = common::miniature(6, 2);
    let ti_target = m.pairs.target_dataset().unwrap();
    let (t, _) = pretrain_target(&ti_target, &SplitNetworkSpec::lenet(3), &hyper(16, 0.01, 10, 1)).unwrap();
    let t_sum = t.checksum();
    let s1_init = build_branch::<f32>(&SplitNetworkSpec::lenet(1), 2, BranchTag::S1).unwrap();
    let (s1, _) = step1_align(&m.pairs, &t, s1_init, &hyper(16, 1e-4, 10, 2)).unwrap();
    let s1_sum = s1.checksum();
    let (s2_0, _, _) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &hyper(16, 1e-5, 0, 3)).unwrap();
    let (s2, _, _) = step2_joint(&m.tr_source, &m.pairs, &t, &s1, &hyper(16, 1e-5, 10, 3)).unwrap();
    let (f0, _) = step3_fusion(&m.tr_source, &s2, &s1, FusionAugment::default(), &hyper(16, 1e-2, 0, 4)).unwrap();
    let (f, _) = step3_fusion(&m.tr_source, &s2, &s1, FusionAugment::default(), &hyper(16, 1e-2, 10, 4)).unwrap();
    out.push(("frozen checksums (t, s4) unchanged", t.checksum() == t_sum && f.s4.checksum() == s1_sum));
    out.push((
        "lineage s2<-s1, s3<-s2, s4<-s1 bitwise",
        s2_0.params.bitwise_eq(&s1.params) && f0.s3.params.bitwise_eq(&s2.params) && f0.s4.params.bitwise_eq(&s1.params),
    ));

    // gradient checks
    let logits = Array2::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0));
    let labels = [1usize, 3, 0];
    let (_, g) = softmax_cross_entropy(logits.view(), &labels).unwrap();
    let sm_ok = fd_ok(&logits, &g, |x| softmax_cross_entropy(x.view(), &labels).unwrap().0);
    let a = Array2::from_shape_fn((5, 7), |_| rng.random_range(-2.0..2.0));
    let b = Array2::from_shape_fn((5, 7), |_| rng.random_range(-2.0..2.0));
    let (_, ga, gb) = l2_alignment_loss(a.view(), b.view()).unwrap();
    let l2_ok = fd_ok(&a, &ga, |x| l2_alignment_loss(x.view(), b.view()).unwrap().0)
        && fd_ok(&b, &gb, |x| l2_alignment_loss(a.view(), x.view()).unwrap().0);
    out.push(("softmax-CE and L2 gradients vs central differences", sm_ok && l2_ok));

    // blacken composition at the documented setting
    let ds = common::synthetic_gray("d", 10, 10, true, 3);
    let aug = blacken_augment(&ds, 20.0, 10, 9).unwrap();
    let black = aug.images().iter().filter(|im| im.is_all_zero()).count();
    out.push(("blacken_augment 100 x 10 at p=20 has exactly 200 black", aug.len() == 1000 && black == 200));

    // colorize oracle
    let colorize_ok = (0..100).all(|_| {
        let (h, w) = (rng.random_range(1..10), rng.random_range(1..10));
        let gray = ImageTensor::new(1, h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap();
        let patch = ImageTensor::new(3, h, w, (0..3 * h * w).map(|_| rng.random()).collect()).unwrap();
        let out = colorize(&gray, &patch).unwrap();
        (0..3).all(|c| {
            (0..h).all(|y| (0..w).all(|x| out.get(c, y, x) == (patch.get(c, y, x) - gray.get(0, y, x)).abs()))
        })
    });
    out.push(("colorize per-pixel oracle, 100 instances", colorize_ok));

    // naive fusion scan oracle
    let fusion_ok = (0..1000).all(|_| {
        let k = rng.random_range(1..6);
        let table = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut t = Array2::from_shape_fn((4, k), |_| rng.random_range(0..6) as f32 + 0.5);
            for mut r in t.rows_mut() {
                let s = r.sum();
                r.mapv_inplace(|v| v / s);
            }
            t
        };
        let ps = table(&mut rng);
        let pt = if rng.random::<bool>() { ps.clone() } else { table(&mut rng) };
        let got = fuse_probabilities(ps.view(), pt.view()).unwrap();
        (0..4).all(|i| {
            let mut best = (f32::NEG_INFINITY, 0);
            for (j, &p) in ps.row(i).iter().chain(pt.row(i).iter()).enumerate() {
                if p > best.0 {
                    best = (p, j % k);
                }
            }
            got[i] == best.1
        })
    });
    out.push(("naive fusion vs scan oracle, 1000 tables", fusion_ok));

    // evaluate: permutation invariance and the hand-computed confusion
    let ds = common::synthetic_gray("e", 3, 8, true, 4);
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let perm_ok = evaluate(&PixelPredictor, &ds).unwrap() == evaluate(&PixelPredictor, &ds.select(&idx)).unwrap();
    let r = EvalReport::from_confusion(vec![vec![2, 0, 0], vec![1, 1, 0], vec![0, 0, 2]]);
    let hand_ok = r.overall_accuracy == 5.0 / 6.0 && (r.mean_per_class_accuracy - 2.5 / 3.0).abs() < 1e-15;
    out.push(("evaluate permutation invariance and hand confusion", perm_ok && hand_ok));

    // end-to-end determinism
    let a1 = miniature_artifacts(&m, 50);
    let a2 = miniature_artifacts(&m, 50);
    out.push(("50-iteration three-step run bitwise repeatable", a1.checksums() == a2.checksums()));
    out
}

fn criterion6() -> Line {
    let start = Instant::now();
    let items = property_suite();
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = items.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    Line {
        id: "6 property suite",
        status: status_of(failed.is_empty() && secs < C6_BUDGET_SECONDS),
        detail: if failed.is_empty() {
            format!("{} checks in {secs:.1}s (budget {C6_BUDGET_SECONDS}s)", items.len())
        } else {
            format!("failed: {failed:?} ({secs:.1}s)")
        },
        hard: true,
    }
}

fn criterion7() -> Line {
    Line {
        id: "7 RGB-D numbers",
        status: Status::Skip,
        detail: "declared not reproducible at desk scale; fusion structure covered by 4-6".into(),
        hard: false,
    }
}

fn criterion8() -> Line {
    let id = "8 semantic similarity";
    // properties on a synthetic table always hold
    let table = EmbeddingTable::from_vectors([
        ("cat".to_string(), vec![1.0, 0.2, 0.0]),
        ("dog".to_string(), vec![0.8, 0.5, 0.1]),
        ("shirt".to_string(), vec![-0.3, 0.1, 0.9]),
    ])
    .unwrap();
    let a = vec!["cat".to_string(), "shirt".to_string()];
    let b = vec!["dog".to_string()];
    let s_ab = semantic_similarity(&a, &b, &table).unwrap();
    let s_ba = semantic_similarity(&b, &a, &table).unwrap();
    let s_ww = semantic_similarity(&b, &b, &table).unwrap();
    let props = s_ab == s_ba && (-1.0..=1.0).contains(&s_ab) && (s_ww - 1.0).abs() < 1e-6;
    let Some(path) = std::env::var_os("ZDDA_EMBEDDINGS") else {
        return Line {
            id,
            status: status_of(props),
            detail: "symmetry, range and S(w,w)=1 hold; cat/dog spot check needs ZDDA_EMBEDDINGS".into(),
            hard: true,
        };
    };
    let words = ["cat", "dog"].iter().map(|w| w.to_string()).collect();
    let spot = EmbeddingTable::load(Path::new(&path), Some(&words))
        .and_then(|t| semantic_similarity(&["cat".into()], &["dog".into()], &t));
    match spot {
        Ok(s) => Line {
            id,
            status: status_of(props && (s - C8_CAT_DOG).abs() <= C8_TOL),
            detail: format!("S(cat, dog) = {s:.4} (expected {C8_CAT_DOG} +- {C8_TOL})"),
            hard: true,
        },
        Err(e) => Line {
            id,
            status: Status::Fail,
            detail: format!("embedding table unusable: {e}"),
            hard: true,
        },
    }
}

#[test]
fn acceptance() {
    let lines = vec![
        criterion1(),
        criterion2(),
        criterion3(),
        criterion4(),
        criterion5_miniature(),
        criterion5_full(),
        criterion6(),
        criterion7(),
        criterion8(),
    ];
    let strict = std::env::var("ZDDA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    println!("acceptance runs from {}", runs_dir().display());
    let mut hard_failures = Vec::new();
    for l in &lines {
        let tag = match l.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("criterion {}: {tag} - {}", l.id, l.detail);
        if l.status == Status::Fail && (l.hard || strict) {
            hard_failures.push(l.id);
        }
    }
    assert!(hard_failures.is_empty(), "failed: {hard_failures:?}");
}
