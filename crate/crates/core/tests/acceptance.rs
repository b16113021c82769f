//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion does.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use oodkit::calibration::{
    cq_label_smoothing, cq_temperature, ece, fit_optimal_temperature, probabilities,
};
use oodkit::data::{ClassQuantity, FeatureSet};
use oodkit::io::manifest::{FAR_OOD, NEAR_OOD, TEST_ID, TRAIN_ID, VAL_ID};
use oodkit::io::npy::{load_npy, save_npy};
use oodkit::io::synth::{generate_synthetic, SynthConfig};
use oodkit::linalg::{orthonormalize_columns, Matrix};
use oodkit::metrics::{aupr, auroc, fpr_at_tpr};
use oodkit::mixup::{decouple, mix, sample_alpha_pair, train_reference_mlp, TrainConfig};
use oodkit::scorers::{default_principal_dim, fit_mds, fit_vim, score_mds, score_msp, score_vim};
use oodkit::softmax::{log_sum_exp, Temperature};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::new(
        rows,
        cols,
        (0..rows * cols).map(|_| gaussian(rng)).collect(),
    )
    .unwrap()
}

// ---------------------------------------------------------------- metrics

fn pair_count_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &a in id {
        for &b in ood {
            if a > b {
                wins += 1.0;
            } else if a == b {
                wins += 0.5;
            }
        }
    }
    wins / (id.len() * ood.len()) as f64
}

fn sweep_fpr(id: &[f64], ood: &[f64], target: f64) -> f64 {
    let mut thresholds: Vec<f64> = id.iter().chain(ood).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    for t in thresholds {
        let tp = id.iter().filter(|&&s| s >= t).count() as f64;
        if tp / id.len() as f64 >= target {
            return ood.iter().filter(|&&s| s >= t).count() as f64 / ood.len() as f64;
        }
    }
    1.0
}

fn sweep_ap(pos: &[f64], neg: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for t in thresholds {
        let tp = pos.iter().filter(|&&s| s >= t).count() as f64;
        let fp = neg.iter().filter(|&&s| s >= t).count() as f64;
        let recall = tp / pos.len() as f64;
        if tp + fp > 0.0 {
            ap += (recall - prev_recall) * tp / (tp + fp);
        }
        prev_recall = recall;
    }
    ap
}

fn metric_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + case);
        let n_id = rng.random_range(1..=200);
        let n_ood = rng.random_range(1..=200);
        // every third case draws from a coarse grid to force ties
        let grid = case % 3 == 0;
        let mut draw = |shift: f64| {
            let v = gaussian(&mut rng) + shift;
            if grid {
                (v * 2.0).round() / 2.0
            } else {
                v
            }
        };
        let id: Vec<f64> = (0..n_id).map(|_| draw(0.7)).collect();
        let ood: Vec<f64> = (0..n_ood).map(|_| draw(0.0)).collect();
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();

        let pairs = [
            (
                auroc(&id, &ood).unwrap(),
                pair_count_auroc(&id, &ood),
                "auroc",
            ),
            (
                fpr_at_tpr(&id, &ood, 0.95).unwrap(),
                sweep_fpr(&id, &ood, 0.95),
                "fpr@95",
            ),
            (aupr(&id, &ood).unwrap(), sweep_ap(&id, &ood), "aupr-in"),
            (
                aupr(&neg(&ood), &neg(&id)).unwrap(),
                sweep_ap(&neg(&ood), &neg(&id)),
                "aupr-out",
            ),
        ];
        for (got, want, name) in pairs {
            let err = (got - want).abs();
            worst = worst.max(err);
            check(
                err <= 1e-9,
                format!("case {case}: {name} {got} vs oracle {want}"),
            )?;
        }
    }
    Ok(format!("100 cases, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- decoupling

fn decoupling_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for trial in 0..1000 {
        let d = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let a = random_matrix(m, d, &mut rng);
        let b: Vec<f64> = (0..m).map(|_| gaussian(&mut rng)).collect();
        let affine = |v: &[f64]| -> Vec<f64> {
            a.mul_vec(v)
                .unwrap()
                .iter()
                .zip(&b)
                .map(|(x, y)| x + y)
                .collect()
        };
        let x: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let xp: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let margin = rng.random_range(0.1..=1.0);
        let pair = sample_alpha_pair(margin, &mut rng).unwrap();

        let h1 = affine(&mix(&x, &xp, pair.alpha1()).unwrap());
        let h2 = affine(&mix(&x, &xp, pair.alpha2()).unwrap());
        let (hx, hxp) = decouple(&h1, &h2, &pair).unwrap();
        for (got, want) in hx
            .iter()
            .chain(&hxp)
            .zip(affine(&x).iter().chain(&affine(&xp)))
        {
            let err = (got - want).abs();
            worst = worst.max(err);
            check(
                err <= 1e-9,
                format!("trial {trial}: recovered {got}, expected {want}"),
            )?;
        }
    }
    Ok(format!("1000 affine maps, max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------- calibration

fn calibration_recovery() -> Outcome {
    let (n, classes) = (5_000, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let mut clean = Vec::with_capacity(n * classes);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..classes).map(|_| 1.5 * gaussian(&mut rng)).collect();
        let lse = log_sum_exp(&z);
        // inverse-CDF draw from softmax(z): labels are calibrated by construction
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut y = classes - 1;
        for (c, &zc) in z.iter().enumerate() {
            acc += (zc - lse).exp();
            if u < acc {
                y = c;
                break;
            }
        }
        labels.push(y);
        clean.extend(z);
    }
    let scaled = Matrix::new(n, classes, clean.iter().map(|z| 3.0 * z).collect()).unwrap();
    let set = FeatureSet::new(
        Matrix::zeros(n, 1),
        Some(scaled.clone()),
        Some(labels.clone()),
        classes,
    )
    .unwrap();

    let t = fit_optimal_temperature(&set).unwrap();
    check(
        (2.7..=3.3).contains(&t),
        format!("T_opt = {t} outside [2.7, 3.3]"),
    )?;
    let before = ece(
        &probabilities(&scaled, &Temperature::one()).unwrap(),
        &labels,
        15,
    )
    .unwrap();
    let after = ece(
        &probabilities(&scaled, &Temperature::Scalar(t)).unwrap(),
        &labels,
        15,
    )
    .unwrap();
    check(
        after < before,
        format!("ECE after scaling {after} not below {before}"),
    )?;

    let q = ClassQuantity::from_counts(vec![400, 120, 35, 9, 1]).unwrap();
    check(
        cq_temperature(t, 0.0, &q).unwrap() == vec![t; classes],
        "beta = 0 does not reduce to T_opt".into(),
    )?;
    check(
        cq_label_smoothing(0.07, 0.0, &q).unwrap() == vec![0.07; classes],
        "gamma = 0 does not reduce to s_base".into(),
    )?;
    Ok(format!("T_opt = {t:.4}, ECE {before:.4} -> {after:.4}"))
}

// ---------------------------------------------------------------- synthetic separation

fn synthetic_separation() -> Outcome {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let split = |name| data.split(name).unwrap();
    let (train, test, near, far) = (
        split(TRAIN_ID),
        split(TEST_ID),
        split(NEAR_OOD),
        split(FAR_OOD),
    );

    let vim = fit_vim(train, default_principal_dim(train.dim())).unwrap();
    let mds = fit_mds(train, None).unwrap();
    let one = Temperature::one();
    let vim_s = |s: &FeatureSet<f64>| score_vim(&vim, s).unwrap().into_vec();
    let mds_s = |s: &FeatureSet<f64>| score_mds(&mds, s).unwrap().into_vec();
    let msp_s = |s: &FeatureSet<f64>| score_msp(s, &one).unwrap().into_vec();

    let vim_near = auroc(&vim_s(test), &vim_s(near)).unwrap();
    let msp_near = auroc(&msp_s(test), &msp_s(near)).unwrap();
    check(
        vim_near >= msp_near + 0.05,
        format!("ViM near AUROC {vim_near:.4} < MSP {msp_near:.4} + 0.05"),
    )?;
    for (name, id, ood) in [
        ("ViM", vim_s(test), vim_s(far)),
        ("MDS", mds_s(test), mds_s(far)),
    ] {
        let a = auroc(&id, &ood).unwrap();
        let f = fpr_at_tpr(&id, &ood, 0.95).unwrap();
        check(
            a >= 0.99 && f <= 0.02,
            format!("{name} far AUROC {a:.4}, FPR@95 {f:.4}"),
        )?;
    }
    Ok(format!("near AUROC ViM {vim_near:.4} vs MSP {msp_near:.4}"))
}

// ---------------------------------------------------------------- UAMT ablation

fn uamt_ablation() -> Outcome {
    let data = generate_synthetic(&SynthConfig::default()).unwrap();
    let (train, val, test, near) = (
        data.split(TRAIN_ID).unwrap(),
        data.split(VAL_ID).unwrap(),
        data.split(TEST_ID).unwrap(),
        data.split(NEAR_OOD).unwrap(),
    );
    let one = Temperature::one();
    let run = |use_uamt: bool| {
        let cfg = TrainConfig {
            use_uamt,
            ..TrainConfig::default()
        };
        let (model, _) = train_reference_mlp(train, &cfg).unwrap();
        let val_logits = model.logits_batch(val.features()).unwrap();
        let val_ece = ece(
            &probabilities(&val_logits, &one).unwrap(),
            val.labels().unwrap(),
            15,
        )
        .unwrap();
        let msp = |s: &FeatureSet<f64>| {
            let view = s
                .with_logits(model.logits_batch(s.features()).unwrap())
                .unwrap();
            score_msp(&view, &one).unwrap().into_vec()
        };
        (val_ece, auroc(&msp(test), &msp(near)).unwrap())
    };
    let (uamt_ece, uamt_auroc) = run(true);
    let (vanilla_ece, vanilla_auroc) = run(false);
    let detail = format!(
        "val ECE {uamt_ece:.4} vs {vanilla_ece:.4}, near MSP AUROC {uamt_auroc:.4} vs {vanilla_auroc:.4}"
    );
    check(
        uamt_ece <= vanilla_ece,
        format!("UAMT ECE not lower: {detail}"),
    )?;
    check(
        uamt_auroc >= vanilla_auroc - 0.01,
        format!("UAMT AUROC regressed: {detail}"),
    )?;
    Ok(detail)
}

// ---------------------------------------------------------------- ViM invariances

fn vim_invariances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (n, d, classes) = (300, 6, 3);
    // distinct column scales give a well-separated spectrum
    let mut features = random_matrix(n, d, &mut rng);
    for i in 0..n {
        for (j, v) in features.row_mut(i).iter_mut().enumerate() {
            *v *= (d - j) as f64;
        }
    }
    let logits = Matrix::new(
        n,
        classes,
        (0..n * classes).map(|_| 2.0 + gaussian(&mut rng)).collect(),
    )
    .unwrap();
    let train = FeatureSet::new(features, Some(logits), None, classes).unwrap();
    let test_f = random_matrix(100, d, &mut rng);
    let test_z = random_matrix(100, classes, &mut rng);
    let test = FeatureSet::new(test_f.clone(), Some(test_z.clone()), None, classes).unwrap();

    let model = fit_vim(&train, 3).unwrap();
    let scores = score_vim(&model, &test).unwrap().into_vec();

    // rotation: features of both sets rotated by one orthogonal matrix
    let rot = orthonormalize_columns(&random_matrix(d, d, &mut rng)).unwrap();
    let rotated = |s: &FeatureSet<f64>| {
        FeatureSet::new(
            s.features().matmul(&rot).unwrap(),
            s.logits().cloned(),
            None,
            classes,
        )
        .unwrap()
    };
    let rmodel = fit_vim(&rotated(&train), 3).unwrap();
    let rscores = score_vim(&rmodel, &rotated(&test)).unwrap().into_vec();
    let rot_err = scores
        .iter()
        .zip(&rscores)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    check(
        rot_err <= 1e-8,
        format!("rotation changed scores by {rot_err:.2e}"),
    )?;

    // in-subspace rows: mean plus principal-basis combinations
    let p = model.principal_basis();
    let mut rows = vec![model.mean().to_vec()];
    for _ in 0..20 {
        let c: Vec<f64> = (0..p.cols()).map(|_| 3.0 * gaussian(&mut rng)).collect();
        rows.push(
            model
                .mean()
                .iter()
                .enumerate()
                .map(|(i, m)| m + (0..p.cols()).map(|k| p[(i, k)] * c[k]).sum::<f64>())
                .collect(),
        );
    }
    let z = random_matrix(rows.len(), classes, &mut rng);
    let inside = FeatureSet::new(
        Matrix::from_rows(&rows).unwrap(),
        Some(z.clone()),
        None,
        classes,
    )
    .unwrap();
    let s_in = score_vim(&model, &inside).unwrap().into_vec();
    check(
        s_in[0] == log_sum_exp(z.row(0)),
        "score at the mean is not logsumexp".into(),
    )?;
    let sub_err = s_in
        .iter()
        .zip(z.row_iter())
        .map(|(s, r)| (s - log_sum_exp(r)).abs())
        .fold(0.0, f64::max);
    check(
        sub_err <= 1e-12,
        format!("in-subspace rows deviate by {sub_err:.2e}"),
    )?;

    // ranking against the virtual-class probability, computed from scratch
    let virtual_prob: Vec<f64> = test_f
        .row_iter()
        .zip(test_z.row_iter())
        .map(|(f, zr)| {
            let centered: Vec<f64> = f.iter().zip(model.mean()).map(|(a, m)| a - m).collect();
            let q = model.residual_basis();
            let r = (0..q.cols())
                .map(|k| (0..d).map(|i| q[(i, k)] * centered[i]).sum::<f64>().powi(2))
                .sum::<f64>()
                .sqrt();
            let mut ext = zr.to_vec();
            ext.push(model.alpha() * r);
            let top = ext.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = ext.iter().map(|v| (v - top).exp()).sum();
            (ext[classes] - top).exp() / denom
        })
        .collect();
    let mut by_score: Vec<usize> = (0..100).collect();
    by_score.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut by_prob: Vec<usize> = (0..100).collect();
    by_prob.sort_by(|&a, &b| virtual_prob[a].partial_cmp(&virtual_prob[b]).unwrap());
    check(
        by_score == by_prob,
        "ranking differs from virtual-class probability".into(),
    )?;
    Ok(format!(
        "rotation {rot_err:.1e}, subspace {sub_err:.1e}, ranking identical"
    ))
}

// ---------------------------------------------------------------- IO contract

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_oodkit"))
        .current_dir(dir)
        .arg("--quiet")
        .args(args)
        .env_remove("OODKIT_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    check(
        out.status.code() == Some(0),
        format!(
            "`{}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ),
    )
}

fn io_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut m = random_matrix(17, 5, &mut rng);
    let specials = [
        0.0,
        -0.0,
        f64::MIN_POSITIVE,
        5e-324,
        f64::MAX,
        -f64::MAX,
        1.0 / 3.0,
    ];
    for (i, v) in specials.into_iter().enumerate() {
        m = Matrix::new(17, 5, {
            let mut d = m.into_vec();
            d[i * 3] = v;
            d
        })
        .unwrap();
    }
    let p = tmp.path().join("m.npy");
    save_npy(&m, &p).map_err(|e| e.to_string())?;
    let back = load_npy(&p).map_err(|e| e.to_string())?;
    let exact = back.rows() == 17
        && back.cols() == 5
        && m.as_slice()
            .iter()
            .zip(back.as_slice())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    check(exact, "NPY round trip is not bit-exact".into())?;

    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        std::fs::create_dir(&dir).map_err(|e| e.to_string())?;
        for args in [
            &["synth", "--out", "data"][..],
            &[
                "fit",
                "vim",
                "--manifest",
                "data/manifest.json",
                "--out",
                "vim.oodk",
            ],
            &[
                "calibrate",
                "--manifest",
                "data/manifest.json",
                "--model",
                "vim.oodk",
            ],
            &[
                "score",
                "--model",
                "vim.oodk",
                "--manifest",
                "data/manifest.json",
                "--split",
                "near_ood",
                "--out",
                "near.npy",
            ],
            &[
                "eval",
                "--model",
                "vim.oodk",
                "--manifest",
                "data/manifest.json",
                "--report",
                "report.json",
            ],
        ] {
            run_cli(&dir, args)?;
        }
        let report = std::fs::read(dir.join("report.json")).map_err(|e| e.to_string())?;
        let scores = std::fs::read(dir.join("near.npy")).map_err(|e| e.to_string())?;
        reports.push((report, scores));
    }
    check(
        reports[0] == reports[1],
        "repeated pipeline produced different outputs".into(),
    )?;
    let text = String::from_utf8_lossy(&reports[0].0);
    for key in ["fpr_at_95", "auroc", "aupr_in", "aupr_out"] {
        check(text.contains(key), format!("report lacks `{key}`"))?;
    }
    Ok(format!(
        "bit-exact NPY, identical {}-byte reports",
        reports[0].0.len()
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        (
            "metric oracle equivalence",
            metric_oracles,
            Duration::from_secs(5),
        ),
        (
            "decoupling exactness",
            decoupling_exactness,
            Duration::from_secs(5),
        ),
        (
            "calibration recovery",
            calibration_recovery,
            Duration::from_secs(10),
        ),
        (
            "synthetic benchmark separation",
            synthetic_separation,
            Duration::from_secs(30),
        ),
        (
            "UAMT directional ablation",
            uamt_ablation,
            Duration::from_secs(120),
        ),
        (
            "ViM invariance suite",
            vim_invariances,
            Duration::from_secs(5),
        ),
        ("IO contract", io_contract, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > limit => Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({elapsed:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why} ({elapsed:.2?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
