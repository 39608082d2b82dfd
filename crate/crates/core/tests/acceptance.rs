//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Each criterion includes its runtime budget.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_force_hard_margin, dot, rng, separable_instance};
use mvdr::convnet::{conv2d_valid, init_weights, sigmoid, FeatureMap, Kernel, StageShape};
use mvdr::fusion::FeatureMatrix;
use mvdr::imageio::ViewKind;
use mvdr::pca::{
    self, correlation, eigen_symmetric, select_components, standardize, EigenPair, PcaModel,
    Standardization,
};
use mvdr::pipeline::{self, model_from_bytes, model_to_bytes, PipelineConfig, TrainedModel};
use mvdr::svm::{train_binary, BinaryProblem, SolverParams, SvmModel};
use mvdr::synthetic::{write_dataset, SyntheticSpec};
use mvdr::Error;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

type Outcome = std::result::Result<String, String>;

/// Name, check, runtime budget in seconds.
type Criterion = (&'static str, fn() -> Outcome, u64);

fn check(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

/// Textbook Pearson correlation of columns `a` and `b`; 0 against a constant column.
fn pearson(rows: &[Vec<f64>], a: usize, b: usize) -> f64 {
    let m = rows.len() as f64;
    let ma = rows.iter().map(|r| r[a]).sum::<f64>() / m;
    let mb = rows.iter().map(|r| r[b]).sum::<f64>() / m;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for r in rows {
        let (da, db) = (r[a] - ma, r[b] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    sab / (saa * sbb).sqrt()
}

fn pca_oracle() -> Outcome {
    let mut r = rng(1001);
    let (mut worst_value, mut worst_residual, mut worst_entry) = (0.0f64, 0.0f64, 0.0f64);
    for case in 0..200 {
        let m = r.random_range(2..=12);
        let n = r.random_range(1..=12);
        let rows: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| r.random_range(-3.0..3.0)).collect())
            .collect();
        let x = FeatureMatrix::from_rows(&rows, vec![0; m]).map_err(err)?;
        let (a, _) = standardize(&x).map_err(err)?;
        let corr = correlation(&a);

        let mut reference = DMatrix::<f64>::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    reference[(i, j)] = pearson(&rows, i, j);
                }
                worst_entry = worst_entry.max((corr.get(i, j) - reference[(i, j)]).abs());
            }
        }
        let mut expected: Vec<f64> = SymmetricEigen::new(reference.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        expected.sort_by(|p, q| q.total_cmp(p));

        let pairs = eigen_symmetric(&corr).map_err(err)?;
        check(pairs.len() == n, || {
            format!("case {case}: {} eigenpairs for n = {n}", pairs.len())
        })?;
        let mut rebuilt = DMatrix::<f64>::zeros(n, n);
        for (p, e) in pairs.iter().zip(&expected) {
            worst_value = worst_value.max((p.value - e).abs());
            let v = nalgebra::DVector::from_column_slice(&p.vector);
            let residual = (&reference * &v - &v * p.value).amax();
            worst_residual = worst_residual.max(residual);
            rebuilt += &v * v.transpose() * p.value;
        }
        worst_residual = worst_residual.max((rebuilt - &reference).amax());

        // the fitted model reports the same spectrum
        let fitted = pca::fit(&x, pca::DEFAULT_THRESHOLD).map_err(err)?;
        for (p, e) in fitted.eigenvalues().iter().zip(&expected) {
            worst_value = worst_value.max((p - e).abs());
        }
    }
    check(worst_entry <= 1e-12, || {
        format!("correlation entry off by {worst_entry:e}")
    })?;
    check(worst_value <= 1e-7, || {
        format!("eigenvalue off by {worst_value:e} (tol 1e-7)")
    })?;
    check(worst_residual <= 1e-8, || {
        format!("reconstruction residual {worst_residual:e} (tol 1e-8)")
    })?;
    Ok(format!(
        "200 matrices; max |Δλ| {worst_value:.1e}, max residual {worst_residual:.1e}"
    ))
}

fn brute_force_select(values: &[f64], threshold: f64) -> usize {
    let total: f64 = values.iter().sum();
    (1..=values.len())
        .find(|&w| values[..w].iter().sum::<f64>() / total >= threshold)
        .unwrap_or(values.len())
}

fn selection_rule() -> Outcome {
    let mut r = rng(2002);
    let mut spectra: Vec<Vec<f64>> = vec![
        vec![85.0, 15.0],
        vec![0.85, 0.15],
        vec![1.0; 20],
        vec![17.0, 0.0, 0.0, 3.0],
        vec![5.0],
    ];
    while spectra.len() < 100 {
        let n = r.random_range(1..=30);
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                if r.random_bool(0.2) {
                    r.random_range(0..5) as f64
                } else {
                    r.random_range(0.0..10.0f64).powi(2)
                }
            })
            .collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.iter().sum::<f64>() > 0.0 {
            spectra.push(v);
        }
    }
    for (i, v) in spectra.iter().enumerate() {
        for threshold in [pca::DEFAULT_THRESHOLD, 0.5, 0.95, 1.0] {
            let got = select_components(v, threshold).map_err(err)?;
            let want = brute_force_select(v, threshold);
            check(got == want, || {
                format!("spectrum {i} at {threshold}: got {got}, brute force {want}")
            })?;
        }
    }
    check(
        select_components(&[85.0, 15.0], 0.85).map_err(err)? == 1,
        || "exact 85 % boundary".into(),
    )?;
    Ok("100 spectra × 4 thresholds exact".into())
}

fn naive_conv(p: &FeatureMap, k: &Kernel, b: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..p.height - 2 {
        for j in 0..p.width - 2 {
            let mut s = b;
            for u in 0..3 {
                for v in 0..3 {
                    s += p.data[(i + u) * p.width + (j + v)] * k[u * 3 + v];
                }
            }
            out.push(s);
        }
    }
    out
}

fn convolution_oracle() -> Outcome {
    let mut r = rng(3003);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let (w, h) = (r.random_range(3..=14), r.random_range(3..=14));
        let data = (0..w * h).map(|_| r.random_range(0.0..1.0)).collect();
        let plane = FeatureMap::new(w, h, data).map_err(err)?;
        let kernel: Kernel = std::array::from_fn(|_| r.random_range(-2.0..2.0));
        let bias = r.random_range(-2.0..2.0);
        let got = conv2d_valid(&plane, &kernel, bias).map_err(err)?;
        let want = naive_conv(&plane, &kernel, bias);
        check((got.width, got.height) == (w - 2, h - 2), || {
            format!("case {case}: output size")
        })?;
        for (a, b) in got.data.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-12, || {
        format!("convolution off by {worst:e} (tol 1e-12)")
    })?;
    check(sigmoid(0.0) == 0.5, || {
        format!("sigmoid(0) = {}", sigmoid(0.0))
    })?;
    let mut sym = 0.0f64;
    for _ in 0..1000 {
        let x = r.random_range(-40.0..40.0);
        sym = sym.max((sigmoid(x) + sigmoid(-x) - 1.0).abs());
    }
    check(sym <= 1e-12, || format!("sigmoid symmetry off by {sym:e}"))?;
    Ok(format!(
        "500 triples, max error {worst:.1e}; sigmoid symmetry {sym:.1e}"
    ))
}

fn svm_correctness() -> Outcome {
    let mut r = rng(4004);
    let c = 1e6;
    let mut worst_margin = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for case in 0..100 {
        let m = r.random_range(4..=12);
        let d = r.random_range(1..=3);
        let (rows, labels) = separable_instance(&mut r, m, d);
        let oracle = brute_force_hard_margin(&rows, &labels)
            .ok_or(format!("case {case}: oracle found no solution"))?;
        let s = train_binary(
            &BinaryProblem {
                rows: &rows,
                labels: &labels,
                c,
            },
            &SolverParams::default(),
        )
        .map_err(err)?;
        check(s.converged, || {
            format!("case {case}: solver did not converge")
        })?;
        let margin = 2.0 / dot(&s.weights, &s.weights).sqrt();
        worst_margin = worst_margin.max((margin - oracle.margin()).abs());
        for (i, x) in rows.iter().enumerate() {
            let f = labels[i] * s.decision(x).map_err(err)?;
            let a = s.alpha[i];
            let residual = if a == 0.0 {
                (1.0 - f).max(0.0)
            } else if a < c {
                (f - 1.0).abs()
            } else {
                (f - 1.0).max(0.0)
            };
            worst_kkt = worst_kkt.max(residual);
        }
    }
    check(worst_margin <= 1e-3, || {
        format!("margin off by {worst_margin:e} (tol 1e-3)")
    })?;
    check(worst_kkt <= 1e-3, || {
        format!("KKT residual {worst_kkt:e} (tol 1e-3)")
    })?;
    Ok(format!(
        "100 instances; max |Δmargin| {worst_margin:.1e}, max KKT residual {worst_kkt:.1e}"
    ))
}

fn cli_train(data: &Path, out: &Path) -> std::result::Result<(), String> {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = [
        "mvdr",
        "train",
        "--data",
        data.to_str().unwrap(),
        "--model-out",
        out.to_str().unwrap(),
        "--views",
        "r,g,b,gray,depth",
        "--resolution",
        "16",
    ];
    match mvdr::cli::run(argv, &mut stdout, &mut stderr) {
        0 => Ok(()),
        code => Err(format!(
            "train exited {code}: {}",
            String::from_utf8_lossy(&stderr)
        )),
    }
}

fn determinism() -> Outcome {
    let data = common::fixture_root().join("train");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a.mvdr"), tmp.path().join("b.mvdr"));
    cli_train(&data, &a)?;
    cli_train(&data, &b)?;
    let (a, b) = (
        std::fs::read(a).map_err(|e| e.to_string())?,
        std::fs::read(b).map_err(|e| e.to_string())?,
    );
    check(a == b, || "model files differ".into())?;
    Ok(format!("two runs, {} identical bytes", a.len()))
}

/// Working resolution for the ablation: the generated images' native size.
const ABLATION_RESOLUTION: usize = 20;

fn ablation() -> Outcome {
    let mut lines = Vec::new();
    let without = vec![ViewKind::R, ViewKind::G, ViewKind::B, ViewKind::Gray];
    let mut failures = Vec::new();
    for seed in [1u64, 2, 3] {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let spec = SyntheticSpec {
            seed,
            size: ABLATION_RESOLUTION,
            ..SyntheticSpec::default()
        };
        let (train, test) = write_dataset(tmp.path(), &spec).map_err(err)?;
        let mut acc = Vec::new();
        for views in [without.clone(), ViewKind::ALL.to_vec()] {
            let config = PipelineConfig {
                resolution: ABLATION_RESOLUTION,
                views,
                ..PipelineConfig::default()
            };
            let model = pipeline::train(&train, &config).map_err(err)?;
            acc.push(
                pipeline::evaluate(&model, &test)
                    .map_err(err)?
                    .mean_class_accuracy,
            );
        }
        let (rgb, depth) = (acc[0], acc[1]);
        lines.push(format!("seed {seed}: {rgb:.3} → {depth:.3}"));
        if !(depth >= 0.90 && depth - rgb >= 0.10) {
            failures.push(seed);
        }
    }
    check(failures.is_empty(), || {
        format!("seeds {failures:?} fail; {}", lines.join(", "))
    })?;
    Ok(lines.join(", "))
}

fn metric_sanity() -> Outcome {
    let root = common::fixture_root();
    let config = PipelineConfig {
        resolution: 16,
        ..PipelineConfig::default()
    };
    let mut model = pipeline::train(&root.join("train"), &config).map_err(err)?;
    // every input scores highest for class 1
    for (k, (w, b)) in model
        .svm
        .weights
        .iter_mut()
        .zip(&mut model.svm.biases)
        .enumerate()
    {
        w.iter_mut().for_each(|v| *v = 0.0);
        *b = if k == 1 { 1.0 } else { 0.0 };
    }
    let report = pipeline::evaluate(&model, &root.join("test")).map_err(err)?;
    check(
        report
            .confusion
            .iter()
            .all(|row| row[1] == row.iter().sum::<usize>()),
        || format!("predictor is not constant: {:?}", report.confusion),
    )?;
    check(report.mean_class_accuracy == 1.0 / 3.0, || {
        format!("mean-class accuracy {} ≠ 1/3", report.mean_class_accuracy)
    })?;
    Ok(format!(
        "constant predictor scores {}",
        report.mean_class_accuracy
    ))
}

/// Widest spliced feature vector drawn for a randomized model.
const MAX_ROUND_TRIP_WIDTH: usize = 600;

/// A float from a wide range, with awkward values mixed in.
fn awkward(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    match r.random_range(0..10) {
        0 => -0.0,
        1 => f64::MIN_POSITIVE / 8.0,
        2 => 1e300 * r.random_range(-1.0..1.0),
        3 => 1.0 / 3.0,
        _ => r.random_range(-10.0..10.0),
    }
}

fn random_model(r: &mut rand_chacha::ChaCha8Rng) -> TrainedModel {
    loop {
        let views: Vec<ViewKind> = ViewKind::ALL
            .into_iter()
            .filter(|_| r.random_bool(0.5))
            .collect();
        let stages = (0..r.random_range(1..=2))
            .map(|_| StageShape {
                maps: r.random_range(1..=8),
                pool: r.random_range(1..=3),
            })
            .collect();
        let classes: Vec<String> = (0..r.random_range(2..=5))
            .map(|k| format!("class {k} = ü{}", r.random_range(0..1000)))
            .collect();
        let config = PipelineConfig {
            resolution: r.random_range(8..=40),
            views,
            stages,
            seed: r.random(),
            pca_threshold: r.random_range(0.01..=1.0),
            svm_c: 10f64.powf(r.random_range(-6.0..6.0)),
            classes,
        };
        if config.validate().is_err() {
            continue;
        }
        let net = init_weights(config.seed, &config.stages).unwrap();
        let n = net
            .output_len(config.resolution, config.resolution)
            .unwrap()
            * config.views.len();
        if n > MAX_ROUND_TRIP_WIDTH {
            continue;
        }
        let pairs = r.random_range(1..=n.min(40));
        let retained = r.random_range(1..=pairs);
        let pca = PcaModel {
            standardization: Standardization {
                means: (0..n).map(|_| awkward(r)).collect(),
                stds: (0..n).map(|_| awkward(r).abs()).collect(),
                zero_variance_mask: (0..n).map(|_| r.random_bool(0.1)).collect(),
            },
            eigenpairs: (0..pairs)
                .map(|_| EigenPair {
                    value: awkward(r),
                    vector: (0..n).map(|_| awkward(r)).collect(),
                })
                .collect(),
            retained,
            threshold: config.pca_threshold,
        };
        let svm = SvmModel {
            classes: config.classes.clone(),
            weights: config
                .classes
                .iter()
                .map(|_| (0..retained).map(|_| awkward(r)).collect())
                .collect(),
            biases: config.classes.iter().map(|_| awkward(r)).collect(),
            c: config.svm_c,
        };
        return TrainedModel {
            config,
            net,
            pca,
            svm,
            format_version: pipeline::FORMAT_VERSION,
        };
    }
}

fn bits(model: &TrainedModel) -> Vec<u64> {
    let p = &model.pca;
    p.standardization
        .means
        .iter()
        .chain(&p.standardization.stds)
        .chain(
            p.eigenpairs
                .iter()
                .flat_map(|e| std::iter::once(&e.value).chain(&e.vector)),
        )
        .chain(model.svm.weights.iter().flatten())
        .chain(&model.svm.biases)
        .chain([&model.config.pca_threshold, &model.config.svm_c])
        .map(|v| v.to_bits())
        .collect()
}

fn round_trip() -> Outcome {
    let mut r = rng(8008);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes_total = 0;
    for i in 0..20 {
        let model = random_model(&mut r);
        model.check_consistency().map_err(err)?;
        let path = tmp.path().join(format!("m{i}.mvdr"));
        pipeline::save_model(&path, &model).map_err(err)?;
        let loaded = pipeline::load_model(&path).map_err(err)?;
        check(loaded == model, || {
            format!("model {i}: reloaded model differs")
        })?;
        check(bits(&loaded) == bits(&model), || {
            format!("model {i}: float bits differ")
        })?;

        let mut corrupt = std::fs::read(&path).map_err(|e| e.to_string())?;
        bytes_total += corrupt.len();
        let last = corrupt.len() - 1;
        corrupt[last] ^= 0xA5;
        check(
            matches!(model_from_bytes(&corrupt), Err(Error::Integrity(_))),
            || format!("model {i}: corrupted CRC accepted"),
        )?;
        let mut body = model_to_bytes(&model);
        let at = r.random_range(12..body.len() - 4);
        body[at] ^= 1 << r.random_range(0..8);
        check(
            matches!(model_from_bytes(&body), Err(Error::Integrity(_))),
            || format!("model {i}: flipped body bit accepted"),
        )?;
    }

    // a model that went through training, too
    let trained = pipeline::train(
        &common::fixture_root().join("train"),
        &PipelineConfig {
            resolution: 16,
            ..PipelineConfig::default()
        },
    )
    .map_err(err)?;
    check(
        model_from_bytes(&model_to_bytes(&trained)).map_err(err)? == trained,
        || "trained model differs".into(),
    )?;
    Ok(format!(
        "20 randomized models ({bytes_total} bytes) field-exact; corruption rejected"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 pca oracle equivalence", pca_oracle, 10),
        ("2 cumulative-variance rule", selection_rule, 1),
        ("3 convolution oracle", convolution_oracle, 5),
        ("4 svm correctness", svm_correctness, 30),
        ("5 end-to-end determinism", determinism, 60),
        ("6 depth ablation", ablation, 300),
        ("7 metric sanity", metric_sanity, 10),
        ("8 model round trip", round_trip, 10),
    ];
    let mut failed = 0;
    for (name, run, budget) in criteria {
        let started = Instant::now();
        let mut outcome = run();
        let elapsed = started.elapsed();
        if outcome.is_ok() && elapsed > Duration::from_secs(budget) {
            outcome = Err(format!("took {elapsed:.2?}, budget {budget} s"));
        }
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({elapsed:.2?}, budget {budget} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({elapsed:.2?}, budget {budget} s)");
            }
        }
    }
    println!("{} of 8 acceptance criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
