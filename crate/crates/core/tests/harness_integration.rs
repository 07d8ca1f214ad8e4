mod common;

use common::*;
use grsvnet::classifier::fit_batch;
use grsvnet::data::{generate, DatasetSpec, LabelMode, LabeledBatch};
use grsvnet::harness::features::write_feature_csv;
use grsvnet::harness::metrics::moving_average_total;
use grsvnet::harness::{
    compare_modes, extract_features, metrics_csv, pca, run_experiment, Checkpoint, Mode,
    RunOptions, TrainConfig,
};
use grsvnet::linalg::{factorization_count, Matrix};
use grsvnet::loss::softmax_call_count;

fn small_config(mode: Mode, labels: LabelMode, epochs: usize) -> TrainConfig {
    let mut spec = DatasetSpec::toy(labels, 21);
    spec.per_class = 60;
    spec.test_fraction = if labels == LabelMode::True { 0.2 } else { 0.0 };
    let mut cfg = TrainConfig::new(mode, spec);
    cfg.hidden_dims = vec![32, 32];
    cfg.batch_size = 60;
    cfg.epochs = epochs;
    cfg.seed = 21;
    cfg
}

#[test]
fn plain_softmax_modes_never_factor() {
    for mode in [Mode::Softmax, Mode::SoftmaxWd] {
        let before = factorization_count();
        run_experiment(&small_config(mode, LabelMode::True, 3)).unwrap();
        assert_eq!(factorization_count(), before, "{mode} ran a factorization");
    }
    // the counter does see the OLE penalty of softmax_ole
    let before = factorization_count();
    run_experiment(&small_config(Mode::SoftmaxOle, LabelMode::True, 1)).unwrap();
    assert!(factorization_count() > before);
}

#[test]
fn grsvnet_never_uses_the_softmax_head() {
    let cfg = small_config(Mode::OleGrsvnet, LabelMode::True, 3);
    assert_eq!(cfg.network_dims(), vec![10, 32, 32]);
    let before = softmax_call_count();
    let outcome = run_experiment(&cfg).unwrap();
    assert_eq!(softmax_call_count(), before);
    assert_eq!(outcome.params.output_dim(), 32);
    assert!(outcome.subspaces.is_some());
}

#[test]
fn identical_configs_give_identical_metrics() {
    for mode in Mode::ALL {
        let cfg = small_config(mode, LabelMode::Shuffled, 4);
        let a = metrics_csv(&run_experiment(&cfg).unwrap().metrics);
        let b = metrics_csv(&run_experiment(&cfg).unwrap().metrics);
        assert_eq!(a, b, "{mode}");
        assert_eq!(a.lines().count(), 5);
    }
}

#[test]
fn half_and_full_fits_agree_on_test_points() {
    let mut cfg = small_config(Mode::OleGrsvnet, LabelMode::True, 25);
    cfg.dataset.per_class = 200;
    cfg.batch_size = 150;
    let outcome = run_experiment(&cfg).unwrap();
    let (train, test) = generate(&cfg.dataset).unwrap();
    let z_train = extract_features(&outcome.params, cfg.mode, &train.x).unwrap();
    let z_test = extract_features(&outcome.params, cfg.mode, &test.x).unwrap();
    let full = fit_batch(&z_train, &train, cfg.ratio, 1.0, 1).unwrap();
    let half = fit_batch(&z_train, &train, cfg.ratio, 0.5, 1).unwrap();
    let predict = |set| {
        grsvnet::classifier::predict_all(set, &z_test, cfg.eps)
            .unwrap()
            .into_iter()
            .map(|p| p.label)
            .collect::<Vec<_>>()
    };
    let (a, b) = (predict(&full), predict(&half));
    let agree = a.iter().zip(&b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64;
    assert!(agree >= 0.99, "agreement {agree}");
    let acc = a.iter().zip(&test.y).filter(|(p, y)| p == y).count() as f64 / a.len() as f64;
    assert!(acc >= 0.95, "test accuracy {acc}");
}

#[test]
fn true_label_total_loss_trends_down() {
    // the toy task itself: 3 × 500 points, default network and batch size
    let mut spec = DatasetSpec::toy(LabelMode::True, 1);
    spec.test_fraction = 0.2;
    let mut cfg = TrainConfig::new(Mode::OleGrsvnet, spec);
    cfg.epochs = 100;
    cfg.seed = 1;
    let outcome = run_experiment(&cfg).unwrap();
    let ma = moving_average_total(&outcome.metrics, 20);
    let violations = ma.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(violations <= 2, "{violations} increases in {ma:?}");
}

#[test]
fn failing_mode_is_reported_and_others_finish() {
    let mut cfg = small_config(Mode::Softmax, LabelMode::Shuffled, 2);
    cfg.lambda = -1.0; // only ole_grsvnet reads lambda
    let dir = tempfile::tempdir().unwrap();
    let report = compare_modes(&cfg, &Mode::ALL, Some(dir.path()), &RunOptions::default()).unwrap();
    assert!(report.get(Mode::OleGrsvnet).is_none());
    for mode in [Mode::Softmax, Mode::SoftmaxWd, Mode::SoftmaxOle] {
        assert!(report.get(mode).is_some());
        assert!(dir.path().join(format!("metrics_{mode}.csv")).exists());
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    assert!(summary.lines().any(|l| l.starts_with("ole_grsvnet,error")));
}

#[test]
fn checkpoint_reproduces_features() {
    let cfg = small_config(Mode::OleGrsvnet, LabelMode::True, 2);
    let outcome = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    Checkpoint::from_outcome(&outcome).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.config, cfg);
    let (train, _) = generate(&cfg.dataset).unwrap();
    let a = extract_features(&outcome.params, cfg.mode, &train.x).unwrap();
    let b = extract_features(&back.params, cfg.mode, &train.x).unwrap();
    assert_eq!(a, b);
}

/// Parses the `f_*` columns and labels back out of an export.
fn read_export(path: &std::path::Path) -> (Vec<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().clone();
    let n_features = header.iter().filter(|h| h.starts_with("f_")).count();
    let (mut labels, mut feats, mut pcs) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec.unwrap();
        labels.push(rec[0].parse().unwrap());
        let vals: Vec<f64> = rec.iter().skip(1).map(|v| v.parse().unwrap()).collect();
        feats.push(vals[..n_features].to_vec());
        pcs.push(vals[n_features..].to_vec());
    }
    (labels, feats, pcs)
}

#[test]
fn export_of_orthogonal_fixture_keeps_classes_orthogonal() {
    let mut r = rng(2);
    let q = orthonormal_columns(&mut r, 9, 9);
    let labels: Vec<usize> = (0..30).map(|j| j % 3 + 1).collect();
    let z = Matrix::from_fn(9, 30, |i, j| {
        let c = labels[j] - 1;
        let (a, b) = (1.0 + (j % 4) as f64, ((j * 5) % 7) as f64 - 3.0);
        a * q.get(i, 3 * c) + b * q.get(i, 3 * c + 1)
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    let export = write_feature_csv(&z, &labels, &path).unwrap();
    assert_eq!((export.samples, export.feature_dim), (30, 9));
    let (read_labels, feats, pcs) = read_export(&path);
    assert_eq!(read_labels, labels);
    let mut worst = 0.0f64;
    for j in 0..30 {
        for k in 0..30 {
            if labels[j] != labels[k] {
                let dot: f64 = feats[j].iter().zip(&feats[k]).map(|(a, b)| a * b).sum();
                worst = worst.max(dot.abs());
            }
        }
    }
    assert!(worst <= 1e-6, "cross-class Gram entry {worst}");
    // projected coordinates of distinct components are uncorrelated
    for a in 0..3 {
        for b in (a + 1)..3 {
            let dot: f64 = pcs.iter().map(|p| p[a] * p[b]).sum();
            let scale: f64 = pcs.iter().map(|p| p[a].powi(2) + p[b].powi(2)).sum();
            assert!(dot.abs() <= 1e-8 * scale.max(1.0));
        }
    }
}

#[test]
fn pca_components_are_orthonormal_and_explain_rank_three_data() {
    let mut r = rng(8);
    let l = random_matrix(&mut r, 12, 3);
    let z = l.matmul(&random_matrix(&mut r, 3, 80).scaled(4.0)).unwrap();
    let p = pca(&z).unwrap();
    let gram = p.components.tr_matmul(&p.components).unwrap();
    assert!(gram.sub(&Matrix::identity(3)).unwrap().max_abs() <= 1e-8);
    assert!((p.explained_variance() - 1.0).abs() <= 1e-6);
    // oracle: the top-3 eigenvalues of the centered covariance from nalgebra
    let centered =
        to_na(&z) - to_na(&z).column_mean() * nalgebra::DMatrix::from_element(1, 80, 1.0);
    let mut eig: Vec<f64> = (&centered * centered.transpose())
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    // the normalization convention cancels in the variance shares
    let ours_total: f64 = p.variances.iter().sum();
    let oracle_total: f64 = eig[..3].iter().sum();
    for k in 0..3 {
        assert!((p.variances[k] / ours_total - eig[k] / oracle_total).abs() < 1e-8);
    }
}

#[test]
fn loaded_dataset_trains_like_generated_one() {
    let cfg = small_config(Mode::Softmax, LabelMode::True, 2);
    let (train, test) = generate(&cfg.dataset).unwrap();
    let dir = tempfile::tempdir().unwrap();
    train.write_csv(&dir.path().join("train.csv")).unwrap();
    let loaded = LabeledBatch::read_csv(&dir.path().join("train.csv")).unwrap();
    let a = grsvnet::harness::train_on(&cfg, &train, &test, &RunOptions::default()).unwrap();
    let b = grsvnet::harness::train_on(&cfg, &loaded, &test, &RunOptions::default()).unwrap();
    assert_eq!(metrics_csv(&a.metrics), metrics_csv(&b.metrics));
}
