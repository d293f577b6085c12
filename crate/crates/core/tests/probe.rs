//! TEMPORARY tuning probe — not part of the test suite, deleted before commit.

use std::fs::File;
use std::time::Instant;

use fedveil::analysis::{comm_size, param_mse_drift, prediction_gap};
use fedveil::cli::load_dataset;
use fedveil::config::DatasetSource;
use fedveil::data::{generate_blobs, write_idx_images, write_idx_labels, BlobSpec, Dataset};
use fedveil::fedsim::{
    full_retrain_baseline, partition_dirichlet, run_federation, FederationConfig,
};
use fedveil::fe::MockBackend;
use fedveil::nn::{AdamConfig, Architecture};
use fedveil::unlearn::{ForgetMode, ForgetSpec, TermWeights};

fn heavy_dataset() -> (Dataset, Dataset) {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = BlobSpec { classes: 6, samples_per_class: 1000, seed: 41, ..BlobSpec::default() };
    let (images, labels) = generate_blobs(&spec);
    let images_path = dir.path().join("train-images.idx");
    let labels_path = dir.path().join("train-labels.idx");
    write_idx_images(&images, File::create(&images_path).expect("create")).expect("write images");
    write_idx_labels(&labels, File::create(&labels_path).expect("create")).expect("write labels");
    let source = DatasetSource::Idx {
        images: images_path,
        labels: labels_path,
        test_images: None,
        test_labels: None,
        test_fraction: 0.2,
        keep_classes: Some(vec![0, 1, 2, 3]),
        max_per_class: None,
    };
    let bundle = load_dataset(&source, Some(97)).expect("idx ingestion");
    (bundle.train, bundle.test)
}

fn heavy_config() -> FederationConfig {
    FederationConfig {
        partition_seed: 42,
        training_seed: 11,
        crypto_seed: 12,
        forget: Some(ForgetSpec {
            mode: ForgetMode::ClassWise { gamma_c: 0.25, classes: vec![2] },
            seed: 13,
        }),
        architecture: Architecture::single_task(784, vec![128, 64], 4),
        ..FederationConfig::default()
    }
}

#[test]
#[ignore]
fn probe_unlearn_variants() {
    let (train, test) = heavy_dataset();
    let base = heavy_config();
    let dim = base.architecture.param_count();

    let t0 = Instant::now();
    let retrain_a = full_retrain_baseline(&base, &train, &test).expect("retrain A");
    let config_b = FederationConfig { training_seed: 211, ..base.clone() };
    let retrain_b = full_retrain_baseline(&config_b, &train, &test).expect("retrain B");
    let floor = prediction_gap(
        &retrain_a.final_model,
        &retrain_b.final_model,
        test.inputs(),
        0,
    )
    .expect("floor");
    println!(
        "retrains done in {:.0}s, floor = {:.4}, retrain forgotten {:?} retained {:.3}",
        t0.elapsed().as_secs_f64(),
        floor,
        retrain_a.logs.last().unwrap().acc_forgotten,
        retrain_a.logs.last().unwrap().acc_retained,
    );

    let variants: Vec<(&str, usize, TermWeights)> = vec![
        (
            "e2 f1 a0.3 d3",
            2,
            TermWeights { lambda_forget: 1.0, lambda_adv: 0.3, lambda_drift: 3.0 },
        ),
        (
            "e1 f1 a0.3 d3",
            1,
            TermWeights { lambda_forget: 1.0, lambda_adv: 0.3, lambda_drift: 3.0 },
        ),
        (
            "e1 f1 a0.15 d6",
            1,
            TermWeights { lambda_forget: 1.0, lambda_adv: 0.15, lambda_drift: 6.0 },
        ),
    ];

    for (tag, epochs, weights) in variants {
        let config = FederationConfig {
            local_epochs_unlearn: epochs,
            unlearn_weights: weights,
            ..base.clone()
        };
        let t = Instant::now();
        let run = run_federation::<MockBackend>(&config, &train, &test).expect("run");
        let secs = t.elapsed().as_secs_f64();
        let last = run.logs.last().unwrap();
        let gap = prediction_gap(&run.final_model, &retrain_a.final_model, test.inputs(), 0)
            .expect("gap");
        let drift = param_mse_drift(&run.model_history).expect("drift");
        let mut window_max = 0.0f64;
        for log in &run.logs {
            if log.unlearning_participants.is_empty() || log.round == 0 {
                continue;
            }
            window_max = window_max.max(drift.normalized[log.round as usize - 1]);
        }
        let comm = comm_size(&run.logs, dim).expect("comm");
        println!(
            "[{tag}] {secs:.0}s forgotten {:?} retained {:.3} | c6 gap {:.4} (need ≤ {:.4}) | \
             c11 window {:.4} | c10 max {:.2}%",
            last.acc_forgotten,
            last.acc_retained,
            gap,
            1.5 * floor,
            window_max,
            comm.max_normalized * 100.0,
        );
        // Drift shape: print the normalized series at the window boundary.
        let series: Vec<String> = drift
            .normalized
            .iter()
            .enumerate()
            .map(|(i, v)| format!("r{}:{v:.3}", i + 1))
            .collect();
        println!("  drift: {}", series.join(" "));
    }
}

#[test]
#[ignore]
fn probe_comm_scenarios() {
    let (train, test) = heavy_dataset();

    let grids: Vec<(&str, f64, f64, usize, usize)> = vec![
        // (tag, lr, weight_decay, rounds, epochs_learn)
        ("lr.02 wd0.8 r12 e3", 0.02, 0.8, 12, 3),
        ("lr.01 wd0.5 r12 e3", 0.01, 0.5, 12, 3),
    ];

    for (tag, lr, wd, rounds, epochs) in grids {
        let config = FederationConfig {
            clients: 4,
            rounds,
            local_epochs_learn: epochs,
            local_epochs_unlearn: 1,
            unlearn_start_round: rounds - 5,
            unlearn_window: 3,
            dirichlet_alpha: 0.5,
            partition_seed: 7,
            training_seed: 8,
            crypto_seed: 9,
            batch_size: 32,
            adam: AdamConfig { lr, weight_decay: wd, ..AdamConfig::default() },
            forget: Some(ForgetSpec {
                mode: ForgetMode::ClassWise { gamma_c: 0.25, classes: vec![0] },
                seed: 13,
            }),
            architecture: Architecture::single_task(784, vec![128, 64], 4),
            ..FederationConfig::default()
        };
        let dim = config.architecture.param_count();
        if partition_dirichlet(&train, config.clients, config.dirichlet_alpha, config.partition_seed)
            .is_err()
        {
            println!("[{tag}] partition failed, skipping");
            continue;
        }
        let t = Instant::now();
        let run = match run_federation::<MockBackend>(&config, &train, &test) {
            Ok(r) => r,
            Err(e) => {
                println!("[{tag}] run failed: {e}");
                continue;
            }
        };
        let secs = t.elapsed().as_secs_f64();
        let comm = comm_size(&run.logs, dim).expect("comm");
        let last = run.logs.last().unwrap();
        // Average deflated mapping size per round for diagnosis.
        let per_round: Vec<String> = run
            .logs
            .iter()
            .map(|l| {
                let max_z = l.payload_deflate_bytes.iter().copied().max().unwrap_or(0);
                format!("r{}:{:.1}%", l.round, max_z as f64 / comm.baseline_bytes as f64 * 100.0)
            })
            .collect();
        println!(
            "[{tag}] {secs:.0}s retained {:.3} | c10 max {:.2}% of {} B",
            last.acc_retained,
            comm.max_normalized * 100.0,
            comm.baseline_bytes,
        );
        println!("  rounds: {}", per_round.join(" "));
    }
}
