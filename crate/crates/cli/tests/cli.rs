//! End-to-end tests of the `facn` binary: subcommand behavior, manifest and
//! report formats, determinism of reruns, and the exit-code contract
//! (0 success, 1 validation error, 2 runtime failure).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use facn_core::image::Image;
use facn_core::nn::Checkpoint;
use facn_core::train::{write_synthetic_corpus, TrainConfig, Trainer};
use facn_core::TrainF;

fn facn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_facn"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// A 16×16 synthetic corpus and a config sized for seconds-long runs.
fn tiny_setup(root: &Path, epochs: usize, checkpoint_every: usize) -> PathBuf {
    write_synthetic_corpus(&root.join("hr"), 2, 16, 5).unwrap();
    let cfg = format!(
        "dataset.dir = {root}/hr\n\
         model.hr_size = 16\n\
         model.k = 6\n\
         model.d = 3\n\
         model.supervised_attrs = 4\n\
         degradation.kind = bic\n\
         train.epochs = {epochs}\n\
         train.batch = 2\n\
         train.checkpoint_every = {checkpoint_every}\n\
         out.dir = {root}/out\n",
        root = root.display(),
    );
    let path = root.join("train.cfg");
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn help_version_and_flag_errors_follow_the_exit_contract() {
    assert_eq!(code(&run(facn().arg("--help"))), 0);
    assert_eq!(code(&run(facn().arg("--version"))), 0);
    assert_eq!(code(&run(facn().arg("degrade").arg("--nonsense"))), 1);
    assert_eq!(code(&run(&mut facn())), 1); // no subcommand
}

#[test]
fn degrade_writes_manifest_and_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    write_synthetic_corpus(&hr, 3, 32, 9).unwrap();

    let out1 = dir.path().join("lr1");
    let out = run(facn()
        .args(["degrade", "--kind", "bicn", "--seed", "7"])
        .arg("--in")
        .arg(&hr)
        .arg("--out")
        .arg(&out1));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let manifest = fs::read_to_string(out1.join("manifest.csv")).unwrap();
    assert!(manifest.contains("# kind: bicn"), "{manifest}");
    assert!(manifest.contains("# noise_level: 10"), "{manifest}");
    assert!(manifest.contains("# master_seed: 7"), "{manifest}");
    assert!(manifest.contains("name,seed\n"), "{manifest}");
    let rows: Vec<&str> = manifest
        .lines()
        .filter(|l| !l.starts_with('#') && l.starts_with("img_"))
        .collect();
    assert_eq!(rows.len(), 3, "{manifest}");
    let lr = Image::<TrainF>::load_png(out1.join("img_000.png")).unwrap();
    assert_eq!(lr.shape(), (4, 4, 3));

    // Same seed: byte-identical files. Different seed: different noise.
    let out2 = dir.path().join("lr2");
    run(facn()
        .args(["degrade", "--kind", "bicn", "--seed", "7"])
        .arg("--in")
        .arg(&hr)
        .arg("--out")
        .arg(&out2));
    for name in ["img_000.png", "img_001.png", "img_002.png", "manifest.csv"] {
        assert_eq!(
            fs::read(out1.join(name)).unwrap(),
            fs::read(out2.join(name)).unwrap(),
            "{name} differs between identical reruns"
        );
    }
    let out3 = dir.path().join("lr3");
    run(facn()
        .args(["degrade", "--kind", "bicn", "--seed", "8"])
        .arg("--in")
        .arg(&hr)
        .arg("--out")
        .arg(&out3));
    assert_ne!(
        fs::read(out1.join("img_000.png")).unwrap(),
        fs::read(out3.join("img_000.png")).unwrap()
    );
}

#[test]
fn degrade_validation_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();

    let out = run(facn()
        .arg("degrade")
        .arg("--in")
        .arg(&empty)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("no .png files"), "{}", stderr(&out));

    let hr = dir.path().join("hr");
    write_synthetic_corpus(&hr, 1, 16, 2).unwrap();
    let out = run(facn()
        .args(["degrade", "--kind", "sepia"])
        .arg("--in")
        .arg(&hr)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("sepia"), "{}", stderr(&out));

    let out = run(facn()
        .args(["degrade", "--scale", "0"])
        .arg("--in")
        .arg(&hr)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(code(&out), 1);
}

#[test]
fn degrade_unreadable_file_is_listed_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let hr = dir.path().join("hr");
    write_synthetic_corpus(&hr, 2, 16, 4).unwrap();
    fs::write(hr.join("bad.png"), b"this is not a png").unwrap();

    let out_dir = dir.path().join("lr");
    let out = run(facn()
        .args(["degrade", "--kind", "bic"])
        .arg("--in")
        .arg(&hr)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("bad.png"), "{}", stderr(&out));

    // The healthy images were still processed and the manifest records
    // both the successes and the failure.
    let manifest = fs::read_to_string(out_dir.join("manifest.csv")).unwrap();
    assert!(manifest.contains("img_000.png,"), "{manifest}");
    assert!(manifest.contains("img_001.png,"), "{manifest}");
    assert!(manifest.contains("# failed: bad.png:"), "{manifest}");
    assert!(out_dir.join("img_001.png").exists());
    assert!(!out_dir.join("bad.png").exists());
}

#[test]
fn train_missing_dataset_dir_exits_1_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("train.cfg");
    fs::write(&cfg, "model.hr_size = 16\n").unwrap();
    let out = run(facn().arg("train").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("dataset.dir"), "{}", stderr(&out));

    // No --config at all is also a validation error.
    let out = run(facn().arg("train"));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--config"), "{}", stderr(&out));
}

#[test]
fn train_writes_metrics_schedule_and_gan_off_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    // 21 epochs so the metrics stream crosses the first halving boundary.
    let cfg = tiny_setup(dir.path(), 21, 20);
    let out = run(facn().arg("train").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let out_dir = dir.path().join("out");
    let metrics = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("# facn train metrics\n"), "{metrics}");
    assert!(metrics.contains("# config_hash: "), "{metrics}");
    assert!(metrics.contains("epoch,step,lr,"), "{metrics}");
    let rows: Vec<Vec<&str>> = metrics
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("epoch,"))
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 21, "one step per epoch at batch = corpus size");
    let lr_at = |epoch: &str| -> f64 {
        let row = rows.iter().find(|r| r[0] == epoch).expect("epoch row");
        row[2].parse().unwrap()
    };
    assert!((lr_at("0") - 3e-4).abs() < 1e-12);
    assert!((lr_at("19") - 3e-4).abs() < 1e-12);
    assert!((lr_at("20") - 1.5e-4).abs() < 1e-12, "lr halves at epoch 20");

    assert!(out_dir.join("epoch_0020.ckpt").exists());
    let ckpt = Checkpoint::load(out_dir.join("final.ckpt")).unwrap();
    assert_eq!(ckpt.manifest.epoch, 21);
    assert!(!ckpt.manifest.adversarial);
    assert!(
        ckpt.blobs.keys().all(|k| !k.contains("disc.")),
        "GAN-off checkpoint must contain no discriminator tensors"
    );
}

#[test]
fn train_env_var_overrides_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path(), 21, 1);
    let out = run(facn()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .env("FACN_TRAIN_EPOCHS", "1"));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let ckpt = Checkpoint::load(dir.path().join("out/final.ckpt")).unwrap();
    assert_eq!(ckpt.manifest.epoch, 1);
}

#[test]
fn train_resume_matches_uninterrupted_run_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path(), 2, 1);
    let out = run(facn().arg("train").arg("--config").arg(&cfg));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let resumed_out = dir.path().join("resumed");
    let out = run(facn()
        .arg("train")
        .arg("--config")
        .arg(&cfg)
        .arg("--resume")
        .arg(dir.path().join("out/epoch_0001.ckpt"))
        .arg("--out")
        .arg(&resumed_out));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    assert_eq!(
        fs::read(dir.path().join("out/final.ckpt")).unwrap(),
        fs::read(resumed_out.join("final.ckpt")).unwrap(),
        "a resumed run must land on the uninterrupted run's exact state"
    );
}

#[test]
fn eval_pairs_by_name_skips_unpaired_and_writes_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = tiny_setup(dir.path(), 1, 1);
    let out = run(facn().arg("train").arg("--config").arg(&cfg_path));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let ckpt_path = dir.path().join("out/final.ckpt");

    let hr_dir = dir.path().join("hr");
    let lr_dir = dir.path().join("lr");
    let out = run(facn()
        .args(["degrade", "--kind", "bic"])
        .arg("--in")
        .arg(&hr_dir)
        .arg("--out")
        .arg(&lr_dir));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    // Unpaired files on both sides.
    fs::copy(lr_dir.join("img_000.png"), lr_dir.join("extra.png")).unwrap();
    fs::copy(hr_dir.join("img_000.png"), hr_dir.join("only_hr.png")).unwrap();

    let eval_out = dir.path().join("evalout");
    let out = run(facn()
        .arg("eval")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--checkpoint")
        .arg(&ckpt_path)
        .arg("--lr")
        .arg(&lr_dir)
        .arg("--hr")
        .arg(&hr_dir)
        .arg("--out")
        .arg(&eval_out));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let warnings = stderr(&out);
    assert!(
        warnings.contains("skipped extra.png: no hr counterpart"),
        "{warnings}"
    );
    assert!(
        warnings.contains("skipped only_hr.png: no lr counterpart"),
        "{warnings}"
    );

    let report = fs::read_to_string(eval_out.join("report.csv")).unwrap();
    assert!(
        report.contains("name,psnr,ssim,psnr_bicubic,ssim_bicubic\n"),
        "{report}"
    );
    assert!(report.contains("# warning: skipped extra.png"), "{report}");
    let data_rows = report
        .lines()
        .filter(|l| l.starts_with("img_"))
        .count();
    assert_eq!(data_rows, 2, "{report}");
    assert!(report.lines().last().unwrap().starts_with("mean,"), "{report}");

    // Four 16×16 panels and three 2-pixel gutters.
    let grid = Image::<TrainF>::load_png(eval_out.join("grids/img_000.png")).unwrap();
    assert_eq!(grid.shape(), (16, 4 * 16 + 3 * 2, 3));
}

#[test]
fn eval_against_own_outputs_emits_infinity_sentinel_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = tiny_setup(dir.path(), 1, 1);
    let out = run(facn().arg("train").arg("--config").arg(&cfg_path));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let lr_dir = dir.path().join("lr");
    run(facn()
        .args(["degrade", "--kind", "bic"])
        .arg("--in")
        .arg(dir.path().join("hr"))
        .arg("--out")
        .arg(&lr_dir));

    // Decode the checkpoint's own outputs and use them as the references.
    let cfg = TrainConfig::from_file(&cfg_path).unwrap();
    let ckpt = Checkpoint::load(dir.path().join("out/final.ckpt")).unwrap();
    let mut trainer = Trainer::<TrainF>::restore(cfg, &ckpt).unwrap();
    let own = dir.path().join("own");
    fs::create_dir_all(&own).unwrap();
    for name in ["img_000.png", "img_001.png"] {
        let lr = Image::<TrainF>::load_png(lr_dir.join(name)).unwrap();
        let sr = facn_core::train::super_resolve(trainer.model_mut(), &lr).unwrap();
        sr.save_png(own.join(name)).unwrap();
    }

    let eval_out = dir.path().join("selfeval");
    let out = run(facn()
        .arg("eval")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--checkpoint")
        .arg(dir.path().join("out/final.ckpt"))
        .arg("--lr")
        .arg(&lr_dir)
        .arg("--hr")
        .arg(&own)
        .arg("--out")
        .arg(&eval_out));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let report = fs::read_to_string(eval_out.join("report.csv")).unwrap();
    for name in ["img_000.png", "img_001.png"] {
        assert!(
            report.contains(&format!("{name},inf,1.000000")),
            "{report}"
        );
    }
}

#[test]
fn ablate_tabulates_all_variants_with_their_decoder_widths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path(), 1, 1);
    let out = run(facn()
        .args(["ablate", "--steps", "3"])
        .arg("--config")
        .arg(&cfg));
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));

    let csv = fs::read_to_string(dir.path().join("out/ablation.csv")).unwrap();
    // Decoder FC input widths at k=6, d=3: full 24, v1/v3 18, v2 6.
    assert!(csv.contains("full-k6-d3,full,6,3,24,3,"), "{csv}");
    assert!(csv.contains("v1-k6-d3,v1,6,3,18,3,"), "{csv}");
    assert!(csv.contains("v2-k6-d3,v2,6,3,6,3,"), "{csv}");
    assert!(csv.contains("v3-k6-d3,v3,6,3,18,3,"), "{csv}");
    assert!(stdout(&out).contains("variant"), "{}", stdout(&out));
}

#[test]
fn gradcheck_full_loss_scope_passes_and_reruns_identically() {
    let first = run(facn().args(["gradcheck", "--scope", "full-loss", "--seed", "3"]));
    assert_eq!(code(&first), 0, "stderr: {}", stderr(&first));
    assert!(stdout(&first).contains("full-loss"), "{}", stdout(&first));
    let second = run(facn().args(["gradcheck", "--scope", "full-loss", "--seed", "3"]));
    assert_eq!(stdout(&first), stdout(&second), "gradcheck must be deterministic");
}

#[test]
fn gradcheck_rejects_unknown_scope_with_exit_1() {
    let out = run(facn().args(["gradcheck", "--scope", "everything"]));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("layers"), "{}", stderr(&out));
}
