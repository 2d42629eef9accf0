use std::fs;
use std::path::Path;

use deblur_gan::cli::main_with;

fn run(args: &[&str]) -> (i32, String, String) {
    let argv = std::iter::once("deblur-gan".to_string()).chain(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn audit_prints_both_tables() {
    let (code, out, _) = run(&["audit"]);
    assert_eq!(code, 0);
    assert!(out.contains("11399171"), "{out}");
    assert!(out.contains("2830337"), "{out}");
    let (code, out, _) = run(&["audit", "--network", "discriminator"]);
    assert_eq!(code, 0);
    assert!(!out.contains("11399171"));
}

#[test]
fn usage_errors_exit_two() {
    let (code, _, err) = run(&["train", "--bogus", "1"]);
    assert_eq!(code, 2);
    assert!(err.contains("--bogus"), "{err}");
    assert_eq!(run(&["evaluate", "--dataset-root", "x"]).0, 2);
    assert_eq!(run(&[]).0, 2);
}

#[test]
fn bad_config_key_exits_one_and_lists_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "# comment\nbatch_size = 2\nlearnin_rate = 1\n").unwrap();
    let (code, _, err) = run(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("r"))]);
    assert_eq!(code, 1);
    assert!(err.contains("learnin_rate") && err.contains("learning_rate"), "{err}");
}

#[test]
fn synth_then_identity_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let (code, out, _) = run(&["synth", "--out", p(&root), "--count", "3", "--size", "32", "--split", "test"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(fs::read_dir(root.join("test/synthetic/blur")).unwrap().count(), 3);
    let scores = dir.path().join("scores.tsv");
    let (code, out, err) = run(&["evaluate", "--identity", "--dataset-root", p(&root), "--per-image", p(&scores)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("metric\tmax\tmin\tmean\nPSNR\t"), "{out}");
    assert_eq!(fs::read_to_string(&scores).unwrap().lines().count(), 3);

    let (code, _, err) = run(&["evaluate", "--identity", "--dataset-root", p(&root), "--split", "train"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error: "), "{err}");
}

#[test]
fn train_resume_and_deblur() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    assert_eq!(run(&["synth", "--out", p(&root), "--count", "4", "--size", "32"]).0, 0);
    let runs = dir.path().join("run");
    let common = [
        "--dataset_root",
        p(&root),
        "--batch_size",
        "2",
        "--patch",
        "16",
        "--extractor",
        "identity",
        "--width_divisor",
        "16",
        "--residual_blocks",
        "1",
    ];
    let mut args = vec!["train", "--out", p(&runs), "--epochs", "1"];
    args.extend(common);
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("trained 2 steps"), "{out}");
    let ckpt = runs.join("epoch_0001.ckpt");
    assert!(ckpt.is_file());

    let (code, out, err) = run(&["train", "--resume", p(&ckpt), "--out", p(&runs), "--epochs", "2"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("trained 4 steps"), "{out}");
    assert!(runs.join("epoch_0002.ckpt").is_file());

    let single = dir.path().join("one.png");
    let input = root.join("train/synthetic/blur/000000.png");
    let (code, _, err) = run(&[
        "deblur", "--checkpoint", p(&ckpt), "--input", p(&input), "--output", p(&single), "--patch", "16", "--stride", "8",
    ]);
    assert_eq!(code, 0, "{err}");
    let img = image::open(&single).unwrap();
    assert_eq!((img.width(), img.height()), (32, 32));

    let outdir = dir.path().join("many");
    let (code, out, err) = run(&[
        "deblur",
        "--checkpoint",
        p(&ckpt),
        "--input",
        p(&root.join("train/synthetic/blur")),
        "--output",
        p(&outdir),
        "--patch",
        "16",
        "--stride",
        "16",
    ]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().count(), 4);
    assert_eq!(fs::read_dir(&outdir).unwrap().count(), 4);
}
