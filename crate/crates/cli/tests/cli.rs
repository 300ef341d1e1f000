use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rbagcn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbagcn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn rbagcn")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = rbagcn(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn small_spec(dir: &Path) {
    fs::write(
        dir.join("spec.toml"),
        "task = \"prototype\"\nconversations = 8\nmin_len = 4\nmax_len = 6\ndims = [4, 4, 4]\n",
    )
    .unwrap();
}

#[test]
fn train_eval_predict_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_spec(dir);
    ok(dir, &["gen", "--spec", "spec.toml", "--seed", "3", "--out", "data.jsonl"]);
    assert_eq!(fs::read_to_string(dir.join("data.jsonl")).unwrap().lines().count(), 8);

    ok(dir, &["train", "--dataset", "data.jsonl", "--output", "run", "--epochs", "3", "--hidden", "4", "--gamma", "3"]);
    for f in ["splits.json", "history.csv", "checkpoint.json", "metrics.json", "confusion.csv", "per_class.csv"] {
        assert!(dir.join("run").join(f).exists(), "missing {f}");
    }
    let history = fs::read_to_string(dir.join("run/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    assert!(history.starts_with("epoch,train_loss,train_accuracy,val_waf1,val_accuracy\n"));

    let report: serde_json::Value =
        serde_json::from_str(&ok(dir, &["eval", "--checkpoint", "run/checkpoint.json", "--dataset", "data.jsonl", "--split", "all"])).unwrap();
    assert_eq!(report["split"], "all");
    let samples = report["samples"].as_u64().unwrap();

    ok(dir, &["predict", "--checkpoint", "run/checkpoint.json", "--dataset", "data.jsonl", "--output", "pred.csv", "--clusters", "clusters.json"]);
    let pred = fs::read_to_string(dir.join("pred.csv")).unwrap();
    assert!(pred.starts_with("conversation,utterance,gold,predicted,p_c00,p_c01,p_c02\n"));
    assert_eq!(pred.lines().count() as u64, samples + 1);
    let clusters: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("clusters.json")).unwrap()).unwrap();
    assert_eq!(clusters.as_array().unwrap().len(), 8);
}

#[test]
fn eval_reports_the_mismatched_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_spec(dir);
    ok(dir, &["gen", "--spec", "spec.toml", "--out", "a.jsonl"]);
    ok(dir, &["train", "--dataset", "a.jsonl", "--output", "run", "--epochs", "1", "--hidden", "4"]);
    fs::write(dir.join("wide.toml"), "task = \"prototype\"\nconversations = 4\nmin_len = 4\nmax_len = 6\ndims = [6, 4, 4]\n").unwrap();
    ok(dir, &["gen", "--spec", "wide.toml", "--out", "b.jsonl"]);
    let out = rbagcn(dir, &["eval", "--checkpoint", "run/checkpoint.json", "--dataset", "b.jsonl", "--split", "all"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("enc.t.fwd.w"), "{err}");
}

#[test]
fn training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_spec(dir);
    ok(dir, &["gen", "--spec", "spec.toml", "--out", "d.jsonl"]);
    for run in ["r1", "r2"] {
        ok(dir, &["train", "--dataset", "d.jsonl", "--output", run, "--epochs", "3", "--hidden", "4", "--seed", "5"]);
    }
    assert_eq!(fs::read(dir.join("r1/history.csv")).unwrap(), fs::read(dir.join("r2/history.csv")).unwrap());
    assert_eq!(fs::read(dir.join("r1/checkpoint.json")).unwrap(), fs::read(dir.join("r2/checkpoint.json")).unwrap());
}

#[test]
fn config_file_and_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_spec(dir);
    ok(dir, &["gen", "--spec", "spec.toml", "--out", "d.jsonl"]);
    fs::write(dir.join("run.toml"), "dataset = \"d.jsonl\"\noutput = \"cfgrun\"\n[train]\nmax_epochs = 5\nhidden = 4\nlayers = \"gcn2\"\n").unwrap();
    ok(dir, &["train", "--config", "run.toml", "--epochs", "2"]);
    let history = fs::read_to_string(dir.join("cfgrun/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);
    let ckpt: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("cfgrun/checkpoint.json")).unwrap()).unwrap();
    assert_eq!(ckpt["config"]["layers"], "gcn2");
    assert_eq!(ckpt["config"]["max_epochs"], 2);

    fs::write(dir.join("bad.toml"), "[train]\nlearning_rate = 1\n").unwrap();
    let out = rbagcn(dir, &["train", "--config", "bad.toml", "--dataset", "d.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn ablation_writes_one_row_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_spec(dir);
    ok(dir, &["gen", "--spec", "spec.toml", "--out", "d.jsonl"]);
    fs::write(dir.join("ab.toml"), "dataset = \"d.jsonl\"\noutput = \"ab\"\n[train]\nmax_epochs = 1\nhidden = 4\n[ablation]\ngammas = [2, 4]\n").unwrap();
    ok(dir, &["ablate", "--config", "ab.toml", "--axis", "gamma"]);
    let csv = fs::read_to_string(dir.join("ab/ablation_gamma.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "axis,variant,eval_split,waf1,accuracy,best_val_waf1,best_epoch,epochs_run,params");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("gamma,2,"));

    let out = rbagcn(dir, &["ablate", "--config", "ab.toml", "--axis", "depth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth"));
}

#[test]
fn gradcheck_passes_and_detects_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(ok(dir, &["gradcheck"]).contains("PASS"));
    assert!(ok(dir, &["gradcheck", "--layers", "gcn2"]).contains("PASS"));

    let out = rbagcn(dir, &["gradcheck", "--corrupt-gradient"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("segment"));

    let out = rbagcn(dir, &["gradcheck", "--dropout", "0.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropout"));
}

#[test]
fn bad_input_fails_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_spec(dir);
    ok(dir, &["gen", "--spec", "spec.toml", "--out", "d.jsonl"]);
    let mut text = fs::read_to_string(dir.join("d.jsonl")).unwrap();
    text.push_str("{not json\n");
    fs::write(dir.join("broken.jsonl"), &text).unwrap();
    let line = text.lines().count();
    let out = rbagcn(dir, &["train", "--dataset", "broken.jsonl", "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("line {line}")), "{err}");
}

#[test]
fn eval_reproduces_the_training_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_spec(dir);
    ok(dir, &["gen", "--spec", "spec.toml", "--out", "d.jsonl"]);
    ok(dir, &["train", "--dataset", "d.jsonl", "--output", "run", "--epochs", "2", "--hidden", "4"]);
    let recorded: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("run/metrics.json")).unwrap()).unwrap();
    let again: serde_json::Value =
        serde_json::from_str(&ok(dir, &["eval", "--checkpoint", "run/checkpoint.json", "--dataset", "d.jsonl", "--output", "eval"])).unwrap();
    assert_eq!(again, recorded);
    assert_eq!(fs::read(dir.join("eval/confusion.csv")).unwrap(), fs::read(dir.join("run/confusion.csv")).unwrap());

    // confusion rows sum to the class supports
    let confusion = fs::read_to_string(dir.join("run/confusion.csv")).unwrap();
    for (row, class) in confusion.lines().skip(1).zip(recorded["per_class"].as_array().unwrap()) {
        let total: u64 = row.split(',').skip(1).map(|c| c.parse::<u64>().unwrap()).sum();
        assert_eq!(total, class["support"].as_u64().unwrap());
    }
}

#[test]
fn gen_is_byte_reproducible_and_validates_specs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen", "--task", "long_range", "--seed", "7", "--out", "a.jsonl"]);
    ok(dir, &["gen", "--task", "long_range", "--seed", "7", "--out", "b.jsonl"]);
    assert_eq!(fs::read(dir.join("a.jsonl")).unwrap(), fs::read(dir.join("b.jsonl")).unwrap());
    ok(dir, &["gen", "--task", "long_range", "--seed", "8", "--out", "c.jsonl"]);
    assert_ne!(fs::read(dir.join("a.jsonl")).unwrap(), fs::read(dir.join("c.jsonl")).unwrap());

    fs::write(dir.join("bad.toml"), "task = \"long_range\"\ndelta = 1\n").unwrap();
    let out = rbagcn(dir, &["gen", "--spec", "bad.toml", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));

    let out = rbagcn(dir, &["train", "--dataset", "missing.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
}

#[test]
fn bundled_config_trains() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = root.join("configs/prototype.toml");
    ok(tmp.path(), &["train", "--config", config.to_str().unwrap(), "--epochs", "2", "--output", out.to_str().unwrap()]);
    for f in ["checkpoint.json", "history.csv", "metrics.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
}
