use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qapm::cli::RunConfig;
use qapm::evalbench::EvalReport;
use qapm::synthdata::Manifest;
use tempfile::TempDir;

const SMALL: &str = "\
world.num_identities = 24
world.dim = 8
world.obs_dim = 16
data.images_per_identity = 6
data.unrecognizable_pool = 40
train.batch_classes = 4
train.images_per_class = 3
train.steps = 30
memory.capacity = 12
memory.ui_period = 5
memory.ui_pool_batch = 8
eval.num_pairs = 200
eval.images_per_identity = 4
compare.seeds = 2
";

fn qapm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qapm")).args(args).output().unwrap()
}

fn setup() -> (TempDir, String) {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("small.conf");
    fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap().to_string();
    (dir, cfg)
}

fn out(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p).unwrap()
}

#[test]
fn gen_data_writes_consistent_manifest() {
    let (dir, cfg) = setup();
    let o = out(&dir, "a");
    let res = qapm(&["gen-data", "--config", &cfg, "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let m: Manifest = serde_json::from_slice(&read(Path::new(&o).join("manifest.json"))).unwrap();
    // round(0.2 * 6) = 1 corrupted image per identity
    assert_eq!(m.num_corrupted, 24);
    assert_eq!(m.num_unrecognizable, 40);
    assert_eq!(m.num_samples, 24 * 6 + 40);
    assert!(Path::new(&o).join("dataset.txt").exists());
    assert!(Path::new(&o).join("config.txt").exists());

    let o2 = out(&dir, "b");
    qapm(&["gen-data", "--config", &cfg, "--out", &o2]);
    assert_eq!(read(Path::new(&o).join("dataset.txt")), read(Path::new(&o2).join("dataset.txt")));
}

#[test]
fn invalid_rate_exits_with_config_code() {
    let (dir, cfg) = setup();
    let res = qapm(&["gen-data", "--config", &cfg, "--out", &out(&dir, "x"), "--set", "world.corruption_rate=1.5"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("world.corruption_rate"), "{}", stderr(&res));

    let res = qapm(&["gen-data", "--out", &out(&dir, "y"), "--set", "world.bogus=1"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("world.bogus"));
}

#[test]
fn train_eval_round_trip() {
    let (dir, cfg) = setup();
    let o = out(&dir, "run");
    assert_eq!(qapm(&["gen-data", "--config", &cfg, "--out", &o]).status.code(), Some(0));
    for est in ["uniform", "none"] {
        let res = qapm(&["train", "--config", &cfg, "--out", &o, "--estimator", est]);
        assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    }
    let res = qapm(&["train", "--config", &cfg, "--out", &o, "--estimator", "recog-soft"]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let log = fs::read_to_string(Path::new(&o).join("train.log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 30);

    let res = qapm(&["eval", "--config", &cfg, "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let first = read(Path::new(&o).join("report.json"));
    let report: EvalReport = serde_json::from_slice(&first).unwrap();
    assert!((0.0..=1.0).contains(&report.verification_accuracy));
    assert!((0.0..=180.0).contains(&report.mean_prototype_angle_deg));
    assert_eq!(report.tar_at_far.len(), 2);
    qapm(&["eval", "--config", &cfg, "--out", &o]);
    assert_eq!(first, read(Path::new(&o).join("report.json")));
}

#[test]
fn forbidden_and_broken_runs_exit_codes() {
    let (dir, cfg) = setup();
    let o = out(&dir, "run");
    qapm(&["gen-data", "--config", &cfg, "--out", &o]);
    let res = qapm(&["train", "--config", &cfg, "--out", &o, "--estimator", "norm", "--set", "train.selection=hard"]);
    assert_eq!(res.status.code(), Some(2));
    let res = qapm(&["train", "--config", &cfg, "--out", &o, "--estimator", "norm-hard"]);
    assert_eq!(res.status.code(), Some(2));

    let res = qapm(&["train", "--config", &cfg, "--out", &o, "--set", "train.lr=1e308"]);
    assert_eq!(res.status.code(), Some(4), "{}", stderr(&res));
    assert!(stderr(&res).contains("step"));

    let res = qapm(&["eval", "--config", &cfg, "--out", &o, "--checkpoint", &out(&dir, "missing")]);
    assert_eq!(res.status.code(), Some(3));
    let res = qapm(&["train", "--config", &cfg, "--out", &out(&dir, "nodata")]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn config_echo_reproduces_run() {
    let (dir, cfg) = setup();
    let a = out(&dir, "a");
    qapm(&["gen-data", "--config", &cfg, "--out", &a, "--seed", "7"]);
    qapm(&["train", "--config", &cfg, "--out", &a, "--seed", "7", "--loss", "arcface"]);
    let echo = Path::new(&a).join("config.txt");
    let parsed = RunConfig::from_text(&fs::read_to_string(&echo).unwrap()).unwrap();
    assert_eq!(parsed.seed, 7);

    let b = out(&dir, "b");
    let echo = echo.to_str().unwrap();
    qapm(&["gen-data", "--config", echo, "--out", &b]);
    qapm(&["train", "--config", echo, "--out", &b]);
    for f in ["dataset.txt", "encoder.bin", "memory.bin", "train.log.jsonl", "config.txt"] {
        assert_eq!(read(Path::new(&a).join(f)), read(Path::new(&b).join(f)), "{f}");
    }
}

#[test]
fn compare_outputs() {
    let (dir, cfg) = setup();
    let o = out(&dir, "same");
    let res = qapm(&[
        "compare", "--config", &cfg, "--out", &o,
        "--set", "compare.base_estimator=none", "--set", "compare.variant_estimator=none",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let csv = fs::read_to_string(Path::new(&o).join("compare.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("seed,metric,base,variant,delta"));
    assert!(lines.all(|l| l.ends_with(",0.0")), "{csv}");

    let o = out(&dir, "ab");
    let res = qapm(&["compare", "--config", &cfg, "--out", &o]);
    assert_eq!(res.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_slice(&read(Path::new(&o).join("summary.json"))).unwrap();
    let wins = &summary["summary"]["mean_prototype_angle_deg"]["wins"];
    assert!(wins.is_u64());

    let variant = dir.path().join("variant.conf");
    fs::write(&variant, format!("{SMALL}train.estimator = none\ntrain.steps = 31\n")).unwrap();
    let res = qapm(&["compare", "--config", &cfg, "--variant-config", variant.to_str().unwrap(), "--out", &o]);
    assert_eq!(res.status.code(), Some(2));
    fs::write(&variant, format!("{SMALL}train.estimator = none\n")).unwrap();
    let res = qapm(&["compare", "--config", &cfg, "--variant-config", variant.to_str().unwrap(), "--out", &o]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
}

#[test]
fn loss_grid_covers_all_losses() {
    let (dir, cfg) = setup();
    let o = out(&dir, "grid");
    let res = qapm(&["compare", "--config", &cfg, "--out", &o, "--loss-grid", "--seeds", "1"]);
    assert_eq!(res.status.code(), Some(0), "{}", stderr(&res));
    let summary: serde_json::Value = serde_json::from_slice(&read(Path::new(&o).join("summary.json"))).unwrap();
    for loss in ["cosface", "arcface", "elasticface-cos+", "elasticface-arc+"] {
        assert!(summary.get(loss).is_some(), "{loss}");
        assert!(Path::new(&o).join(loss).join("compare.csv").exists());
    }
}
