use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use diiqn::distance::{MetricKind, StateShape};
use diiqn::expert::{write_dataset, DatasetFile};
use diiqn::harness::{load_dataset, TrainSummary};
use diiqn::learner::{Algorithm, RunConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diiqn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn smoke_config() -> RunConfig {
    RunConfig {
        t_train: 2_000,
        warmup: 200,
        eps_steps: 1_000,
        buffer_size: 2_000,
        beta_per_steps: 2_000,
        log_interval: 200,
        eval_interval: 500,
        eval_episodes: 2,
        ..RunConfig::default()
    }
}

fn write_config(dir: &Path, name: &str, cfg: &RunConfig) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, cfg.to_toml()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_body(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let (header, body) = text.split_once('\n').unwrap();
    assert!(header.starts_with("# config_hash="), "{header}");
    body.to_string()
}

#[test]
fn default_config_round_trips() {
    let text = ok(&["default-config"]);
    assert_eq!(RunConfig::from_toml(&text).unwrap(), RunConfig::default());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "t_trian = 5\n").unwrap();
    let out = run(&["train", "--config", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("t_trian"));
    let missing = dir.path().join("missing.toml");
    assert_eq!(run(&["train", "--config", s(&missing), "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(&["build-dataset", "--out", s(&dir.path().join("d.bin"))]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn smoke_train_writes_self_describing_files_and_reproduces() {
    let dir = TempDir::new().unwrap();
    let cfg = smoke_config();
    let c = write_config(dir.path(), "c.toml", &cfg);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let t0 = Instant::now();
    let printed = ok(&["train", "--config", s(&c), "--out", s(&a)]);
    assert!(t0.elapsed() < Duration::from_secs(60));
    let summary: TrainSummary = serde_json::from_str(&printed).unwrap();
    assert_eq!(summary.config_hash, cfg.hash());
    assert_eq!(summary.steps, 2_000);
    for f in ["episodes.csv", "intervals.csv", "evals.csv"] {
        let text = fs::read_to_string(a.join(f)).unwrap();
        assert!(text.starts_with(&format!("# config_hash={} seed={}", cfg.hash(), cfg.seed)));
    }
    assert_eq!(fs::read_to_string(a.join("evals.csv")).unwrap().lines().count(), 2 + 4);

    ok(&["train", "--config", s(&c), "--out", s(&b)]);
    for f in ["episodes.csv", "intervals.csv", "evals.csv", "summary.json", "config.toml", "model.ckpt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let eval = ok(&["eval", "--config", s(&c), "--model", s(&a.join("model.ckpt")), "--episodes", "3"]);
    let v: serde_json::Value = serde_json::from_str(&eval).unwrap();
    assert_eq!(v["returns"].as_array().unwrap().len(), 3);
}

#[test]
fn diiqn_with_empty_dataset_logs_like_dqn() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.bin");
    write_dataset(
        &DatasetFile::new(MetricKind::EuclideanNormalized, StateShape::Flat(2)),
        fs::File::create(&empty).unwrap(),
    )
    .unwrap();
    let dqn = smoke_config();
    let diiqn = RunConfig {
        algorithm: Algorithm::Diiqn,
        dataset: Some("empty.bin".into()),
        ..smoke_config()
    };
    let c1 = write_config(dir.path(), "dqn.toml", &dqn);
    let c2 = write_config(dir.path(), "diiqn.toml", &diiqn);
    ok(&["train", "--config", s(&c1), "--out", s(&dir.path().join("dqn"))]);
    ok(&["train", "--config", s(&c2), "--out", s(&dir.path().join("diiqn"))]);
    for f in ["episodes.csv", "intervals.csv", "evals.csv"] {
        assert_eq!(csv_body(&dir.path().join("dqn").join(f)), csv_body(&dir.path().join("diiqn").join(f)), "{f}");
    }
    assert_eq!(
        fs::read(dir.path().join("dqn/model.ckpt")).unwrap(),
        fs::read(dir.path().join("diiqn/model.ckpt")).unwrap()
    );
}

#[test]
fn scripted_experts_merge_into_one_dataset() {
    let dir = TempDir::new().unwrap();
    let c = write_config(dir.path(), "c.toml", &RunConfig::default());
    let (a, b, m) = (dir.path().join("a.bin"), dir.path().join("b.bin"), dir.path().join("m.bin"));
    ok(&["script-expert", "--config", s(&c), "--out", s(&a)]);
    ok(&["script-expert", "--config", s(&c), "--waypoint", "13,1", "--episodes", "2", "--out", s(&b)]);
    ok(&["build-dataset", "--out", s(&m), s(&a), s(&b)]);
    let (fa, fb, fm) = (load_dataset(&a).unwrap(), load_dataset(&b).unwrap(), load_dataset(&m).unwrap());
    assert_eq!(fm.len(), fa.len() + fb.len());
    assert_eq!(*fm.expert_ids.iter().max().unwrap(), 2);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("m.bin.json")).unwrap()).unwrap();
    assert_eq!(manifest["records"], fm.len());
    assert_eq!(manifest["sources"].as_array().unwrap().len(), 2);
    assert_eq!(
        run(&["script-expert", "--config", s(&c), "--waypoint", "0,0", "--out", s(&a)]).status.code(),
        Some(1)
    );
}

fn corridor_expert_config() -> RunConfig {
    RunConfig {
        layout: "corridor".into(),
        expert_pattern: "standard".into(),
        t_train: 20_000,
        warmup: 500,
        eps_steps: 3_000,
        buffer_size: 5_000,
        f_target: 200,
        lr: 1e-3,
        eval_interval: 500,
        eval_episodes: 1,
        eval_eps: 0.0,
        ..RunConfig::default()
    }
}

#[test]
fn trained_expert_at_the_optimal_return_traces_a_shortest_path() {
    let dir = TempDir::new().unwrap();
    let c = write_config(dir.path(), "c.toml", &corridor_expert_config());
    let out = dir.path().join("e.bin");
    // 14 moves: 14 step penalties plus the goal bonus.
    ok(&["train-expert", "--config", s(&c), "--target-return", "86", "--episodes", "2", "--out", s(&out)]);
    let f = load_dataset(&out).unwrap();
    assert_eq!(f.len(), 28);
    assert_eq!(f.expert_ids.iter().filter(|&&i| i == 1).count(), 14);
    for (s0, s1) in &f.transitions {
        assert!((s1[0] - s0[0] - 1.0 / 17.0).abs() < 1e-6);
    }
}

#[test]
fn expert_target_below_random_stops_at_first_evaluation() {
    let dir = TempDir::new().unwrap();
    let c = write_config(dir.path(), "c.toml", &corridor_expert_config());
    let out = dir.path().join("e.bin");
    let text = ok(&["train-expert", "--config", s(&c), "--target-return", "-1000", "--episodes", "1", "--out", s(&out)]);
    assert!(text.contains("after 500 steps"), "{text}");
}

#[test]
fn sweep_cells_match_direct_training_and_record_failures() {
    let dir = TempDir::new().unwrap();
    let cfg = smoke_config();
    write_config(dir.path(), "base.toml", &cfg);
    fs::write(
        dir.path().join("plan.toml"),
        "base = \"base.toml\"\nseeds = [3]\noutput = \"sweep\"\n\n[[variant]]\nid = \"plain\"\n\n[[variant]]\nid = \"broken\"\nalgorithm = \"diiqn\"\ndataset = \"missing.bin\"\n",
    )
    .unwrap();
    ok(&["sweep", "--plan", s(&dir.path().join("plan.toml"))]);

    let direct = RunConfig { seed: 3, ..cfg };
    let c = write_config(dir.path(), "direct.toml", &direct);
    ok(&["train", "--config", s(&c), "--out", s(&dir.path().join("direct"))]);
    let cell = dir.path().join("sweep/plain/seed-3");
    for f in ["episodes.csv", "intervals.csv", "evals.csv", "summary.json", "model.ckpt"] {
        assert_eq!(fs::read(cell.join(f)).unwrap(), fs::read(dir.path().join("direct").join(f)).unwrap(), "{f}");
    }

    let summary = fs::read_to_string(dir.path().join("sweep/summary.csv")).unwrap();
    assert!(summary.starts_with("# plan_hash="));
    assert!(summary.contains("population"));
    let rows: Vec<&str> = summary.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[1].starts_with("plain,"));
    assert!(rows[2].starts_with("broken,"));
    let failures = fs::read_to_string(dir.path().join("sweep/failures.csv")).unwrap();
    assert!(failures.lines().any(|l| l.starts_with("broken,3,")), "{failures}");
    assert!(dir.path().join("sweep/phi_plain.csv").exists());
}
