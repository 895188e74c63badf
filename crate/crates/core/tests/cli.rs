use std::path::Path;
use std::process::{Command, Output};

use vesselbench::io::write_volume;
use vesselbench::phantom::{generate_phantom, PhantomConfig};
use vesselbench::LabelVolume;

fn cli(args: &[&str], runs: Option<&Path>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_vesselbench"));
    c.args(args).env("RUST_LOG", "warn");
    match runs {
        Some(r) => c.env("BENCH_RUNS_DIR", r),
        None => c.env_remove("BENCH_RUNS_DIR"),
    };
    c.output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn phantom_metrics_and_degrade_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ph.json");
    std::fs::write(&cfg, r#"{"shape":[24,24,24],"root_radius":2.0,"branching_depth":2,"rng_seed":5}"#).unwrap();
    let out = dir.path().join("ph");
    assert!(cli(&["phantom", "generate", "--config", s(&cfg), "--out", s(&out)], None).status.success());
    let label = out.join("phantom_0005_label.nii.gz");
    assert!(out.join("phantom_0005_image.nii.gz").exists());
    let lines: Vec<Vec<[usize; 3]>> =
        serde_json::from_str(&std::fs::read_to_string(out.join("phantom_0005_centerlines.json")).unwrap()).unwrap();
    assert!(!lines.is_empty() && lines.iter().all(|b| !b.is_empty()));

    let o = cli(&["metrics", "eval", "--pred", s(&label), "--gt", s(&label)], None);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["cldice"], 1.0);
    assert_eq!(report["dice"], 1.0);

    let labels = dir.path().join("labels");
    std::fs::create_dir_all(&labels).unwrap();
    std::fs::copy(&label, labels.join("a.nii.gz")).unwrap();
    let deg = dir.path().join("deg");
    assert!(cli(&["degrade", "--kind", "dilation", "--in", s(&labels), "--out", s(&deg)], None).status.success());
    let prov: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(deg.join("a.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["degradation"]["kind"], "dilation");
    assert!(prov["output_voxels"].as_u64() > prov["input_voxels"].as_u64());
    assert!(deg.join("a.nii.gz").exists());

    let bad = cli(&["degrade", "--kind", "removed", "--in", s(&labels), "--out", s(&deg)], None);
    assert_eq!(bad.status.code(), Some(2));
}

const SPEC: &str = r#"{
  "protocol": "seed_sweep",
  "methods": ["supervised"],
  "compositions": [{"labeled": 1, "unlabeled": 0}],
  "seeds": [0, 1],
  "dataset": {"phantom": {"config": {"shape": [24,24,24], "root_radius": 2.0, "branching_depth": 2},
                          "train_volumes": 2, "test_volumes": 1, "seed": 40}},
  "train": {"t_max": 2, "patch_size": [16,16,16], "eval_stride": [8,8,8]}
}"#;

#[test]
fn bench_run_aggregate_plot_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SPEC).unwrap();
    let runs = dir.path().join("runs");
    assert_eq!(cli(&["bench", "run", "--spec", s(&spec)], Some(&runs)).status.code(), Some(0));
    let o = cli(&["bench", "aggregate"], Some(&runs));
    assert!(o.status.success());
    let summary = runs.join("summary.csv");
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), s(&summary));
    let o = cli(&["bench", "plot", "--summary", s(&summary)], None);
    assert!(o.status.success());
    assert!(runs.join("plots/seed_sweep_dice.svg").exists());
    assert!(runs.join("plots/seed_sweep_cldice.csv").exists());

    let results = std::fs::read_to_string(runs.join("results.csv")).unwrap();
    let key = results.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    assert_eq!(cli(&["bench", "rerun", "--key", &key], Some(&runs)).status.code(), Some(0));
}

#[test]
fn bench_run_exits_nonzero_when_a_cell_fails() {
    // An empty training label passes validation but cannot be sampled.
    let data = tempfile::tempdir().unwrap();
    let root = data.path();
    for (split, seed, empty) in [("train", 1, true), ("test", 2, false)] {
        let p = generate_phantom(&PhantomConfig { rng_seed: seed, shape: [24, 24, 24], root_radius: 2.0, branching_depth: 2, ..Default::default() })
            .unwrap();
        std::fs::create_dir_all(root.join(split).join("images")).unwrap();
        std::fs::create_dir_all(root.join(split).join("labels")).unwrap();
        write_volume(&p.image, root.join(split).join("images/v.nii.gz")).unwrap();
        let label = if empty { LabelVolume::empty(p.label.geom) } else { p.label };
        write_volume(&label, root.join(split).join("labels/v.nii.gz")).unwrap();
    }
    let spec = serde_json::json!({
        "protocol": "composition_sweep",
        "methods": ["supervised"],
        "compositions": [{"labeled": 1, "unlabeled": 0}],
        "seeds": [0],
        "dataset": {"directory": root},
        "train": {"t_max": 1, "patch_size": [16, 16, 16]}
    });
    let path = root.join("spec.json");
    std::fs::write(&path, spec.to_string()).unwrap();
    let runs = root.join("runs");
    let o = cli(&["bench", "run", "--spec", s(&path)], Some(&runs));
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!runs.join("results.csv").exists());
}
