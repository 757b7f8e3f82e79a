use std::path::Path;
use std::process::{Command, Output};

fn sface(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sface"))
        .args(args)
        .arg("--out-dir")
        .arg(out_dir)
        .env_remove("SFACE_OUT_DIR")
        .output()
        .expect("spawn sface")
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(|f| f.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn curves_default_sigmoid() {
    let dir = tempfile::tempdir().unwrap();
    let out = sface(&["curves", "--a", "0.9", "--b", "1.2", "--points", "1001"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rows = rows(&dir.path().join("curves.csv"));
    assert_eq!(rows.len(), 1001);
    // 0.90 is not a grid point; a is the sigmoid's inflection, so linear
    // interpolation between the bracketing rows is accurate there
    let k = rows.iter().position(|r| r[0] > 0.9).unwrap();
    let (lo, hi) = (&rows[k - 1], &rows[k]);
    let v = lo[1] + (hi[1] - lo[1]) * (0.9 - lo[0]) / (hi[0] - lo[0]);
    assert!((v - 25.066).abs() < 5e-3, "{v}");
}

#[test]
fn curves_constant_family_is_scaled_sine() {
    let dir = tempfile::tempdir().unwrap();
    let out = sface(&["curves", "--family", "constant", "--points", "101"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    for r in rows(&dir.path().join("curves.csv")) {
        let v = 64.0 * r[0].sin();
        assert!((r[1] - v).abs() <= 1e-12 * v.max(1.0));
        assert!((r[2] - v).abs() <= 1e-12 * v.max(1.0));
    }
}

#[test]
fn malformed_config_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[loss]\nkind = \"sface\"\nsharpness = 3\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = sface(&["curves", "--config", cfg.to_str().unwrap()], &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    std::fs::write(&cfg, "[loss\n").unwrap();
    assert_eq!(
        sface(&["train", "--config", cfg.to_str().unwrap()], &out_dir)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sface(&["curves", "--a", "2.0"], &out_dir).status.code(), Some(2));
    assert_eq!(
        sface(&["curves", "--loss", "dsoftmax"], &out_dir).status.code(),
        Some(2)
    );
    assert!(!out_dir.exists());
}

#[test]
fn help_on_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["curves", "gradcheck", "equivalence", "train", "sweep", "stats"] {
        let out = sface(&[cmd, "--help"], dir.path());
        assert_eq!(out.status.code(), Some(0), "{cmd}");
        let text = String::from_utf8(out.stdout).unwrap();
        for key in [
            "[dataset]",
            "[loss]",
            "[train]",
            "[curves]",
            "[check]",
            "[sweep]",
            "[stats]",
            "out_dir",
        ] {
            assert!(text.contains(key), "{cmd} --help lacks {key}");
        }
    }
}

#[test]
fn gradcheck_and_equivalence_on_seed_11() {
    let dir = tempfile::tempdir().unwrap();
    let out = sface(&["gradcheck", "--seed", "11"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let err: f64 = text
        .split("max relative error: ")
        .nth(1)
        .and_then(|t| t.split_whitespace().next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(err <= 1e-5);

    let out = sface(&["equivalence", "--loss", "nsoftmax", "--seed", "11"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let line = std::fs::read_to_string(dir.path().join("equivalence.csv")).unwrap();
    let fields: Vec<&str> = line.trim().split(',').collect();
    assert_eq!(&fields[..5], &["nsoftmax", "8", "5", "16", "11"]);
    assert!(fields[5].parse::<f64>().unwrap() <= 1e-10);
}

#[test]
fn tolerance_violation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = sface(&["gradcheck", "--instances", "1", "--tolerance", "1e-30"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = sface(
        &["equivalence", "--loss", "arcface", "--tolerance", "1e-30"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_zero_lr_then_stats() {
    let dir = tempfile::tempdir().unwrap();
    let out = sface(
        &["train", "--lr", "0", "--steps", "40", "--flip-rate", "0.1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    for f in [
        "dataset.csv",
        "embeddings.csv",
        "centers.csv",
        "trace.csv",
        "diagnostics.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let trace = rows(&dir.path().join("trace.csv"));
    assert!(trace.iter().all(|r| r[5] == 0.0 && r[1] == trace[0][1]));
    let header = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(header.starts_with("step,loss,clean_intra_deg,noisy_intra_deg,inter_deg,max_norm_drift\n"));
    assert_eq!(
        std::fs::read(dir.path().join("dataset.csv")).unwrap(),
        std::fs::read(dir.path().join("embeddings.csv")).unwrap()
    );

    let out = sface(&["stats"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stats = rows(&dir.path().join("stats.csv"));
    assert_eq!(stats.len(), 1);
    assert!((stats[0][2] - (stats[0][1] - stats[0][0])).abs() == 0.0);
}

#[test]
fn stats_without_inputs_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sface(&["stats"], dir.path()).status.code(), Some(3));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_sface"))
        .args(["curves", "--points", "11"])
        .env("SFACE_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("curves.csv").exists());
}

#[test]
fn sweep_writes_one_table_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[dataset]\nper_class = 20\n[train]\ntotal_steps = 40\n\
         [sweep]\nseeds = [3, 4]\nnoise_levels = [[0.0, 0.0], [0.2, 0.0]]\na_values = [0.8]\n\
         baselines = [{ kind = \"arcface\" }]\n",
    )
    .unwrap();
    let out = sface(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for seed in [3, 4] {
        let text = std::fs::read_to_string(dir.path().join(format!("sweep-{seed}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "noise_rate,loss,a,b,clean_intra,noisy_intra,delta_intra,inter_mean,inter_std,final_loss"
        );
        let body: Vec<&str> = lines.collect();
        assert_eq!(body.len(), 4);
        assert!(body[1].contains(",arcface,,,"));
    }
}
