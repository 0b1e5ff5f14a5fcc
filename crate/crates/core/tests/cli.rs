use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use medbin::io::{read_tensors, write_tensors};
use medbin::Tensor;

fn medbin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medbin"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn vector_file(dir: &Path, values: Vec<f64>) -> String {
    let path = dir.join("in.qtns");
    write_tensors(&path, &[("w".into(), Tensor::vector(values))]).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "data.num_classes = 3\ndata.dim = 4\ndata.samples_per_class = 30\n\
data.class_separation = 3.0\nmodel.layer_dims = 4,8,3\ntrain.epochs = 2\ntrain.batch_size = 16\n";

#[test]
fn project_binary_l1() {
    let dir = tempfile::tempdir().unwrap();
    let input = vector_file(dir.path(), vec![1.0, -2.0, 3.0]);
    let out = dir.path().join("out.qtns");
    let o = medbin(&[
        "project",
        "--in",
        &input,
        "--norm",
        "l1",
        "--bits",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.contains("scale = 2,") && text.contains("objective = 2\n"),
        "{text}"
    );
    let t = read_tensors(&out).unwrap();
    let names: Vec<&str> = t.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["w.scale", "w.codes", "w.dense"]);
    assert_eq!(t[1].1.data(), &[1.0, -1.0, 1.0]);
    assert_eq!(t[2].1.data(), &[2.0, -2.0, 2.0]);
}

#[test]
fn project_ternary_l2_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let input = vector_file(dir.path(), vec![0.1, -0.9, 1.0]);
    let out = dir.path().join("out.qtns");
    let o = medbin(&[
        "project",
        "--in",
        &input,
        "--norm",
        "l2",
        "--bits",
        "2",
        "--oracle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("t* = 2"), "{text}");
    let scale = read_tensors(&out).unwrap()[0].1.data()[0];
    assert!((scale - 0.95).abs() < 1e-15);
    assert!(text.contains("oracle objective"), "{text}");
}

#[test]
fn project_lloyd_codebook() {
    let dir = tempfile::tempdir().unwrap();
    let input = vector_file(dir.path(), vec![0.9, 2.1, -1.2]);
    let out = dir.path().join("out.qtns");
    let o = medbin(&[
        "project",
        "--in",
        &input,
        "--codebook",
        "1,2",
        "--oracle",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(read_tensors(&out).unwrap()[1].1.data(), &[1.0, 2.0, -1.0]);
}

#[test]
fn project_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.qtns");
    let out = out.to_str().unwrap();
    let input = vector_file(dir.path(), (0..20).map(f64::from).collect());
    let o = medbin(&["project", "--in", &input, "--oracle", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let missing = dir.path().join("missing.qtns");
    assert_eq!(
        medbin(&["project", "--in", missing.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(1)
    );

    let junk = dir.path().join("junk.qtns");
    fs::write(&junk, b"XXXX\x01").unwrap();
    assert_eq!(
        medbin(&["project", "--in", junk.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(1)
    );

    assert_eq!(
        medbin(&["project", "--in", &input, "--norm", "l3", "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        medbin(&["project", "--in", &input, "--bits", "0", "--out", out])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn train_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, format!("{SMALL}train.algorithm = median_bc\n")).unwrap();
    let out = dir.path().join("run");
    let o = medbin(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in [
        "metrics.csv",
        "checkpoint.qtns",
        "results.csv",
        "results.md",
        "dataset.qtns",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("median_bc,cold,0,0,1,"));
}

#[test]
fn train_zero_epochs_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    fs::write(
        &cfg,
        format!("{SMALL}train.epochs = 0\n").replace("train.epochs = 2\n", ""),
    )
    .unwrap();
    let o = medbin(&["train", "--config", cfg.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(
        fs::read_to_string(Path::new(out).join("results.csv"))
            .unwrap()
            .lines()
            .count(),
        2
    );

    let missing = dir.path().join("nope.cfg");
    assert_eq!(
        medbin(&[
            "train",
            "--config",
            missing.to_str().unwrap(),
            "--out-dir",
            out
        ])
        .status
        .code(),
        Some(1)
    );

    fs::write(&cfg, "train.colour = blue\n").unwrap();
    let o = medbin(&["train", "--config", cfg.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("train.colour"));
}

#[test]
fn train_divergence_exits_3_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(
        &cfg,
        format!("{SMALL}train.algorithm = none\ntrain.lr = 1e300\n"),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = medbin(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("abort_state.qtns"), "{err}");
    assert!(out.join("abort_state.qtns").exists());
}

#[test]
fn bench_grid_and_job_independence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let mut tables = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("bench{jobs}"));
        let o = medbin(&[
            "bench",
            "--config",
            cfg.to_str().unwrap(),
            "--seeds",
            "2",
            "--jobs",
            jobs,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        tables.push(fs::read_to_string(out.join("results.csv")).unwrap());
        assert!(out.join("results.md").exists());
        assert_eq!(
            fs::read_to_string(out.join("runs.csv"))
                .unwrap()
                .lines()
                .count(),
            1 + 2 * 13
        );
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0].lines().count(), 14);
    assert_eq!(
        medbin(&["bench", "--config", cfg.to_str().unwrap(), "--seeds", "0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn gradcheck_exit_codes() {
    let o = medbin(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).matches("trial ").count(), 20);
    let o = medbin(&["gradcheck", "--trials", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no trials"));
    assert_eq!(
        medbin(&["gradcheck", "--corrupt-backward", "--trials", "2"])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        medbin(&["gradcheck", "--dims", "3,x"]).status.code(),
        Some(2)
    );
}

#[test]
fn full_precision_on_default_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("fp.cfg");
    fs::write(&cfg, "train.algorithm = none\n").unwrap();
    let out = dir.path().join("run");
    let o = medbin(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let fields: Vec<&str> = results.lines().nth(1).unwrap().split(',').collect();
    let accuracy: f64 = fields[5].parse().unwrap();
    assert!(accuracy >= 0.85, "{results}");
    assert_eq!(fields[7], fields[5]);
}
