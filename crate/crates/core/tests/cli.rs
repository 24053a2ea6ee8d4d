use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlab"))
        .args(args)
        .env_remove("NLAB_DATA_DIR")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = nlab(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    nlab(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic raw dataset plus a prepared directory with 300 train / 100 val.
fn prepared(root: &Path, rate: &str) -> (PathBuf, PathBuf) {
    let raw = root.join("raw");
    let prep = root.join("prep");
    ok(&[
        "synth-cifar",
        "--out",
        s(&raw),
        "--per-file",
        "100",
        "--test-count",
        "100",
    ]);
    ok(&[
        "prepare",
        "--data-dir",
        s(&raw),
        "--out",
        s(&prep),
        "--noise-rate",
        rate,
        "--override",
        "split.train_count=300",
        "--override",
        "split.val_count=100",
        "--seed",
        "3",
    ]);
    (raw, prep)
}

const SMALL: [&str; 6] = [
    "--override",
    "model.arch=32x32x3:c4k3:h16",
    "--override",
    "sgd.batch_size=32",
    "--override",
    "eval.chunk=64",
];

fn train(prep: &Path, out: &Path, extra: &[&str]) -> Output {
    let data = format!("data.dir={}", s(prep));
    let mut args = vec!["train", "--out", s(out), "--override", &data];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    nlab(&args)
}

#[test]
fn prepare_is_deterministic_and_validates_rate() {
    let root = tempfile::tempdir().unwrap();
    let (raw, prep) = prepared(root.path(), "0.4");
    let again = root.path().join("again");
    ok(&[
        "prepare",
        "--data-dir",
        s(&raw),
        "--out",
        s(&again),
        "--noise-rate",
        "0.4",
        "--override",
        "split.train_count=300",
        "--override",
        "split.val_count=100",
        "--seed",
        "3",
    ]);
    for f in [
        "noise_manifest.csv",
        "prepare.manifest",
        "train.bin",
        "val.bin",
        "test.bin",
        "val_ids.csv",
    ] {
        assert_eq!(
            std::fs::read(prep.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
    let bad = root.path().join("bad");
    assert_eq!(
        code(&[
            "prepare",
            "--data-dir",
            s(&raw),
            "--out",
            s(&bad),
            "--noise-rate",
            "1.5"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "prepare",
            "--data-dir",
            s(&root.path().join("missing")),
            "--out",
            s(&bad)
        ]),
        2
    );
    assert_eq!(code(&["prepare", "--out", s(&bad)]), 2);
}

#[test]
fn data_dir_comes_from_environment() {
    let root = tempfile::tempdir().unwrap();
    let raw = root.path().join("raw");
    ok(&[
        "synth-cifar",
        "--out",
        s(&raw),
        "--per-file",
        "20",
        "--test-count",
        "10",
    ]);
    let out = Command::new(env!("CARGO_BIN_EXE_nlab"))
        .args([
            "prepare",
            "--out",
            s(&root.path().join("p")),
            "--override",
            "split.train_count=80",
            "--override",
            "split.val_count=20",
        ])
        .env("NLAB_DATA_DIR", &raw)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_detect_eval_and_report() {
    let root = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(root.path(), "0.4");
    let run = root.path().join("reg");
    let out = train(
        &prep,
        &run,
        &[
            "--override",
            "mode=regularization",
            "--override",
            "decision=elastic",
            "--override",
            "warmup_epochs=2",
            "--override",
            "max_epochs=4",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let metrics = std::fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + 4);
    let dumps: Vec<_> = std::fs::read_dir(run.join("detection"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    let mut dumps: Vec<String> = dumps.into_iter().map(|n| n.into_string().unwrap()).collect();
    dumps.sort();
    assert_eq!(dumps[0], "detection_epoch_0002.csv");
    assert_eq!(dumps.len(), 3);

    let eval = ok(&["detect-eval", s(&run), "3"]);
    let text = String::from_utf8_lossy(&eval.stdout);
    for name in ["loss_only", "hard", "elastic"] {
        assert!(text.contains(name), "{text}");
    }
    let mut rdr = csv::Reader::from_path(run.join("detect_eval_epoch_0003.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let frac = |i: usize| rows[i][2].parse::<f64>().unwrap();
    assert!(frac(1) <= frac(0));
    assert_eq!(code(&["detect-eval", s(&run), "1"]), 2);

    let base = root.path().join("base");
    assert!(train(
        &prep,
        &base,
        &[
            "--override",
            "mode=baseline",
            "--override",
            "max_epochs=2",
            "--override",
            "warmup_epochs=0"
        ]
    )
    .status
    .success());
    let report = root.path().join("report");
    ok(&[
        "report",
        s(&run),
        s(&base),
        s(&root.path().join("nothing")),
        "--out",
        s(&report),
    ]);
    let first = std::fs::read(report.join("summary.csv")).unwrap();
    let summary = String::from_utf8_lossy(&first).to_string();
    assert_eq!(summary.lines().count(), 3, "{summary}");
    assert!(summary.lines().any(|l| l.starts_with("baseline,,")));
    ok(&["report", s(&run), s(&base), "--out", s(&report)]);
    assert_eq!(std::fs::read(report.join("summary.csv")).unwrap(), first);
    assert_eq!(
        code(&["report", s(&root.path().join("nothing")), "--out", s(&report)]),
        2
    );
}

#[test]
fn empty_dump_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(root.path(), "0.4");
    let run = root.path().join("reg");
    assert!(train(
        &prep,
        &run,
        &["--override", "warmup_epochs=1", "--override", "max_epochs=1"]
    )
    .status
    .success());
    let dump = run.join("detection").join("detection_epoch_0001.csv");
    let header = std::fs::read_to_string(&dump)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(&dump, header + "\n").unwrap();
    assert_eq!(code(&["detect-eval", s(&run), "1"]), 2);
}

#[test]
fn zero_learning_rate_and_reproducible_checkpoints() {
    let root = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(root.path(), "0.4");
    let a = root.path().join("a");
    let args = [
        "--override",
        "sgd.learning_rate=0.0",
        "--override",
        "max_epochs=2",
        "--override",
        "warmup_epochs=1",
    ];
    assert!(train(&prep, &a, &args).status.success());
    let ck = |d: &Path, n: &str| std::fs::read(d.join("checkpoints").join(format!("{n}.nlab"))).unwrap();
    assert_eq!(ck(&a, "initial"), ck(&a, "final"));

    let b = root.path().join("b");
    let args = [
        "--override",
        "max_epochs=2",
        "--override",
        "warmup_epochs=1",
        "--seed",
        "9",
    ];
    assert!(train(&prep, &b, &args).status.success());
    assert!(train(&prep, &b, &args).status.success());
    let b2 = root.path().join("b-2");
    assert_eq!(ck(&b, "final"), ck(&b2, "final"));
    assert_eq!(
        std::fs::read(b.join("run.manifest")).unwrap(),
        std::fs::read(b2.join("run.manifest")).unwrap()
    );
}

#[test]
fn usage_and_numeric_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(root.path(), "0.4");
    let run = root.path().join("run");
    assert_eq!(
        train(&prep, &run, &["--override", "mode=sideways"]).status.code(),
        Some(2)
    );
    assert_eq!(
        train(&prep, &run, &["--override", "no_such_key=1"]).status.code(),
        Some(2)
    );
    assert_eq!(train(&prep, &run, &["--override", "cutoff"]).status.code(), Some(2));
    assert_eq!(code(&["train", "--out", s(&run)]), 2);
    let cfg = root.path().join("bad.cfg");
    std::fs::write(&cfg, "mode = baseline\nmode = separation\n").unwrap();
    assert_eq!(train(&prep, &run, &["--config", s(&cfg)]).status.code(), Some(2));
    let diverge = train(
        &prep,
        &run,
        &[
            "--override",
            "sgd.learning_rate=1e30",
            "--override",
            "max_epochs=2",
            "--override",
            "warmup_epochs=0",
        ],
    );
    assert_eq!(
        diverge.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&diverge.stderr)
    );
    assert_eq!(code(&["no-such-command"]), 2);
}
