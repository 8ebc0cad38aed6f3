use std::path::Path;
use std::process::{Command, Output};

fn devmimic(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_devmimic"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DEVMIMIC_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn error_line(o: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&o.stderr);
    serde_json::from_str(err.lines().last().expect("an error line")).expect("json error line")
}

#[test]
fn statespace_prints_every_machine() {
    let dir = tempfile::tempdir().unwrap();
    let o = devmimic(&["statespace"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("SimpleXORMachine     2^9    2^1     2^2"), "{text}");
    assert!(text.contains("SerialPortMachine    2^12   2^37    2^37"), "{text}");
}

#[test]
fn hello_with_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = devmimic(&["hello", "--target", "115200,8n1", "--model", "ground-truth"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let row = text.lines().nth(2).unwrap();
    assert!(row.starts_with("115200,8n1  115200    8        None    1      Hello World!"), "{text}");
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["--out", out, "generate", "--machine", "parity", "--preset", "desk", "--seed", "7"];
    let a = devmimic(&args("a"), dir.path());
    let b = devmimic(&args("b"), dir.path());
    assert!(a.status.success() && b.status.success());
    let sums = |o: &Output| -> Vec<String> {
        stdout(o).lines().map(|l| l.split_whitespace().next().unwrap().to_string()).collect()
    };
    assert_eq!(sums(&a).len(), 3);
    assert_eq!(sums(&a), sums(&b));
    for split in ["train", "validation", "evaluation"] {
        let x = std::fs::read(dir.path().join(format!("a/parity-{split}.bin"))).unwrap();
        let y = std::fs::read(dir.path().join(format!("b/parity-{split}.bin"))).unwrap();
        assert_eq!(x, y);
    }
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_devmimic"))
        .args(["generate", "--machine", "xor", "--preset", "4/2/2x8"])
        .current_dir(dir.path())
        .env("DEVMIMIC_OUT", "from-env")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from-env/xor-train.bin").is_file());
}

#[test]
fn errors_have_distinct_codes_and_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let missing = devmimic(&["train", "--machine", "xor", "--data", "nowhere"], p);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(error_line(&missing)["error"], "io");

    std::fs::create_dir(p.join("data")).unwrap();
    std::fs::write(p.join("data/xor-train.bin"), b"not a dataset\n").unwrap();
    let damaged = devmimic(&["train", "--machine", "xor", "--data", "data"], p);
    assert_eq!(damaged.status.code(), Some(4));
    assert_eq!(error_line(&damaged)["error"], "format");

    let gen = devmimic(&["--out", "g", "generate", "--machine", "parity", "--preset", "4/2/2x8"], p);
    assert!(gen.status.success());
    let gen_uart = devmimic(&["--out", "u", "generate", "--machine", "uart", "--preset", "4/2/2x8"], p);
    assert!(gen_uart.status.success());
    let trained = devmimic(
        &["--out", "m", "train", "--machine", "parity", "--data", "g", "--max-epochs", "1"],
        p,
    );
    assert!(trained.status.success(), "{}", String::from_utf8_lossy(&trained.stderr));
    let width = devmimic(
        &["--out", "h", "heatmap", "--machine", "uart", "--data", "u", "--model", "m/model.ckpt"],
        p,
    );
    assert_eq!(width.status.code(), Some(5));
    assert_eq!(error_line(&width)["error"], "shape");

    let config = devmimic(
        &["train", "--machine", "parity", "--data", "g", "--patience", "0"],
        p,
    );
    assert_eq!(config.status.code(), Some(6));
    assert_eq!(error_line(&config)["error"], "config");

    let input = devmimic(&["hello", "--target", "50000,8n1"], p);
    assert_eq!(input.status.code(), Some(7));
    assert_eq!(error_line(&input)["exit_code"], 7);

    let usage = devmimic(&["generate"], p);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn experiment_flags_override_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("exp.toml"),
        "machine = \"invert\"\npreset = \"8/4/4x8\"\nseed = 3\nn_networks = 3\noutput_dir = \"from-spec\"\n[training]\nmax_epochs = 5\n",
    )
    .unwrap();
    let o = devmimic(&["experiment", "--spec", "exp.toml", "--n", "2", "--max-epochs", "2", "--serial"], p);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = p.join("from-spec");
    let stored = std::fs::read_to_string(out.join("spec.toml")).unwrap();
    assert!(stored.contains("n_networks = 2"), "{stored}");
    assert!(stored.contains("max_epochs = 2"), "{stored}");
    assert!(out.join("seed-3/run.csv").is_file());
    assert!(out.join("seed-4/model.ckpt").is_file());
    assert!(!out.join("seed-5").exists());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("Machine,# Params,Epochs,% Success,Eval Loss,Eval Loss (all)\n"));
    assert!(stdout(&o).contains("SingleInvertMachine"));

    let report = devmimic(&["report", "from-spec"], p);
    assert!(report.status.success());
    assert!(stdout(&report).contains("% Success"));
}

#[test]
fn serial_experiments_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let run = |out: &str| {
        let o = devmimic(
            &["--out", out, "experiment", "--machine", "xor", "--preset", "8/4/4x8", "--n", "2", "--max-epochs", "3", "--serial"],
            p,
        );
        assert!(o.status.success());
    };
    run("a");
    run("b");
    for f in ["data/xor-train.bin", "seed-0/run.csv", "seed-1/model.ckpt", "validation_curves.csv"] {
        assert_eq!(
            std::fs::read(p.join("a").join(f)).unwrap(),
            std::fs::read(p.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn mimic_decompose_heatmap_and_hello_on_tiny_data() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert!(devmimic(&["--out", "u", "generate", "--machine", "uart", "--preset", "4/2/2x8"], p)
        .status
        .success());

    let d = devmimic(&["--out", "d", "decompose", "--data", "u", "--max-epochs", "1", "--serial"], p);
    assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));
    assert!(stdout(&d).contains("Word Length"));
    for part in ["parity", "wordlen", "stop", "baud", "tx", "data"] {
        assert!(p.join(format!("d/parts/{part}.ckpt")).is_file(), "{part}");
    }

    let h = devmimic(&["--out", "hm", "heatmap", "--machine", "uart", "--data", "u", "--model", "d/parts"], p);
    assert!(h.status.success(), "{}", String::from_utf8_lossy(&h.stderr));
    let svg = std::fs::read_to_string(p.join("hm/heatmap.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let hello = devmimic(&["hello", "--model", "d/parts"], p);
    assert!(hello.status.success());
    assert_eq!(stdout(&hello).lines().count(), 5);

    let m = devmimic(
        &["--out", "m", "mimic", "--machine", "uart", "--data", "u", "--max-epochs", "1", "--mimicry-budget", "1"],
        p,
    );
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
    let table = std::fs::read_to_string(p.join("m/mimicry.csv")).unwrap();
    // 22 outputs x 8 steps x 2 evaluation sequences.
    assert!(table.lines().nth(1).unwrap().starts_with("SerialPortMachine,352,1,"), "{table}");
}
