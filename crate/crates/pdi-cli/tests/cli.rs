//! End-to-end command tests driving the compiled binary.

use std::path::{Path, PathBuf};
use std::process::Command;

use pdi_core::simulation::{generate_dataset, DgpParams};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdi"))
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pdi-cli-{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_dataset_csv(path: &Path, n: usize, seed: u64) {
    let ds = generate_dataset(&DgpParams::new(n, seed)).unwrap();
    let mut out = String::from("y,a,t_lo,t_hi");
    for j in 1..=ds.d() {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for o in ds.iter() {
        out.push_str(&format!("{},{},{},inf", o.y, o.a, o.t_lo));
        for v in &o.x {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

fn write_quick_fit_config(path: &Path) {
    std::fs::write(
        path,
        "[fit]\nfolds = 3\ngammas = 2.8\nlambdas = 1\nps = 0.5\nkappas = 1024\n\
         subproblem_iterations = 150\nmax_dc_iterations = 8\n",
    )
    .unwrap();
}

#[test]
fn fit_predict_round_trip() {
    let dir = workdir("fit-predict");
    let train = dir.join("train.csv");
    write_dataset_csv(&train, 60, 5);
    let conf = dir.join("fit.conf");
    write_quick_fit_config(&conf);
    let model = dir.join("model.pdi");

    let status = bin()
        .args(["fit", "--data"])
        .arg(&train)
        .args(["--out"])
        .arg(&model)
        .args(["--config"])
        .arg(&conf)
        .args(["--alpha", "0.7", "--seed", "3"])
        .status()
        .unwrap();
    assert!(status.success());

    let preds = dir.join("preds.csv");
    let status = bin()
        .args(["predict", "--model"])
        .arg(&model)
        .args(["--data"])
        .arg(&train)
        .args(["--out"])
        .arg(&preds)
        .status()
        .unwrap();
    assert!(status.success());

    let text = std::fs::read_to_string(&preds).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let ell: f64 = fields[0].parse().unwrap();
        let u: f64 = fields[1].parse().unwrap();
        assert!(0.0 <= ell && ell <= u && u <= 1.0, "bad row {line}");
        rows += 1;
    }
    assert_eq!(rows, 60);

    // identical predictions after a save/load round trip, on 100 fresh probe rows
    let probe = dir.join("probe.csv");
    write_dataset_csv(&probe, 100, 11);
    let preds1 = dir.join("probe1.csv");
    let preds2 = dir.join("probe2.csv");
    for out in [&preds1, &preds2] {
        let status = bin()
            .args(["predict", "--model"])
            .arg(&model)
            .args(["--data"])
            .arg(&probe)
            .args(["--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let p1 = std::fs::read_to_string(&preds1).unwrap();
    assert_eq!(p1, std::fs::read_to_string(&preds2).unwrap());
    assert_eq!(p1.lines().count(), 101);

    // evaluate emits a metrics row
    let metrics = dir.join("metrics.csv");
    let status = bin()
        .args(["evaluate", "--model"])
        .arg(&model)
        .args(["--data"])
        .arg(&train)
        .args(["--out"])
        .arg(&metrics)
        .status()
        .unwrap();
    assert!(status.success());
    let mtext = std::fs::read_to_string(&metrics).unwrap();
    assert!(mtext.starts_with("tp,tn,fp,fn,accuracy"));
    assert_eq!(mtext.lines().count(), 2);
}

#[test]
fn predict_rejects_wrong_covariate_count() {
    let dir = workdir("schema");
    let train = dir.join("train.csv");
    write_dataset_csv(&train, 60, 7);
    let conf = dir.join("fit.conf");
    write_quick_fit_config(&conf);
    let model = dir.join("model.pdi");
    assert!(bin()
        .args(["fit", "--data"])
        .arg(&train)
        .args(["--out"])
        .arg(&model)
        .args(["--config"])
        .arg(&conf)
        .status()
        .unwrap()
        .success());

    let narrow = dir.join("narrow.csv");
    std::fs::write(&narrow, "x1,x2\n0.1,0.2\n").unwrap();
    let out = bin()
        .args(["predict", "--model"])
        .arg(&model)
        .args(["--data"])
        .arg(&narrow)
        .args(["--out"])
        .arg(dir.join("p.csv"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("covariate count mismatch"), "stderr: {err}");
}

#[test]
fn simulate_is_deterministic_and_row_counted() {
    let dir = workdir("simulate");
    let conf = dir.join("sim.conf");
    std::fs::write(
        &conf,
        "[simulate]\nreplicates = 1\ntrain_size = 80\ntest_size = 50\nfolds = 4\n\
         subproblem_iterations = 120\nmax_dc_iterations = 6\n",
    )
    .unwrap();
    let out1 = dir.join("a.csv");
    let out2 = dir.join("b.csv");
    for out in [&out1, &out2] {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(&conf)
            .args(["--seed", "7", "--alpha", "0.7", "--estimators", "d-joint,ind-para", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "simulate output not byte-identical");
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 3, "header plus exactly 2 data rows");
    assert!(text.starts_with(
        "alpha,Estimator,Invalid PDI,MAE,MSE,Accuracy,F1 Score,MCC,Recall,Precision,Cohen's kappa"
    ));
}

#[test]
fn missing_output_directory_is_reported() {
    let dir = workdir("missing-out");
    let data = dir.join("x.csv");
    std::fs::write(&data, "x1,x2,x3,x4,x5,x6,x7,x8,x9,x10\n0.1,0.2,0.3,0.4,0,0,0,1,0,1\n")
        .unwrap();
    let bogus = dir.join("no-such-dir").join("out.csv");
    let out = bin()
        .args(["oracle", "--data"])
        .arg(&data)
        .args(["--out"])
        .arg(&bogus)
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no-such-dir"), "stderr must name the path: {err}");
}

#[test]
fn oracle_flags_undefined_rows() {
    let dir = workdir("oracle");
    let data = dir.join("x.csv");
    std::fs::write(&data, "x1,x2,x3,x4,x5,x6,x7,x8,x9,x10\n0,0,0,0,0,0,0,0,0,0\n").unwrap();
    let out_csv = dir.join("oracle.csv");
    // alpha = 0.99 pushes the level above the outcome plateau
    let status = bin()
        .args(["oracle", "--data"])
        .arg(&data)
        .args(["--alpha", "0.99", "--out"])
        .arg(&out_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out_csv).unwrap();
    assert!(text.lines().nth(1).unwrap().ends_with(",0"));

    let status = bin()
        .args(["oracle", "--data"])
        .arg(&data)
        .args(["--alpha", "0.7", "--out"])
        .arg(&out_csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.ends_with(",1"));
    let ell: f64 = row.split(',').next().unwrap().parse().unwrap();
    assert!((ell - 0.11244).abs() < 1e-4);
}
