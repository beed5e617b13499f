use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cre_pps::design::InclusionProbs;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cre-pps"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn cre-pps")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Six clusters, sizes 2, 3, 1, 2, 3, 2.
fn write_frame(dir: &Path) -> PathBuf {
    let sizes = [2, 3, 1, 2, 3, 2];
    let mut text = String::from("cluster_id,stratum,unit_stratum,y1,y0\n");
    for (c, &n) in sizes.iter().enumerate() {
        for k in 0..n {
            let y0 = c as f64 + 0.5 * k as f64;
            text.push_str(&format!("c{c},,,{},{y0}\n", y0 + 1.0 + 0.25 * c as f64));
        }
    }
    let path = dir.join("frame.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn write_equal_frame(dir: &Path) -> PathBuf {
    let mut text = String::from("cluster_id,stratum,unit_stratum,y1,y0\n");
    for c in 0..5 {
        for k in 0..3 {
            text.push_str(&format!("c{c},,,{},{}\n", c + k + 1, c + k));
        }
    }
    let path = dir.join("equal.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn exact_inclusion_on_equal_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let frame = write_equal_frame(tmp.path());
    let o = run(bin().args(["inclusion", "--scheme", "ppswor-exact", "--s", "2", "--frame"]).arg(&frame));
    let pi: InclusionProbs = serde_json::from_str(&stdout(&o)).unwrap();
    for c in 0..5 {
        assert!((pi.first[c] - 0.4).abs() < 1e-12);
        for d in 0..5 {
            if c != d {
                assert!((pi.second[c][d] - 0.1).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn monte_carlo_inclusion_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let frame = write_frame(tmp.path());
    let go = |workers: &str| {
        stdout(&run(bin()
            .args(["--workers", workers, "inclusion", "--scheme", "ppswor-sunter", "--s", "2"])
            .args(["--method", "mc", "--replicates", "20000", "--seed", "3", "--frame"])
            .arg(&frame)))
    };
    assert_eq!(go("1"), go("4"));
    let missing_seed = run(bin()
        .args(["inclusion", "--scheme", "ppswor-sunter", "--s", "2", "--method", "mc", "--frame"])
        .arg(&frame));
    assert_eq!(missing_seed.status.code(), Some(2));
}

#[test]
fn infeasible_sample_size_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let frame = write_frame(tmp.path());
    // n = 13, s = 5: the size-3 clusters exceed n/s
    let o = run(bin().args(["inclusion", "--scheme", "ppswor-exact", "--s", "5", "--frame"]).arg(&frame));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn variance_requires_pi() {
    let tmp = tempfile::tempdir().unwrap();
    let frame = write_frame(tmp.path());
    let o = run(bin()
        .args(["estimate", "--scheme", "ppswor-exact", "--s", "4", "--seed", "1", "--variance", "--frame"])
        .arg(&frame));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sample_assign_estimate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let frame = write_frame(dir);
    let sample = dir.join("sample.json");
    let pi = dir.join("pi.json");
    stdout(&run(bin()
        .args(["sample", "--scheme", "ppswor-exact", "--s", "4", "--seed", "8", "--frame"])
        .arg(&frame)
        .arg("--out")
        .arg(&sample)));
    stdout(&run(bin()
        .args(["inclusion", "--scheme", "ppswor-exact", "--s", "4", "--frame"])
        .arg(&frame)
        .arg("--out")
        .arg(&pi)));
    let estimate = |within: &str, variance: bool| {
        let real = dir.join(format!("realization-{within}.json"));
        stdout(&run(bin()
            .args(["assign", "--treated", "2", "--within", within, "--seed", "9", "--frame"])
            .arg(&frame)
            .arg("--sample")
            .arg(&sample)
            .arg("--out")
            .arg(&real)));
        let mut cmd = bin();
        cmd.args(["estimate", "--estimators", "ht-pps,dim", "--frame"]).arg(&frame).arg("--realization").arg(&real);
        if variance {
            cmd.arg("--variance").arg("--pi").arg(&pi);
        }
        let text = stdout(&run(&mut cmd));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().unwrap().clone();
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        (headers, rows)
    };

    let (h, rows) = estimate("census", true);
    let col = |name: &str| h.iter().position(|x| x == name).unwrap();
    assert!(rows[0][col("var_hat")].parse::<f64>().unwrap() > 0.0);
    assert_eq!(&rows[0][col("pi_source")], "exact");
    assert!(rows[1][col("var_hat")].is_empty());

    // one unit per cluster: HT-PPS and DIM coincide
    let (h, rows) = estimate("1", false);
    let col = |name: &str| h.iter().position(|x| x == name).unwrap();
    assert_eq!(rows[0][col("delta_hat")], rows[1][col("delta_hat")]);
}

#[test]
fn simulate_shape_and_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.json");
    let go = |tag: &str| {
        let out = tmp.path().join(tag);
        stdout(&run(bin().args(["simulate", "--quiet", "--config"]).arg(&config).arg("--out").arg(&out)));
        out
    };
    let (a, b) = (go("a"), go("b"));
    let cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&config).unwrap()).unwrap();
    let cells = cfg["estimators"].as_array().unwrap().len() * cfg["s_grid"].as_array().unwrap().len();
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count() - 1, cells);
    for f in ["results.csv", "summary.csv", "variance.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "cre-pps");
}
