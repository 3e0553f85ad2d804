use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn varbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varbound"))
        .args(args)
        .env_remove("VARBOUND_THREADS")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn q975() -> f64 {
    1.959963984540054
}

// treated (y=2, d=1), (y=0, d=0); control (y=1, d=0), (y=0, d=0)
const WORKED: &str = "t,y,d,w\n1,2,1,x\n1,0,0,x\n0,1,0,x\n0,0,0,x\n";

#[test]
fn worked_noncompliance_sample() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "late.csv", WORKED);
    let doc = json(&varbound(&["late", p(&f), "-w", "w"]));
    assert_eq!(doc["command"], "late");
    assert_eq!(doc["theta_c_hat"].as_f64().unwrap(), 1.0);
    assert_eq!(doc["pi_c_hat"].as_f64().unwrap(), 0.5);
    for b in doc["bounds"].as_array().unwrap() {
        assert_eq!(b["lower"].as_f64().unwrap(), 0.0);
        assert_eq!(b["upper"].as_f64().unwrap(), 0.0);
    }
    let half = q975() * 2f64.sqrt();
    for i in doc["intervals"].as_array().unwrap() {
        assert_eq!(i["sigma_c_hat2"]["value"].as_f64().unwrap(), 8.0);
        let lo = i["ci"]["lo"].as_f64().unwrap();
        let hi = i["ci"]["hi"].as_f64().unwrap();
        assert!((lo - (1.0 - half)).abs() < 1e-12 && (hi - (1.0 + half)).abs() < 1e-12);
        let pv = i["p_value_negative"].as_f64().unwrap();
        assert!(pv > 0.5 && pv < 1.0);
    }
    assert!(doc["scale_note"].is_string());
}

#[test]
fn non_binary_treatment_exits_2_with_line() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "bad.csv", "t,y\n1,1\n0,2\n2,3\n0,1\n");
    let out = varbound(&["ci", p(&f)]);
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 4") && msg.contains("`t`"), "{msg}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "ok.csv", "t,y\n1,1\n0,2\n1,3\n0,1\n");
    assert_eq!(varbound(&["ci", p(&f), "--outcome", "z"]).status.code(), Some(2));
    assert_eq!(varbound(&["ci", p(&f), "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(varbound(&["ci", "/nonexistent/file.csv"]).status.code(), Some(2));
    assert_eq!(varbound(&["ci", p(&f), "--families", "nope"]).status.code(), Some(2));
}

#[test]
fn weak_instrument_exits_4() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "weak.csv", "t,y,d\n1,2,0\n1,0,0\n0,1,0\n0,0,0\n");
    let out = varbound(&["late", p(&f)]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn degenerate_design_exits_3_unless_merged() {
    let dir = TempDir::new().unwrap();
    let text = "t,y,w\n1,1,a\n0,2,a\n1,3,a\n0,1,a\n1,5,b\n1,4,b\n";
    let f = write(&dir, "deg.csv", text);
    let out = varbound(&["ci", p(&f), "-w", "w"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains('b'));
    let doc = json(&varbound(&["ci", p(&f), "-w", "w", "--merge-sparse-strata"]));
    assert_eq!(doc["input"]["merges"][0]["from"], "b");
    assert_eq!(doc["input"]["strata"].as_array().unwrap().len(), 1);
    assert!(!doc["diagnostics"]["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn sharp_interval_no_wider_than_naive() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("t,y,w\n");
    for i in 0..40 {
        let t = i % 2;
        let y = (i * 7 % 11) as f64 + 3.0 * t as f64;
        text.push_str(&format!("{t},{y},{}\n", i % 3));
    }
    let f = write(&dir, "toy.csv", &text);
    let doc = json(&varbound(&["ci", p(&f), "-w", "w"]));
    let width = |fam: &str| {
        let i = doc["intervals"]
            .as_array()
            .unwrap()
            .iter()
            .find(|i| i["family"] == fam)
            .unwrap();
        i["ci"]["hi"].as_f64().unwrap() - i["ci"]["lo"].as_f64().unwrap()
    };
    assert!(width("sharp") <= width("naive-zero"));
    assert!(width("sharp") <= width("aronow") + 1e-12);
    assert_eq!(doc["bounds"].as_array().unwrap().len(), 3);
}

#[test]
fn output_fields_do_not_depend_on_data() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.csv", "t,y\n1,1\n0,2\n1,3\n0,1\n");
    let b = write(&dir, "b.csv", "t,y\n1,1\n0,1\n1,1\n0,1\n1,1\n0,1\n");
    let keys = |v: &Value| -> Vec<String> {
        fn walk(v: &Value, prefix: &str, out: &mut Vec<String>) {
            if let Value::Object(m) = v {
                for (k, x) in m {
                    let name = format!("{prefix}.{k}");
                    out.push(name.clone());
                    walk(x, &name, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(v, "", &mut out);
        out
    };
    for cmd in ["bounds", "ci"] {
        let x = json(&varbound(&[cmd, p(&a)]));
        let y = json(&varbound(&[cmd, p(&b)]));
        assert_eq!(keys(&x), keys(&y));
        assert_eq!(x.get("intervals").is_some(), cmd == "ci");
    }
}

#[test]
fn csv_and_tsv_output() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "late.csv", WORKED);
    let out = varbound(&["late", p(&f), "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("family,theta_c_hat,pi_c_hat,lower,upper,sigma2"));
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("naive-zero,1,0.5,,,8,"));
    let out = varbound(&["ci", p(&f), "--format", "tsv", "--precision", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().all(|l| l.split('\t').count() == 11));
}

#[test]
fn example1_sweep() {
    let out = varbound(&["example1", "--format", "csv", "--precision", "17"]);
    assert!(out.status.success());
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(rdr.headers().unwrap().len(), 7);
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 200);
    for (j, r) in rows.iter().enumerate() {
        let pr = (j + 1) as f64 / 200.0;
        assert_eq!(r[0], pr);
        assert!(r[1] >= r[3].max(r[5]) - 1e-9);
        assert!(r[2] <= r[4].min(r[6]) + 1e-9);
        // binary closed forms
        let lo = (pr - 0.75).abs() / 3.0 + 2.0 / 3.0 * (7.0 / 8.0 - pr / 2.0) - 1.0 / 9.0;
        let hi = (pr + 0.75).min(2.0 - pr - 0.75) / 3.0
            + 2.0 / 3.0 * (9.0 / 8.0 - pr / 2.0).min(7.0 / 8.0 + pr / 2.0)
            - 1.0 / 9.0;
        assert!((r[1] - lo).abs() < 1e-12 && (r[2] - hi).abs() < 1e-12);
    }
    let doc = json(&varbound(&["example1"]));
    assert_eq!(doc.as_array().unwrap().len(), 200);
}

#[test]
fn simulate_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let zero = write(&dir, "zero.toml", "scenario = \"perfect\"\npopulation_size = 40\nreps = 0\nseed = 1\n");
    assert_eq!(varbound(&["simulate", p(&zero)]).status.code(), Some(2));
    let unknown = write(&dir, "unknown.toml", "scenario = \"perfect\"\npopulation_size = 40\nseed = 1\nfoo = 2\n");
    assert_eq!(varbound(&["simulate", p(&unknown)]).status.code(), Some(2));
    let missing = dir.path().join("missing.toml");
    assert_eq!(varbound(&["simulate", p(&missing)]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "study.toml",
        "scenario = \"noncompliance\"\npopulation_size = 200\nreps = 30\nseed = 7\n",
    );
    let log = dir.path().join("log.csv");
    let a = varbound(&["simulate", p(&cfg), "--threads", "1", "--log", p(&log)]);
    let b = varbound(&["simulate", p(&cfg), "--threads", "3"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let doc: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(doc["command"], "simulate");
    assert_eq!(doc["config"]["reps"], 30);
    let used = doc["used_reps"].as_u64().unwrap();
    assert_eq!(used + doc["excluded_reps"].as_u64().unwrap(), 30);
    let log = fs::read_to_string(log).unwrap();
    assert!(log.starts_with("rep,family,effect"));
    let families = doc["families"].as_array().unwrap().len() as u64;
    assert_eq!(log.lines().count() as u64, 1 + used * families + (30 - used));
    let c = varbound(&["simulate", p(&cfg), "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn canonical_round_trip() {
    let dir = TempDir::new().unwrap();
    let f = write(
        &dir,
        "raw.tsv",
        "arm\tscore\tage\n1\t0.30000000000000004\t19\n0\t-1e-300\t45\n1\t7\t61\n0\t2.5\t33\n",
    );
    let canon = dir.path().join("canon.csv");
    let first = varbound(&[
        "canonical", p(&f), "--treatment", "arm", "--outcome", "score", "-w", "age",
        "--bins", "age=20,30,40,50,60", "--delimiter", "tab", "-o", p(&canon),
    ]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let again = varbound(&["canonical", p(&canon), "-w", "w"]);
    assert_eq!(again.stdout, fs::read(&canon).unwrap());
    let a = json(&varbound(&[
        "bounds", p(&f), "--treatment", "arm", "--outcome", "score", "-w", "age",
        "--bins", "age=20,30,40,50,60", "--delimiter", "tab", "--merge-sparse-strata",
    ]));
    let b = json(&varbound(&["bounds", p(&canon), "-w", "w", "--merge-sparse-strata"]));
    assert_eq!(a["bounds"], b["bounds"]);
    assert_eq!(a["theta_hat"], b["theta_hat"]);
}

#[test]
fn jobs_shaped_report_has_p_values() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("z,depress,treat,risk\n");
    for i in 0..120u32 {
        let z = i % 2;
        let d = if z == 1 { u32::from(i % 3 != 0) } else { 0 };
        let y = 2.0 + ((i * 13) % 17) as f64 / 10.0 - 0.4 * d as f64;
        text.push_str(&format!("{z},{y},{d},{}\n", if i % 5 < 2 { "high" } else { "low" }));
    }
    let f = write(&dir, "jobs.csv", &text);
    let doc = json(&varbound(&[
        "late", p(&f), "--treatment", "z", "--outcome", "depress", "--takeup", "treat", "-w", "risk",
    ]));
    let iv = doc["intervals"].as_array().unwrap();
    let pval = |fam: &str| {
        iv.iter().find(|i| i["family"] == fam).unwrap()["p_value_negative"]
            .as_f64()
            .unwrap()
    };
    assert!(doc["theta_c_hat"].as_f64().unwrap() < 0.0);
    assert!(pval("sharp-late") <= pval("naive-zero"));
    assert!(pval("sharp-late") <= pval("sharp-late-nocov") + 1e-15);
    assert_eq!(doc["lambda"].as_array().unwrap().len(), 2);
}
