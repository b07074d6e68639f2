use std::process::Command;

fn bench() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bench"));
    for (k, _) in std::env::vars() {
        if k.starts_with("TASKRT_") {
            c.env_remove(k);
        }
    }
    c
}

fn json(out: &std::process::Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn dry_run_reports_table_counts() {
    let out = bench().args(["matmul", "--ms", "4096", "--bs", "64", "--dry-run"]).output().unwrap();
    assert_eq!(json(&out)["task_count"], 262144);
    let out = bench()
        .args(["nbody", "--particles", "16384", "--timesteps", "16", "--bs", "256", "--dry-run"])
        .output()
        .unwrap();
    assert_eq!(json(&out)["task_count"], 65568);
}

#[test]
fn environment_mirrors_flags() {
    let out = bench()
        .arg("matmul")
        .env("TASKRT_MS", "8192")
        .env("TASKRT_BS", "512")
        .env("TASKRT_DRY_RUN", "true")
        .env("TASKRT_THREADS", "16")
        .env("TASKRT_MAX_SPINS", "3")
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["task_count"], 4096);
    assert_eq!(v["ddast"]["max_ddast_threads"], 2);
    assert_eq!(v["ddast"]["max_spins"], 3);
}

#[test]
fn run_report_has_one_time_per_repetition() {
    let out = bench()
        .args(["sparselu", "--ms", "256", "--bs", "32", "--threads", "3", "--repetitions", "2"])
        .args(["--mode", "baseline"])
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["times_ns"].as_array().unwrap().len(), 2);
    assert_eq!(v["counters"]["created"], v["task_count"]);
    assert_eq!(v["mode"], "baseline");
}

#[test]
fn sweep_prints_doubling_rows() {
    let out = bench()
        .args(["matmul", "--ms", "64", "--bs", "16", "--threads", "2", "--repetitions", "1"])
        .args(["--sweep", "MAX_OPS_THREAD", "--report", "csv"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("param,value,best_ns,speedup"));
    let values: Vec<u64> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[0], "MAX_OPS_THREAD");
            f[3].parse::<f64>().unwrap();
            f[1].parse().unwrap()
        })
        .collect();
    assert_eq!(values, vec![1, 2, 4, 8, 16, 32, 64, 128]);
}

#[test]
fn bad_arguments_fail() {
    let out = bench().args(["matmul", "--ms", "100", "--bs", "64"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("multiple"));
    let out = bench().args(["matmul", "--mode", "baseline", "--sweep", "MAX_SPINS"]).output().unwrap();
    assert!(!out.status.success());
}
