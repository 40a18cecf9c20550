use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::{json, Value};

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Sandbox { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_netpot"))
            .args(args)
            .current_dir(self.dir.path())
            .env("NETPOT_CACHE", self.path("cache"))
            .env_remove("RUST_LOG")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }

    fn line(&self) -> &'static str {
        self.ok(&["gen", "--kind", "line", "--out", "line.json"]);
        "line.json"
    }
}

fn csv(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn field(rows: &[Vec<String>], row: usize, col: usize) -> f64 {
    rows[row][col].parse().unwrap()
}

/// `h(x) = max(x, 0)` on `B(0, radius)` of the line, in the potential format.
fn half_line_potential(sb: &Sandbox, radius: i64) -> &'static str {
    let hash = sb.json("line.json.meta.json")["config"]["network_hash"].as_str().unwrap().to_string();
    let values: serde_json::Map<String, Value> = (-radius..=radius).map(|x| (x.to_string(), json!(x.max(0) as f64))).collect();
    let distances: serde_json::Map<String, Value> = (-radius..=radius).map(|x| (x.to_string(), json!(x.abs()))).collect();
    let doc = json!({
        "format": "netpot-potential-v1",
        "ball": { "root": "0", "R": radius, "network_hash": hash },
        "values": values,
        "distances": distances,
        "mass": 1.0,
    });
    std::fs::write(sb.path("half.json"), doc.to_string()).unwrap();
    "half.json"
}

#[test]
fn mcurve_on_the_line_is_r_over_two() {
    let sb = Sandbox::new();
    let net = sb.line();
    sb.ok(&["mcurve", "--net", net, "--rmin", "2", "--rmax", "8", "--ratio", "2", "--out", "m.csv"]);
    let text = sb.read("m.csv");
    assert!(text.starts_with("r,R,M,gap,iters\n"));
    let rows = csv(&text);
    assert_eq!(rows.len(), 3);
    for (i, r) in [2.0, 4.0, 8.0].into_iter().enumerate() {
        assert_eq!(field(&rows, i, 0), r);
        assert_eq!(field(&rows, i, 1), 2.0 * r);
        assert!((field(&rows, i, 2) - r / 2.0).abs() < 1e-12);
        assert!(field(&rows, i, 3) <= 1e-8);
    }
}

#[test]
fn verify_passes_on_the_line() {
    let sb = Sandbox::new();
    let net = sb.line();
    let out = sb.ok(&["verify", "--net", net, "--json", "report.json"]);
    assert!(out.contains("9/9"), "{out}");
    let report = sb.json("report.json");
    assert_eq!(report["report"]["passed"], json!(true));
    assert_eq!(report["report"]["checks"].as_array().unwrap().len(), 9);
}

#[test]
fn usage_errors_exit_with_two() {
    let sb = Sandbox::new();
    let out = sb.run(&["mcurve", "--net", "x.json", "--rmin", "2", "--rmax", "8", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(sb.run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(sb.run(&["hsim", "--net", "a", "--potential", "b", "--ell", "3", "--M", "1", "--mode", "sideways"]).status.code(), Some(2));
}

#[test]
fn computation_errors_exit_with_one_and_leave_no_output() {
    let sb = Sandbox::new();
    assert_eq!(sb.run(&["mcurve", "--net", "missing.json", "--rmin", "2", "--rmax", "4"]).status.code(), Some(1));
    sb.ok(&["gen", "--kind", "grid2d", "--out", "grid.json"]);
    let out = sb.run(&["escape", "--net", "grid.json", "--levels", "1,2,3,4,5", "--rmax", "1000", "--out", "h.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("achievable level"));
    assert!(!sb.path("h.json").exists());
}

#[test]
fn cache_hits_replay_identical_bytes() {
    let sb = Sandbox::new();
    let net = sb.line();
    let args = ["mcurve", "--net", net, "--rmin", "1", "--rmax", "16", "--out", "a.csv"];
    sb.ok(&args);
    assert_eq!(sb.json("a.csv.meta.json")["cache"], "miss");
    let mut again = args;
    again[8] = "b.csv";
    sb.ok(&again);
    assert_eq!(sb.json("b.csv.meta.json")["cache"], "hit");
    assert_eq!(sb.read("a.csv"), sb.read("b.csv"));

    // Tolerances are part of the key.
    let mut looser = again.to_vec();
    looser.extend(["--lp-gap", "1e-7"]);
    sb.ok(&looser);
    assert_eq!(sb.json("b.csv.meta.json")["cache"], "miss");

    // A corrupted blob is discarded, recomputed and reported.
    let key = sb.json("a.csv.meta.json")["cache_key"].as_str().unwrap().to_string();
    let blob = sb.path("cache").join(&key[..2]).join(format!("{key}.json"));
    std::fs::write(&blob, "garbage").unwrap();
    let out = sb.run(&again);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("corrupt cache entry"));
    assert_eq!(sb.json("b.csv.meta.json")["cache"], "miss");
    assert_eq!(sb.read("a.csv"), sb.read("b.csv"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let sb = Sandbox::new();
    let net = sb.line();
    sb.ok(&["--no-cache", "--threads", "1", "mcurve", "--net", net, "--rmin", "1", "--rmax", "8", "--out", "one.csv"]);
    sb.ok(&["--no-cache", "--threads", "3", "mcurve", "--net", net, "--rmin", "1", "--rmax", "8", "--out", "three.csv"]);
    assert_eq!(sb.read("one.csv"), sb.read("three.csv"));
    let h = half_line_potential(&sb, 40);
    let mc = |threads: &str, out: &str| {
        sb.ok(&[
            "--no-cache",
            "--threads",
            threads,
            "hsim",
            "--net",
            net,
            "--potential",
            h,
            "--ell",
            "30",
            "--M",
            "5",
            "--mode",
            "mc",
            "--samples",
            "2000",
            "--seed",
            "42",
            "--start",
            "1",
            "--out",
            out,
        ]);
    };
    mc("1", "s1.json");
    mc("3", "s3.json");
    assert_eq!(sb.read("s1.json"), sb.read("s3.json"));
}

#[test]
fn green_schedule_on_the_line() {
    let sb = Sandbox::new();
    let net = sb.line();
    let out = sb.ok(&["green", "--net", net, "--x", "1", "--y", "1", "--radii", "4,16"]);
    let rows = csv(&out);
    assert!(out.starts_with("R,g_value,delta\n"));
    assert!((field(&rows, 0, 1) - 0.75).abs() < 1e-12);
    assert!((field(&rows, 1, 1) - 0.9375).abs() < 1e-12);
    assert!((field(&rows, 1, 2) - 0.1875).abs() < 1e-12);
}

#[test]
fn dipole_to_a_two_point_measure() {
    let sb = Sandbox::new();
    let net = sb.line();
    let eta = json!({ "format": "netpot-measure-v1", "weights": { "-4": 0.5, "4": 0.5 } });
    std::fs::write(sb.path("eta.json"), eta.to_string()).unwrap();
    sb.ok(&["dipole", "--net", net, "--R", "8", "--eta", "eta.json", "--out", "f.json"]);
    let f = sb.json("f.json");
    assert_eq!(f["format"], "netpot-potential-v1");
    assert!((f["values"]["1"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(f["values"]["0"].as_f64().unwrap().abs() < 1e-15);
}

#[test]
fn minimax_emits_psi_and_eta() {
    let sb = Sandbox::new();
    let net = sb.line();
    let summary: Value = serde_json::from_str(&sb.ok(&[
        "minimax",
        "--net",
        net,
        "--r",
        "4",
        "--R",
        "8",
        "--emit-psi",
        "psi.json",
        "--emit-eta",
        "eta.json",
    ]))
    .unwrap();
    assert!((summary["value"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(summary["certified"], json!(true));
    let psi = sb.json("psi.json");
    assert!((psi["values"]["3"].as_f64().unwrap() - 1.5).abs() < 1e-12);
    assert!(psi["metadata"]["solver"]["gap"].as_f64().unwrap() <= 1e-8);
    let eta = sb.json("eta.json");
    let total: f64 = eta["weights"].as_object().unwrap().values().map(|w| w.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(eta["ball"]["ball_hash"], psi["ball"]["ball_hash"]);
}

#[test]
fn escape_then_sublevel_sizes() {
    let sb = Sandbox::new();
    let net = sb.line();
    sb.ok(&["escape", "--net", net, "--levels", "1,2,3,4,5", "--rmax", "100000", "--out", "h.json", "--cert", "cert.json"]);
    let cert = sb.json("cert.json");
    assert_eq!(cert["certificate"]["passed"], json!(true));
    let radii: Vec<u64> = cert["certificate"]["entries"].as_array().unwrap().iter().map(|e| e["radius"].as_u64().unwrap()).collect();
    assert_eq!(radii, [4, 16, 48, 128, 320]);
    sb.ok(&["sublevel", "--potential", "h.json", "--levels", "1,2,3", "--out", "sub.csv"]);
    let rows = csv(&sb.read("sub.csv"));
    let counts: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(counts, ["5", "9", "13"]);
    assert!(rows.iter().all(|r| r[3] == "true"));
}

#[test]
fn hsim_and_tv_with_the_half_line_potential() {
    let sb = Sandbox::new();
    let net = sb.line();
    let h = half_line_potential(&sb, 120);
    sb.ok(&["hsim", "--net", net, "--potential", h, "--ell", "100", "--M", "10", "--start", "1", "--out", "stat.json"]);
    let exact = sb.json("stat.json")["statistic"]["exact"].as_f64().unwrap();
    assert!((exact - 0.804_47).abs() < 1e-5, "{exact}");
    let out = sb.ok(&["tv", "--net", net, "--potential", h, "--ell", "3", "--targets", "4,6,9"]);
    let rows = csv(&out);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[2].parse::<f64>().unwrap() <= 1e-12));
}

#[test]
fn potential_from_another_network_is_rejected() {
    let sb = Sandbox::new();
    sb.line();
    let h = half_line_potential(&sb, 10);
    sb.ok(&["gen", "--kind", "line", "--conductance", "2", "--out", "other.json"]);
    let out = sb.run(&["hsim", "--net", "other.json", "--potential", h, "--ell", "3", "--M", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("computed on network"));
}

#[test]
fn resistance_grows_linearly_on_the_line() {
    let sb = Sandbox::new();
    let net = sb.line();
    let rows = csv(&sb.ok(&["resistance", "--net", net, "--radii", "4,8,16"]));
    for (i, r) in [4.0, 8.0, 16.0].into_iter().enumerate() {
        assert!((field(&rows, i, 1) - r / 2.0).abs() < 1e-12);
    }
}
