use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn mskit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mskit"))
        .current_dir(dir)
        .env_remove("MSKIT_OUT")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

const SMALL: &str = r#"{"energy": {"start": 0.3, "stop": 0.5, "step": 0.1, "im": 0.01}, "l_max": 3, "repeats": 1}"#;

fn run_ok(dir: &Path, args: &[&str]) -> Output {
    let o = mskit(dir, args);
    assert_eq!(code(&o), 0, "{}", text(&o));
    o
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(String::from)
        .collect()
}

/// Parsed fields, so that `-0e0` and `0e0` compare equal.
fn numeric_rows(path: &Path) -> Vec<Vec<f64>> {
    data_lines(path)[1..]
        .iter()
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect()
}

#[test]
fn verify_passes_and_tight_tolerance_fails() {
    let tmp = TempDir::new().unwrap();
    let o = run_ok(tmp.path(), &["verify", "--threads", "2"]);
    assert!(text(&o).contains("0 failed"));
    let o = mskit(tmp.path(), &["verify", "--tolerance", "1e-30"]);
    assert_eq!(code(&o), 3);
    let t = text(&o);
    assert!(t.contains("1.0e-30") && t.contains("FAIL"), "{t}");
}

#[test]
fn unknown_key_is_config_error() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", r#"{"l_maxx": 3}"#);
    let o = mskit(tmp.path(), &["solve", "--config", "c.json"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("l_maxx"), "{}", text(&o));
}

#[test]
fn partition_cutoff_above_l_max_names_field() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "c.json",
        r#"{"cluster": {"sites": {"positions": [[0,0,0],[0,0,4]]}}, "l_max": 3,
            "species": [{"id": 0, "l_pt": 5, "potential": {"zero": {"rb": 1.5}}}]}"#,
    );
    let o = mskit(tmp.path(), &["solve", "--config", "c.json"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("species[0].l_pt"), "{}", text(&o));
    assert!(!tmp.path().join("mskit-out").exists());
}

#[test]
fn single_site_tau_equals_t() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "c.json",
        r#"{"cluster": {"sites": {"positions": [[0,0,0]]}}, "l_max": 3,
            "species": [{"id": 0, "l_pt": 1, "potential": {"square_well": {"v0": -0.8, "rb": 2.0}}}],
            "modes": ["standard", "exact-schur", "ours", "ours-dense", "zhang"],
            "energy": {"start": 0.2, "stop": 0.8, "step": 0.3, "im": 0.0}}"#,
    );
    run_ok(tmp.path(), &["solve", "--config", "c.json", "--out", "o"]);
    let out = tmp.path().join("o");
    let t = numeric_rows(&out.join("t_sites.csv"));
    assert_eq!(t.len(), 3 * 16 * 16);
    for label in ["standard", "exact-schur", "ours-sparse-p0.01", "ours", "zhang"] {
        assert_eq!(numeric_rows(&out.join(format!("tau_{label}.csv"))), t, "{label}");
    }
}

#[test]
fn solve_writes_report_per_mode_with_provenance() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", SMALL);
    run_ok(tmp.path(), &["solve", "--config", "c.json", "--out", "o"]);
    let out = tmp.path().join("o");
    for label in ["standard", "ours-sparse-p0.01", "zhang"] {
        let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join(format!("report_{label}.json"))).unwrap()).unwrap();
        assert_eq!(r["points"].as_array().unwrap().len(), 3);
        assert_eq!(r["points"][0]["mode"], label);
    }
    let dev = data_lines(&out.join("deviations.csv"));
    assert_eq!(dev.len(), 1 + 2 * 3);
    assert!(dev.iter().any(|l| l.contains("zhang-vs-standard")));

    let hash = fs::read_to_string(out.join("t_sites.csv")).unwrap().lines().next().unwrap().to_string();
    assert!(hash.starts_with("# mskit ") && hash.contains("config_hash "), "{hash}");
    for entry in fs::read_dir(&out).unwrap() {
        let s = fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(s.contains(hash.split_whitespace().last().unwrap()) && s.contains(env!("CARGO_PKG_VERSION")));
    }
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", SMALL);
    run_ok(tmp.path(), &["solve", "--config", "c.json", "--out", "a"]);
    run_ok(tmp.path(), &["solve", "--config", "c.json", "--out", "b", "--threads", "3"]);
    run_ok(tmp.path(), &["dos", "--config", "c.json", "--out", "a"]);
    run_ok(tmp.path(), &["dos", "--config", "c.json", "--out", "b", "--threads", "2"]);
    for entry in fs::read_dir(tmp.path().join("a")).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".csv") {
            let a = fs::read(tmp.path().join("a").join(&name)).unwrap();
            let b = fs::read(tmp.path().join("b").join(&name)).unwrap();
            assert!(a == b, "{name:?} differs");
        }
    }
    let o = run_ok(tmp.path(), &["compare", "a", "b"]);
    assert!(text(&o).contains("agree"));
}

#[test]
fn compare_flags_different_runs() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", SMALL);
    write_config(tmp.path(), "d.json", &SMALL.replace("\"im\": 0.01", "\"im\": 0.02"));
    run_ok(tmp.path(), &["solve", "--config", "c.json", "--out", "a"]);
    run_ok(tmp.path(), &["solve", "--config", "d.json", "--out", "b"]);
    let o = mskit(tmp.path(), &["compare", "a", "b"]);
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("DIFFERENT"));
    assert_eq!(code(&mskit(tmp.path(), &["compare", "a", "missing"])), 1);
}

#[test]
fn generated_cluster_loads_back() {
    let tmp = TempDir::new().unwrap();
    run_ok(tmp.path(), &["gen-cluster", "--out", "g"]);
    assert!(tmp.path().join("g/cluster.txt").exists());
    write_config(
        tmp.path(),
        "c.json",
        r#"{"cluster": {"file": "g/cluster.txt"},
            "species": [{"id": 0, "l_pt": 2, "potential": {"square_well": {"v0": -0.6, "rb": 2.4}}}],
            "energy": {"start": 0.5, "stop": 0.5, "step": 0.1, "im": 0.01}, "l_max": 3}"#,
    );
    let o = run_ok(tmp.path(), &["solve", "--config", "c.json", "--out", "o"]);
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/report_standard.json")).unwrap()).unwrap();
    assert_eq!(r["n_sites"], 13, "{}", text(&o));
}

#[test]
fn dos_with_broadening() {
    let tmp = TempDir::new().unwrap();
    write_config(tmp.path(), "c.json", &SMALL.replace("\"repeats\": 1", "\"sigma\": 0.05, \"modes\": [\"standard\"]"));
    run_ok(tmp.path(), &["dos", "--config", "c.json", "--out", "o"]);
    let lines = data_lines(&tmp.path().join("o/dos.csv"));
    assert_eq!(lines[0], "energy_eV,site_id,mode,n_states_per_eV,valid");
    assert_eq!(lines.len(), 1 + 3 * 13);
    let s: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("o/dos_summary.json")).unwrap()).unwrap();
    assert_eq!(s["sigma_ha"], 0.05);
    assert!(s["min_standard_dos_per_ha"].as_f64().unwrap() >= -1e-6);

    write_config(tmp.path(), "one.json", r#"{"energy": {"start": 0.3, "stop": 0.3}, "sigma": 0.05}"#);
    assert_eq!(code(&mskit(tmp.path(), &["dos", "--config", "one.json"])), 1);
}

#[test]
fn bench_cost_falls_with_p() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "c.json",
        r#"{"energy": {"start": 0.4, "stop": 0.4}, "modes": ["standard"], "p_sweep": [1.0, 0.1, 0.01], "repeats": 1}"#,
    );
    run_ok(tmp.path(), &["bench", "--config", "c.json", "--out", "o"]);
    let lines = data_lines(&tmp.path().join("o/bench.csv"));
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for task in ["tau_col", "tau_diag"] {
        let nops: Vec<u64> = lines[1..]
            .iter()
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[col("task")] == task && f[col("mode")].starts_with("ours-sparse"))
            .map(|f| f[col("nop_measured")].parse().unwrap())
            .collect();
        assert_eq!(nops.len(), 3);
        assert!(nops[0] > nops[1] && nops[1] > nops[2], "{task}: {nops:?}");
    }
}

#[test]
fn output_dir_falls_back_to_env() {
    let tmp = TempDir::new().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mskit"))
        .current_dir(tmp.path())
        .env("MSKIT_OUT", "from-env")
        .args(["gen-cluster"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(tmp.path().join("from-env/cluster.txt").exists());
    run_ok(tmp.path(), &["gen-cluster"]);
    assert!(tmp.path().join("mskit-out/cluster.txt").exists());
}

#[test]
fn bench_predicted_ratios_match_headline() {
    let tmp = TempDir::new().unwrap();
    write_config(
        tmp.path(),
        "c.json",
        r#"{"cluster": {"sites": {"positions": [[0,0,0],[0,0,4.5]]}}, "l_max": 6, "p": 0.01, "c_s": 3,
            "species": [{"id": 0, "l_pt": 3, "potential": {"square_well": {"v0": -0.6, "rb": 2.0}}}],
            "energy": {"start": 0.5, "stop": 0.5}, "modes": ["standard", "ours"], "repeats": 1}"#,
    );
    run_ok(tmp.path(), &["bench", "--config", "c.json", "--out", "o"]);
    let lines = data_lines(&tmp.path().join("o/bench.csv"));
    let ratio = |task: &str| -> f64 {
        let row = lines.iter().find(|l| l.starts_with(&format!("{task},ours-sparse-p0.01,"))).unwrap();
        row.rsplit(',').next().unwrap().parse().unwrap()
    };
    assert_eq!(format!("{:.1}", 100.0 * ratio("tau_col")), "4.1");
    assert_eq!(format!("{:.1}", 100.0 * ratio("tau_diag")), "3.7");
}
