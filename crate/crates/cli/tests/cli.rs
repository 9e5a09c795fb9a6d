use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fibergreen"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("fibergreen-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str], cfg: Option<&Path>, out: &Path) -> Output {
    let mut c = bin();
    c.args(args).arg("--out-dir").arg(out);
    if let Some(p) = cfg {
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

/// Data rows of a CSV, keyed by the header line.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

const PAIR: &str = r#"
[[fibers.fibers]]
radius_nm = 150.0
center_nm = [-250.0, 0.0]
index_core = 1.4537

[[fibers.fibers]]
radius_nm = 150.0
center_nm = [250.0, 0.0]
index_core = 1.4537

[emitter]
rho_a_nm = [0.0, 0.0]
dipole = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
"#;

#[test]
fn rates_on_the_canonical_pair_match_pinned_values() {
    let d = scratch("rates");
    let cfg = write_cfg(&d, PAIR);
    let o = run(&["rates"], Some(&cfg), &d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&d.join("rates.csv"));
    assert_eq!(rows.len(), 1);
    let col = |n: &str| rows[0][h.iter().position(|c| c == n).unwrap()];
    // regression goldens from the first verified run
    assert!((col("eta") - ETA_150_200).abs() < 1e-6, "eta {}", col("eta"));
    assert!((col("purcell") - FP_150_200).abs() < 1e-6, "F_p {}", col("purcell"));
    assert!((col("lamb_shift_ratio") - SHIFT_150_200).abs() < 1e-5, "shift {}", col("lamb_shift_ratio"));
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("rates.json")).unwrap()).unwrap();
    assert_eq!(side["rows"], 1);
    assert_eq!(side["provenance"]["command"], "rates");
}

const ETA_150_200: f64 = 0.2981550111602718;
const FP_150_200: f64 = 1.581836819823572;
const SHIFT_150_200: f64 = 0.3497610698414902;

#[test]
fn vacuum_rates_are_byte_identical_across_runs() {
    let d = scratch("det");
    let cfg = write_cfg(&d, "[emitter]\nrho_a_nm = [0.0, 0.0]\ndipole = [[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]\n");
    let (a, b) = (d.join("a"), d.join("b"));
    assert!(run(&["rates"], Some(&cfg), &a).status.success());
    assert!(run(&["rates"], Some(&cfg), &b).status.success());
    let ra = std::fs::read(a.join("rates.csv")).unwrap();
    assert_eq!(ra, std::fs::read(b.join("rates.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("rates.json")).unwrap(), std::fs::read(b.join("rates.json")).unwrap());
    let (h, rows) = read_csv(&a.join("rates.csv"));
    assert_eq!(rows[0][h.iter().position(|c| c == "purcell").unwrap()], 1.0);
}

#[test]
fn input_errors_exit_with_one() {
    let d = scratch("err");
    // overlapping fibers
    let bad = PAIR.replace("[250.0, 0.0]", "[100.0, 0.0]");
    let cfg = write_cfg(&d, &bad);
    let o = run(&["rates"], Some(&cfg), &d);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("input error"));
    assert_eq!(run(&["rates"], None, &d).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"], None, &d).status.code(), Some(1));
    assert_eq!(run(&["reproduce", "fig9"], None, &d).status.code(), Some(1));
    let missing = d.join("nope.toml");
    assert_eq!(run(&["rates"], Some(&missing), &d).status.code(), Some(1));
    assert_eq!(run(&["sweep"], Some(&write_cfg(&d, PAIR)), &d).status.code(), Some(1));
}

#[test]
fn dynamics_sweep_writes_concurrence_table() {
    let d = scratch("qd");
    let cfg = write_cfg(&d, &format!("{PAIR}\n[sweep]\neta = [0.0, 0.5, 1.0]\ntime = [0.0, 20.0]\n"));
    let o = run(&["sweep"], Some(&cfg), &d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&d.join("sweep.csv"));
    assert_eq!(h, ["eta", "max_concurrence", "max_transfer"]);
    assert_eq!(rows.len(), 3);
    assert!(rows[0][1].abs() < 1e-12);
    assert!((rows[2][1] - 0.5).abs() < 0.01);
}

#[test]
fn commensurate_dynamics_from_config() {
    let d = scratch("dyn");
    let cfg = write_cfg(&d, &format!("{PAIR}\n[sweep]\neta = [0.3]\ndrive = [0.45]\n"));
    let o = run(&["dynamics"], Some(&cfg), &d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = read_csv(&d.join("dynamics.csv"));
    assert_eq!(h, ["t", "population_0", "population_1", "concurrence", "purity"]);
    assert_eq!(rows.len(), 401);
    // driven from the ground state: populations stay symmetric
    assert!(rows.iter().all(|r| (r[1] - r[2]).abs() < 1e-9));
    let (_, ss) = read_csv(&d.join("steady_state.csv"));
    assert_eq!(ss.len(), 1);
    let last = rows.last().unwrap();
    assert!((last[1] - ss[0][0]).abs() < 1e-3);
}

#[test]
fn reproduce_entanglement_tables() {
    let d = scratch("fig2");
    let o = run(&["reproduce", "fig2b-f"], None, &d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["fig2b", "fig2c", "fig2d", "fig2e", "fig2e_threshold", "fig2f"] {
        assert!(d.join(format!("{name}.csv")).exists(), "{name}");
        assert!(d.join(format!("{name}.json")).exists(), "{name}");
    }
    // two fibers beat one at equal surface distance, so the transient
    // concurrence peak is higher
    let (_, rows) = read_csv(&d.join("fig2b.csv"));
    let peak = |c: usize| rows.iter().map(|r| r[c]).fold(0.0, f64::max);
    assert!(peak(1) > peak(2) && peak(2) > 0.0);
    let (_, th) = read_csv(&d.join("fig2e_threshold.csv"));
    assert!(th.windows(2).all(|w| w[1][1] > w[0][1]), "threshold grows with drive");
}

#[test]
fn config_out_dir_is_the_fallback() {
    let d = scratch("outdir");
    let target = d.join("from_config");
    let cfg = write_cfg(
        &d,
        &format!(
            "[emitter]\nrho_a_nm = [0.0, 0.0]\ndipole = [1.0, 0.0, 0.0]\n[sweep]\nout_dir = {:?}\n",
            target.display().to_string()
        ),
    );
    let o = bin().args(["rates", "--config"]).arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("rates.csv").exists());
}
