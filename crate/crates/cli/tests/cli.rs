use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;
use transduce_core::device::{SystemRates, PLANCK};
use transduce_core::dynamics::SimOptions;
use transduce_core::protocols::{run, ProtocolKind, ProtocolSpec};

const RATES: &str = "[rates]
f_sc = 4.31e9
f_p = 4.31e9
f_e = 4.31e9
kappa_sc = 100e3
kappa_p = 43.1e3
kappa_e = 1e6
";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

struct Run {
    dir: TempDir,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().unwrap()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out().join(name)).unwrap_or_else(|e| panic!("{name}: {e}; stderr: {}", self.stderr()))
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn transduce(command: &str, config: &str, extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_transduce"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(extra)
        .output()
        .unwrap();
    Run { dir, output }
}

fn csv_column(text: &str, name: &str) -> Vec<f64> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn manifest_lists_everything(run: &Run) {
    let m = run.json("manifest.json");
    let mut listed: Vec<String> = m["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let mut present: Vec<String> = std::fs::read_dir(run.out())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    listed.sort();
    present.sort();
    assert_eq!(listed, present);
}

fn device(photon: &str, phonon: &str) -> String {
    let f = fixtures();
    format!(
        "[device]
photon_profile = {:?}
phonon_profile = {:?}
piezo = {:?}

[device.capacitance]
c_s = 80e-15
c_j = 5e-15
c_idt = 15e-15
v_app = 1.0

[spin.params]
lambda_g = 425e9
gamma_s = 13.996e9
gamma_l = 13.996e9

[spin.strain]
t_perp = 1.7e15
t_par = -0.8e15
d = 0.79e15
f = -0.56e15
chi_eff = 0.27e15
",
        f.join(photon),
        f.join(phonon),
        f.join("piezo_scaln.txt")
    )
}

#[test]
fn simulate_matches_library_exactly() {
    let cfg = format!("{RATES}g_scp = 3e6\ng_pe = 3e6\n[protocol]\nkind = \"virtual-phonon\"\ndelta_p = 30e6\n");
    let r = transduce("simulate", &cfg, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    manifest_lists_everything(&r);

    let rates = SystemRates {
        f_sc: 4.31e9,
        f_p: 4.31e9,
        f_e: 4.31e9,
        kappa_sc: 100e3,
        kappa_p: 43.1e3,
        kappa_e: 1e6,
        g_scp: 3e6,
        g_pe: 3e6,
    };
    let lib = run(
        &ProtocolSpec { kind: ProtocolKind::VirtualPhonon { delta_p: 30e6 }, rates, horizon: None },
        &SimOptions::default(),
    )
    .unwrap();
    let f_e = csv_column(&r.read("trajectory.csv"), "F_e");
    let peak = f_e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(peak.to_bits(), lib.f_e_max.to_bits());
    assert_eq!(r.json("result.json")["f_e_max"].as_f64().unwrap().to_bits(), lib.f_e_max.to_bits());
    assert_eq!(f_e.len(), lib.trajectory.len());
}

#[test]
fn csv_bodies_are_deterministic() {
    let cfg = format!("{RATES}g_scp = 3e6\ng_pe = 3e6\n[protocol]\nkind = \"resonant\"\n");
    let a = transduce("simulate", &cfg, &[]);
    let b = transduce("simulate", &cfg, &["--jobs", "3"]);
    assert_eq!(a.read("trajectory.csv"), b.read("trajectory.csv"));
    let header = a.read("trajectory.csv").lines().next().unwrap().to_string();
    assert_eq!(header, "t_s,P_sc,P_p,P_e,F_sc,F_p,F_e,trace_err");
}

#[test]
fn negative_kappa_is_a_config_error() {
    let cfg = format!("{RATES}g_scp = 3e6\ng_pe = 3e6\n[protocol]\nkind = \"resonant\"\n").replace("kappa_p = 43.1e3", "kappa_p = -1");
    let r = transduce("simulate", &cfg, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("kappa_p"), "{}", r.stderr());
    assert!(!r.out().exists());
}

#[test]
fn unknown_keys_fail_before_computing() {
    let cfg = format!("{RATES}g_scp = 3e6\ng_pe = 3e6\n[protocol]\nkind = \"resonant\"\n[sim]\nrel_tolerance = 1e-8\n");
    let r = transduce("simulate", &cfg, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("rel_tolerance"), "{}", r.stderr());
    assert!(!r.out().exists());
}

#[test]
fn missing_sections_and_bad_flags() {
    assert_eq!(transduce("simulate", RATES, &[]).code(), 2);
    let cfg = format!("{RATES}g_scp = 3e6\ng_pe = 3e6\n[protocol]\nkind = \"resonant\"\n");
    assert_eq!(transduce("simulate", &cfg, &["--jobs", "0"]).code(), 2);
    let out = Command::new(env!("CARGO_BIN_EXE_transduce"))
        .args(["simulate", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn delta_i_sweep_rows_follow_the_grid() {
    let cfg = format!("{RATES}g_scp = 10e6\ng_pe = 3e6\n[sweep]\nfamily = \"delta-i\"\ngrid = [0.2e9, 0.6e9, 1.0e9]\n");
    let r = transduce("sweep", &cfg, &["--jobs", "2"]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    manifest_lists_everything(&r);
    let csv = r.read("sweep.csv");
    assert_eq!(csv.lines().next().unwrap(), "param,f_e_max,t_opt_s,protocol");
    assert_eq!(csv_column(&csv, "param"), vec![0.2e9, 0.6e9, 1.0e9]);
    let f = csv_column(&csv, "f_e_max");
    assert!(f.windows(2).all(|w| w[1] >= w[0]), "{f:?}");
    assert_eq!(r.json("summary.json")["points"].as_array().unwrap().len(), 3);
}

#[test]
fn empty_grid_is_a_config_error() {
    let cfg = format!("{RATES}g_scp = 10e6\ng_pe = 3e6\n[sweep]\nfamily = \"delta-i\"\ngrid = []\n");
    assert_eq!(transduce("sweep", &cfg, &[]).code(), 2);
}

#[test]
fn all_points_failing_exits_5_with_outputs() {
    let cfg = format!("{RATES}g_scp = 3e6\ng_pe = 3e6\n[sweep]\nfamily = \"delta-p\"\ngrid = [0.0, 0.0]\n");
    let r = transduce("sweep", &cfg, &[]);
    assert_eq!(r.code(), 5, "{}", r.stderr());
    let summary = r.json("summary.json");
    assert!(summary["points"][0]["error"].is_string());
    assert!(r.read("sweep.csv").contains("NaN"));
    manifest_lists_everything(&r);
}

#[test]
fn hierarchy_has_best_protocol_column() {
    let cfg = format!("{RATES}g_scp = 3e6\ng_pe = 3e6\n[sweep]\nfamily = \"hierarchy\"\nq_grid = {{ start = 1e3, stop = 1e6, points = 4, log = true }}\n");
    let r = transduce("sweep", &cfg, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let best = r.read("hierarchy_best.csv");
    assert_eq!(best.lines().next().unwrap(), "param,best_protocol,f_e_best,f_e_p1,f_e_p2,f_e_p3");
    let q = csv_column(&best, "param");
    assert_eq!(q.len(), 4);
    assert!((q[1] / 1e4 - 1.0).abs() < 1e-12);
    assert!(csv_column(&best, "best_protocol").iter().all(|&b| (1.0..=3.0).contains(&b)));
    assert_eq!(r.read("hierarchy.csv").lines().count(), 1 + 12);
}

#[test]
fn spin_field_flags_unreachable_rows() {
    let cfg = "[spin]
strain_difference = 1.1e-8
b_grid_t = [0.0, 0.16, 0.2, 0.3]
[spin.params]
lambda_g = 425e9
gamma_s = 13.996e9
gamma_l = 13.996e9
[spin.strain]
t_perp = 1.7e15
t_par = -0.8e15
d = 0.79e15
f = -0.56e15
chi_eff = 0.27e15
";
    let r = transduce("spin-field", cfg, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.read("spin_field.csv");
    assert_eq!(csv.lines().next().unwrap(), "B_mag_T,B_x_T,B_z_T,nu1_Hz,nu3_Hz,splitting_Hz,g_pe_Hz");
    let split = csv_column(&csv, "splitting_Hz");
    let g = csv_column(&csv, "g_pe_Hz");
    assert!(split[0].is_nan() && g[0].is_nan());
    assert!(split[1..].iter().all(|s| (s - 4.31e9).abs() <= 1e3), "{split:?}");
    assert!(g[1..].windows(2).all(|w| w[1] >= w[0]), "{g:?}");
    let warnings = r.json("manifest.json")["warnings"].as_array().unwrap().len();
    assert_eq!(warnings, 1);
    assert!(r.stderr().contains("warning: |B| = 0 T"));
}

#[test]
fn single_cell_coupling_matches_hand_value() {
    let r = transduce("coupling", &device("single_cell.fprof", "single_cell.fprof"), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rep = r.json("coupling.json");
    let f = 4.31e9;
    let p_e = (PLANCK * f / (0.5 * 100e-15)).sqrt();
    let p_t = (PLANCK * f / (0.5 * 1e-18 * 4e-12)).sqrt();
    let hand = 1e-18 * (p_e * 1.5e5) * 15.0e-12 * (p_t * 2e-6) / PLANCK;
    let g = rep["g_scp_hz"].as_f64().unwrap();
    assert!((g - hand).abs() <= 1e-12 * hand, "{g} vs {hand}");
    assert!((rep["photon_prefactor"].as_f64().unwrap() / p_e - 1.0).abs() < 1e-14);
    manifest_lists_everything(&r);
}

#[test]
fn orthogonal_fields_do_not_couple() {
    let r = transduce("coupling", &device("orthogonal.fprof", "orthogonal.fprof"), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.json("coupling.json")["g_scp_hz"].as_f64().unwrap(), 0.0);
}

#[test]
fn transverse_strain_sets_the_spin_coupling_peak() {
    let r = transduce("coupling", &device("transverse_strain.fprof", "transverse_strain.fprof"), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rep = r.json("coupling.json");
    // Strains enter single-phonon normalized, so s is the fixture strain times the prefactor.
    let s = 1e-6 * rep["phonon_prefactor"].as_f64().unwrap();
    let max = &rep["g_pe_max"];
    let g = max["g_pe_hz"].as_f64().unwrap();
    assert!((g / (2.0 * 0.27e15 * s) - 1.0).abs() < 1e-12, "{g}");
    assert_eq!(max["cell"], 0);
    assert_eq!(r.read("g_pe_map.csv").lines().count(), 3);
}

#[test]
fn misaligned_grids_are_numerical_failures() {
    let r = transduce("coupling", &device("single_cell.fprof", "single_cell_shifted.fprof"), &[]);
    assert_eq!(r.code(), 3, "{}", r.stderr());
    assert!(r.stderr().contains("cell 0"), "{}", r.stderr());
}

#[test]
fn missing_profile_names_the_key() {
    let without = device("single_cell.fprof", "single_cell.fprof")
        .lines()
        .filter(|l| !l.starts_with("phonon_profile"))
        .collect::<Vec<_>>()
        .join("\n");
    let r = transduce("coupling", &without, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("device.phonon_profile"), "{}", r.stderr());

    let absent = device("single_cell.fprof", "no_such.fprof");
    let r = transduce("coupling", &absent, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("device.phonon_profile"), "{}", r.stderr());
}

#[test]
fn qbudget_reports_kappa_and_cooperativities() {
    let cfg = format!("{RATES}g_scp = 10e6\ng_pe = 3e6\n[device.q_budget]\nq_c = 1e5\n");
    let r = transduce("qbudget", &cfg, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let rep = r.json("qbudget.json");
    assert!((rep["q_mech"].as_f64().unwrap() - 1e5).abs() < 1e-9);
    assert!((rep["kappa_p_hz"].as_f64().unwrap() - 43.1e3).abs() < 1e-6);
    assert!((rep["c_scp"].as_f64().unwrap() / 9.28e4 - 1.0).abs() < 0.01);
    assert!((rep["c_pe"].as_f64().unwrap() / 8.35e2 - 1.0).abs() < 0.01);
    let note = rep["note"].as_str().unwrap();
    assert!(note.contains("4e4") && note.contains("1e5"));
}

#[test]
fn qbudget_rejects_bad_budgets_and_warns_on_weak_transmons() {
    let bad = format!("{RATES}g_scp = 10e6\ng_pe = 3e6\n[device.q_budget]\nq_c = -1\n");
    assert_eq!(transduce("qbudget", &bad, &[]).code(), 2);

    let weak = format!("{RATES}g_scp = 10e6\ng_pe = 3e6\n[device.q_budget]\nq_c = 1e5\n[device.transmon]\ne_j = 5e9\ne_c = 0.5e9\n");
    let r = transduce("qbudget", &weak, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let warnings = r.json("manifest.json")["warnings"].clone();
    assert!(warnings[0].as_str().unwrap().contains("E_J/E_C"));
    assert!(!r.json("qbudget.json")["transmon"]["transmon_regime"].as_bool().unwrap());
}

#[test]
fn shipped_configs_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (command, file) in [
        ("simulate", "resonant.toml"),
        ("simulate", "double_rabi.toml"),
        ("spin-field", "spin_field.toml"),
        ("coupling", "coupling.toml"),
        ("qbudget", "qbudget.toml"),
    ] {
        let out = tempfile::tempdir().unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_transduce"))
            .args([command, "--config"])
            .arg(dir.join(file))
            .arg("--out")
            .arg(out.path())
            .output()
            .unwrap();
        assert_eq!(status.status.code(), Some(0), "{file}: {}", String::from_utf8_lossy(&status.stderr));
        assert!(out.path().join("manifest.json").is_file());
    }
}
