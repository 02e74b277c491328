//! End-to-end checks of the `krl` binary.

use std::path::Path;
use std::process::{Command, Output};

fn krl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_krl")).args(args).env("KRL_THREADS", "2").output().expect("spawn krl")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

const SMALL: &str = r#"
[pattern]
kind = "single3"
plus = [1.0, 0.0, 1.0]
delta3 = 0.05

[grid]
cells_per_kappa = 2.0
tail_efolds = 6.0
velocity_nodes = 10
velocity_radius = 6.5

[solver]
cfl = 0.45
end_time = 0.04
collision_scale = 1.0
strang = false
mode = "well_prepared"
rarefaction_offset = 1.0

[sweep]
kappas = [0.08, 0.06, 0.04]

[output]
dir = "unused"
diagnostic_stride = 10
snapshot_stride = 0
progress_stride = 0
"#;

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn riemann_on_equal_states_has_zero_strengths() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = krl(&["riemann", "--minus", "1,0,1", "--plus", "1,0,1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let report = std::fs::read_to_string(out.join("riemann.txt")).unwrap();
    for key in ["delta1", "delta_c", "delta3"] {
        assert!(report.contains(&format!("{key} = 0\n")), "{report}");
    }
}

#[test]
fn profile_csv_passes_sign_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = krl(&["profile", "--family", "3", "--delta", "0.05", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let mut r = csv::Reader::from_path(dir.path().join("profile_f3_d0.05.csv")).unwrap();
    let h = r.headers().unwrap().clone();
    let cols: Vec<usize> = ["v_sign_ok", "u1_sign_ok", "theta_sign_ok"]
        .iter()
        .map(|c| h.iter().position(|x| x == *c).unwrap())
        .collect();
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        assert!(cols.iter().all(|&c| &rec[c] == "1"), "{rec:?}");
        rows += 1;
    }
    assert!(rows > 100);
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, SMALL.replace("cfl = 0.45", "cfll = 0.45")).unwrap();
    let o = krl(&["simulate", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", text(&o));
    let msg = text(&o);
    assert!(msg.contains("cfll") && msg.contains("end_time"), "{msg}");
}

#[test]
fn invalid_family_is_rejected() {
    let o = krl(&["profile", "--family", "2", "--delta", "0.05", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn sweep_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = krl(&["sweep", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", text(&o));
    }
    let mut names: Vec<String> =
        std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert!(names.iter().any(|n| n == "sweep.csv") && names.iter().any(|n| n.starts_with("shifts_k")));
    for n in names.iter().filter(|n| n.ends_with(".csv") || n.as_str() == "fit.txt") {
        let (x, y) = (std::fs::read(a.join(n)).unwrap(), std::fs::read(b.join(n)).unwrap());
        assert!(x == y, "{n} differs between reruns");
    }
    let rows = krl::harness::sweep::read_summaries(&a.join("sweep.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.l2_error > 0.0 && r.max_conservation_drift < 1e-10));
    assert_eq!(rows[2].shift_l1, 0.0);
}

#[test]
fn simulate_then_diagnose_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let sim = dir.path().join("sim");
    let o = krl(&["simulate", "--config", &cfg, "--kappa", "0.08", "--mode", "sharp", "--out", sim.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    let run = sim.join("k0.08");
    for f in ["shifts.csv", "diagnostics.csv", "final_state.csv", "final.krl"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let diag = dir.path().join("diag");
    let o = krl(&[
        "diagnose",
        "--config",
        &cfg,
        "--kappa",
        "0.08",
        "--mode",
        "sharp",
        "--snapshot",
        run.join("final.krl").to_str().unwrap(),
        "--shifts",
        run.join("shifts.csv").to_str().unwrap(),
        "--out",
        diag.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o));
    let report = std::fs::read_to_string(diag.join("diagnose.txt")).unwrap();
    assert!(report.contains("weighted_entropy") && report.contains("plateau"), "{report}");
    let o = krl(&["diagnose", "--config", &cfg, "--snapshot", run.join("final.krl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn sweep_needs_three_kappas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let o = krl(&["sweep", "--config", &cfg, "--kappa", "0.08,0.04", "--out", dir.path().join("s").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(5), "{}", text(&o));
}

#[test]
fn shipped_configs_match_presets() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (name, kind) in [("single3", "single3"), ("scs", "scs"), ("rcs", "rcs")] {
        let cfg = krl::harness::ExperimentConfig::load(&root.join(format!("{name}.toml"))).unwrap();
        let mut preset = krl::harness::ExperimentConfig::preset(kind.parse().unwrap());
        preset.grid.tail_efolds = 8.0;
        preset.output.dir = cfg.output.dir.clone();
        assert_eq!(cfg, preset, "{name}");
    }
}
