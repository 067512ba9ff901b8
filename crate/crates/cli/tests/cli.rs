use std::path::Path;
use std::process::Command;

fn aniso(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_aniso")).args(args).output().expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn nimrod_sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = aniso(&["nimrod", "--resolutions", "9,13", "--kappa-perp", "1,1e-3", "--t-final", "0.01", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("slope"));
    let table = read(&dir.path().join("nimrod_p2_k1e0.tsv"));
    assert!(table.contains("# experiment = nimrod"));
    assert!(table.contains("# dt = 1e-1 dx^2"));
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n\terror");
    assert!(rows[1].starts_with("9\t") && rows[2].starts_with("13\t"));
    assert!(dir.path().join("nimrod_p2_k1e-3_n13_field.tsv").exists());
    let diag = read(&dir.path().join("nimrod_p2_k1e-3_n13_diagnostics.tsv"));
    assert!(diag.lines().nth(diag.lines().position(|l| l.starts_with("step")).unwrap() + 1).unwrap().starts_with("0\t"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = aniso(&["nimrod-limit", "--resolutions", "9,13", "--t-final", "0.005", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(std::fs::read(a.path().join(&n)).unwrap(), std::fs::read(b.path().join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn config_file_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "tol = 1e-7\n[trace]\nseeds = 3\ntransits = 5\n").unwrap();
    let out = dir.path().join("res");
    let o = aniso(&["trace", "--config", cfg.to_str().unwrap(), "--transits", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out.join("poincare.tsv"));
    assert!(text.contains("# tol = 1e-7"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 3 * 4);
}

#[test]
fn invalid_settings_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = aniso(&["mms", "--resolutions", "41,21", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("strictly increasing"));
    assert!(!out.exists());
    let o = aniso(&["nimrod", "--order", "3"]);
    assert!(!o.status.success());
    let o = aniso(&["nimrod", "--kappa-perp", "0"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nimrod-limit"));
}
