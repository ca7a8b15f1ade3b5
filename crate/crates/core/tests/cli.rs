use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hbq(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbq"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(extra)
        .output()
        .expect("hbq runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

// a reduced calibration sweep, fast enough for a unit-scale run
const SMALL_CALIBRATION: &str = r#"
experiment = "calibrate"

[estimates]
dims = [3]
p = 4.0
t_grid = [0.5, 1.0]
dispersive = [[1.0, 1.0], [2.0, 4.0], [4.0, 4.0]]
smoothing = [[2.0, 4.0]]
smoothing_times = [1.0]
panels = 24
"#;

#[test]
fn kernel_check_passes_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("kernel_check_d3.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = hbq(&cfg, &a, &[]);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(hbq(&cfg, &b, &[]).status.code(), Some(0));
    for name in ["kernel_mass.csv", "semigroup_law.csv", "summary.txt"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.join("kernel_mass.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("d,t,mass,residual"));
    for line in csv.lines().skip(1) {
        let residual: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(residual <= 1e-8, "{line}");
    }
}

#[test]
fn p_not_above_d_is_a_precondition_violation() {
    let tmp = TempDir::new().unwrap();
    let out = hbq(&configs().join("p_not_above_d.toml"), tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&out.stderr).contains("for p > d"));
}

#[test]
fn configuration_errors_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(hbq(&tmp.path().join("missing.toml"), &out, &[]).status.code(), Some(2));

    let unknown = write(&tmp, "unknown.toml", "experiment = \"no-such-thing\"\n");
    let res = hbq(&unknown, &out, &[]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("kernel-check"));

    let typo = write(&tmp, "typo.toml", "experiment = \"kernel-check\"\n[kernel]\ndimz = [3]\n");
    assert_eq!(hbq(&typo, &out, &[]).status.code(), Some(2));

    let range = write(&tmp, "range.toml", "experiment = \"kernel-check\"\n[kernel]\ndims = [1]\n");
    assert_eq!(hbq(&range, &out, &[]).status.code(), Some(4));

    let bad = write(&tmp, "bad.txt", "d = 3\nC = 1.0\n");
    let res = hbq(&configs().join("gamma_identity.toml"), &out, &["--constants", bad.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&res.stderr).contains("delta_d"));

    let cli = Command::new(env!("CARGO_BIN_EXE_hbq")).arg("bogus").output().unwrap();
    assert_eq!(cli.status.code(), Some(2));
}

#[test]
fn failed_assertion_exits_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        &tmp,
        "strict.toml",
        "experiment = \"gamma-identity\"\n[gamma]\npairs = [[0.75, 2.5]]\ntol = 0.0\n",
    );
    let out = tmp.path().join("out");
    let res = hbq(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(1));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.starts_with("gamma-identity: FAIL"), "{summary}");
}

#[test]
fn calibrated_constants_feed_later_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(&tmp, "calibrate.toml", SMALL_CALIBRATION);
    let out = tmp.path().join("cal");
    let res = hbq(&cfg, &out, &[]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let consts = out.join("constants_d3.txt");
    let text = fs::read_to_string(&consts).unwrap();
    for key in ["d", "C", "delta_d", "p", "theta_exp", "N", "M"] {
        assert!(text.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key}");
    }

    // the same file drives a solver run and the constants check
    let c = consts.to_str().unwrap();
    let res = hbq(&configs().join("gamma_identity.toml"), &tmp.path().join("g"), &["--constants", c]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = fs::read_to_string(tmp.path().join("g/summary.txt")).unwrap();
    assert!(summary.contains("N closed form vs quadrature"));

    let lin = tmp.path().join("lin");
    let res = hbq(&configs().join("solve_linear.toml"), &lin, &["--constants", c]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = fs::read_to_string(lin.join("summary.txt")).unwrap();
    assert!(!summary.contains("calibrated in process"), "{summary}");

    // recalibration with the same seed reproduces the file byte for byte
    let again = tmp.path().join("cal2");
    assert_eq!(hbq(&cfg, &again, &[]).status.code(), Some(0));
    assert_eq!(fs::read(&consts).unwrap(), fs::read(again.join("constants_d3.txt")).unwrap());
}
