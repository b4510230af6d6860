use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aeroplate"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("aeroplate-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn zero_horizon_simulation_exits_cleanly() {
    let dir = scratch("t0");
    let cfg = dir.join("t0.cfg");
    std::fs::write(&cfg, "time.T = 0\ngrid.nx = 9\ngrid.ny = 9\n").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(dir.join("o")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("simulate: steps 0"));
    let files: Vec<_> = std::fs::read_dir(dir.join("o")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 2);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn supersonic_flow_is_rejected_by_key() {
    let dir = scratch("bad");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "flow.U = 1.5\n").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("flow.U"));
    std::fs::write(&cfg, "plate.thickness = 2\n").unwrap();
    let out = bin().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("plate.thickness"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn microlocal_sweep_reports_no_violations() {
    let dir = scratch("ml");
    let run = |seed: &str| {
        let out = bin()
            .args(["verify-microlocal", "--points", "2000", "--xi", "1", "--seed", seed, "--out"])
            .arg(&dir)
            .output()
            .unwrap();
        assert!(out.status.success());
        (String::from_utf8(out.stdout).unwrap(), std::fs::read(dir.join("sweep.csv")).unwrap())
    };
    let (line, a) = run("7");
    assert!(line.contains("sqrt-bound violations 0, m-bound violations 0"), "{line}");
    assert_eq!(a, run("7").1);
    assert_ne!(a, run("8").1);
    let text = String::from_utf8(a).unwrap();
    assert!(text.lines().any(|l| l == "xi,sigma,mu1,mu2,sector,abs_m,bound,margin"));
    assert!(text.lines().last().unwrap().starts_with("# verify-microlocal:"));
    let _ = std::fs::remove_dir_all(&dir);
}
