use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const ZF: &str = "\
experiment.kind = sumrate-zf
sweep.variable = p_total_dbm
sweep.values = 0, 10, 20, 30
system.users = 2
system.tx_antennas = 2
mc.trials = 40
";

const IM_QUIET: &str = "\
experiment.kind = ber-im
sweep.variable = p_total_dbm
sweep.values = 5, 10
system.tx_antennas = 2
system.rx_antennas = 2
system.mod_order = 2
noise.sigma_s_dbm = -200
noise.sigma_v_dbm = -200
mc.trials = 60
mc.frames_per_channel = 5
";

fn airbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_airbeam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn parse_rows(csv: &str) -> Vec<Vec<String>> {
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment,sweep_value,k,n,t_x,r_x,m,metric,value,ci_low,ci_high,trials,seed"
    );
    lines.map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn num(field: &str) -> f64 {
    field.parse().unwrap()
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.cfg", ZF);
    let out = airbeam(&["validate", "--config", good.to_str().unwrap()]);
    assert!(out.status.success());

    let bad = write(dir.path(), "bad.cfg", &format!("{ZF}mc.trials = 3\nsystem.widgets = 1\n"));
    let out = airbeam(&["validate", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("duplicate key `mc.trials`"), "{err}");
    assert!(err.contains("unknown key `system.widgets`"), "{err}");

    let out = airbeam(&["validate", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn subcommand_must_match_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zf.cfg", ZF);
    let out = airbeam(&["sumrate-ota", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("experiment.kind = sumrate-zf"));
}

#[test]
fn runs_are_reproducible_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zf.cfg", ZF);
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a.csv");
    let out = airbeam(&["sumrate-zf", "--config", cfg, "--seed", "11", "--workers", "1", "--out", a.to_str().unwrap()]);
    assert!(out.status.success());
    let log = String::from_utf8(out.stderr).unwrap();
    assert_eq!(log.lines().filter(|l| l.starts_with("point=")).count(), 4, "{log}");

    let b = airbeam(&["sumrate-zf", "--config", cfg, "--seed", "11", "--workers", "3"]);
    assert!(b.status.success());
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, b.stdout);

    let c = airbeam(&["sumrate-zf", "--config", cfg, "--seed", "12", "--trials", "5"]);
    assert_ne!(first, c.stdout);
    let rows = parse_rows(&String::from_utf8(c.stdout).unwrap());
    assert!(rows.iter().all(|r| r[11] == "5" && r[12] == "12"));
}

#[test]
fn zero_forcing_rate_rises_with_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zf.cfg", ZF);
    let out = airbeam(&["sumrate-zf", "--config", cfg.to_str().unwrap()]);
    let rows = parse_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 4);
    for w in rows.windows(2) {
        // the same channel draws are reused at every power
        assert!(num(&w[1][8]) >= num(&w[0][8]));
        assert!(num(&w[1][10]) >= num(&w[0][9]));
    }
    for r in &rows {
        assert_eq!(r[7], "sum_rate_bps_hz");
        assert!(num(&r[9]) <= num(&r[8]) && num(&r[8]) <= num(&r[10]));
    }
}

#[test]
fn quiet_receive_im_is_decoded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "im.cfg", IM_QUIET);
    let out = airbeam(&["ber-im", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = parse_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[11], "60");
        match r[7].as_str() {
            "ber_ml" => assert_eq!(num(&r[8]), 0.0),
            // the amplitude stage can miss the antenna for an unlucky symbol vector
            "ber" => assert!(num(&r[8]) < 0.05),
            other => panic!("unexpected metric {other}"),
        }
    }
}

#[test]
fn invalid_power_split_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let text = IM_QUIET.replace("5, 10", "0, 10");
    let cfg = write(dir.path(), "im.cfg", &text);
    let out = airbeam(&["ber-im", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("sweep value 0"));
}

#[test]
fn unwritable_output_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "zf.cfg", ZF);
    let target = dir.path().join("no/such/dir/out.csv");
    let out = airbeam(&["sumrate-zf", "--config", cfg.to_str().unwrap(), "--trials", "2", "--out", target.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("out.csv"));
}
