use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jcm(args: &[&str], seed: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_jcm"));
    cmd.args(args).env_remove("JCM_SEED");
    if let Some(s) = seed {
        cmd.env("JCM_SEED", s);
    }
    cmd.output().expect("spawn jcm")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let text = format!(
        "scheme = qam\nM = 4\nn = 2\nsnr_db = 12\nepochs = 1\nk = 4\nclasses = 2\nper_class = 10\n\
         encoder_hidden = 4\nsemantic_hidden = 4\nsource_hidden = 4\noutput_dir = {}\n{extra}",
        dir.join("out").display()
    );
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn unknown_key_exits_2_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bogus_knob = 3\n");
    let out = jcm(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_knob"));
}

#[test]
fn invalid_value_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "rho = -1\n");
    let out = jcm(&["run", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rho"));
}

#[test]
fn minimal_run_one_row_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "methods = jcm, analog, uniform, nn, deepjscc_q\nquantizer_epochs = 1\n");
    let out = jcm(&["run", &cfg], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], jcm::experiment::RESULTS_HEADER);
    assert_eq!(lines.len(), 6);
    let mut methods: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    methods.sort();
    assert_eq!(methods, ["analog", "deepjscc_q", "jcm", "nn", "uniform"]);
    assert!(dir.path().join("out/shaping_12.json").exists());
}

#[test]
fn rerun_is_byte_identical_and_seed_env_applies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seeds = 1, 2\n");
    let csv = |seed: Option<&str>| {
        let out = jcm(&["run", &cfg], seed);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(dir.path().join("out/results.csv")).unwrap()
    };
    let a = csv(None);
    assert_eq!(a, csv(None));
    let seeded = String::from_utf8(csv(Some("7"))).unwrap();
    assert_eq!(seeded.lines().count(), 2);
    assert!(seeded.lines().nth(1).unwrap().contains(",7,"));
}

#[test]
fn suites_exit_zero() {
    let out = jcm(&["sample-dist", "--order", "16", "--draws", "100000", "--pmfs", "3"], None);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
    let out = jcm(&["gradcheck", "--seed", "11"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = jcm(&["oraclecheck", "--draws", "5000"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rotated decoder gap"));
}

#[test]
fn failing_suite_exits_1() {
    // 50 draws cannot resolve a 16-way PMF to 0.01 in total variation.
    let out = jcm(&["sample-dist", "--order", "16", "--draws", "50", "--pmfs", "2"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn shaping_subcommand_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lambda = 5\n");
    let text = fs::read_to_string(&cfg).unwrap().replace("M = 4", "M = 16").replace("snr_db = 12", "snr_db = -6, 18");
    fs::write(&cfg, text).unwrap();
    let out = jcm(&["shaping", &cfg], None);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("KL(MB fit)"), "{stdout}");
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(dir.path().join("out/shaping_-6.json").exists());
    assert!(dir.path().join("out/shaping_18.json").exists());
}
