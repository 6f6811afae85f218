use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
[code]
n = 5
k = 10

[channel]
snr = [1.0, 2.0]
seed = 4

[bpl]
source = "lexicographic"
p = 1
list_sizes = [1, 2]

[run]
min_frames = 256
min_frame_errors = 5
max_frames = 1024
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polar-bpl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn bler_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), CONFIG);
    let out = dir.path().join("res.csv");
    let o = cli(&["bler", "--config", &cfg, "--snr", "1.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "snr_db,decoder,list_size,frames,frame_errors,bit_errors,bler,i_avg,mean_latency_cc,miss_count"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1.5,bp,1,"));
    assert!(lines[2].starts_with("1.5,bpl,2,"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(json["points"].as_array().unwrap().len(), 2);
    assert_eq!(json["config"]["channel"]["snr"][0], 1.5);
}

#[test]
fn bler_is_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), CONFIG);
    let a = cli(&["bler", "--config", &cfg, "--workers", "1"]);
    let b = cli(&["bler", "--config", &cfg, "--workers", "3"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let c = cli(&["bler", "--config", &cfg, "--seed", "4294967300"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn census_output() {
    let o = cli(&["census", "--n", "2"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "latency,count\n2,1\n4,1\n");
    let o = cli(&["census", "--n", "4", "--p", "1", "--format", "json"]);
    let json: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(json["permutations"], 6);
}

#[test]
fn select_writes_a_list() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("\"lexicographic\"", "\"sg\"").replace("[1, 2]", "[1, 3]")
        + "\n[bpl.sg]\ndataset_size = 30\nsnr_db = 1.0\nseed = 2\n";
    let cfg = config(dir.path(), &text);
    let list = dir.path().join("list.txt");
    let data = dir.path().join("data.bin");
    let o = cli(&[
        "select",
        "--config",
        &cfg,
        "--out",
        list.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines: Vec<String> = fs::read_to_string(&list).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "0 1 2 3 4");
    assert!(data.exists());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["steps"].as_array().unwrap().len(), 2);
}

#[test]
fn selftest_and_fault_injection() {
    let o = cli(&["selftest", "--n-max", "4", "--sampled-n", "6", "--samples", "20"]);
    assert!(o.status.success());
    let o = cli(&["selftest", "--n-max", "4", "--samples", "0", "--inject-fault", "update-stage", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(2));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("check,passed,cases,failures\n"));
    assert!(text.contains("column_shift,false,"));
}

#[test]
fn encode_prints_codeword() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &CONFIG.replace("k = 10", "k = 2\ncrc_poly = \"none\""));
    let o = cli(&["encode", "--config", &cfg, "--msg", "11"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let x = text.lines().find_map(|l| l.strip_prefix("x   ")).unwrap();
    assert_eq!(x.len(), 32);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = config(dir.path(), &CONFIG.replace("min_frame_errors = 5", "min_frame_errors = 0"));
    assert_eq!(cli(&["bler", "--config", &bad]).status.code(), Some(1));
    assert_eq!(cli(&["bler"]).status.code(), Some(1));
    assert_eq!(cli(&["census", "--n", "12"]).status.code(), Some(1));
    let missing = dir.path().join("nope.toml");
    assert_eq!(cli(&["bler", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
    let good = config(dir.path(), CONFIG);
    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(
        cli(&["bler", "--config", &good, "--out", unwritable.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}
