use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn bz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bz"))
        .args(args)
        .env_remove("BZ_SEED")
        .output()
        .expect("run bz")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

fn lines(out: &Output) -> Vec<Value> {
    stdout(out).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn oracle_reports_both_routes() {
    let out = bz(&["oracle", &data("set.bz"), "--x", "0.5"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!((v["egf"]["value"].as_f64().unwrap() - 0.5f64.exp()).abs() < 1e-12);
    assert!((v["ogf"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-10);
    assert!((v["ogf_laplace"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    assert_eq!(v["agree"], true);
    assert!(v["seed"].is_null());
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn oracle_at_zero_is_one() {
    let v = json(&bz(&["oracle", &data("set.bz"), "--x", "0"]));
    assert_eq!(v["ogf"]["value"].as_f64().unwrap(), 1.0);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&bz(&["oracle", &data("seqz.bz"), "--x", "0.5"])), 2);
    assert_eq!(code(&bz(&["oracle", &data("set.bz"), "--x", "-1"])), 4);
    assert_eq!(code(&bz(&["sample", &data("set.bz"), "--x", "0.5", "--count", "0", "--seed", "1"])), 4);
    assert_eq!(code(&bz(&["sample", &data("set.bz"), "--x", "0.5", "--class", "Nope", "--seed", "1"])), 3);
    assert_eq!(code(&bz(&["frobnicate"])), 4);
    assert_eq!(code(&bz(&["oracle", "/nonexistent/file.bz", "--x", "0.5"])), 1);

    let dir = std::env::temp_dir().join(format!("bz-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.bz");
    std::fs::write(&bad, "A = SET(Z").unwrap();
    assert_eq!(code(&bz(&["oracle", bad.to_str().unwrap(), "--x", "0.5"])), 3);
    let partial = dir.join("partial.json");
    std::fs::write(&partial, r#"{"alphabet":["a"],"states":1,"start":0,"accept":[0],"delta":{}}"#).unwrap();
    assert_eq!(code(&bz(&["words", "count", "--dfa", partial.to_str().unwrap()])), 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sampling_replays_from_seed() {
    let args = ["sample", &data("set.bz"), "--x", "0.5", "--count", "20", "--seed", "7"];
    let a = bz(&args);
    let b = bz(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = bz(&["sample", &data("set.bz"), "--x", "0.5", "--count", "20", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn ordinary_lines_carry_the_parameter_draw() {
    let ord = lines(&bz(&["sample", &data("set.bz"), "--x", "0.5", "--count", "5", "--seed", "1", "--mode", "ord"]));
    assert_eq!(ord.len(), 5);
    for (i, l) in ord.iter().enumerate() {
        assert_eq!(l["index"], i);
        assert_eq!(l["seed"], 1);
        let u = l["u"].as_f64().unwrap();
        assert!((l["x_effective"].as_f64().unwrap() - 0.5 * u).abs() < 1e-12);
    }
    let exp = lines(&bz(&["sample", &data("set.bz"), "--x", "0.5", "--count", "5", "--seed", "1", "--mode", "exp"]));
    assert!(exp.iter().all(|l| l.get("u").is_none() && l.get("x_effective").is_none()));
}

#[test]
fn seed_falls_back_to_environment() {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_bz"))
            .args(["sample", &data("set.bz"), "--x", "0.5", "--count", "3"])
            .env("BZ_SEED", "5")
            .output()
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.stdout, b.stdout);
    assert!(lines(&a).iter().all(|l| l["seed"] == 5));
}

#[test]
fn config_hash_tracks_the_configuration() {
    let hash = |x: &str| lines(&bz(&["sample", &data("set.bz"), "--x", x, "--seed", "1"]))[0]["config_hash"].clone();
    assert_eq!(hash("0.5"), hash("0.5"));
    assert_ne!(hash("0.5"), hash("0.4"));
}

#[test]
fn text_output_has_a_header() {
    let out = bz(&["sample", &data("set.bz"), "--x", "0.5", "--count", "2", "--seed", "9", "--format", "text"]);
    assert!(stdout(&out).starts_with("# seed=9 config_hash="));
}

#[test]
fn shuffle_sizes_are_geometric() {
    let out = bz(&[
        "words", "sample", "--dfa", &data("astar.json"), "--shuffle", &data("bstar.json"),
        "--x", "0.25", "--mode", "ord", "--count", "1000", "--seed", "1",
    ]);
    assert_eq!(code(&out), 0);
    let sizes: Vec<f64> = lines(&out).iter().map(|l| l["size"].as_f64().unwrap()).collect();
    assert_eq!(sizes.len(), 1000);
    let mean = sizes.iter().sum::<f64>() / 1000.0;
    // geometric(1/2) on {0, 1, ...}: mean 1, variance 2
    assert!((mean - 1.0).abs() < 3.0 * (2.0f64 / 1000.0).sqrt(), "mean {mean}");
}

#[test]
fn word_counts() {
    let v = json(&bz(&["words", "count", "--dfa", &data("no_aa.json"), "--order", "8"]));
    let counts: Vec<&str> = v["counts"].as_array().unwrap().iter().map(|c| c.as_str().unwrap()).collect();
    assert_eq!(counts, ["1", "2", "3", "5", "8", "13", "21", "34", "55"]);
    let v = json(&bz(&["words", "count", "--dfa", &data("astar.json"), "--shuffle", &data("bstar.json"), "--order", "5"]));
    assert_eq!(v["counts"], serde_json::json!(["1", "2", "4", "8", "16", "32"]));
}

#[test]
fn empty_language_cannot_be_sampled() {
    let out = bz(&["words", "sample", "--dfa", &data("empty.json"), "--x", "0.25", "--seed", "1"]);
    assert_ne!(code(&out), 0);
}

#[test]
fn check_statuses() {
    let ok = bz(&["check", &data("set.bz"), "--x", "0.5", "--trials", "20000", "--seed", "42"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let report = json(&ok);
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["status"] != "fail"));

    assert_eq!(code(&bz(&["check", &data("seqz.bz"), "--x", "0.1", "--trials", "2000", "--seed", "1"])), 2);
    assert_eq!(code(&bz(&["check", &data("set.bz"), "--x", "0.5", "--trials", "0", "--seed", "1"])), 0);
}

#[test]
fn tune_hits_the_target_mean() {
    let v = json(&bz(&["tune", &data("set.bz"), "--target", "1"]));
    assert!((v["x"].as_f64().unwrap() - 0.5).abs() < 1e-5);
    let v = json(&bz(&["tune", &data("set.bz"), "--target", "0"]));
    assert_eq!(v["x"].as_f64().unwrap(), 0.0);
    assert_eq!(code(&bz(&["tune", &data("set.bz"), "--target", "1e6"])), 4);
    assert_eq!(code(&bz(&["tune", &data("cayley.bz"), "--target", "1"])), 2);
}

#[test]
fn output_file_receives_the_result() {
    let path = std::env::temp_dir().join(format!("bz-out-{}.json", std::process::id()));
    let out = bz(&["oracle", &data("set.bz"), "--x", "0.5", "--output", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let written: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["class"], "A");
    std::fs::remove_file(&path).unwrap();
}
