use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn antifield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_antifield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(command: &str, model: &str, extra: &[&str]) -> (i32, String) {
    let path = fixture(model);
    let mut args = vec![command, path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = antifield(&args);
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn json(command: &str, model: &str) -> (i32, Value) {
    let (code, out) = run(command, model, &["--format", "json"]);
    (code, serde_json::from_str(&out).unwrap())
}

fn checks(v: &Value) -> Vec<(String, String, Value)> {
    v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            (
                c["name"].as_str().unwrap().to_string(),
                c["status"].as_str().unwrap().to_string(),
                c["order"].clone(),
            )
        })
        .collect()
}

#[test]
fn master_on_abelian_model() {
    let (code, v) = json("master", "m1.toml");
    assert_eq!(code, 0);
    let orders: Vec<u64> = checks(&v)
        .iter()
        .filter(|(n, _, _)| n == "master.total_derivative")
        .map(|(_, s, o)| {
            assert_eq!(s, "pass");
            o.as_u64().unwrap()
        })
        .collect();
    assert_eq!(orders, vec![0, 1, 2]);
}

#[test]
fn tensors_on_nonabelian_model() {
    let (code, v) = json("tensors", "m2.toml");
    assert_eq!(code, 0);
    assert_eq!(v["structure"]["C"]["C[1][1][2]"], "-1");
    assert_eq!(v["tensors"]["T"]["T[1][1][2]"], "-1");
    assert_eq!(v["tensors"]["R"]["R[1][2]"], "q1");
    for t in ["E", "D", "M"] {
        assert_eq!(v["tensors"][t], serde_json::json!({}));
    }
}

#[test]
fn check_on_corrupted_structure() {
    let (code, v) = json("check", "m1_corrupt_c.toml");
    assert_eq!(code, 1);
    let closure = &v["checks"][0];
    assert_eq!(closure["name"], "structure.closure");
    assert_eq!(closure["status"], "fail");
    let msg = closure["message"].as_str().unwrap();
    assert!(msg.starts_with("VerificationFailure"), "{msg}");
    let text = v.to_string();
    assert!(!text.contains("FirstClassViolation"));
}

#[test]
fn golden_reports() {
    for (command, model, golden) in [
        ("master", "m1.toml", "m1_master.json"),
        ("tensors", "m2.toml", "m2_tensors.json"),
        ("report", "m3.toml", "m3_report.json"),
    ] {
        let (_, out) = run(command, model, &["--format", "json"]);
        let expected = std::fs::read_to_string(fixture("golden").join(golden)).unwrap();
        assert_eq!(out, expected, "{command} {model}");
    }
}

#[test]
fn json_is_byte_stable() {
    let a = run("report", "m2.toml", &["--format", "json", "--seed", "7"]);
    let b = run("report", "m2.toml", &["--format", "json", "--seed", "7"]);
    assert_eq!(a, b);
}

#[test]
fn text_and_json_agree() {
    for model in ["m1.toml", "m2.toml", "m3.toml", "m2_flipped_c.toml", "m1_bad_l0.toml"] {
        let (jc, v) = json("report", model);
        let (tc, text) = run("report", model, &[]);
        assert_eq!(jc, tc);
        let from_text: Vec<(String, String)> = text
            .lines()
            .filter_map(|l| {
                let (status, rest) = l.split_once(' ')?;
                let status = match status {
                    "PASS" => "pass",
                    "FAIL" => "fail",
                    _ => return None,
                };
                let name = rest.split(' ').next()?.to_string();
                Some((name, status.to_string()))
            })
            .collect();
        let from_json: Vec<(String, String)> = checks(&v).into_iter().map(|(n, s, _)| (n, s)).collect();
        assert_eq!(from_text, from_json, "{model}");
    }
}

#[test]
fn input_errors_exit_two() {
    let dir = std::env::temp_dir().join(format!("antifield-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let m1 = std::fs::read_to_string(fixture("m1.toml")).unwrap();
    let cases = [
        ("no_h0.toml", m1.replace("H0 = \"1/2*p3^2\"", ""), "hamiltonian.H0 required"),
        ("ghost.toml", m1.replace("[\"p1\", \"p2\"]", "[\"p1 + c1\", \"p2\"]"), "c1"),
        ("syntax.toml", m1.replace("1/2*p3^2", "1/2*p3^^2"), "line 10"),
    ];
    for (name, text, needle) in cases {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        let out = antifield(&["check", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains(needle), "{name}: {err}");
    }
    let missing = antifield(&["check", dir.join("absent.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let (code, _) = run("master", "m1.toml", &["--max-order", "4"]);
    assert_eq!(code, 2);
    let (code, _) = run("master", "m1.toml", &["--max-order", "0"]);
    assert_eq!(code, 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn lower_truncation_orders() {
    let (code, v) = json("master", "m2.toml");
    assert_eq!(code, 0);
    assert_eq!(v["max_order"], 3);
    let (code, out) = run("master", "m2.toml", &["--max-order", "1", "--format", "json"]);
    assert_eq!(code, 0);
    let v: Value = serde_json::from_str(&out).unwrap();
    let master: Vec<_> = checks(&v)
        .into_iter()
        .filter(|(n, _, _)| n.starts_with("master.total"))
        .collect();
    assert_eq!(master.len(), 1);
}
