use std::process::{Command, Output};

use icsg::Icsg;
use serde_json::Value;

fn icsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icsg"))
        .args(args)
        .output()
        .expect("run icsg")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn gen_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("robot.json");
    let out = icsg(&[
        "gen",
        "robot",
        "--param",
        "l=2",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let m = Icsg::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(m.num_states(), 13);
}

#[test]
fn gen_prints_to_stdout_without_output() {
    let out = icsg(&["gen", "fig_b1"]);
    assert!(out.status.success());
    assert_eq!(
        Icsg::from_json(&stdout(&out)).unwrap(),
        icsg::bench::fig_b1()
    );
}

#[test]
fn perturb_then_check_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let nominal = dir.path().join("nominal.json");
    let wide = dir.path().join("wide.json");
    assert!(icsg(&[
        "gen",
        "robot",
        "--param",
        "l=2",
        "-o",
        nominal.to_str().unwrap()
    ])
    .status
    .success());
    assert!(icsg(&[
        "perturb",
        nominal.to_str().unwrap(),
        "--eps",
        "0.05",
        "-o",
        wide.to_str().unwrap()
    ])
    .status
    .success());

    let value = |path: &str, semantics: &str| {
        let out = icsg(&[
            "check",
            path,
            "--prop",
            r#"<<p1>> Pmax=? [ F "g1" ]"#,
            "--uncertainty",
            semantics,
            "--json",
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        v["value"].as_f64().unwrap()
    };
    let nominal = value(nominal.to_str().unwrap(), "adversarial");
    let adv = value(wide.to_str().unwrap(), "adversarial");
    let ctl = value(wide.to_str().unwrap(), "controlled");
    assert!(adv <= nominal && nominal <= ctl, "{adv} {nominal} {ctl}");
}

#[test]
fn values_flag_lists_every_state() {
    let out = icsg(&[
        "check",
        "fig_b1",
        r#"<<p1>> Pmax=? [ F<=2 "goal" ]"#,
        "--values",
        "--json",
    ]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["states"].as_array().unwrap().len(), 3);
}

#[test]
fn text_output_names_the_value() {
    let out = icsg(&[
        "check",
        "fig_b1",
        "--prop",
        r#"<<p1>> Pmax=? [ F<=2 "goal" ]"#,
    ]);
    assert!(stdout(&out).contains("Value: 0.6"));
}

#[test]
fn errors_exit_with_one() {
    let out = icsg(&["check", "no_such_model.json", r#"<<p1>> Pmax=? [ F "g" ]"#]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_model.json"));

    let out = icsg(&["check", "fig_b1", "--prop", "<<p1>> Pmax=? [ G \"goal\" ]"]);
    assert_eq!(out.status.code(), Some(1));

    let out = icsg(&["check", "fig_b1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_label_is_reported() {
    let out = icsg(&["check", "fig_b1", r#"<<p1>> Pmax=? [ F "nowhere" ]"#]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn oracle_value_agrees_with_check() {
    let prop = r#"<<p1>> Pmax=? [ F<=2 "goal" ]"#;
    let out = icsg(&["oracle", "value", "fig_b1", "--prop", prop]);
    assert!(out.status.success());
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["s0"].as_f64().unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn oracle_tiny_is_deterministic() {
    let a = stdout(&icsg(&["oracle", "tiny", "--seed", "3"]));
    let b = stdout(&icsg(&["oracle", "tiny", "--seed", "3"]));
    assert_eq!(a, b);
    Icsg::from_json(&a).unwrap();
}

#[test]
fn oracle_is_hidden_from_help() {
    let out = icsg(&["--help"]);
    let help = stdout(&out);
    assert!(help.contains("check") && !help.contains("oracle"));
}

#[test]
fn repeated_runs_are_identical_apart_from_wall_time() {
    let run = || {
        let out = icsg(&[
            "check",
            "robot",
            r#"<<p1>> Pmax=? [ F "g1" ]"#,
            "--values",
            "--json",
        ]);
        let mut v: Value = serde_json::from_str(&stdout(&out)).unwrap();
        v["diagnostics"]
            .as_object_mut()
            .unwrap()
            .remove("wall_time_ms");
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(run(), run());
}
