mod common;

use std::fs;
use std::process::Command;

use common::*;
use gridcap::generate::{generate, InstanceSpec};
use gridcap::io::{load_instance, save_instance};
use gridcap::Error;

const BIN: &str = env!("CARGO_BIN_EXE_gridcap");

#[test]
fn triangle_loads() {
    let inst = bundled("triangle3");
    assert_eq!(inst.network.n_buses(), 3);
    assert_eq!(inst.network.n_branches(), 3);
    assert_eq!(inst.network.cycle_space_dim(), 1);
}

#[test]
fn save_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        let spec = InstanceSpec {
            scenarios: 2,
            hours: 3,
            ..InstanceSpec::new(4 + seed as usize, seed)
        };
        let inst = generate(&spec).unwrap();
        let path = dir.path().join(format!("i{seed}"));
        save_instance(&inst, &path).unwrap();
        assert_eq!(load_instance(&path).unwrap(), inst);
    }
}

fn copy_triangle() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in fs::read_dir(instance_dir("triangle3")).unwrap() {
        let f = f.unwrap();
        fs::copy(f.path(), dir.path().join(f.file_name())).unwrap();
    }
    dir
}

#[test]
fn duplicate_bus_id_is_named() {
    let dir = copy_triangle();
    let p = dir.path().join("network.json");
    let text = fs::read_to_string(&p).unwrap().replace("{ \"id\": 2 }", "{ \"id\": 1 }");
    fs::write(&p, text).unwrap();
    match load_instance(dir.path()) {
        Err(Error::Parse { path, message }) => {
            assert_eq!(path, p);
            assert!(message.contains("duplicate bus id 1"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn missing_scenario_file_is_named() {
    let dir = copy_triangle();
    fs::remove_file(dir.path().join("scenario_base.csv")).unwrap();
    let err = load_instance(dir.path()).unwrap_err().to_string();
    assert!(err.contains("scenario_base.csv"), "{err}");
}

#[test]
fn bad_number_is_located() {
    let dir = copy_triangle();
    let p = dir.path().join("scenario_base.csv");
    let text = fs::read_to_string(&p).unwrap().replacen("90,80", "90,eighty", 1);
    fs::write(&p, text).unwrap();
    let err = load_instance(dir.path()).unwrap_err().to_string();
    assert!(err.contains("scenario_base.csv") && err.contains("row 2"), "{err}");
}

#[test]
fn gen_instance_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let status = Command::new(BIN)
            .args(["gen-instance", "--buses", "5", "--seed", "7", "-o"])
            .arg(dir.path().join(name))
            .output()
            .unwrap();
        assert!(status.status.success());
    }
    for f in ["network.json", "scenarios.csv", "scenario_s0.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = copy_triangle();
    fs::remove_file(dir.path().join("scenarios.csv")).unwrap();
    let out = Command::new(BIN).arg("validate").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(BIN).arg("validate").arg(instance_dir("triangle3")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));

    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["solve", "--max-iters", "1", "--epsilon", "1e-9", "-o"])
        .arg(tmp.path())
        .arg(instance_dir("triangle3"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn reports_repeat_and_mark_transport_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for run in ["r1", "r2"] {
        let out = Command::new(BIN)
            .args(["solve", "--mode", "nf", "--threads", "2", "-o"])
            .arg(tmp.path().join(run))
            .arg(instance_dir("five_bus"))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(tmp.path().join(run).join("report.json")).unwrap()).unwrap();
        assert_eq!(v["kvl_enforced"], false);
        v.as_object_mut().unwrap().remove("timings");
        reports.push(v);
        let summary = fs::read_to_string(tmp.path().join(run).join("summary.txt")).unwrap();
        assert!(summary.contains("KVL               disabled"));
        assert!(summary.contains("Viol. GWh         0.000000"));
    }
    assert_eq!(reports[0], reports[1]);
    for run in ["r1", "r2"] {
        assert!(tmp.path().join(run).join("trajectory.jsonl").exists());
        assert!(tmp.path().join(run).join("gap.csv").exists());
    }
    assert_eq!(
        fs::read(tmp.path().join("r1/trajectory.jsonl")).unwrap(),
        fs::read(tmp.path().join("r2/trajectory.jsonl")).unwrap()
    );
}

#[test]
fn cli_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let inst = instance_dir("triangle3");
    let run = |args: &[&str]| {
        let out = Command::new(BIN).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    let t = tmp.path().to_str().unwrap();
    let i = inst.to_str().unwrap();
    run(&["solve", i, "-o", t]);
    let sol = format!("{t}/solution.json");
    let text = run(&["corr", i, &sol, "-o", &format!("{t}/corr")]);
    assert!(text.starts_with("converged"));
    let ev = run(&["evaluate", i, &format!("{t}/corr/corrected.json"), "-o", &format!("{t}/eval.json")]);
    assert!(ev.contains("total cost"));
    let mcb = run(&["mcb", i]);
    let v: serde_json::Value = serde_json::from_str(&mcb).unwrap();
    assert_eq!(v["cycles"], 1);
    assert_eq!(v["total_length"], 3);
}
