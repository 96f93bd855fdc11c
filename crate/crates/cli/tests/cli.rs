use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn hypogeo(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_hypogeo")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Checks the parts of the report schema that matter to consumers: required
/// keys, `const`/`enum` values, JSON types, array items and `$defs` refs.
fn check(schema: &Value, root: &Value, doc: &Value, path: &str, errors: &mut Vec<String>) {
    let schema = match schema.get("$ref").and_then(Value::as_str) {
        Some(r) => &root["$defs"][r.trim_start_matches("#/$defs/")],
        None => schema,
    };
    if let Some(options) = schema.get("oneOf").and_then(Value::as_array) {
        let ok = options.iter().filter(|o| {
            let mut e = Vec::new();
            check(o, root, doc, path, &mut e);
            e.is_empty()
        });
        if ok.count() != 1 {
            errors.push(format!("{path}: not exactly one oneOf branch matches"));
        }
    }
    if let Some(c) = schema.get("const") {
        if c != doc {
            errors.push(format!("{path}: expected {c}, got {doc}"));
        }
    }
    if let Some(e) = schema.get("enum").and_then(Value::as_array) {
        if !e.contains(doc) {
            errors.push(format!("{path}: {doc} not in {e:?}"));
        }
    }
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            other => vec![other.as_str().unwrap()],
        };
        let actual = match doc {
            Value::Null => "null",
            Value::Bool(_) => "boolean",
            Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
            Value::Number(_) => "number",
            Value::String(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
        };
        if !types.iter().any(|t| *t == actual || (*t == "number" && actual == "integer")) {
            errors.push(format!("{path}: type {actual}, expected {types:?}"));
        }
    }
    if let (Some(items), Value::Array(a)) = (schema.get("items"), doc) {
        for (i, v) in a.iter().enumerate() {
            check(items, root, v, &format!("{path}[{i}]"), errors);
        }
    }
    if let Value::Object(obj) = doc {
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(key.as_str().unwrap()) {
                errors.push(format!("{path}: missing {key}"));
            }
        }
        let props = schema.get("properties").and_then(Value::as_object);
        for (k, v) in obj {
            match (props.and_then(|p| p.get(k)), schema.get("additionalProperties")) {
                (Some(s), extra) => {
                    check(s, root, v, &format!("{path}.{k}"), errors);
                    if let Some(extra @ Value::Object(_)) = extra {
                        check(extra, root, v, &format!("{path}.{k}"), errors);
                    }
                }
                (None, Some(Value::Bool(false))) => errors.push(format!("{path}: unexpected key {k}")),
                (None, Some(extra)) => check(extra, root, v, &format!("{path}.{k}"), errors),
                (None, None) => {}
            }
        }
    }
}

fn validate(report: &Path) -> Value {
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    let mut errors = Vec::new();
    check(&schema, &schema, &doc, "$", &mut errors);
    assert!(errors.is_empty(), "{errors:#?}");
    doc
}

#[test]
fn schema_check_rejects_bad_reports() {
    let schema: Value = serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let bad = serde_json::json!({ "schema_version": 2, "tool": { "name": "hypogeo" }, "pass": "yes", "extra": 1 });
    let mut errors = Vec::new();
    check(&schema, &schema, &bad, "$", &mut errors);
    for needle in ["expected 1", "missing \"version\"", "type string", "unexpected key extra", "missing \"sections\""] {
        assert!(errors.iter().any(|e| e.contains(needle)), "{needle}: {errors:#?}");
    }
}

#[test]
fn verify_example_passes_all_samples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = hypogeo(&["verify", "--frame", "grushin2d", "--degree", "4", "--samples", "200", "--seed", "7", "--out", out]);
    assert_eq!(code, 0, "{stdout}");
    let doc = validate(&dir.path().join("report.json"));
    let v = &doc["sections"]["verify"]["data"];
    assert_eq!(v["failed"], 0);
    assert_eq!(v["counts"]["curvature_identity"]["grushin2d"]["passed"], 200);
    assert_eq!(v["counts"]["commutation"]["grushin2d"]["passed"], 200);
}

#[test]
fn solve_example_converges() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = hypogeo(&["solve", "--system", "allen-cahn", "--frame", "grushin2d", "--grid", "129,129", "--out", out]);
    assert_eq!(code, 0, "{stdout}");
    let doc = validate(&dir.path().join("report.json"));
    assert!(doc["sections"]["solve"]["data"]["residual_norm"].as_f64().unwrap() <= 1e-8);
    assert!(dir.path().join("solution.f64").is_file());
    assert!(dir.path().join("report.md").is_file());
}

#[test]
fn missing_files_exit_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = hypogeo(&["solve", "--config", "no/such/config.json", "--out", out]);
    assert_eq!(code, 2);
    assert!(err.contains("no/such/config.json"));
    let (code, _, _) = hypogeo(&["stability", "--input", "no/such/field.json", "--out", out]);
    assert_eq!(code, 2);
    let (code, _, _) = hypogeo(&["solve", "--frame", "grushin2d", "--grid", "5", "--out", out]);
    assert_eq!(code, 2);
}

#[test]
fn hamiltonian_rejects_frames_without_split_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = hypogeo(&["hamiltonian", "--frame", "heisenberg3d", "--grid", "9,9,9", "--out", out]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn saved_solution_can_be_reused() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let (code, _, _) = hypogeo(&["solve", "--grid", "33,33", "--out", first.to_str().unwrap()]);
    assert_eq!(code, 0);
    let input = first.join("solution.json");
    let (code, stdout, _) = hypogeo(&["stability", "--input", input.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let doc = validate(&second.join("report.json"));
    assert_eq!(doc["sections"]["solve"]["data"]["source"], "input");
    assert!(doc["sections"]["stability"]["data"]["lambda_min"].as_f64().unwrap() > 0.0);
}

#[test]
fn unstable_constant_fails_certificate() {
    // u = 0 is a maximum of the Allen–Cahn potential: H′(0) = -1 makes it unstable on large boxes.
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stdout, _) = hypogeo(&[
        "stability", "--frame", "euclidean2d", "--grid", "33,33", "--box=-8,8,-8,8", "--boundary", "constant", "--out", out,
    ]);
    assert_eq!(code, 1, "{stdout}");
    let doc = validate(&dir.path().join("report.json"));
    assert!(doc["sections"]["stability"]["data"]["lambda_min"].as_f64().unwrap() < 0.0);
}

#[test]
fn report_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"grid": {"nodes": [65, 65]}, "verify": {"samples": 5}, "seed": 3, "output": "ignored"}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let (code, stdout, _) = hypogeo(&["report", "--config", cfg.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    let doc = validate(&out.join("report.json"));
    assert_eq!(doc["config"]["seed"], 11);
    assert_eq!(doc["config"]["grid"]["nodes"], serde_json::json!([65, 65]));
    assert_eq!(doc["sections"].as_object().unwrap().len(), 6);
}

#[test]
fn iteration_limit_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, _, err) = hypogeo(&["solve", "--grid", "65,65", "--max-iter", "1", "--out", out]);
    assert_eq!(code, 3, "{err}");
    let doc = validate(&dir.path().join("report.json"));
    assert_eq!(doc["exit_code"], 3);
    assert!(doc["error"].as_str().unwrap().contains("converge"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let files = ["report.json", "solution.f64", "scaling.csv"];
    let run = |threads: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_hypogeo"))
            .args(["diagnose", "--grid", "65,65", "--out", out])
            .env("HYPOGEO_THREADS", threads)
            .status()
            .unwrap();
        assert!(status.success());
        files.map(|f| std::fs::read(dir.path().join(f)).unwrap())
    };
    let first = run("4");
    let second = run("1");
    for (f, (a, b)) in files.iter().zip(first.iter().zip(&second)) {
        assert!(a == b, "{f} differs");
    }
}
