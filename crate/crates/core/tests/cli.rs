use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;
use stencil_tiler::cli;

fn corpus(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn invoke(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("stencil-tiler").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn schema_check(kind: &str, stdout: &str) -> Value {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("schema/cli-output.schema.json");
    let mut schema: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    schema["$ref"] = Value::String(format!("#/$defs/{kind}"));
    let validator = jsonschema::validator_for(&schema).unwrap();
    assert_eq!(
        stdout.lines().count(),
        1,
        "one line of JSON expected: {stdout}"
    );
    let value: Value = serde_json::from_str(stdout).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(&value)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{kind}: {errors:?}\n{stdout}");
    value
}

#[test]
fn verify_time_tiled_corpus_case() {
    let (code, out, err) = invoke(&[
        "verify",
        &corpus("lap1.stencil"),
        "--mode",
        "time",
        "--time-tile",
        "4",
        "--skew",
        "1",
        "--seed",
        "7",
    ]);
    assert_eq!(code, 0, "{err}");
    let v = schema_check("verify", &out);
    assert_eq!(v["bitwise_equal"], true);
}

#[test]
fn verify_every_mode_with_reversed_parallel_loops() {
    for mode in ["none", "space", "space-remainder", "time"] {
        let (code, out, err) = invoke(&[
            "verify",
            &corpus("wave2d.stencil"),
            "--mode",
            mode,
            "--tiles",
            "7,9",
            "--time-tile",
            "3",
            "--reverse-parallel",
        ]);
        assert_eq!(code, 0, "{mode}: {err}");
        assert_eq!(schema_check("verify", &out)["bitwise_equal"], true);
    }
}

#[test]
fn illegal_skew_exits_2() {
    let (code, out, err) = invoke(&[
        "transform",
        &corpus("lap1.stencil"),
        "--mode",
        "time",
        "--skew",
        "0",
    ]);
    assert_eq!(code, 2);
    assert!(out.is_empty());
    assert!(err.contains("skew"), "{err}");
}

#[test]
fn flag_and_parse_errors_exit_2() {
    assert_eq!(
        invoke(&["run", &corpus("lap1.stencil"), "--mode", "diagonal"]).0,
        2
    );
    assert_eq!(invoke(&["frobnicate"]).0, 2);
    assert_eq!(
        invoke(&["run", &corpus("heat2d.stencil"), "--tiles", "4"]).0,
        2
    );
    assert_eq!(invoke(&["run", "/nonexistent/x.stencil"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.stencil");
    std::fs::write(
        &bad,
        "stencil b\ndims 1\nextent 4\nsteps 1\nterm 1.0 1 0 0\n",
    )
    .unwrap();
    let (code, _, err) = invoke(&["run", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("line 5"), "line number expected: {err}");
    assert_eq!(
        invoke(&["analyze", &corpus("lap1.stencil"), "--profile", "1"]).0,
        2
    );
    assert_eq!(
        invoke(&[
            "simulate",
            &corpus("lap1.stencil"),
            "--cache-elems",
            "10",
            "--line-elems",
            "4"
        ])
        .0,
        2
    );
}

#[test]
fn help_goes_to_stdout() {
    let (code, out, _) = invoke(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["transform", "run", "verify", "analyze", "tune", "simulate"] {
        assert!(out.contains(sub));
    }
}

#[test]
fn run_reports_points_and_flops() {
    let (code, out, err) = invoke(&[
        "run",
        &corpus("heat2d.stencil"),
        "--mode",
        "time",
        "--tiles",
        "8,8",
        "--time-tile",
        "2",
    ]);
    assert_eq!(code, 0, "{err}");
    let v = schema_check("run", &out);
    assert_eq!(v["points_updated"], 70 * 28 * 6);
    assert_eq!(v["flops"], 70 * 28 * 6 * 9);
    assert_eq!(v["plan"]["space_tiles"], serde_json::json!([8, 8]));
}

#[test]
fn analyze_with_profile_reaches_the_plateau() {
    // 9-term radius-2 stencil: ai_spatial = 17/8, ×8 = 17 ≥ ridge.
    let (code, out, err) = invoke(&[
        "analyze",
        &corpus("lap2d_so4.stencil"),
        "--tiles",
        "16,16",
        "--time-tile",
        "8",
        "--profile",
        "262.01,17.3",
    ]);
    assert_eq!(code, 0, "{err}");
    let v = schema_check("analyze", &out);
    assert_eq!(v["cache_elems"], 5_242_880);
    assert_eq!(v["faces"]["case"]["kind"], "empty");
    assert_eq!(v["estimate"]["ai_tight_tt"], 17.0);
    assert_eq!(v["roofline"]["bound_gflops"], 262.01);
    assert!((v["roofline"]["ridge_point"].as_f64().unwrap() - 15.145).abs() < 0.01);

    let (_, out, _) = invoke(&[
        "analyze",
        &corpus("lap2d_so4.stencil"),
        "--tiles",
        "8,8",
        "--time-tile",
        "2",
        "--cache-elems",
        "50",
    ]);
    let v = schema_check("analyze", &out);
    assert_eq!(v["faces"]["case"]["kind"], "multi");
    assert!(v.get("roofline").is_none());
}

#[test]
fn simulate_and_tune_are_deterministic() {
    let sim = [
        "simulate",
        &corpus("lap1.stencil"),
        "--mode",
        "time",
        "--tiles",
        "32",
        "--time-tile",
        "4",
        "--cache-elems",
        "64",
        "--line-elems",
        "4",
    ];
    let (code, first, err) = invoke(&sim);
    assert_eq!(code, 0, "{err}");
    let v = schema_check("simulate", &first);
    assert_eq!(v["cache"]["line_elems"], 4);
    assert_eq!(invoke(&sim).1, first);

    let tune = [
        "tune",
        &corpus("lap1.stencil"),
        "--cache-elems",
        "64",
        "--line-elems",
        "1",
    ];
    let (code, first, err) = invoke(&tune);
    assert_eq!(code, 0, "{err}");
    let v = schema_check("tune", &first);
    let best = v["best_cost"].as_f64().unwrap();
    assert!(v["table"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["cost"].as_f64().unwrap() >= best));
    assert_eq!(invoke(&tune).1, first);
}

#[test]
fn transform_writes_c_or_a_summary() {
    let (code, src, _) = invoke(&[
        "transform",
        &corpus("lap1.stencil"),
        "--mode",
        "time",
        "--tiles",
        "16",
        "--time-tile",
        "4",
    ]);
    assert_eq!(code, 0);
    assert!(src.contains("void kernel(float* restrict A)"));
    assert!(src.contains("#pragma omp parallel for"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.c");
    let (code, out, _) = invoke(&[
        "transform",
        &corpus("lap1.stencil"),
        "--mode",
        "time",
        "--tiles",
        "16",
        "--time-tile",
        "4",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    schema_check("transform", &out);
    assert_eq!(std::fs::read_to_string(&path).unwrap(), src);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_stencil-tiler");
    let ok = Command::new(bin)
        .args([
            "verify",
            &corpus("heat2d.stencil"),
            "--mode",
            "space-remainder",
            "--tiles",
            "8,8",
        ])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(
        schema_check("verify", &String::from_utf8(ok.stdout).unwrap())["bitwise_equal"],
        true
    );
    let bad = Command::new(bin)
        .args([
            "transform",
            &corpus("lap1.stencil"),
            "--mode",
            "time",
            "--skew",
            "0",
        ])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
    assert!(!bad.stderr.is_empty());
}
