use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};

use parametrix::coprime::doubly_coprime_state_feedback;
use parametrix::synthesis::{chain_adjacency, example1_plant, synthesize, Route};
use serde_json::{json, Value};

static COUNTER: AtomicUsize = AtomicUsize::new(0);

fn scratch(name: &str, v: &Value) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("parametrix-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join(format!("{}-{name}.json", COUNTER.fetch_add(1, Ordering::SeqCst)));
    fs::write(&path, serde_json::to_string(v).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parametrix")).args(args).env_remove("PARAMETRIX_TOL").output().unwrap()
}

fn run_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_parametrix")).args(args).env(key, val).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn doc(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}); stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

fn p(path: &PathBuf) -> &str {
    path.to_str().unwrap()
}

fn coeffs(v: &Value) -> Vec<Vec<Vec<f64>>> {
    serde_json::from_value(v["coeffs"].clone()).unwrap()
}

fn max_abs_diff(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> f64 {
    let zero = |m: &Vec<Vec<f64>>| m.iter().map(|r| vec![0.0; r.len()]).collect::<Vec<_>>();
    let n = a.len().max(b.len());
    let shape = a.first().or(b.first()).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let x = a.get(k).cloned().unwrap_or_else(|| zero(shape));
        let y = b.get(k).cloned().unwrap_or_else(|| zero(shape));
        for (rx, ry) in x.iter().zip(&y) {
            for (u, v) in rx.iter().zip(ry) {
                worst = worst.max((u - v).abs());
            }
        }
    }
    worst
}

fn scalar_plant(a: f64) -> Value {
    json!({
        "name": "scalar",
        "A": [[a]], "B1": [[1.0, 0.0]], "B2": [[1.0]],
        "C1": [[1.0], [0.0]], "C2": [[1.0]],
        "D12": [[0.0], [1.0]], "D21": [[0.0, 1.0]]
    })
}

fn chain_plant(n: usize) -> (Value, Vec<Vec<f64>>) {
    let p = example1_plant(&chain_adjacency(n)).unwrap();
    let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| p.a()[(i, j)]).collect()).collect();
    let eye: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    (json!({ "A": a, "B1": eye, "B2": eye, "C1": eye, "C2": eye }), a)
}

#[test]
fn factorize_scalar_deadbeat() {
    let plant = scratch("plant", &scalar_plant(2.0));
    let o = run(&["factorize", p(&plant), "--mode", "deadbeat"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = doc(&o);
    assert!(d["metrics"]["max_residual"].as_f64().unwrap() < 1e-10);
    for name in ["Ul", "Vl", "Nl", "Ml", "Ur", "Vr", "Nr", "Mr"] {
        assert!(d["outputs"]["factors"][name]["coeffs"].is_array(), "{name}");
    }
}

#[test]
fn factorize_stable_mode_rejects_unstable_plant() {
    let plant = scratch("plant", &scalar_plant(1.5));
    let o = run(&["factorize", p(&plant), "--mode", "stable"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("stable"));
}

#[test]
fn factorize_state_feedback_factors() {
    let (v, _) = chain_plant(3);
    let plant = scratch("plant", &v);
    let o = run(&["factorize", p(&plant), "--mode", "statefb"]);
    assert_eq!(code(&o), 0);
    let d = doc(&o);
    let f = doubly_coprime_state_feedback(&example1_plant(&chain_adjacency(3)).unwrap()).unwrap();
    for (name, fir) in f.named() {
        let expect: Vec<Vec<Vec<f64>>> = fir
            .coeffs()
            .iter()
            .map(|m| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
            .collect();
        assert_eq!(coeffs(&d["outputs"]["factors"][name]), expect, "{name}");
    }
}

#[test]
fn map_zero_youla_to_iop_on_stable_plant() {
    let plant = scratch("plant", &scalar_plant(0.5));
    let q = scratch("q", &json!({ "Q": { "coeffs": [[[0.0]]] } }));
    let o = run(&["map", p(&plant), p(&q), "--from", "youla", "--to", "iop", "--horizon", "80"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = doc(&o);
    assert!(max_abs_diff(&coeffs(&d["outputs"]["params"]["Y"]), &[vec![vec![1.0]]]) < 1e-12);
    assert!(max_abs_diff(&coeffs(&d["outputs"]["params"]["U"]), &[vec![vec![0.0]]]) < 1e-12);
    assert!(d["metrics"]["controller_gap"].as_f64().unwrap() < 1e-8);
}

#[test]
fn map_round_trip_through_slp() {
    let plant = scratch("plant", &scalar_plant(1.5));
    let q = json!({ "Q": { "coeffs": [[[0.3]], [[-0.2]], [[0.1]]] } });
    let qf = scratch("q", &q);
    let o = run(&["map", p(&plant), p(&qf), "--from", "youla", "--to", "slp", "--mode", "deadbeat"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let slp = scratch("slp", &doc(&o)["outputs"]);
    let o = run(&["map", p(&plant), p(&slp), "--from", "slp", "--to", "youla", "--mode", "deadbeat"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let back = coeffs(&doc(&o)["outputs"]["params"]["Q"]);
    assert!(max_abs_diff(&back, &coeffs(&q["Q"])) < 1e-9);
}

#[test]
fn map_example1_optimum_to_youla_gives_zero() {
    let (v, _) = chain_plant(3);
    let plant = scratch("plant", &v);
    let o = run(&["synthesize", p(&plant), "--param", "slp", "--horizon", "8", "--si"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let params = scratch("slp", &doc(&o)["outputs"]);
    let o = run(&["map", p(&plant), p(&params), "--from", "slp", "--to", "youla", "--mode", "statefb"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let q = coeffs(&doc(&o)["outputs"]["params"]["Q"]);
    assert!(max_abs_diff(&q, &[vec![vec![0.0; 3]; 3]]) < 1e-9);
}

#[test]
fn map_rejects_source_outside_subspace() {
    let plant = scratch("plant", &scalar_plant(0.5));
    let bad = scratch(
        "iop",
        &json!({ "Y": {"coeffs": [[[2.0]]]}, "U": {"coeffs": [[[0.0]]]}, "W": {"coeffs": [[[0.0]]]}, "Z": {"coeffs": [[[1.0]]]} }),
    );
    let o = run(&["map", p(&plant), p(&bad), "--from", "iop", "--to", "slp"]);
    assert_eq!(code(&o), 3);
    assert_eq!(doc(&o)["pass"], json!(false));
}

#[test]
fn synthesize_example1_si_recovers_minus_a() {
    let (v, a) = chain_plant(3);
    let plant = scratch("plant", &v);
    for param in ["slp", "youla", "iop"] {
        let o = run(&["synthesize", p(&plant), "--param", param, "--horizon", "8", "--si"]);
        assert_eq!(code(&o), 0, "{param}: {}", String::from_utf8_lossy(&o.stderr));
        let d = doc(&o);
        let minus_a: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|x| -x).collect()).collect();
        assert!(max_abs_diff(&coeffs(&d["outputs"]["K"]), &[minus_a]) <= 1e-6, "{param}");
        assert!((d["metrics"]["cost_sq"].as_f64().unwrap() - 3.0).abs() <= 1e-8, "{param}");
    }
}

#[test]
fn synthesize_non_qi_structure_exits_4() {
    let (v, a) = chain_plant(3);
    let plant = scratch("plant", &v);
    let support: Vec<Vec<u8>> = a.iter().map(|r| r.iter().map(|&x| u8::from(x != 0.0)).collect()).collect();
    let pat = scratch("pattern", &json!({ "pattern": support }));
    let o = run(&["synthesize", p(&plant), "--param", "slp", "--horizon", "4", "--structure", p(&pat)]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--si"));
}

#[test]
fn synthesize_routes_agree_on_stable_plant() {
    let plant = scratch("plant", &scalar_plant(0.5));
    let costs: Vec<f64> = ["youla", "slp", "iop"]
        .iter()
        .map(|param| {
            let o = run(&["synthesize", p(&plant), "--param", param, "--horizon", "30"]);
            assert_eq!(code(&o), 0, "{param}: {}", String::from_utf8_lossy(&o.stderr));
            doc(&o)["metrics"]["h2_cost"].as_f64().unwrap()
        })
        .collect();
    assert!((costs[0] - costs[1]).abs() < 1e-6 && (costs[0] - costs[2]).abs() < 1e-6, "{costs:?}");
}

#[test]
fn synthesize_infeasible_structure_exits_5() {
    // M = 0 forces R = (zI - A)^-1, which is not FIR.
    let (v, _) = chain_plant(2);
    let plant = scratch("plant", &v);
    let pat = scratch("pattern", &json!([[0, 0], [0, 0]]));
    let o = run(&["synthesize", p(&plant), "--param", "slp", "--horizon", "4", "--si", "--structure", p(&pat)]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synthesize_output_round_trips_losslessly() {
    let v = scalar_plant(0.7);
    let plant = scratch("plant", &v);
    let o = run(&["synthesize", p(&plant), "--param", "slp", "--horizon", "6"]);
    assert_eq!(code(&o), 0);
    let k = coeffs(&doc(&o)["outputs"]["K"]);
    let pl = parametrix::lti::StateSpacePlant::new(
        parametrix::lti::PlantBlocks::new(
            nalgebra::DMatrix::from_row_slice(1, 1, &[0.7]),
            nalgebra::DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            nalgebra::DMatrix::from_row_slice(1, 1, &[1.0]),
            nalgebra::DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            nalgebra::DMatrix::from_row_slice(1, 1, &[1.0]),
        )
        .with_d12(nalgebra::DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))
        .with_d21(nalgebra::DMatrix::from_row_slice(1, 2, &[0.0, 1.0])),
    )
    .unwrap();
    let r = synthesize(&pl, Route::Slp, 6, None).unwrap();
    let expect: Vec<f64> = r.controller.coeffs().iter().map(|m| m[(0, 0)]).collect();
    let got: Vec<f64> = k.iter().map(|m| m[0][0]).collect();
    assert_eq!(
        got.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        expect.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn output_is_byte_identical_across_runs() {
    let plant = scratch("plant", &scalar_plant(1.2));
    let args = ["synthesize", p(&plant), "--param", "youla", "--horizon", "5"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn qi_check_diagonal() {
    let v = json!({ "A": [[0.5, 0.0], [0.0, 0.3]], "B1": [[1.0, 0.0], [0.0, 1.0]], "B2": [[1.0, 0.0], [0.0, 1.0]],
                    "C1": [[1.0, 0.0], [0.0, 1.0]], "C2": [[1.0, 0.0], [0.0, 1.0]] });
    let plant = scratch("plant", &v);
    let pat = scratch("pattern", &json!([[1, 0], [0, 1]]));
    let o = run(&["qi-check", p(&plant), p(&pat)]);
    assert_eq!(code(&o), 0);
    assert_eq!(doc(&o)["metrics"]["quadratically_invariant"], json!(true));
}

#[test]
fn qi_check_chain_support_fails() {
    let (v, a) = chain_plant(3);
    let plant = scratch("plant", &v);
    let support: Vec<Vec<u8>> = a.iter().map(|r| r.iter().map(|&x| u8::from(x != 0.0)).collect()).collect();
    let pat = scratch("pattern", &json!(support));
    let o = run(&["qi-check", p(&plant), p(&pat)]);
    assert_eq!(code(&o), 4);
    assert_eq!(doc(&o)["metrics"]["quadratically_invariant"], json!(false));
}

#[test]
fn verify_perturbed_factors_fails() {
    let plant = scratch("plant", &scalar_plant(2.0));
    let o = run(&["factorize", p(&plant)]);
    assert_eq!(code(&o), 0);
    let factors = doc(&o)["outputs"]["factors"].clone();
    let good = scratch("factors", &factors);
    assert_eq!(code(&run(&["verify", p(&plant), p(&good), "--kind", "bezout"])), 0);
    let mut bad = factors;
    let c = bad["Vr"]["coeffs"][0][0][0].as_f64().unwrap();
    bad["Vr"]["coeffs"][0][0][0] = json!(c + 1e-3);
    let bad = scratch("factors", &bad);
    let o = run(&["verify", p(&plant), p(&bad), "--kind", "bezout"]);
    assert_eq!(code(&o), 3);
    assert_eq!(doc(&o)["pass"], json!(false));
}

#[test]
fn example1_three_routes() {
    let o = run(&["example1", "--n", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = doc(&o);
    let routes = d["outputs"]["routes"].as_object().unwrap();
    assert_eq!(routes.len(), 3);
    for (name, r) in routes {
        assert!(r["gain_error"].as_f64().unwrap() <= 1e-6, "{name}");
        assert_eq!(r["pass"], json!(true), "{name}");
    }
}

#[test]
fn example1_from_graph_file() {
    let g = scratch("graph", &json!({ "graph": [[0, 1, 0], [1, 0, 1], [0, 1, 0]] }));
    let o = run(&["example1", "--graph", p(&g), "--horizon", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn parse_and_usage_errors_exit_1() {
    let junk = std::env::temp_dir().join(format!("parametrix-cli-junk-{}.json", std::process::id()));
    fs::write(&junk, "{ not json").unwrap();
    assert_eq!(code(&run(&["factorize", junk.to_str().unwrap()])), 1);
    assert_eq!(code(&run(&["factorize"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    let ragged = scratch(
        "plant",
        &json!({ "A": [[1.0, 0.0], [0.0]], "B1": [[1.0]], "B2": [[1.0]], "C1": [[1.0]], "C2": [[1.0]] }),
    );
    assert_eq!(code(&run(&["factorize", p(&ragged)])), 1);
}

#[test]
fn nonzero_d22_is_a_precondition_failure() {
    let mut v = scalar_plant(0.5);
    v["D22"] = json!([[1.0]]);
    let plant = scratch("plant", &v);
    assert_eq!(code(&run(&["factorize", p(&plant)])), 2);
    v["D22"] = json!([[0.0]]);
    let plant = scratch("plant", &v);
    assert_eq!(code(&run(&["factorize", p(&plant)])), 0);
}

#[test]
fn tolerance_override() {
    let plant = scratch("plant", &scalar_plant(0.5));
    let args = ["factorize", p(&plant), "--mode", "stable", "--horizon", "20"];
    // Truncating the stable factors at 20 leaves a residual near 0.5^20.
    assert_eq!(code(&run_env(&args, "PARAMETRIX_TOL", "1e-3")), 0);
    assert_eq!(code(&run_env(&args, "PARAMETRIX_TOL", "1e-12")), 3);
    assert_eq!(code(&run_env(&args, "PARAMETRIX_TOL", "abc")), 1);
}

#[test]
fn timing_and_out_file() {
    let plant = scratch("plant", &scalar_plant(0.5));
    let out = std::env::temp_dir().join(format!("parametrix-cli-out-{}.json", std::process::id()));
    let o = run(&["factorize", p(&plant), "--timing", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let d: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(d["metrics"]["wall_time_ms"].as_f64().unwrap() >= 0.0);
}
