//! Browser bindings: a kernel explorer, a threshold explorer on the
//! two-instruction example, and a quadrature grid sweep.

use amp_core::bench::{Benchmark, QuadLayout};
use amp_core::classify::{classify, ThresholdVector};
use amp_core::fpkernel::{exec_fp, FpOp};
use amp_core::interp::ExecInput;
use amp_core::nir::{def_use_graph, parse_text, print_program, Precision};
use amp_core::profiler::profile;
use amp_core::rewrite::{compute_ics, rewrite};
use amp_core::sweep::{sweep, EvalOptions, Grid};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const EXAMPLE: &str = "func @f(%A: arr<f32, 2>) -> f32 {
entry:
  %r1 = load f32 %A, 0
  %r2 = load f32 %A, 1
  %r3 = fmul f32 %r1, %r2
  %r4 = fsub f32 %r1, %r3
  ret %r4
}
";

fn parse_op(s: &str) -> Result<FpOp, String> {
    Ok(match s {
        "add" => FpOp::Add,
        "sub" => FpOp::Sub,
        "mul" => FpOp::Mul,
        "div" => FpOp::Div,
        "sin" => FpOp::Sin,
        "exp" => FpOp::Exp,
        "sqrt" => FpOp::Sqrt,
        "fabs" => FpOp::Fabs,
        _ => return Err(format!("unknown operation `{s}`")),
    })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// One single-precision operation under the instrumented kernel.
pub fn explore(op: &str, a: f64, b: f64) -> Result<Value, String> {
    let op = parse_op(op)?;
    let a = a as f32 as f64;
    let b = b as f32 as f64;
    let o = exec_fp(op, a, op.is_binary().then_some(b), Precision::F32);
    Ok(json!({
        "a": a,
        "b": op.is_binary().then_some(b),
        "result": finite_or_null(o.result),
        "eps": finite_or_null(o.eps),
        "eps_exponent": o.eps_exponent,
        "errratio_log": o.errratio_log,
        "addend_expdiff": o.addend_expdiff,
        "cancelled_bits": o.cancelled_bits,
        "range_fault": o.range_fault,
    }))
}

/// Profiles the example on `(a, b)`, classifies under `thresholds`
/// (`t1=..,t5=..`; omitted components keep their defaults) and rewrites.
pub fn example(a: f64, b: f64, thresholds: &str) -> Result<Value, String> {
    let p = parse_text(EXAMPLE).map_err(|e| e.to_string())?;
    let t: ThresholdVector = thresholds.parse().map_err(|e: amp_core::classify::ThresholdError| e.to_string())?;
    let input = ExecInput::default().with_array("A", vec![a as f32 as f64, b as f32 as f64]);
    let (np, _, out) = profile(&p, &input).map_err(|e| e.to_string())?;
    let cl = classify(&np, &t);
    let ics = compute_ics(&cl, &def_use_graph(&p));
    let q = rewrite(&p, &ics).map_err(|e| e.to_string())?;
    Ok(json!({
        "thresholds": t.to_string(),
        "profile": serde_json::from_str::<Value>(&np.to_json()).map_err(|e| e.to_string())?,
        "bins": cl,
        "ics": ics,
        "result": out.ret,
        "program": print_program(&p),
        "rewritten": print_program(&q),
    }))
}

/// Sweeps an `n`-point quadrature over the 2- or 3-value grid.
pub fn quad_grid(n: usize, values: usize) -> Result<Value, String> {
    let grid = match values {
        2 => Grid::two(),
        3 => Grid::three(),
        _ => return Err("grid must have 2 or 3 values per component".into()),
    };
    let b = Benchmark::quad(n, QuadLayout::Newton).map_err(|e| e.to_string())?;
    let r =
        sweep(&b.program, &b.input, &b.input, &grid, b.metric, EvalOptions::default()).map_err(|e| e.to_string())?;
    let sets: Vec<Value> = r
        .report
        .r_sets
        .iter()
        .map(|s| {
            let v = r.variants.iter().find(|v| s.ics_ids.contains(&v.ics_id)).expect("variant of result");
            json!({
                "size": s.size,
                "accuracy": s.accuracy,
                "change_sets": s.ics_ids.len(),
                "promoted": s.promoted_fraction.mean,
                "vector_cost": v.vector_cost,
                "primes": s.primes,
            })
        })
        .collect();
    Ok(json!({
        "vectors": r.records.len(),
        "change_sets": r.variants.len(),
        "single_error": r.baselines.single_error,
        "single_vector_cost": r.baselines.single_cost.1,
        "double_vector_cost": r.baselines.double_cost.1,
        "results": sets,
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exploreOp)]
pub fn explore_op(op: &str, a: f64, b: f64) -> Result<String, JsError> {
    to_js(explore(op, a, b))
}

#[wasm_bindgen(js_name = classifyExample)]
pub fn classify_example(a: f64, b: f64, thresholds: &str) -> Result<String, JsError> {
    to_js(example(a, b, thresholds))
}

#[wasm_bindgen(js_name = sweepQuadrature)]
pub fn sweep_quadrature(n: usize, values: usize) -> Result<String, JsError> {
    to_js(quad_grid(n, values))
}
