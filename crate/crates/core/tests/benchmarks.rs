use amp_core::bench::{accuracy, gen_matrix, quad_exact, AccuracyMetric, Benchmark, MatrixInput, QuadLayout};
use amp_core::interp::run;
use amp_core::nir::{def_use_graph, NodeKind, Op, PrecisionAssignment};
use amp_core::profiler::profile;

/// Doolittle elimination in place, row-major, k outer, then i, then j.
fn host_lu<T>(a: &mut [T], n: usize)
where
    T: Copy + std::ops::Div<Output = T> + std::ops::Mul<Output = T> + std::ops::Sub<Output = T>,
{
    for k in 0..n - 1 {
        let pivot = a[k * n + k];
        for i in k + 1..n {
            let l = a[i * n + k] / pivot;
            a[i * n + k] = l;
            for j in k + 1..n {
                a[i * n + j] = a[i * n + j] - l * a[k * n + j];
            }
        }
    }
}

#[test]
fn lu_matches_host_reference_in_double() {
    let b = Benchmark::lu(4, 42).unwrap();
    let out = run(&b.program, &b.input, &PrecisionAssignment::UniformF64, None).unwrap();
    let mut a = b.input.arrays["A"].clone();
    host_lu(&mut a, 4);
    let got: Vec<u64> = out.arrays["A"].iter().map(|v| v.to_bits()).collect();
    let want: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
    assert_eq!(got, want);
}

#[test]
fn lu_matches_host_reference_in_single() {
    let b = Benchmark::lu(9, 7).unwrap();
    let out = run(&b.program, &b.input, &PrecisionAssignment::UniformF32, None).unwrap();
    let mut a: Vec<f32> = b.input.arrays["A"].iter().map(|&v| v as f32).collect();
    host_lu(&mut a, 9);
    let got: Vec<u32> = out.arrays["A"].iter().map(|&v| (v as f32).to_bits()).collect();
    let want: Vec<u32> = a.iter().map(|v| v.to_bits()).collect();
    assert_eq!(got, want);
}

#[test]
fn lu_single_error_is_positive() {
    let b = Benchmark::lu(100, 42).unwrap();
    let d = run(&b.program, &b.input, &PrecisionAssignment::UniformF64, None).unwrap();
    let s = run(&b.program, &b.input, &PrecisionAssignment::UniformF32, None).unwrap();
    assert!(accuracy(&s, &d, AccuracyMetric::Frobenius).unwrap() > 0.0);
    assert_eq!(accuracy(&d, &d, AccuracyMetric::Frobenius).unwrap(), 0.0);
}

#[test]
fn lu_graph_nodes_cover_float_ops() {
    let b = Benchmark::lu(6, 1).unwrap();
    let g = def_use_graph(&b.program);
    let arith = g.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Arith | NodeKind::Call)).count();
    let counted = b
        .program
        .functions
        .iter()
        .flat_map(|f| f.instrs())
        .filter(|(_, _, i)| matches!(i.op, Op::FBin { .. } | Op::FCall { .. }))
        .count();
    assert_eq!(arith, counted);
    assert_eq!(counted, 3);
}

#[test]
fn lu_profile_size_is_independent_of_matrix_size() {
    let sizes: Vec<(usize, usize)> = [6, 20]
        .iter()
        .map(|&n| {
            let b = Benchmark::lu(n, 5).unwrap();
            let (np, _, _) = profile(&b.program, &b.input).unwrap();
            (np.entries.len(), np.to_json().len())
        })
        .collect();
    assert_eq!(sizes[0].0, 3);
    assert_eq!(sizes[0].0, sizes[1].0);
}

#[test]
fn generator_is_reproducible() {
    let a = gen_matrix(MatrixInput::new(10, 99));
    let b = gen_matrix(MatrixInput::new(10, 99));
    let c = gen_matrix(MatrixInput::new(10, 100));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.arrays["A"].iter().all(|&v| (-1e6..=1e6).contains(&v) && v == (v as f32) as f64));
}

#[test]
fn quadrature_single_and_double_differ_by_about_a_thousandth() {
    let b = Benchmark::quad(20, QuadLayout::Newton).unwrap();
    let d = run(&b.program, &b.input, &PrecisionAssignment::UniformF64, None).unwrap();
    let s = run(&b.program, &b.input, &PrecisionAssignment::UniformF32, None).unwrap();
    let err = accuracy(&s, &d, AccuracyMetric::AbsError).unwrap();
    assert!((1e-4..1e-2).contains(&err), "{err:e}");
    let exact = quad_exact();
    assert!(((d.ret.unwrap() - exact) / exact).abs() < 1e-10);
}

#[test]
fn closed_form_of_the_integral() {
    // Adaptive quadrature at 30 digits.
    let reference = 3_249.458_940_574_442;
    assert!((quad_exact() - reference).abs() < 1e-9);
}

#[test]
fn runs_are_deterministic() {
    let b = Benchmark::quad(12, QuadLayout::Newton).unwrap();
    let x = run(&b.program, &b.input, &PrecisionAssignment::UniformF32, None).unwrap();
    let y = run(&b.program, &b.input, &PrecisionAssignment::UniformF32, None).unwrap();
    assert_eq!(x, y);
    assert!(x.steps > 0);
}
