//! The two case studies: in-place LU factorization and Gauss-Legendre
//! quadrature of `sin(x)·e^x` over `[-10, 10]`, with their inputs and
//! accuracy metrics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::interp::manifest::uniform;
use crate::interp::{ExecInput, ExecOutput};
use crate::nir::{parse_text, Precision, Program};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("size must be at least 2, got {0}")]
    TooSmall(usize),
    #[error("Newton iteration for root {0} did not converge")]
    NoConvergence(usize),
    #[error("outputs have different shapes")]
    Shape,
}

/// Doolittle LU without pivoting over an `n×n` row-major F32 array, in
/// place: `L` (unit diagonal implied) below the diagonal, `U` on and above.
/// Loop order is k, then i, then j. Instruction names do not depend on `n`.
pub fn lu_program(n: usize) -> Result<Program, BenchError> {
    if n < 2 {
        return Err(BenchError::TooSmall(n));
    }
    let text = format!(
        "func @lu(%A: arr<f32, {nn}>) -> void {{
entry:
  %n = iconst {n}
  %nm1 = iconst {nm1}
  br k.head
k.head:
  %k = phi i64 [0, entry], [%k.next, k.latch]
  %kk = idx %k, %k, %n
  %pivot = load f32 %A, %kk
  %i0 = iadd %k, 1
  br i.head
i.head:
  %i = phi i64 [%i0, k.head], [%i.next, i.latch]
  %ik = idx %i, %k, %n
  %aik = load f32 %A, %ik
  %l = fdiv f32 %aik, %pivot
  store f32 %A, %ik, %l
  br j.head
j.head:
  %j = phi i64 [%i0, i.head], [%j.next, j.head]
  %ij = idx %i, %j, %n
  %kj = idx %k, %j, %n
  %aij = load f32 %A, %ij
  %akj = load f32 %A, %kj
  %prod = fmul f32 %l, %akj
  %diff = fsub f32 %aij, %prod
  store f32 %A, %ij, %diff
  %j.next = iadd %j, 1
  %jc = icmp lt %j.next, %n
  brcond %jc, j.head, i.latch
i.latch:
  %i.next = iadd %i, 1
  %ic = icmp lt %i.next, %n
  brcond %ic, i.head, k.latch
k.latch:
  %k.next = iadd %k, 1
  %kc = icmp lt %k.next, %nm1
  brcond %kc, k.head, exit
exit:
  ret
}}
",
        nn = n * n,
        nm1 = n - 1
    );
    Ok(parse_text(&text).expect("LU program is well formed"))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixInput {
    pub n: usize,
    pub seed: u64,
    pub low: f64,
    pub high: f64,
}

impl MatrixInput {
    pub fn new(n: usize, seed: u64) -> Self {
        MatrixInput { n, seed, low: -1e6, high: 1e6 }
    }
}

/// Input for [`lu_program`]: array `A` filled row-major from the seeded
/// generator and rounded to F32.
pub fn gen_matrix(mi: MatrixInput) -> ExecInput {
    ExecInput::default().with_array("A", uniform(mi.seed, mi.n * mi.n, mi.low, mi.high, Precision::F32))
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`, by Newton
/// iteration on the three-term recurrence.
pub fn gauss_legendre_nodes(n: usize) -> Result<(Vec<f64>, Vec<f64>), BenchError> {
    if n < 2 {
        return Err(BenchError::TooSmall(n));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = initial_guess(n, i);
        let mut converged = false;
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(BenchError::NoConvergence(i));
        }
        let (_, d) = legendre(n, x);
        dp = if d.is_finite() { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Starting point for the `i`-th largest root of `P_n`.
pub fn initial_guess(n: usize, i: usize) -> f64 {
    (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos()
}

/// `(P_n(x), P_n'(x))`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Half-width of the integration interval, centred on zero.
pub const QUAD_HALF_WIDTH: f64 = 10.0;

/// `∫_{-10}^{10} sin(x)·e^x dx = [e^x (sin x − cos x) / 2]`.
pub fn quad_exact() -> f64 {
    let f = |x: f64| x.exp() * (x.sin() - x.cos()) / 2.0;
    f(QUAD_HALF_WIDTH) - f(-QUAD_HALF_WIDTH)
}

/// How the quadrature program obtains its nodes and weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuadLayout {
    /// Starting guesses are stored; the program refines each node by five
    /// Newton steps on the Legendre recurrence and derives its weight.
    #[default]
    Newton,
    /// Mapped nodes and weights are computed host-side in double and stored
    /// as F32 arrays.
    StoredNodes,
}

/// Program computing `Σ wᵢ·sin(xᵢ)·e^{xᵢ}` with a sequential sum.
pub fn quad_program(n: usize, layout: QuadLayout) -> Result<Program, BenchError> {
    if n < 2 {
        return Err(BenchError::TooSmall(n));
    }
    let text = match layout {
        QuadLayout::Newton => format!(
            "func @quad(%g: arr<f32, {n}>) -> f32 {{
entry:
  %zero = fconst f32 0.0
  %one = fconst f32 1.0
  %two = fconst f32 2.0
  %scale = fconst f32 {s:?}
  %nf = fconst f32 {nf:?}
  br node
node:
  %q = phi i64 [0, entry], [%q.next, accum]
  %sum = phi f32 [%zero, entry], [%sum.next, accum]
  %x0 = load f32 %g, %q
  br newton
newton:
  %it = phi i64 [0, node], [%it.next, newton.latch]
  %x = phi f32 [%x0, node], [%x.next, newton.latch]
  br rec
rec:
  %k = phi i64 [2, newton], [%k.next, rec]
  %kf.prev = phi f32 [%one, newton], [%kf, rec]
  %p0 = phi f32 [%one, newton], [%p1, rec]
  %p1 = phi f32 [%x, newton], [%p2, rec]
  %kf = fadd f32 %kf.prev, %one
  %kf2 = fadd f32 %kf, %kf
  %a = fsub f32 %kf2, %one
  %b = fsub f32 %kf, %one
  %ax = fmul f32 %a, %x
  %axp = fmul f32 %ax, %p1
  %bp = fmul f32 %b, %p0
  %num = fsub f32 %axp, %bp
  %p2 = fdiv f32 %num, %kf
  %k.next = iadd %k, 1
  %kc = icmp le %k.next, {n}
  brcond %kc, rec, newton.latch
newton.latch:
  %xp = fmul f32 %x, %p2
  %dnum = fsub f32 %xp, %p1
  %xx = fmul f32 %x, %x
  %dden = fsub f32 %xx, %one
  %ndnum = fmul f32 %nf, %dnum
  %dp = fdiv f32 %ndnum, %dden
  %step = fdiv f32 %p2, %dp
  %x.next = fsub f32 %x, %step
  %it.next = iadd %it, 1
  %itc = icmp lt %it.next, 5
  brcond %itc, newton, accum
accum:
  %omx = fsub f32 %one, %xx
  %wd = fmul f32 %omx, %dp
  %wd2 = fmul f32 %wd, %dp
  %w = fdiv f32 %two, %wd2
  %xs = fmul f32 %scale, %x.next
  %ws = fmul f32 %scale, %w
  %sn = fcall sin f32 %xs
  %ex = fcall exp f32 %xs
  %t1 = fmul f32 %ws, %sn
  %term = fmul f32 %t1, %ex
  %sum.next = fadd f32 %sum, %term
  %q.next = iadd %q, 1
  %qc = icmp lt %q.next, {n}
  brcond %qc, node, exit
exit:
  ret %sum.next
}}
",
            s = QUAD_HALF_WIDTH,
            nf = n as f64
        ),
        QuadLayout::StoredNodes => format!(
            "func @quad(%x: arr<f32, {n}>, %w: arr<f32, {n}>) -> f32 {{
entry:
  %zero = fconst f32 0.0
  br body
body:
  %q = phi i64 [0, entry], [%q.next, body]
  %sum = phi f32 [%zero, entry], [%sum.next, body]
  %xi = load f32 %x, %q
  %wi = load f32 %w, %q
  %sn = fcall sin f32 %xi
  %ex = fcall exp f32 %xi
  %t1 = fmul f32 %wi, %sn
  %term = fmul f32 %t1, %ex
  %sum.next = fadd f32 %sum, %term
  %q.next = iadd %q, 1
  %qc = icmp lt %q.next, {n}
  brcond %qc, body, exit
exit:
  ret %sum.next
}}
"
        ),
    };
    Ok(parse_text(&text).expect("quadrature program is well formed"))
}

/// Input for [`quad_program`] with the same `n` and layout.
pub fn quad_input(n: usize, layout: QuadLayout) -> Result<ExecInput, BenchError> {
    let f32r = |v: f64| Precision::F32.round(v);
    Ok(match layout {
        QuadLayout::Newton => {
            let g = (0..n).map(|i| f32r(initial_guess(n, i))).collect();
            ExecInput::default().with_array("g", g)
        }
        QuadLayout::StoredNodes => {
            let (x, w) = gauss_legendre_nodes(n)?;
            ExecInput::default()
                .with_array("x", x.iter().map(|v| f32r(v * QUAD_HALF_WIDTH)).collect())
                .with_array("w", w.iter().map(|v| f32r(v * QUAD_HALF_WIDTH)).collect())
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum AccuracyMetric {
    /// Square root of the summed squared differences over every output
    /// array.
    Frobenius,
    /// Absolute difference of the return values.
    AbsError,
}

pub fn accuracy(out: &ExecOutput, baseline: &ExecOutput, metric: AccuracyMetric) -> Result<f64, BenchError> {
    match metric {
        AccuracyMetric::AbsError => match (out.ret, baseline.ret) {
            (Some(a), Some(b)) => Ok((a - b).abs()),
            _ => Err(BenchError::Shape),
        },
        AccuracyMetric::Frobenius => {
            if out.arrays.len() != baseline.arrays.len() {
                return Err(BenchError::Shape);
            }
            let mut s = 0.0;
            for ((ka, a), (kb, b)) in out.arrays.iter().zip(&baseline.arrays) {
                if ka != kb || a.len() != b.len() {
                    return Err(BenchError::Shape);
                }
                s += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
            Ok(s.sqrt())
        }
    }
}

/// A benchmark instance ready to run: program, input and metric.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: String,
    pub program: Program,
    pub input: ExecInput,
    pub metric: AccuracyMetric,
}

impl Benchmark {
    pub fn lu(n: usize, seed: u64) -> Result<Benchmark, BenchError> {
        Ok(Benchmark {
            name: format!("lu{n}"),
            program: lu_program(n)?,
            input: gen_matrix(MatrixInput::new(n, seed)),
            metric: AccuracyMetric::Frobenius,
        })
    }

    pub fn quad(n: usize, layout: QuadLayout) -> Result<Benchmark, BenchError> {
        Ok(Benchmark {
            name: format!("quad{n}"),
            program: quad_program(n, layout)?,
            input: quad_input(n, layout)?,
            metric: AccuracyMetric::AbsError,
        })
    }
}

/// Summary lines describing a benchmark, for the CLI.
pub fn describe(b: &Benchmark) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "benchmark {}", b.name);
    let _ = writeln!(s, "float ops {}", b.program.float_arith_ids().len());
    let _ = writeln!(s, "metric {:?}", b.metric);
    s
}
