//! Threshold-grid sweeps and the equivalence structures over them.
//!
//! A sweep profiles once, classifies every grid vector against that single
//! profile, and evaluates each distinct instruction change set only once.
//! Vectors are then grouped by bit-identical result (R-sets) and by change
//! set (IC-sets), and each R-set is reduced to its prime vectors.

mod cost;
mod grid;
mod prime;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cost::{cast_count, cost_estimate, float_op_count, CostModel};
pub use grid::{enumerate_grid, Grid};
pub use prime::prime_vectors;

use crate::bench::{accuracy, AccuracyMetric, BenchError};
use crate::classify::{classify, format_value, Bin, Classification, ProfileIndex, ThresholdVector};
use crate::interp::{run, ExecError, ExecInput, ExecOutput};
use crate::nir::{def_use_graph, DefUseGraph, PrecisionAssignment, Program};
use crate::profiler::{profile, NumericalProfile};
use crate::rewrite::{compute_ics, rewrite, InstructionChangeSet, RewriteError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Metric(#[from] BenchError),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Digest of every output array and the return value, bit for bit.
pub fn result_id(out: &ExecOutput) -> String {
    let mut h = Sha256::new();
    for (name, data) in &out.arrays {
        h.update(name.as_bytes());
        h.update([0]);
        for x in data {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    match out.ret {
        Some(r) => h.update(r.to_bits().to_le_bytes()),
        None => h.update(b"void"),
    }
    hex::encode(h.finalize())[..16].to_string()
}

fn short(ics: &InstructionChangeSet) -> String {
    ics.hash()[..16].to_string()
}

/// Result of classifying a whole grid against one training profile.
#[derive(Debug, Clone)]
pub struct Trained {
    pub profile: NumericalProfile,
    pub graph: DefUseGraph,
    pub grid: Grid,
    /// Distinct change sets, in order of first appearance in the grid.
    pub icss: Vec<InstructionChangeSet>,
    /// Index into `icss` for every grid vector.
    pub ics_of: Vec<u32>,
    pub float_ops: usize,
}

/// Profiles `program` on `input` and classifies every vector of `grid`.
pub fn train(program: &Program, input: &ExecInput, grid: &Grid) -> Result<Trained, SweepError> {
    let (np, _, _) = profile(program, input)?;
    Ok(train_from_profile(program, np, grid))
}

pub fn train_from_profile(program: &Program, np: NumericalProfile, grid: &Grid) -> Trained {
    let graph = def_use_graph(program);
    let index = ProfileIndex::new(&np);
    let mut by_bins: HashMap<Vec<Bin>, u32> = HashMap::new();
    let mut by_hash: HashMap<String, u32> = HashMap::new();
    let mut icss = Vec::new();
    let mut ics_of = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let bins = index.bins(&grid.vector(i));
        let ix = match by_bins.get(&bins) {
            Some(&ix) => ix,
            None => {
                let ics = compute_ics(&Classification::from_bins(index.ids(), &bins), &graph);
                let ix = *by_hash.entry(ics.hash()).or_insert_with(|| {
                    icss.push(ics);
                    (icss.len() - 1) as u32
                });
                by_bins.insert(bins, ix);
                ix
            }
        };
        ics_of.push(ix);
    }
    Trained { float_ops: program.float_arith_ids().len(), profile: np, graph, grid: grid.clone(), icss, ics_of }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub vector_width: u32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { jobs: None, vector_width: 256 }
    }
}

/// One evaluated change set.
#[derive(Debug, Clone, Serialize)]
pub struct Variant {
    pub ics: InstructionChangeSet,
    pub ics_id: String,
    pub result_id: String,
    pub accuracy: f64,
    pub promoted_fraction: f64,
    pub scalar_cost: f64,
    pub vector_cost: f64,
    pub casts: u64,
    pub float_ops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub t: ThresholdVector,
    pub ics_id: String,
    pub result_id: String,
    pub accuracy: f64,
    pub promoted_fraction: f64,
    pub scalar_cost: f64,
    pub vector_cost: f64,
}

/// Uniform-width reference runs of the evaluation program.
#[derive(Debug, Clone)]
pub struct Baselines {
    pub double: ExecOutput,
    pub single: ExecOutput,
    pub single_error: f64,
    pub single_cost: (f64, f64),
    pub double_cost: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub variants: Vec<Variant>,
    pub baselines: Baselines,
    pub report: EquivalenceReport,
}

fn costs(out: &ExecOutput, width: u32) -> (f64, f64) {
    (cost_estimate(&out.op_counts, CostModel::Scalar), cost_estimate(&out.op_counts, CostModel::vector(width)))
}

pub fn baselines(p: &Program, input: &ExecInput, metric: AccuracyMetric, width: u32) -> Result<Baselines, SweepError> {
    let double = run(p, input, &PrecisionAssignment::UniformF64, None)?;
    let single = run(p, input, &PrecisionAssignment::UniformF32, None)?;
    Ok(Baselines {
        single_error: accuracy(&single, &double, metric)?,
        single_cost: costs(&single, width),
        double_cost: costs(&double, width),
        double,
        single,
    })
}

/// Rewrites `p` for `ics`, runs it and scores it against `baseline`.
pub fn evaluate_ics(
    p: &Program,
    input: &ExecInput,
    ics: &InstructionChangeSet,
    baseline: &ExecOutput,
    metric: AccuracyMetric,
    width: u32,
) -> Result<(Variant, ExecOutput), SweepError> {
    let q = rewrite(p, ics)?;
    let out = run(&q, input, &PrecisionAssignment::declared(), None)?;
    let (scalar_cost, vector_cost) = costs(&out, width);
    let total = p.float_arith_ids().len().max(1);
    let v = Variant {
        ics: ics.clone(),
        ics_id: short(ics),
        result_id: result_id(&out),
        accuracy: accuracy(&out, baseline, metric)?,
        promoted_fraction: ics.len() as f64 / total as f64,
        scalar_cost,
        vector_cost,
        casts: cast_count(&out.op_counts),
        float_ops: float_op_count(&out.op_counts),
    };
    Ok((v, out))
}

impl Trained {
    /// Runs every distinct change set on `(program, input)`, which may be a
    /// different size of the training program, and builds the report.
    pub fn evaluate(
        &self,
        program: &Program,
        input: &ExecInput,
        metric: AccuracyMetric,
        opts: EvalOptions,
    ) -> Result<SweepResult, SweepError> {
        let base = baselines(program, input, metric, opts.vector_width)?;
        let work = || -> Result<Vec<Variant>, SweepError> {
            self.icss
                .par_iter()
                .map(|ics| evaluate_ics(program, input, ics, &base.double, metric, opts.vector_width).map(|(v, _)| v))
                .collect()
        };
        let variants = match opts.jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SweepError::Pool(e.to_string()))?
                .install(work)?,
            None => work()?,
        };
        let records = (0..self.grid.len())
            .map(|i| {
                let v = &variants[self.ics_of[i] as usize];
                SweepRecord {
                    t: self.grid.vector(i),
                    ics_id: v.ics_id.clone(),
                    result_id: v.result_id.clone(),
                    accuracy: v.accuracy,
                    promoted_fraction: v.promoted_fraction,
                    scalar_cost: v.scalar_cost,
                    vector_cost: v.vector_cost,
                }
            })
            .collect::<Vec<_>>();
        let report = EquivalenceReport::build(&records);
        Ok(SweepResult { records, variants, baselines: base, report })
    }
}

/// Train and evaluate on the same program.
pub fn sweep(
    p: &Program,
    train_input: &ExecInput,
    eval_input: &ExecInput,
    grid: &Grid,
    metric: AccuracyMetric,
    opts: EvalOptions,
) -> Result<SweepResult, SweepError> {
    train(p, train_input, grid)?.evaluate(p, eval_input, metric, opts)
}

/// Reference sweep that classifies, rewrites and runs every vector on its
/// own, with no sharing between vectors.
pub fn sweep_without_dedup(
    p: &Program,
    train_input: &ExecInput,
    eval_input: &ExecInput,
    grid: &Grid,
    metric: AccuracyMetric,
    width: u32,
) -> Result<Vec<SweepRecord>, SweepError> {
    let (np, _, _) = profile(p, train_input)?;
    let g = def_use_graph(p);
    let base = run(p, eval_input, &PrecisionAssignment::UniformF64, None)?;
    enumerate_grid(grid)
        .into_par_iter()
        .map(|t| {
            let ics = compute_ics(&classify(&np, &t), &g);
            let (v, _) = evaluate_ics(p, eval_input, &ics, &base, metric, width)?;
            Ok(SweepRecord {
                t,
                ics_id: v.ics_id,
                result_id: v.result_id,
                accuracy: v.accuracy,
                promoted_fraction: v.promoted_fraction,
                scalar_cost: v.scalar_cost,
                vector_cost: v.vector_cost,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Vectors sharing one bit-identical result.
#[derive(Debug, Clone, Serialize)]
pub struct ResultSet {
    pub result_id: String,
    pub size: usize,
    pub accuracy: f64,
    pub ics_ids: Vec<String>,
    pub promoted_fraction: Stats,
    /// Non-redundant members, as threshold strings.
    pub primes: Vec<String>,
    #[serde(skip)]
    pub members: Vec<usize>,
    #[serde(skip)]
    pub prime_members: Vec<usize>,
}

/// Vectors sharing one instruction change set.
#[derive(Debug, Clone, Serialize)]
pub struct IcsSet {
    pub ics_id: String,
    pub result_id: String,
    pub size: usize,
    #[serde(skip)]
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub grid_size: usize,
    pub r_sets: Vec<ResultSet>,
    pub ic_sets: Vec<IcsSet>,
}

impl EquivalenceReport {
    /// Member indices refer to `records`. Sets are ordered by decreasing
    /// size, ties by id.
    pub fn build(records: &[SweepRecord]) -> EquivalenceReport {
        let mut by_result: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        let mut by_ics: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            by_result.entry(&r.result_id).or_default().push(i);
            by_ics.entry(&r.ics_id).or_default().push(i);
        }
        let mut r_sets: Vec<ResultSet> = by_result
            .into_iter()
            .map(|(rid, members)| {
                let vecs: Vec<ThresholdVector> = members.iter().map(|&i| records[i].t).collect();
                let prime_members: Vec<usize> = prime_vectors(&vecs).into_iter().map(|k| members[k]).collect();
                let mut ics_ids: Vec<String> = members.iter().map(|&i| records[i].ics_id.clone()).collect();
                ics_ids.sort();
                ics_ids.dedup();
                let pf: Vec<f64> = members.iter().map(|&i| records[i].promoted_fraction).collect();
                ResultSet {
                    result_id: rid.to_string(),
                    size: members.len(),
                    accuracy: records[members[0]].accuracy,
                    ics_ids,
                    promoted_fraction: Stats {
                        min: pf.iter().copied().fold(f64::INFINITY, f64::min),
                        mean: pf.iter().sum::<f64>() / pf.len() as f64,
                        max: pf.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    },
                    primes: prime_members.iter().map(|&i| records[i].t.to_string()).collect(),
                    members,
                    prime_members,
                }
            })
            .collect();
        r_sets.sort_by(|a, b| b.size.cmp(&a.size).then_with(|| a.result_id.cmp(&b.result_id)));
        let mut ic_sets: Vec<IcsSet> = by_ics
            .into_iter()
            .map(|(id, members)| IcsSet {
                ics_id: id.to_string(),
                result_id: records[members[0]].result_id.clone(),
                size: members.len(),
                members,
            })
            .collect();
        ic_sets.sort_by(|a, b| b.size.cmp(&a.size).then_with(|| a.ics_id.cmp(&b.ics_id)));
        EquivalenceReport { grid_size: records.len(), r_sets, ic_sets }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

pub const CSV_HEADER: &str = "t1,t2,t3,t4,t5,t6,t7,ics_id,result_id,accuracy,promoted_fraction,scalar_cost,vector_cost";

pub fn records_csv(records: &[SweepRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 120);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in records {
        let t = r.t;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{:e},{},{},{}",
            format_value(t.t1),
            format_value(t.t2),
            format_value(t.t3),
            t.t4,
            t.t5,
            format_value(t.t6),
            format_value(t.t7),
            r.ics_id,
            r.result_id,
            r.accuracy,
            r.promoted_fraction,
            r.scalar_cost,
            r.vector_cost
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nir::parse_text;

    #[test]
    fn exact_program_has_one_result() {
        let p = parse_text(
            "func @f(%A: arr<f32, 2>) -> f32 { entry:
               %a = load f32 %A, 0
               %b = load f32 %A, 1
               %c = fadd f32 %a, %b
               %d = fmul f32 %c, %b
               ret %d }",
        )
        .unwrap();
        let input = ExecInput::default().with_array("A", vec![1.5, 2.0]);
        let r = sweep(&p, &input, &input, &Grid::two(), AccuracyMetric::AbsError, EvalOptions::default()).unwrap();
        assert_eq!(r.report.r_sets.len(), 1);
        assert_eq!(r.report.r_sets[0].size, 128);
        assert_eq!(r.variants.len(), 1);
        assert!(r.variants[0].ics.is_empty());
        assert_eq!(r.report.r_sets[0].prime_members.len(), 1);
        let csv = records_csv(&r.records);
        assert_eq!(csv.lines().count(), 129);
    }
}
