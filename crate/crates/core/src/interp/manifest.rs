//! Input manifests: line-oriented `key=value` files describing the arrays
//! and scalars bound to a program's parameters.
//!
//! ```text
//! array.A.type=f32
//! array.A.len=10000
//! array.A.gen=uniform(-1e6,1e6)
//! array.A.seed=42
//! array.B.data=b.txt
//! scalar.n=100
//! step_limit=1000000000
//! ```
//!
//! Data files hold one decimal value per line and are resolved relative to
//! the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{ExecInput, DEFAULT_STEP_LIMIT};
use crate::nir::{Precision, Program};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("array {0}: {1}")]
    Array(String, String),
}

/// splitmix64 stream.
#[derive(Debug, Clone)]
pub struct SplitMix64(pub u64);

impl SplitMix64 {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform double in `[0, 1)` from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * 2f64.powi(-53)
    }
}

/// `len` samples of `lo + u·(hi − lo)`, rounded to `prec`.
pub fn uniform(seed: u64, len: usize, lo: f64, hi: f64, prec: Precision) -> Vec<f64> {
    let mut g = SplitMix64(seed);
    (0..len).map(|_| prec.round(lo + g.next_unit() * (hi - lo))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Data(PathBuf),
    Uniform { lo: f64, hi: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayEntry {
    pub ty: Precision,
    pub len: Option<usize>,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub arrays: BTreeMap<String, ArrayEntry>,
    pub scalars: BTreeMap<String, f64>,
    pub step_limit: u64,
}

fn parse_uniform(v: &str) -> Option<(f64, f64)> {
    let inner = v.strip_prefix("uniform(")?.strip_suffix(')')?;
    let (a, b) = inner.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Manifest, ManifestError> {
        #[derive(Default)]
        struct Partial {
            ty: Option<Precision>,
            len: Option<usize>,
            data: Option<PathBuf>,
            gen: Option<(f64, f64)>,
            seed: Option<u64>,
        }
        let mut arrays: BTreeMap<String, Partial> = BTreeMap::new();
        let mut scalars = BTreeMap::new();
        let mut step_limit = DEFAULT_STEP_LIMIT;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            let err = |msg: &str| ManifestError::Syntax { line, msg: msg.to_string() };
            let (k, v) = s.split_once('=').ok_or_else(|| err("expected key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            let parts: Vec<&str> = k.split('.').collect();
            match parts.as_slice() {
                ["step_limit"] => step_limit = v.parse().map_err(|_| err("bad step_limit"))?,
                ["scalar", name] => {
                    scalars.insert(name.to_string(), v.parse().map_err(|_| err("bad scalar value"))?);
                }
                ["array", name, field] => {
                    let a = arrays.entry(name.to_string()).or_default();
                    match *field {
                        "type" => {
                            a.ty = Some(match v {
                                "f32" => Precision::F32,
                                "f64" => Precision::F64,
                                _ => return Err(err("type must be f32 or f64")),
                            })
                        }
                        "len" => a.len = Some(v.parse().map_err(|_| err("bad len"))?),
                        "data" => a.data = Some(PathBuf::from(v)),
                        "gen" => a.gen = Some(parse_uniform(v).ok_or_else(|| err("expected uniform(lo,hi)"))?),
                        "seed" => a.seed = Some(v.parse().map_err(|_| err("bad seed"))?),
                        _ => return Err(err("unknown array field")),
                    }
                }
                _ => return Err(err("unknown key")),
            }
        }
        let mut out = BTreeMap::new();
        for (name, a) in arrays {
            let bad = |m: &str| ManifestError::Array(name.clone(), m.to_string());
            let source = match (a.data, a.gen) {
                (Some(p), None) => Source::Data(p),
                (None, Some((lo, hi))) => Source::Uniform { lo, hi, seed: a.seed.unwrap_or(0) },
                _ => return Err(bad("exactly one of data or gen is required")),
            };
            if matches!(source, Source::Uniform { .. }) && a.len.is_none() {
                return Err(bad("generated arrays need len"));
            }
            out.insert(name, ArrayEntry { ty: a.ty.unwrap_or(Precision::F32), len: a.len, source });
        }
        Ok(Manifest { arrays: out, scalars, step_limit })
    }

    /// Materialises the input, reading data files relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<ExecInput, ManifestError> {
        let mut arrays = BTreeMap::new();
        for (name, a) in &self.arrays {
            let data = match &a.source {
                Source::Uniform { lo, hi, seed } => uniform(*seed, a.len.unwrap_or(0), *lo, *hi, a.ty),
                Source::Data(p) => {
                    let path = base.join(p);
                    let text =
                        fs::read_to_string(&path).map_err(|source| ManifestError::Io { path: path.clone(), source })?;
                    let mut v = Vec::new();
                    for (i, l) in text.lines().map(str::trim).filter(|l| !l.is_empty()).enumerate() {
                        let x: f64 = l.parse().map_err(|_| {
                            ManifestError::Array(name.clone(), format!("bad value on data line {}", i + 1))
                        })?;
                        v.push(a.ty.round(x));
                    }
                    if let Some(len) = a.len {
                        if len != v.len() {
                            return Err(ManifestError::Array(
                                name.clone(),
                                format!("len={len} but data has {}", v.len()),
                            ));
                        }
                    }
                    v
                }
            };
            arrays.insert(name.clone(), data);
        }
        Ok(ExecInput { arrays, scalars: self.scalars.clone(), step_limit: self.step_limit })
    }
}

pub fn load(path: &Path) -> Result<ExecInput, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.into(), source })?;
    Manifest::parse(&text)?.resolve(path.parent().unwrap_or(Path::new(".")))
}

/// Writes `input` as a manifest at `path` with one data file per array next
/// to it (`<stem>.<array>.txt`). Element types come from `program`.
pub fn write(path: &Path, input: &ExecInput, program: &Program) -> Result<(), ManifestError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |source| ManifestError::Io { path: p, source }
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
    let elem: BTreeMap<String, Precision> =
        program.entry_function().map(|f| f.arrays().map(|a| (a.name, a.elem)).collect()).unwrap_or_default();
    let mut text = String::new();
    for (name, data) in &input.arrays {
        let file = format!("{stem}.{name}.txt");
        let mut body = String::with_capacity(data.len() * 16);
        for x in data {
            let _ = writeln!(body, "{x:?}");
        }
        let dp = dir.join(&file);
        fs::write(&dp, body).map_err(io(&dp))?;
        let ty = elem.get(name).copied().unwrap_or(Precision::F32);
        let _ = writeln!(text, "array.{name}.type={ty}\narray.{name}.len={}\narray.{name}.data={file}", data.len());
    }
    for (name, v) in &input.scalars {
        let _ = writeln!(text, "scalar.{name}={v:?}");
    }
    let _ = writeln!(text, "step_limit={}", input.step_limit);
    fs::write(path, text).map_err(io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_stream() {
        let mut g = SplitMix64(0);
        assert_eq!(g.next_u64(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(g.next_u64(), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn generated_values_are_in_range_and_rounded() {
        let v = uniform(42, 1000, -1e6, 1e6, Precision::F32);
        assert!(v.iter().all(|&x| (-1e6..=1e6).contains(&x) && x as f32 as f64 == x));
        assert_eq!(v, uniform(42, 1000, -1e6, 1e6, Precision::F32));
    }

    #[test]
    fn parses_all_keys() {
        let m = Manifest::parse(
            "# input\narray.A.len=3\narray.A.gen=uniform(-1, 1)\narray.A.seed=7\nscalar.n=3\nstep_limit=99\n",
        )
        .unwrap();
        let input = m.resolve(Path::new(".")).unwrap();
        assert_eq!(input.arrays["A"], uniform(7, 3, -1.0, 1.0, Precision::F32));
        assert_eq!(input.scalars["n"], 3.0);
        assert_eq!(input.step_limit, 99);
        assert!(matches!(Manifest::parse("array.A.gen=normal(0,1)"), Err(ManifestError::Syntax { line: 1, .. })));
        assert!(Manifest::parse("array.A.len=2").is_err());
    }
}
