use std::fmt::Write as _;

use crate::classify::{format_value, parse_value, ThresholdError, ThresholdVector};

/// Sample values per threshold component; the grid is their Cartesian
/// product.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub samples: [Vec<f64>; 7],
}

fn pow2s(from: i32, step: i32, n: usize) -> Vec<f64> {
    (0..n as i32).map(|i| 2f64.powi(from + i * step)).collect()
}

impl Default for Grid {
    /// Six values per component (6^7 vectors).
    fn default() -> Self {
        Grid {
            samples: [
                vec![1.0, 5.0, 10.0, 25.0, 50.0, 75.0],
                vec![3.0, 6.0, 12.0, 25.0, 50.0, 100.0],
                vec![1.0, 5.0, 10.0, 25.0, 50.0, 75.0],
                vec![8.0, 12.0, 16.0, 20.0, 24.0, 28.0],
                vec![4.0, 8.0, 12.0, 16.0, 20.0, 23.0],
                pow2s(100, 5, 6),
                pow2s(-126, 6, 6),
            ],
        }
    }
}

const NAMES: [&str; 7] = ["t1", "t2", "t3", "t4", "t5", "t6", "t7"];

impl Grid {
    /// Picks the samples at `positions` from every component of the default
    /// grid; `Grid::subset(&[0, 2, 5])` gives a 3^7 grid.
    pub fn subset(positions: &[usize]) -> Grid {
        let d = Grid::default();
        Grid { samples: d.samples.map(|v| positions.iter().map(|&i| v[i]).collect()) }
    }

    /// Three values per component: 2187 vectors.
    pub fn three() -> Grid {
        Grid::subset(&[0, 2, 5])
    }

    /// The two extreme values per component: 128 vectors.
    pub fn two() -> Grid {
        Grid::subset(&[0, 5])
    }

    pub fn single(t: &ThresholdVector) -> Grid {
        Grid { samples: t.components().map(|c| vec![c]) }
    }

    pub fn len(&self) -> usize {
        self.samples.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `i`-th vector; `t7` varies fastest.
    pub fn vector(&self, mut i: usize) -> ThresholdVector {
        let mut c = [0.0; 7];
        for k in (0..7).rev() {
            let n = self.samples[k].len();
            c[k] = self.samples[k][i % n];
            i /= n;
        }
        ThresholdVector::from_components(c)
    }

    pub fn check(&self) -> Result<(), ThresholdError> {
        for (k, v) in self.samples.iter().enumerate() {
            if v.is_empty() {
                return Err(ThresholdError::Range(format!("{} has no samples", NAMES[k])));
            }
            if v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ThresholdError::Range(format!("{} samples must be strictly increasing", NAMES[k])));
            }
        }
        let lo = ThresholdVector::from_components(self.samples.clone().map(|v| v[0]));
        let hi = ThresholdVector::from_components(self.samples.clone().map(|v| v[v.len() - 1]));
        let mixed = ThresholdVector { t6: lo.t6, t7: hi.t7, ..hi };
        lo.check().and(hi.check()).and(mixed.check())
    }

    /// Parses lines `tK=v1,v2,…`; components that are not listed keep the
    /// default grid's samples.
    pub fn parse(text: &str) -> Result<Grid, ThresholdError> {
        let mut g = Grid::default();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ThresholdError::Syntax(line.to_string()))?;
            let k =
                NAMES.iter().position(|n| *n == k.trim()).ok_or_else(|| ThresholdError::Syntax(line.to_string()))?;
            let vals: Option<Vec<f64>> = v.split(',').map(parse_value).collect();
            g.samples[k] = vals.ok_or_else(|| ThresholdError::Syntax(line.to_string()))?;
        }
        g.check()?;
        Ok(g)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.samples.iter().enumerate() {
            let vals: Vec<String> = v.iter().map(|&x| format_value(x)).collect();
            let _ = writeln!(s, "{}={}", NAMES[k], vals.join(","));
        }
        s
    }
}

/// Full Cartesian product in deterministic order.
pub fn enumerate_grid(g: &Grid) -> Vec<ThresholdVector> {
    (0..g.len()).map(|i| g.vector(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(Grid::default().len(), 279_936);
        assert_eq!(Grid::three().len(), 2187);
        assert_eq!(Grid::two().len(), 128);
        assert_eq!(enumerate_grid(&Grid::single(&ThresholdVector::default())).len(), 1);
    }

    #[test]
    fn order_and_text() {
        let g = Grid::two();
        let v = enumerate_grid(&g);
        assert_eq!(v[0].t7, 2f64.powi(-126));
        assert_eq!(v[1].t7, 2f64.powi(-96));
        assert_eq!(v[127].t1, 75.0);
        assert_eq!(Grid::parse(&g.to_text()).unwrap(), g);
        assert!(Grid::parse("t1=5,1").is_err());
        assert!(Grid::parse("t5=30").is_err());
        for g in [Grid::default(), Grid::three()] {
            g.check().unwrap();
        }
    }
}
