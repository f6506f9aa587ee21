use crate::classify::{monotone_direction, Direction, ThresholdVector};

/// Indices of the prime vectors of `set`.
///
/// `V` is redundant when another member `W` promotes no more than `V` in
/// every component, since whatever `W` promotes `V` promotes too; the
/// primes are the least promoting members. Components are rank-compressed
/// and dominance is decided with a dynamic program over the compressed
/// lattice, falling back to pairwise comparison when that lattice is large.
pub fn prime_vectors(set: &[ThresholdVector]) -> Vec<usize> {
    if set.len() <= 1 {
        return (0..set.len()).collect();
    }
    let dirs = monotone_direction();
    // Rank 0 is the least promoting value of a component.
    let mut dims = [0usize; 7];
    let mut ranks: Vec<[usize; 7]> = vec![[0; 7]; set.len()];
    for k in 0..7 {
        let mut vals: Vec<f64> = set.iter().map(|t| t.components()[k]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        if dirs[k] == Direction::Decrease {
            vals.reverse();
        }
        dims[k] = vals.len();
        for (r, t) in ranks.iter_mut().zip(set) {
            let c = t.components()[k];
            r[k] = vals.iter().position(|&v| v == c).expect("value present");
        }
    }
    let cells: usize = dims.iter().product();
    if cells > (1 << 22) {
        return pairwise(&ranks);
    }
    let mut stride = [1usize; 7];
    for k in (0..6).rev() {
        stride[k] = stride[k + 1] * dims[k + 1];
    }
    let flat = |r: &[usize; 7]| r.iter().zip(&stride).map(|(a, b)| a * b).sum::<usize>();
    // reach[x]: some member lies componentwise at or below x.
    let mut reach = vec![false; cells];
    for r in &ranks {
        reach[flat(r)] = true;
    }
    for x in 0..cells {
        if reach[x] {
            continue;
        }
        let mut rem = x;
        for k in 0..7 {
            let coord = rem / stride[k];
            rem %= stride[k];
            if coord > 0 && reach[x - stride[k]] {
                reach[x] = true;
                break;
            }
        }
    }
    (0..set.len())
        .filter(|&i| {
            let x = flat(&ranks[i]);
            !(0..7).any(|k| ranks[i][k] > 0 && reach[x - stride[k]])
        })
        .collect()
}

fn pairwise(ranks: &[[usize; 7]]) -> Vec<usize> {
    (0..ranks.len())
        .filter(|&i| {
            !ranks
                .iter()
                .enumerate()
                .any(|(j, w)| j != i && w != &ranks[i] && w.iter().zip(&ranks[i]).all(|(a, b)| a <= b))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_is_prime() {
        assert_eq!(prime_vectors(&[ThresholdVector::default()]), vec![0]);
    }

    #[test]
    fn one_sided_difference() {
        let t0 = ThresholdVector::default();
        let t1 = ThresholdVector { t5: t0.t5 - 4, ..t0 };
        assert_eq!(prime_vectors(&[t0, t1]), vec![0]);
    }

    #[test]
    fn opposite_differences() {
        let t0 = ThresholdVector::default();
        let t1 = ThresholdVector { t5: t0.t5 - 4, t1: t0.t1 + 5.0, ..t0 };
        assert_eq!(prime_vectors(&[t0, t1]), vec![0, 1]);
    }
}
