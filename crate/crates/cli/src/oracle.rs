//! Reference implementations used by `vpt selftest` and the acceptance
//! suite. Each is a literal, quadratic-time transcription of the definition
//! it checks, written independently of the library's implementation path.

/// Output of the reference density-peaks evaluation.
#[derive(Debug, Clone)]
pub struct DpcReference {
    pub densities: Vec<f64>,
    pub separations: Vec<f64>,
    pub scores: Vec<f64>,
    /// Selected indices, ascending.
    pub selected: Vec<usize>,
    /// For every non-selected token, the nearest selected center with higher
    /// density (falling back to the nearest center).
    pub assignment: Vec<Option<usize>>,
}

/// Literal evaluation of the density-peaks criterion over pre-pooled points:
/// per-token density `exp(-mean of k smallest squared distances)`,
/// separation = distance to the nearest token of higher density (the unique
/// densest token instead gets its maximum distance), score = density times
/// separation, and top-`r` selection with ties toward the lower index.
/// "Higher density" compares `(density, -index)` lexicographically.
pub fn dpc_reference(points: &[Vec<f64>], k: usize, r: usize) -> DpcReference {
    let n = points.len();
    assert!(k < n && r <= n, "oracle preconditions");
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut densities = vec![0.0; n];
    for i in 0..n {
        let mut ds: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist2(&points[i], &points[j]), j))
            .collect();
        ds.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mean: f64 = ds[..k].iter().map(|d| d.0).sum::<f64>() / k as f64;
        densities[i] = (-mean).exp();
    }
    let higher =
        |j: usize, i: usize| densities[j] > densities[i] || (densities[j] == densities[i] && j < i);
    let mut separations = vec![0.0; n];
    for i in 0..n {
        let mut min_d: Option<f64> = None;
        let mut max_d = 0.0f64;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d = dist2(&points[i], &points[j]).sqrt();
            max_d = max_d.max(d);
            if higher(j, i) && min_d.is_none_or(|m| d < m) {
                min_d = Some(d);
            }
        }
        separations[i] = min_d.unwrap_or(max_d);
    }
    let scores: Vec<f64> = densities
        .iter()
        .zip(&separations)
        .map(|(a, b)| a * b)
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut selected = order[..r].to_vec();
    selected.sort_unstable();

    // Remaining tokens attach to the nearest selected center with higher
    // density, nearest center if none qualifies. Downstream computation
    // never consumes this; it documents the clustering reading.
    let mut assignment = vec![None; n];
    for i in 0..n {
        if selected.contains(&i) {
            continue;
        }
        let pick = |candidates: &[usize]| -> Option<usize> {
            candidates
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    dist2(&points[i], &points[a])
                        .total_cmp(&dist2(&points[i], &points[b]))
                        .then(a.cmp(&b))
                })
        };
        let denser: Vec<usize> = selected.iter().copied().filter(|&c| higher(c, i)).collect();
        assignment[i] = pick(&denser).or_else(|| pick(&selected));
    }
    DpcReference {
        densities,
        separations,
        scores,
        selected,
        assignment,
    }
}

/// Mean over joints of the per-frame spatial pooling, written directly.
pub fn pool_reference(tokens: &vpt_core::PoseTokens) -> Vec<Vec<f64>> {
    let (n, j, c) = (tokens.n_frames(), tokens.joints(), tokens.dim());
    (0..n)
        .map(|f| {
            (0..c)
                .map(|ch| {
                    (0..j).map(|jj| tokens.token(f, jj)[ch]).sum::<f64>() / j as f64
                })
                .collect()
        })
        .collect()
}

/// Uniform sampling pattern by direct formula evaluation.
pub fn tps_reference(n: usize, r: usize) -> Vec<usize> {
    if r == 1 {
        return vec![0];
    }
    (0..r)
        .map(|j| ((j * (n - 1)) as f64 / (r - 1) as f64).round() as usize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_matches_hand_example() {
        let points: Vec<Vec<f64>> = [0.0, 1.0, 10.0, 11.5].iter().map(|&v| vec![v]).collect();
        let out = dpc_reference(&points, 1, 2);
        assert_eq!(out.selected, vec![0, 2]);
        let want_delta = [11.5, 1.0, 9.0, 1.5];
        for (got, want) in out.separations.iter().zip(want_delta.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
        // Token 1 attaches to center 0, token 3 to center 2.
        assert_eq!(out.assignment[1], Some(0));
        assert_eq!(out.assignment[3], Some(2));
    }
}
