//! Shared test-only oracles, written for obviousness rather than speed.

/// Naive agglomerative complete-linkage clustering down to two clusters.
/// Clusters are kept sorted by (min, max) and every merge scans all pairs,
/// taking the lexicographically first pair among cost ties, which on a line
/// is the leftmost adjacent pair. O(n^3) and proud of it.
pub fn naive_complete_linkage_two(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert!(values.len() >= 2, "need at least two values");
    let mut clusters: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
    order_clusters(&mut clusters);

    while clusters.len() > 2 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let cost = linkage_cost(&clusters[i], &clusters[j]);
                let better = match best {
                    None => true,
                    Some((c, bi, bj)) => cost < c || (cost == c && (i, j) < (bi, bj)),
                };
                if better {
                    best = Some((cost, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("more than two clusters implies a pair");
        let absorbed = clusters.remove(j);
        clusters[i].extend(absorbed);
        order_clusters(&mut clusters);
    }

    let mut lower = clusters.swap_remove(0);
    let mut upper = clusters.swap_remove(0);
    if mean(&lower) > mean(&upper) {
        std::mem::swap(&mut lower, &mut upper);
    }
    (lower, upper)
}

/// Complete linkage: the largest pairwise distance across the two clusters.
fn linkage_cost(a: &[f64], b: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &x in a {
        for &y in b {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn order_clusters(clusters: &mut [Vec<f64>]) {
    for c in clusters.iter_mut() {
        c.sort_by(f64::total_cmp);
    }
    clusters.sort_by(|a, b| {
        let ka = (a.first().copied().unwrap(), a.last().copied().unwrap());
        let kb = (b.first().copied().unwrap(), b.last().copied().unwrap());
        ka.partial_cmp(&kb).expect("finite values")
    });
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sorted copy, for comparing cluster contents as multisets.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
