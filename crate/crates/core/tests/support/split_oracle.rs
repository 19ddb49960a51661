//! Exhaustive CART split search over dense rows.

pub fn oracle_gini(c: [f64; 2]) -> f64 {
    let n = c[0] + c[1];
    1.0 - (c[0] / n).powi(2) - (c[1] / n).powi(2)
}

/// Every (feature, midpoint) pair, scored directly from the dense rows.
pub fn oracle_split(x: &[Vec<f64>], y: &[u8], rows: &[usize], features: &[usize]) -> Option<(usize, f64, f64)> {
    let mut parent = [0.0; 2];
    for &r in rows {
        parent[y[r] as usize] += 1.0;
    }
    let n = rows.len() as f64;
    let mut all = Vec::new();
    let mut feats = features.to_vec();
    feats.sort();
    feats.dedup();
    for &f in &feats {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let mut left = [0.0; 2];
            let mut right = [0.0; 2];
            for &r in rows {
                if x[r][f] <= t {
                    left[y[r] as usize] += 1.0;
                } else {
                    right[y[r] as usize] += 1.0;
                }
            }
            let nl = left[0] + left[1];
            let nr = right[0] + right[1];
            let gain = oracle_gini(parent) - nl / n * oracle_gini(left) - nr / n * oracle_gini(right);
            all.push((f, t, gain));
        }
    }
    let max = all.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max);
    if max <= 1e-12 {
        return None;
    }
    all.into_iter().find(|s| s.2 >= max - 1e-12)
}
