//! Successive halving over grid configurations: many configurations get a
//! short round budget, the best `1/eta` of them move on to a budget `eta`
//! times larger, until the survivors train for the full budget.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub n_configs: usize,
    pub rounds: usize,
}

pub fn halving_schedule(n_configs: usize, max_rounds: usize, eta: usize) -> Vec<Rung> {
    assert!(eta >= 2, "eta must be at least 2");
    if n_configs == 0 {
        return Vec::new();
    }
    let mut rungs = Vec::new();
    let mut n = n_configs;
    loop {
        rungs.push(n);
        if n < eta {
            break;
        }
        n /= eta;
    }
    let last = rungs.len() - 1;
    rungs
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let shrink = eta.saturating_pow((last - i) as u32);
            Rung {
                n_configs: n,
                rounds: (max_rounds / shrink).max(1),
            }
        })
        .collect()
}

/// Indices of the `keep` lowest objectives. NaN sorts last; ties keep the
/// earlier entry.
pub fn select_survivors(objectives: &[f64], keep: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..objectives.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (objectives[a], objectives[b]);
        match (x.is_nan(), y.is_nan()) {
            (true, true) => a.cmp(&b),
            (true, false) => std::cmp::Ordering::Greater,
            (false, true) => std::cmp::Ordering::Less,
            _ => x.total_cmp(&y).then(a.cmp(&b)),
        }
    });
    idx.truncate(keep);
    idx
}
