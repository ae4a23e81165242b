//! Denomination arithmetic. There is no change: every payment must be an
//! exact subset of what the wallet holds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Greedy largest-first split of `amount` over `schedule`.
/// `None` when a remainder is left over.
pub fn decompose(amount: u64, schedule: &[u64]) -> Option<Vec<u64>> {
    let mut denoms: Vec<u64> = schedule.iter().copied().filter(|d| *d > 0).collect();
    denoms.sort_unstable_by(|a, b| b.cmp(a));
    denoms.dedup();
    let mut rest = amount;
    let mut out = Vec::new();
    for d in denoms {
        while rest >= d {
            out.push(d);
            rest -= d;
        }
    }
    (rest == 0 && amount > 0).then_some(out)
}

/// Closest amounts the holdings can pay exactly, either side of a target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nearest {
    pub below: Option<u64>,
    pub above: Option<u64>,
}

/// Pick indices into `values` summing exactly to `amount`.
///
/// Greedy first; if that leaves a remainder, an exhaustive search over all
/// reachable sums. On failure returns the nearest reachable sums.
pub fn select_exact(values: &[u64], amount: u64) -> Result<Vec<usize>, Nearest> {
    if amount == 0 {
        return Err(Nearest { below: None, above: values.iter().copied().filter(|v| *v > 0).min() });
    }
    if let Some(picked) = greedy(values, amount) {
        return Ok(picked);
    }
    exhaustive(values, amount)
}

pub fn greedy(values: &[u64], amount: u64) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|a, b| values[*b].cmp(&values[*a]).then(a.cmp(b)));
    let mut rest = amount;
    let mut picked = Vec::new();
    for i in order {
        if values[i] <= rest && values[i] > 0 {
            rest -= values[i];
            picked.push(i);
        }
    }
    (rest == 0).then_some(picked)
}

/// Subset-sum over distinct reachable sums. Desk-scale holdings keep the
/// state space small.
pub fn exhaustive(values: &[u64], amount: u64) -> Result<Vec<usize>, Nearest> {
    // sum -> (previous sum, index that got us here)
    let mut reach: BTreeMap<u64, Option<(u64, usize)>> = BTreeMap::new();
    reach.insert(0, None);
    for (i, v) in values.iter().copied().enumerate() {
        if v == 0 {
            continue;
        }
        let sums: Vec<u64> = reach.keys().copied().collect();
        for s in sums {
            let Some(next) = s.checked_add(v) else { continue };
            reach.entry(next).or_insert(Some((s, i)));
        }
        if reach.contains_key(&amount) {
            break;
        }
    }
    if !reach.contains_key(&amount) {
        let below = reach.range(1..amount).next_back().map(|(s, _)| *s);
        let above = reach.range(amount + 1..).next().map(|(s, _)| *s);
        return Err(Nearest { below, above });
    }
    let mut picked = Vec::new();
    let mut at = amount;
    while let Some(Some((prev, i))) = reach.get(&at) {
        picked.push(*i);
        at = *prev;
    }
    picked.reverse();
    Ok(picked)
}
