//! Minimum-cost assignment of items to classes with per-class degree
//! bounds, solved as a min-cost flow.
//!
//! The flow network is source -> item -> class -> sink. Items have unit
//! supply, so a shortest augmenting path only ever enters one unassigned
//! item, then walks between classes by reassigning one item per hop. The
//! search therefore runs on the class nodes alone, with each hop's cost
//! taken from a heap over the items of the class it leaves. Lower degree
//! bounds are met by giving the first `lower` units into each class a
//! lexicographic bonus.

use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BMatchingProblem {
    /// `weights[i][c]`; infinite or NaN means item `i` cannot join class `c`.
    pub weights: Vec<Vec<f64>>,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BMatching {
    pub assignment: Vec<usize>,
    pub cost: f64,
    /// No improving cycle remains in the residual graph.
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

type MinHeap = BinaryHeap<Reverse<Key>>;

/// Lexicographic path length: (unmet lower-bound units, cost).
type Dist = (i64, f64);

fn lt(a: Dist, b: Dist) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1 - 1e-12 * (1.0 + b.1.abs()))
}

fn add(a: Dist, b: Dist) -> Dist {
    (a.0 + b.0, a.1 + b.1)
}

struct State<'a> {
    p: &'a BMatchingProblem,
    k: usize,
    assign: Vec<Option<usize>>,
    count: Vec<usize>,
    free: Vec<MinHeap>,
    moves: Vec<Vec<MinHeap>>,
}

impl<'a> State<'a> {
    fn w(&self, i: usize, c: usize) -> Option<f64> {
        let v = self.p.weights[i][c];
        v.is_finite().then_some(v)
    }

    fn best_free(&mut self, c: usize) -> Option<Key> {
        while let Some(Reverse(top)) = self.free[c].peek().copied() {
            if self.assign[top.1].is_none() {
                return Some(top);
            }
            self.free[c].pop();
        }
        None
    }

    fn best_move(&mut self, a: usize, b: usize) -> Option<Key> {
        while let Some(Reverse(top)) = self.moves[a][b].peek().copied() {
            if self.assign[top.1] == Some(a) {
                return Some(top);
            }
            self.moves[a][b].pop();
        }
        None
    }

    fn place(&mut self, i: usize, c: usize) {
        if let Some(old) = self.assign[i] {
            self.count[old] -= 1;
        }
        self.assign[i] = Some(c);
        self.count[c] += 1;
        for b in 0..self.k {
            if b != c {
                if let (Some(wc), Some(wb)) = (self.w(i, c), self.w(i, b)) {
                    self.moves[c][b].push(Reverse(Key(wb - wc, i)));
                }
            }
        }
    }

    fn sink_cost(&self, c: usize) -> Option<Dist> {
        if self.count[c] < self.p.lower[c] {
            Some((-1, 0.0))
        } else if self.count[c] < self.p.upper[c] {
            Some((0, 0.0))
        } else {
            None
        }
    }

    /// One shortest augmenting path; false when none exists.
    #[allow(clippy::needless_range_loop)]
    fn augment(&mut self) -> bool {
        let k = self.k;
        let mut enter: Vec<Option<Key>> = (0..k).map(|c| self.best_free(c)).collect();
        let mut hop: Vec<Vec<Option<Key>>> = vec![vec![None; k]; k];
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    hop[a][b] = self.best_move(a, b);
                }
            }
        }
        let mut dist: Vec<Option<Dist>> = enter.iter().map(|e| e.map(|key| (0, key.0))).collect();
        let mut pred: Vec<Option<usize>> = vec![None; k];
        for _ in 0..k {
            let mut changed = false;
            for a in 0..k {
                let Some(da) = dist[a] else { continue };
                for b in 0..k {
                    if let Some(h) = hop[a][b] {
                        let nd = add(da, (0, h.0));
                        if dist[b].is_none_or(|db| lt(nd, db)) {
                            dist[b] = Some(nd);
                            pred[b] = Some(a);
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let mut end: Option<(usize, Dist)> = None;
        for c in 0..k {
            if let (Some(d), Some(s)) = (dist[c], self.sink_cost(c)) {
                let total = add(d, s);
                if end.is_none_or(|(_, e)| lt(total, e)) {
                    end = Some((c, total));
                }
            }
        }
        let Some((last, _)) = end else { return false };
        // Collect the chain before touching any state.
        let mut chain = vec![last];
        let mut guard = 0;
        while let Some(prev) = pred[*chain.last().expect("nonempty")] {
            chain.push(prev);
            guard += 1;
            if guard > k {
                return false;
            }
        }
        chain.reverse();
        let mut steps: Vec<(usize, usize)> = Vec::with_capacity(chain.len());
        let first = enter[chain[0]].take().expect("entry exists").1;
        steps.push((first, chain[0]));
        for w in chain.windows(2) {
            steps.push((hop[w[0]][w[1]].expect("hop exists").1, w[1]));
        }
        for (i, c) in steps {
            self.place(i, c);
        }
        true
    }

    /// Bellman-Ford over class nodes plus a hub: a negative cycle is an
    /// improving exchange.
    fn certify(&mut self) -> bool {
        let k = self.k;
        let hub = k;
        let mut arcs: Vec<(usize, usize, f64)> = Vec::new();
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    if let Some(h) = self.best_move(a, b) {
                        arcs.push((a, b, h.0));
                    }
                }
            }
            if self.count[a] < self.p.upper[a] {
                arcs.push((a, hub, 0.0));
            }
            if self.count[a] > self.p.lower[a] {
                arcs.push((hub, a, 0.0));
            }
        }
        let scale = 1.0 + arcs.iter().map(|a| a.2.abs()).fold(0.0, f64::max);
        let mut d = vec![0.0f64; k + 1];
        for _ in 0..=k + 1 {
            let mut changed = false;
            for &(a, b, w) in &arcs {
                if d[a] + w < d[b] - 1e-9 * scale {
                    d[b] = d[a] + w;
                    changed = true;
                }
            }
            if !changed {
                return true;
            }
        }
        false
    }
}

pub fn bmatching_min_cost(p: &BMatchingProblem) -> Result<BMatching> {
    let m = p.weights.len();
    let k = p.lower.len();
    if p.upper.len() != k || p.weights.iter().any(|r| r.len() != k) {
        return Err(Error::InvalidParameter("weight matrix and degree bounds disagree".into()));
    }
    if p.lower.iter().zip(&p.upper).any(|(l, u)| l > u) {
        return Err(Error::Infeasible("a lower degree bound exceeds its upper bound".into()));
    }
    if p.lower.iter().sum::<usize>() > m || p.upper.iter().sum::<usize>() < m {
        return Err(Error::Infeasible("degree bounds cannot be met by the item count".into()));
    }
    let mut s = State {
        p,
        k,
        assign: vec![None; m],
        count: vec![0; k],
        free: vec![MinHeap::new(); k],
        moves: vec![vec![MinHeap::new(); k]; k],
    };
    for i in 0..m {
        for c in 0..k {
            if let Some(w) = s.w(i, c) {
                s.free[c].push(Reverse(Key(w, i)));
            }
        }
    }
    for _ in 0..m {
        if !s.augment() {
            return Err(Error::Infeasible("some item cannot be assigned within the degree bounds".into()));
        }
    }
    if (0..k).any(|c| s.count[c] < p.lower[c]) {
        return Err(Error::Infeasible("lower degree bounds cannot all be met".into()));
    }
    let assignment: Vec<usize> = s.assign.iter().map(|a| a.expect("all assigned")).collect();
    let cost = assignment.iter().enumerate().map(|(i, &c)| p.weights[i][c]).sum();
    let certified = s.certify();
    Ok(BMatching { assignment, cost, certified })
}

/// Exhaustive search over all `k^m` assignments.
pub fn bmatching_brute_force(p: &BMatchingProblem) -> Option<BMatching> {
    let m = p.weights.len();
    let k = p.lower.len();
    let mut best: Option<BMatching> = None;
    let mut a = vec![0usize; m];
    loop {
        let mut count = vec![0usize; k];
        let mut cost = 0.0;
        let mut ok = true;
        for (i, &c) in a.iter().enumerate() {
            count[c] += 1;
            let w = p.weights[i][c];
            if !w.is_finite() {
                ok = false;
                break;
            }
            cost += w;
        }
        ok = ok && (0..k).all(|c| count[c] >= p.lower[c] && count[c] <= p.upper[c]);
        if ok && best.as_ref().is_none_or(|b| cost < b.cost) {
            best = Some(BMatching { assignment: a.clone(), cost, certified: true });
        }
        // Next assignment in base k.
        let mut pos = 0;
        loop {
            if pos == m {
                return best;
            }
            a[pos] += 1;
            if a[pos] < k {
                break;
            }
            a[pos] = 0;
            pos += 1;
        }
    }
}
