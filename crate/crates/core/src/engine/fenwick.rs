//! Binary indexed tree over nonnegative event rates.

/// Rates with `O(log n)` update, total and proportional selection.
#[derive(Debug, Clone)]
pub struct RateTable {
    rates: Vec<f64>,
    tree: Vec<f64>,
    updates: u64,
}

const REBUILD_EVERY: u64 = 1 << 16;

impl RateTable {
    pub fn new(rates: Vec<f64>) -> Self {
        let mut t = RateTable { tree: vec![0.0; rates.len() + 1], rates, updates: 0 };
        t.rebuild();
        t
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    /// Recompute every partial sum from the stored rates, clearing drift.
    pub fn rebuild(&mut self) {
        let n = self.rates.len();
        self.tree.iter_mut().for_each(|x| *x = 0.0);
        for i in 1..=n {
            self.tree[i] += self.rates[i - 1];
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                self.tree[parent] += self.tree[i];
            }
        }
        self.updates = 0;
    }

    pub fn set(&mut self, i: usize, rate: f64) {
        let delta = rate - self.rates[i];
        if delta == 0.0 {
            return;
        }
        self.rates[i] = rate;
        let n = self.rates.len();
        let mut k = i + 1;
        while k <= n {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
        self.updates += 1;
        if self.updates >= REBUILD_EVERY {
            self.rebuild();
        }
    }

    pub fn total(&self) -> f64 {
        let mut k = self.rates.len();
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        s.max(0.0)
    }

    /// Index `i` with `Σ_{j<i} r_j ≤ target < Σ_{j≤i} r_j`, restricted to
    /// positive rates.
    pub fn find(&self, target: f64) -> usize {
        let n = self.rates.len();
        let mut pos = 0;
        let mut rem = target;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        let idx = pos.min(n - 1);
        if self.rates[idx] > 0.0 {
            return idx;
        }
        // Rounding landed on a zero-rate slot: take the nearest positive one.
        (0..idx).rev().chain(idx + 1..n).find(|&j| self.rates[j] > 0.0).unwrap_or(idx)
    }
}
