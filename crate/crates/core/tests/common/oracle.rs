//! Reference FCM iteration over a dense weight matrix.

use pta_core::FcmModel;

/// Reference threshold, written out from the cutoffs.
pub fn tri(x: f64) -> f64 {
    if x >= 0.5 {
        1.0
    } else if x <= -0.5 {
        -1.0
    } else {
        0.0
    }
}

/// Dense reference model: weight matrix plus leaf flags.
pub struct Dense {
    pub w: Vec<Vec<f64>>,
    pub leaf: Vec<bool>,
}

impl Dense {
    pub fn of(model: &FcmModel) -> Self {
        let n = model.len();
        let mut w = vec![vec![0.0; n]; n];
        for e in model.edge_specs() {
            w[model.index_of(&e.from).unwrap()][model.index_of(&e.to).unwrap()] = e.weight;
        }
        Self {
            w,
            leaf: model.concepts.iter().map(|c| c.is_leaf()).collect(),
        }
    }

    pub fn step(&self, v: &[f64], held: &[bool]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|j| {
                let fed = (0..n).any(|i| self.w[i][j] != 0.0);
                if held[j] || !fed {
                    v[j]
                } else {
                    tri((0..n).map(|i| v[i] * self.w[i][j]).sum())
                }
            })
            .collect()
    }

    /// Plain synchronous iteration of the whole map from zeros with leaves
    /// held. Returns (final, rounds, converged, cycle).
    pub fn iterate(&self, leaves: &[(usize, f64)], cap: usize) -> (Vec<f64>, usize, bool, bool) {
        let mut v = vec![0.0; self.w.len()];
        for &(i, x) in leaves {
            v[i] = x;
        }
        let held = self.leaf.clone();
        let mut seen = vec![v.clone()];
        for round in 1..=cap {
            let next = self.step(&v, &held);
            if next == v {
                return (next, round, true, false);
            }
            if seen.contains(&next) {
                return (next, round, false, true);
            }
            seen.push(next.clone());
            v = next;
            if round == cap {
                return (v, round, false, false);
            }
        }
        unreachable!()
    }
}
