//! Backward induction over the number of ON ports.
//!
//! The aggregate energy is tracked in whole port-cycles: state `j` means
//! `j · step_kwh` delivered since the planning instant. Envelope bounds are
//! rounded inwards onto that grid, lower up and upper down.

use alloc::vec::Vec;

use super::envelope::{EnergyEnvelope, GRID_EPS};

/// Penalty on energy predicted to leave the station unserved.
#[derive(Clone, Debug, PartialEq)]
pub struct StateCost {
    pub weight: f64,
    /// Expected departed EVs at each instant of the horizon, starting at the
    /// planning instant.
    pub departed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpProblem {
    pub step_kwh: f64,
    /// Bounds on the state at each instant of the horizon, in cycles;
    /// index 0 is the planning instant and is not checked.
    pub lower: Vec<i64>,
    pub upper: Vec<i64>,
    /// Most ports that can be ON in each step.
    pub caps: Vec<u32>,
    pub prices: Vec<f64>,
    /// `None` pins the final state inside the bounds; `Some` leaves it free
    /// and charges shortfall against the upper curve instead.
    pub state_cost: Option<StateCost>,
}

impl DpProblem {
    /// Problem over `envelope` from instant `k0`, measured relative to `e0`.
    pub fn from_envelope(
        envelope: &EnergyEnvelope,
        k0: usize,
        e0: f64,
        step_kwh: f64,
        port_count: usize,
        prices: &[f64],
        state_cost: Option<StateCost>,
    ) -> Self {
        let n_p = envelope.slots_per_day();
        let free = state_cost.is_some();
        let lower = (k0..=n_p)
            .map(|k| {
                if free {
                    0
                } else {
                    (libm::ceil((envelope.e_min[k] - e0) / step_kwh - GRID_EPS) as i64).max(0)
                }
            })
            .collect();
        let upper = (k0..=n_p)
            .map(|k| libm::floor((envelope.e_max[k] - e0) / step_kwh + GRID_EPS) as i64)
            .collect();
        let caps = (k0..n_p)
            .map(|k| {
                let present = libm::ceil(envelope.capacity[k] - GRID_EPS).max(0.0) as usize;
                present.min(port_count) as u32
            })
            .collect();
        DpProblem {
            step_kwh,
            lower,
            upper,
            caps,
            prices: prices[k0..n_p].to_vec(),
            state_cost,
        }
    }

    pub fn horizon(&self) -> usize {
        self.caps.len()
    }

    /// Cost of switching `a` ports ON in step `i` from state `j`.
    pub fn stage_cost(&self, i: usize, j: i64, a: u32) -> f64 {
        let mut c = a as f64 * self.step_kwh * self.prices[i];
        if let Some(sc) = &self.state_cost {
            let gap = (self.upper[i + 1] - (j + a as i64)).max(0) as f64;
            c += gap * sc.departed[i + 1] * sc.weight;
        }
        c
    }

    fn terminal_ok(&self, j: i64) -> bool {
        let h = self.horizon();
        self.state_cost.is_some() || (j >= self.lower[h] && j <= self.upper[h])
    }

    fn admissible(&self, i: usize, j: i64) -> bool {
        i == 0 || (j >= self.lower[i] && j <= self.upper[i])
    }

    /// Action range from state `j` in step `i`, possibly empty.
    pub fn action_range(&self, i: usize, j: i64) -> (i64, i64) {
        let lo = (self.lower[i + 1] - j).max(0);
        let hi = (self.upper[i + 1] - j).min(self.caps[i] as i64);
        (lo, hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DpSolution {
    pub actions: Vec<u32>,
    /// State at each instant, in cycles.
    pub states: Vec<i64>,
    /// Steps where no admissible plan existed and the largest action was taken.
    pub infeasible: Vec<bool>,
    pub cost: f64,
    values: Vec<Vec<f64>>,
}

impl DpSolution {
    /// Optimal cost-to-go at step `i` from state `j`; infinite when unreachable.
    pub fn value(&self, i: usize, j: i64) -> f64 {
        if j < 0 {
            return f64::INFINITY;
        }
        self.values[i]
            .get(j as usize)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    pub fn is_feasible(&self) -> bool {
        !self.infeasible.iter().any(|&b| b)
    }
}

pub fn solve(p: &DpProblem) -> DpSolution {
    let h = p.horizon();
    let jmax = p.upper.iter().copied().max().unwrap_or(0).max(0) as usize;
    let mut values = alloc::vec![alloc::vec![f64::INFINITY; jmax + 1]; h + 1];
    let mut choice = alloc::vec![alloc::vec![0u32; jmax + 1]; h];
    for j in 0..=jmax {
        if p.terminal_ok(j as i64) {
            values[h][j] = 0.0;
        }
    }
    for i in (0..h).rev() {
        for j in 0..=jmax {
            let ji = j as i64;
            if !p.admissible(i, ji) {
                continue;
            }
            let (lo, hi) = p.action_range(i, ji);
            let mut best = f64::INFINITY;
            let mut arg = 0u32;
            for a in lo..=hi {
                let next = values[i + 1][(ji + a) as usize];
                if !next.is_finite() {
                    continue;
                }
                let c = p.stage_cost(i, ji, a as u32) + next;
                if c < best {
                    best = c;
                    arg = a as u32;
                }
            }
            values[i][j] = best;
            choice[i][j] = arg;
        }
    }

    let mut actions = Vec::with_capacity(h);
    let mut states = Vec::with_capacity(h + 1);
    let mut infeasible = Vec::with_capacity(h);
    let mut j: i64 = 0;
    states.push(j);
    for i in 0..h {
        let reachable = j >= 0 && (j as usize) <= jmax && values[i][j as usize].is_finite();
        let a = if reachable {
            choice[i][j as usize]
        } else {
            (p.upper[i + 1] - j).clamp(0, p.caps[i] as i64) as u32
        };
        infeasible.push(!reachable);
        actions.push(a);
        j += a as i64;
        states.push(j);
    }
    // summed from the end so it matches the value table exactly
    let mut cost = 0.0;
    for i in (0..h).rev() {
        cost += p.stage_cost(i, states[i], actions[i]);
    }
    DpSolution {
        actions,
        states,
        infeasible,
        cost,
        values,
    }
}
