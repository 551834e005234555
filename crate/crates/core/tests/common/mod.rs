//! Independent reference implementations used as test oracles.
//!
//! Everything here works on an explicit joint table keyed by the vector of
//! per-subject statuses (`true` = positive), with no bit tricks shared with
//! the engine.

#![allow(dead_code)]

use std::collections::HashMap;

use gt_core::{LatticeModel, Response, ResponseModel, StateIndex};
use rand::Rng;

pub type Statuses = Vec<bool>;

#[derive(Debug, Clone)]
pub struct JointTable {
    /// Subject position for each entry of a status vector.
    pub positions: Vec<usize>,
    pub probs: HashMap<Statuses, f64>,
}

fn all_statuses(n: usize) -> Vec<Statuses> {
    (0..1usize << n)
        .map(|code| (0..n).map(|j| code >> j & 1 == 1).collect())
        .collect()
}

impl JointTable {
    pub fn from_risks(risks: &[f64]) -> Self {
        let probs = all_statuses(risks.len())
            .into_iter()
            .map(|s| {
                let p = s
                    .iter()
                    .zip(risks)
                    .map(|(&pos, &r)| if pos { r } else { 1.0 - r })
                    .product();
                (s, p)
            })
            .collect();
        JointTable {
            positions: (0..risks.len()).collect(),
            probs,
        }
    }

    /// Reads a table off an engine lattice through its public subject map.
    pub fn from_lattice(lattice: &LatticeModel) -> Self {
        let n = lattice.n_active();
        let positions: Vec<usize> = (0..n).rev().map(|b| lattice.position_at_bit(b)).collect();
        let mut probs = HashMap::new();
        for (i, &p) in lattice.probs().iter().enumerate() {
            let statuses = (0..n).rev().map(|b| i >> b & 1 == 0).collect();
            probs.insert(statuses, p);
        }
        let mut table = JointTable { positions, probs };
        table.sort_positions();
        table
    }

    fn sort_positions(&mut self) {
        let mut order: Vec<usize> = (0..self.positions.len()).collect();
        order.sort_by_key(|&k| self.positions[k]);
        self.probs = self
            .probs
            .drain()
            .map(|(s, p)| (order.iter().map(|&k| s[k]).collect(), p))
            .collect();
        self.positions = order.iter().map(|&k| self.positions[k]).collect();
    }

    fn index_of(&self, position: usize) -> usize {
        self.positions
            .iter()
            .position(|&p| p == position)
            .expect("subject is active")
    }

    /// P(response | statuses) for a pool of subject positions.
    pub fn likelihood(
        model: &ResponseModel,
        positives_in_pool: usize,
        pool_size: usize,
        response: Response,
    ) -> f64 {
        let negative = if positives_in_pool == 0 {
            model.specificity
        } else {
            1.0 - model.sensitivity
                * (positives_in_pool as f64 / pool_size as f64).powf(model.dilution_exponent)
        };
        match response {
            Response::Negative => negative,
            Response::Positive => 1.0 - negative,
        }
    }

    fn positives_in(&self, statuses: &Statuses, pool: &[usize]) -> usize {
        pool.iter().filter(|&&p| statuses[self.index_of(p)]).count()
    }

    /// Bayes rule over the whole table.
    pub fn update(&mut self, pool: &[usize], response: Response, model: &ResponseModel) {
        let joint: Vec<(Statuses, f64)> = self
            .probs
            .iter()
            .map(|(s, &p)| {
                let k = self.positives_in(s, pool);
                (
                    s.clone(),
                    p * Self::likelihood(model, k, pool.len(), response),
                )
            })
            .collect();
        let total: f64 = joint.iter().map(|(_, p)| p).sum();
        self.probs = joint.into_iter().map(|(s, p)| (s, p / total)).collect();
    }

    pub fn predictive(&self, pool: &[usize], response: Response, model: &ResponseModel) -> f64 {
        self.probs
            .iter()
            .map(|(s, &p)| {
                p * Self::likelihood(model, self.positives_in(s, pool), pool.len(), response)
            })
            .sum()
    }

    pub fn marginal_positive(&self, position: usize) -> f64 {
        let k = self.index_of(position);
        self.probs
            .iter()
            .filter(|(s, _)| s[k])
            .map(|(_, p)| p)
            .sum()
    }

    /// P(every pooled subject negative).
    pub fn pool_negative_mass(&self, pool: &[usize]) -> f64 {
        self.probs
            .iter()
            .filter(|(s, _)| self.positives_in(s, pool) == 0)
            .map(|(_, p)| p)
            .sum()
    }

    /// Sums a subject out.
    pub fn remove(&mut self, position: usize) {
        let k = self.index_of(position);
        let mut reduced: HashMap<Statuses, f64> = HashMap::new();
        for (s, p) in &self.probs {
            let mut rest = s.clone();
            rest.remove(k);
            *reduced.entry(rest).or_default() += p;
        }
        self.probs = reduced;
        self.positions.remove(k);
    }

    pub fn get(&self, statuses: &[bool]) -> f64 {
        self.probs[statuses]
    }
}

/// Plain-loop mass: sum of `probs[t]` over every `t` containing `s`.
pub fn brute_mass(probs: &[f64], s: u32) -> f64 {
    probs
        .iter()
        .enumerate()
        .filter(|(t, _)| (*t as u32) & s == s)
        .map(|(_, p)| p)
        .sum()
}

pub fn random_risks<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

pub fn random_model<R: Rng>(rng: &mut R) -> ResponseModel {
    ResponseModel::new(
        rng.gen_range(0.7..=1.0),
        rng.gen_range(0.8..=1.0),
        rng.gen_range(0.0..2.0),
    )
    .unwrap()
}

/// Strictly positive random distribution over `2^n` states.
pub fn random_posterior<R: Rng>(rng: &mut R, n: u32) -> Vec<f64> {
    let raw: Vec<f64> = (0..1usize << n).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Pool positions of a lattice state.
pub fn pool_positions(lattice: &LatticeModel, pool: StateIndex) -> Vec<usize> {
    (0..lattice.n_active())
        .filter(|&b| pool.bits() >> b & 1 == 1)
        .map(|b| lattice.position_at_bit(b))
        .collect()
}

/// Extends a lattice by a random history of at most `max_len` responses:
/// Op-BHA picks each pool and the response is drawn from the predictive.
pub fn random_history<R: Rng>(
    rng: &mut R,
    lattice: &mut LatticeModel,
    model: &ResponseModel,
    thresholds: &gt_core::Thresholds,
    max_len: usize,
) {
    for _ in 0..max_len {
        if lattice.is_resolved() {
            return;
        }
        let pool = gt_core::select_op_bha(lattice).unwrap().pool;
        let negative = model.predictive_negative(lattice, pool).unwrap();
        let response = if rng.gen::<f64>() < negative {
            Response::Negative
        } else {
            Response::Positive
        };
        lattice.update_posterior(pool, response, model).unwrap();
        lattice.classify_and_shrink(thresholds);
    }
}
