//! Test response model with a dilution effect.
//!
//! A pool of `m` subjects, `k` of them positive under a given state, reads
//! negative with probability `specificity` when `k = 0` and
//! `1 - sensitivity * (k / m)^δ` otherwise. `δ = 0` is the classical noisy
//! OR of the pool; larger `δ` degrades sensitivity as positives get diluted.

use crate::error::{Error, Result};
use crate::lattice::LatticeModel;
use crate::state::StateIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Response {
    Negative,
    Positive,
}

impl Response {
    pub const BOTH: [Response; 2] = [Response::Negative, Response::Positive];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseModel {
    pub sensitivity: f64,
    pub specificity: f64,
    pub dilution_exponent: f64,
}

impl Default for ResponseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl ResponseModel {
    pub fn new(sensitivity: f64, specificity: f64, dilution_exponent: f64) -> Result<Self> {
        if !(sensitivity > 0.0 && sensitivity <= 1.0) {
            return Err(Error::InvalidModel(format!(
                "sensitivity {sensitivity} is not in (0, 1]"
            )));
        }
        if !(specificity > 0.0 && specificity <= 1.0) {
            return Err(Error::InvalidModel(format!(
                "specificity {specificity} is not in (0, 1]"
            )));
        }
        if !(dilution_exponent >= 0.0 && dilution_exponent.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "dilution exponent {dilution_exponent} must be a finite non-negative number"
            )));
        }
        Ok(ResponseModel {
            sensitivity,
            specificity,
            dilution_exponent,
        })
    }

    /// Perfect tests without dilution.
    pub fn noiseless() -> Self {
        ResponseModel {
            sensitivity: 1.0,
            specificity: 1.0,
            dilution_exponent: 0.0,
        }
    }

    /// P(negative reading) for a pool of `pool_size` holding `positives` positives.
    pub fn negative_probability(&self, positives: u32, pool_size: u32) -> f64 {
        if positives == 0 {
            return self.specificity;
        }
        let fraction = f64::from(positives) / f64::from(pool_size);
        (1.0 - self.sensitivity * fraction.powf(self.dilution_exponent)).clamp(0.0, 1.0)
    }

    /// Response probabilities indexed by number of positives `0..=pool_size`.
    pub(crate) fn response_table(&self, pool_size: u32, response: Response) -> Vec<f64> {
        (0..=pool_size)
            .map(|k| {
                let negative = self.negative_probability(k, pool_size);
                match response {
                    Response::Negative => negative,
                    Response::Positive => 1.0 - negative,
                }
            })
            .collect()
    }

    /// P(negative | state, pool).
    pub fn likelihood_negative(&self, state: StateIndex, pool: StateIndex) -> Result<f64> {
        if pool.is_bottom() {
            return Err(Error::EmptyPool);
        }
        let positives = (pool.bits() & !state.bits()).count_ones();
        Ok(self.negative_probability(positives, pool.cardinality()))
    }

    pub fn likelihood(
        &self,
        state: StateIndex,
        pool: StateIndex,
        response: Response,
    ) -> Result<f64> {
        let negative = self.likelihood_negative(state, pool)?;
        Ok(match response {
            Response::Negative => negative,
            Response::Positive => 1.0 - negative,
        })
    }

    /// Posterior predictive probability of a negative reading.
    pub fn predictive_negative(&self, lattice: &LatticeModel, pool: StateIndex) -> Result<f64> {
        if pool.is_bottom() {
            return Err(Error::EmptyPool);
        }
        lattice.check_state(pool)?;
        let table = self.response_table(pool.cardinality(), Response::Negative);
        let total: f64 = lattice
            .probs()
            .iter()
            .enumerate()
            .map(|(i, p)| p * table[(pool.bits() & !(i as u32)).count_ones() as usize])
            .sum();
        Ok(total.clamp(0.0, 1.0))
    }

    /// Predictive probability of `response`; the two responses sum to one.
    pub fn predictive(
        &self,
        lattice: &LatticeModel,
        pool: StateIndex,
        response: Response,
    ) -> Result<f64> {
        let negative = self.predictive_negative(lattice, pool)?;
        Ok(match response {
            Response::Negative => negative,
            Response::Positive => 1.0 - negative,
        })
    }
}
