//! The self-indexed lattice model.
//!
//! A lattice over `n` active subjects is a dense array of `2^n` posterior
//! probabilities, indexed by [`StateIndex`]. Subjects are removed from the
//! model ("shrinking") once their marginal crosses a classification
//! threshold, halving the array each time; `active` keeps the mapping from
//! bit positions back to the original subjects.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::response::{Response, ResponseModel};
use crate::state::StateIndex;

/// Largest supported number of subjects. 2^26 doubles is 512 MiB.
pub const N_MAX: usize = 26;

/// Total mass below which an observation is treated as impossible.
pub const IMPOSSIBLE_MASS: f64 = 1e-300;

pub type SubjectId = usize;

/// Prior risk (probability of being positive) for one subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectPrior {
    pub subject_id: SubjectId,
    pub risk: f64,
}

impl SubjectPrior {
    pub fn new(subject_id: SubjectId, risk: f64) -> Self {
        SubjectPrior { subject_id, risk }
    }
}

/// Posterior error thresholds for committing a classification.
///
/// A subject is committed negative once `P(negative) >= 1 - upper_eps`, and
/// positive once `P(negative) <= lower_eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub upper_eps: f64,
    pub lower_eps: f64,
}

impl Thresholds {
    pub fn new(upper_eps: f64, lower_eps: f64) -> Result<Self> {
        for (name, eps) in [("upper_eps", upper_eps), ("lower_eps", lower_eps)] {
            if !(eps > 0.0 && eps < 0.5) {
                return Err(Error::InvalidThresholds(format!(
                    "{name} = {eps} is not in (0, 0.5)"
                )));
            }
        }
        Ok(Thresholds {
            upper_eps,
            lower_eps,
        })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            upper_eps: 0.001,
            lower_eps: 0.001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Negative,
    Positive,
}

/// Classification status of an original subject.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Classification {
    Unclassified,
    /// `residual_error` is the probability, at commit time, that the call is wrong.
    Negative {
        residual_error: f64,
        stage: usize,
    },
    Positive {
        residual_error: f64,
        stage: usize,
    },
}

impl Classification {
    pub fn is_classified(&self) -> bool {
        !matches!(self, Classification::Unclassified)
    }
}

/// A classification committed by [`LatticeModel::classify_and_shrink`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommitEvent {
    pub subject_id: SubjectId,
    /// Position of the subject in the original prior list.
    pub position: usize,
    pub decision: Decision,
    pub residual_error: f64,
    /// Number of responses observed when the commit happened.
    pub stage: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    probs: Vec<f64>,
    /// bit -> position in `subjects`
    active: Vec<usize>,
    subjects: Arc<[SubjectPrior]>,
    classifications: Vec<Classification>,
    stage: usize,
}

impl LatticeModel {
    /// Builds the prior lattice: each state's probability is the product of
    /// per-subject factors, `risk` where the subject's bit is clear and
    /// `1 - risk` where it is set.
    ///
    /// Input position `i` maps to bit `n - 1 - i`, so the first subject is
    /// the most significant bit.
    pub fn build(priors: &[SubjectPrior]) -> Result<Self> {
        validate_subjects(priors)?;
        let n = priors.len();
        let mut probs = Vec::with_capacity(1 << n);
        probs.push(1.0);
        // Bit b (ascending) multiplies its factor in last-to-first order, the
        // same per-state product order as a nested loop over bits.
        for bit in 0..n {
            let risk = priors[n - 1 - bit].risk;
            let len = probs.len();
            probs.extend_from_within(..len);
            for p in &mut probs[..len] {
                *p *= risk;
            }
            for p in &mut probs[len..] {
                *p *= 1.0 - risk;
            }
        }
        let mut model = LatticeModel {
            probs,
            active: (0..n).rev().collect(),
            subjects: priors.into(),
            classifications: vec![Classification::Unclassified; n],
            stage: 0,
        };
        model.normalize()?;
        Ok(model)
    }

    /// Wraps an explicit distribution over all subjects' states. Entries are
    /// renormalized; they must be finite and non-negative with positive sum.
    pub fn from_distribution(priors: &[SubjectPrior], probs: Vec<f64>) -> Result<Self> {
        validate_subjects(priors)?;
        let n = priors.len();
        if probs.len() != 1 << n {
            return Err(Error::InvalidDistribution(format!(
                "expected {} entries, got {}",
                1usize << n,
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidDistribution(
                "entries must be finite and non-negative".into(),
            ));
        }
        let mut model = LatticeModel {
            probs,
            active: (0..n).rev().collect(),
            subjects: priors.into(),
            classifications: vec![Classification::Unclassified; n],
            stage: 0,
        };
        model.normalize()?;
        Ok(model)
    }

    #[inline]
    pub fn n_active(&self) -> u32 {
        self.active.len() as u32
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn subjects(&self) -> &[SubjectPrior] {
        &self.subjects
    }

    pub fn classifications(&self) -> &[Classification] {
        &self.classifications
    }

    pub fn classification_of(&self, subject_id: SubjectId) -> Option<Classification> {
        self.position_of(subject_id)
            .map(|pos| self.classifications[pos])
    }

    /// Responses observed so far.
    pub fn stage(&self) -> usize {
        self.stage
    }

    /// True once every subject has been classified and removed.
    pub fn is_resolved(&self) -> bool {
        self.active.is_empty()
    }

    pub fn top(&self) -> StateIndex {
        StateIndex::top(self.n_active())
    }

    /// Subject ids in bit order (bit 0 first).
    pub fn bit_to_subject(&self) -> Vec<SubjectId> {
        self.active
            .iter()
            .map(|&pos| self.subjects[pos].subject_id)
            .collect()
    }

    pub fn subject_at_bit(&self, bit: u32) -> SubjectId {
        self.subjects[self.active[bit as usize]].subject_id
    }

    pub fn position_at_bit(&self, bit: u32) -> usize {
        self.active[bit as usize]
    }

    fn position_of(&self, subject_id: SubjectId) -> Option<usize> {
        self.subjects
            .iter()
            .position(|s| s.subject_id == subject_id)
    }

    /// Bit currently holding `subject_id`, if it is still active.
    pub fn bit_of(&self, subject_id: SubjectId) -> Option<u32> {
        let pos = self.position_of(subject_id)?;
        self.active.iter().position(|&p| p == pos).map(|b| b as u32)
    }

    /// Encodes a set of negative subjects as a state of this lattice.
    pub fn encode_state(&self, negative_subjects: &[SubjectId]) -> Result<StateIndex> {
        let mut bits = 0u32;
        for &id in negative_subjects {
            let bit = self.bit_of(id).ok_or(Error::InactiveSubject(id))?;
            bits |= 1 << bit;
        }
        Ok(StateIndex(bits))
    }

    /// Subjects marked negative in `state`, in original input order.
    pub fn decode_state(&self, state: StateIndex) -> Result<Vec<SubjectId>> {
        self.check_state(state)?;
        Ok((0..self.n_active())
            .rev()
            .filter(|b| state.bits() & (1 << b) != 0)
            .map(|b| self.subject_at_bit(b))
            .collect())
    }

    pub fn check_state(&self, state: StateIndex) -> Result<()> {
        if state.fits(self.n_active()) {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state: state.bits(),
                n_active: self.n_active(),
            })
        }
    }

    /// Restricts a true state over all original subjects (bit convention of
    /// the full, unshrunk lattice) to the currently active bits.
    pub fn project_truth(&self, truth: StateIndex) -> StateIndex {
        let n = self.subjects.len();
        let mut bits = 0u32;
        for (bit, &pos) in self.active.iter().enumerate() {
            if truth.bits() & (1 << (n - 1 - pos)) != 0 {
                bits |= 1 << bit;
            }
        }
        StateIndex(bits)
    }

    /// Posterior mass of the up-set of `state`.
    ///
    /// Enumerates `↑state` directly, so the cost is `2^(n - |state|)` reads.
    /// The summation order of nested up-sets agrees (see [`SubsetWalk`]), so
    /// computed masses are monotone along the order even in floating point.
    ///
    /// [`SubsetWalk`]: crate::state::SubsetWalk
    #[inline]
    pub fn mass(&self, state: StateIndex) -> f64 {
        self.mass_counted(state).0
    }

    /// [`mass`](Self::mass) plus the number of array reads it performed.
    pub fn mass_counted(&self, state: StateIndex) -> (f64, u64) {
        let mut sum = 0.0;
        let mut reads = 0u64;
        for s in state.up_set(self.n_active()) {
            sum += self.probs[s.index()];
            reads += 1;
        }
        (sum, reads)
    }

    /// `P(subject negative | data)`.
    pub fn subject_marginal(&self, subject_id: SubjectId) -> Result<f64> {
        let bit = self
            .bit_of(subject_id)
            .ok_or(Error::InactiveSubject(subject_id))?;
        Ok(self.marginal_at_bit(bit))
    }

    #[inline]
    pub fn marginal_at_bit(&self, bit: u32) -> f64 {
        self.mass(StateIndex::singleton(bit))
    }

    /// Conditions on a test of `pool` returning `response` and renormalizes.
    ///
    /// On [`Error::ImpossibleResponse`] the model is left unchanged.
    pub fn update_posterior(
        &mut self,
        pool: StateIndex,
        response: Response,
        model: &ResponseModel,
    ) -> Result<()> {
        if pool.is_bottom() {
            return Err(Error::EmptyPool);
        }
        self.check_state(pool)?;
        let table = model.response_table(pool.cardinality(), response);
        let factor = |i: usize| table[(pool.bits() & !(i as u32)).count_ones() as usize];

        let total: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * factor(i))
            .sum();
        if total
            .partial_cmp(&IMPOSSIBLE_MASS)
            .is_none_or(|o| o.is_lt())
        {
            return Err(Error::ImpossibleResponse);
        }
        for (i, p) in self.probs.iter_mut().enumerate() {
            *p = *p * factor(i) / total;
        }
        self.stage += 1;
        Ok(())
    }

    /// Commits every subject whose marginal crosses a threshold and removes
    /// it from the model, lowest bit first, rescanning after each removal.
    pub fn classify_and_shrink(&mut self, thresholds: &Thresholds) -> Vec<CommitEvent> {
        let mut commits = Vec::new();
        while let Some((bit, decision, residual_error)) = self.next_classifiable(thresholds) {
            let position = self.active[bit as usize];
            let stage = self.stage;
            self.classifications[position] = match decision {
                Decision::Negative => Classification::Negative {
                    residual_error,
                    stage,
                },
                Decision::Positive => Classification::Positive {
                    residual_error,
                    stage,
                },
            };
            self.remove_bit(bit);
            commits.push(CommitEvent {
                subject_id: self.subjects[position].subject_id,
                position,
                decision,
                residual_error,
                stage,
            });
        }
        commits
    }

    /// Both sides of each marginal are summed directly, so a subject whose
    /// opposite states all carry zero mass commits with a residual of exactly 0.
    fn next_classifiable(&self, thresholds: &Thresholds) -> Option<(u32, Decision, f64)> {
        (0..self.n_active()).find_map(|bit| {
            let negative = self.marginal_at_bit(bit);
            let positive = self.positive_mass_at_bit(bit);
            if positive <= thresholds.upper_eps {
                Some((bit, Decision::Negative, positive))
            } else if negative <= thresholds.lower_eps {
                Some((bit, Decision::Positive, negative))
            } else {
                None
            }
        })
    }

    /// `P(subject at bit positive)`: the mass of states with the bit clear.
    fn positive_mass_at_bit(&self, bit: u32) -> f64 {
        let mask = 1usize << bit;
        self.probs
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask == 0)
            .map(|(_, p)| p)
            .sum()
    }

    /// Marginalizes out the subject at `bit`.
    fn remove_bit(&mut self, bit: u32) {
        let half = self.probs.len() / 2;
        let low_mask = (1usize << bit) - 1;
        let shrunk: Vec<f64> = (0..half)
            .map(|t| {
                let clear = ((t & !low_mask) << 1) | (t & low_mask);
                self.probs[clear] + self.probs[clear | (1 << bit)]
            })
            .collect();
        self.probs = shrunk;
        self.active.remove(bit as usize);
        if self.active.is_empty() {
            self.probs = vec![1.0];
        } else {
            // mass is conserved by the sum-out; the guard cannot trip
            let _ = self.normalize();
        }
    }

    fn normalize(&mut self) -> Result<()> {
        let total: f64 = self.probs.iter().sum();
        if total
            .partial_cmp(&IMPOSSIBLE_MASS)
            .is_none_or(|o| o.is_lt())
            || !total.is_finite()
        {
            return Err(Error::InvalidDistribution(format!(
                "total mass {total} cannot be normalized"
            )));
        }
        for p in &mut self.probs {
            *p /= total;
        }
        Ok(())
    }
}

fn validate_subjects(priors: &[SubjectPrior]) -> Result<()> {
    if priors.is_empty() || priors.len() > N_MAX {
        return Err(Error::UnsupportedSubjectCount(priors.len()));
    }
    for (i, prior) in priors.iter().enumerate() {
        if !(prior.risk > 0.0 && prior.risk < 1.0) {
            return Err(Error::InvalidPrior {
                subject_id: prior.subject_id,
                risk: prior.risk,
            });
        }
        if priors[..i].iter().any(|p| p.subject_id == prior.subject_id) {
            return Err(Error::DuplicateSubject(prior.subject_id));
        }
    }
    Ok(())
}

/// Priors with ids `0..risks.len()`.
pub fn priors_from_risks(risks: &[f64]) -> Vec<SubjectPrior> {
    risks
        .iter()
        .enumerate()
        .map(|(id, &risk)| SubjectPrior::new(id, risk))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: SubjectId = 0;
    const B: SubjectId = 1;
    const C: SubjectId = 2;

    fn abc() -> LatticeModel {
        LatticeModel::build(&priors_from_risks(&[0.1, 0.05, 0.2])).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn encode_follows_input_order_as_high_bits() {
        let lattice = abc();
        assert_eq!(lattice.encode_state(&[A, C]).unwrap(), StateIndex(5));
        assert_eq!(lattice.encode_state(&[A, B]).unwrap(), StateIndex(0b110));
        assert_eq!(lattice.encode_state(&[B, C]).unwrap(), StateIndex(0b011));
        assert_eq!(lattice.encode_state(&[]).unwrap(), StateIndex(0));
        assert_eq!(lattice.encode_state(&[A, B, C]).unwrap(), StateIndex(7));
        assert_eq!(lattice.decode_state(StateIndex(5)).unwrap(), vec![A, C]);
    }

    #[test]
    fn encode_rejects_unknown_subject() {
        assert_eq!(abc().encode_state(&[9]), Err(Error::InactiveSubject(9)));
    }

    #[test]
    fn single_subject_build() {
        let lattice = LatticeModel::build(&priors_from_risks(&[0.3])).unwrap();
        assert!(close(lattice.probs()[0], 0.3, 1e-15));
        assert!(close(lattice.probs()[1], 0.7, 1e-15));
    }

    #[test]
    fn build_marginals_and_top() {
        let lattice = abc();
        assert!(close(lattice.subject_marginal(A).unwrap(), 0.9, 1e-12));
        assert!(close(lattice.subject_marginal(B).unwrap(), 0.95, 1e-12));
        assert!(close(lattice.probs()[7], 0.684, 1e-12));
        assert!(close(lattice.mass(StateIndex(0b010)), 0.95, 1e-12));
        assert!(close(lattice.mass(StateIndex(0)), 1.0, 1e-12));
    }

    #[test]
    fn build_rejects_bad_input() {
        assert_eq!(
            LatticeModel::build(&[]),
            Err(Error::UnsupportedSubjectCount(0))
        );
        assert_eq!(
            LatticeModel::build(&priors_from_risks(&[0.1; 27])),
            Err(Error::UnsupportedSubjectCount(27))
        );
        assert!(matches!(
            LatticeModel::build(&priors_from_risks(&[0.1, 1.0])),
            Err(Error::InvalidPrior { subject_id: 1, .. })
        ));
        assert!(matches!(
            LatticeModel::build(&priors_from_risks(&[0.0])),
            Err(Error::InvalidPrior { .. })
        ));
        assert_eq!(
            LatticeModel::build(&[SubjectPrior::new(4, 0.1), SubjectPrior::new(4, 0.2)]),
            Err(Error::DuplicateSubject(4))
        );
    }

    #[test]
    fn noiseless_negative_update_on_uniform_pair() {
        let mut lattice = LatticeModel::build(&priors_from_risks(&[0.5, 0.5])).unwrap();
        let pool = lattice.encode_state(&[B]).unwrap();
        assert_eq!(pool, StateIndex(0b01));
        lattice
            .update_posterior(pool, Response::Negative, &ResponseModel::noiseless())
            .unwrap();
        assert_eq!(lattice.probs(), &[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(lattice.stage(), 1);
    }

    #[test]
    fn noisy_negative_update_single_subject() {
        let mut lattice = LatticeModel::build(&priors_from_risks(&[0.3])).unwrap();
        let model = ResponseModel::new(0.8, 1.0, 0.0).unwrap();
        lattice
            .update_posterior(StateIndex(1), Response::Negative, &model)
            .unwrap();
        assert!(close(lattice.probs()[0], 0.06 / 0.76, 1e-15));
    }

    #[test]
    fn positive_individual_test_zeroes_marginal() {
        let mut lattice = abc();
        lattice
            .update_posterior(
                StateIndex(0b100),
                Response::Positive,
                &ResponseModel::noiseless(),
            )
            .unwrap();
        assert_eq!(lattice.subject_marginal(A).unwrap(), 0.0);
    }

    #[test]
    fn impossible_response_leaves_model_untouched() {
        let mut lattice = LatticeModel::build(&priors_from_risks(&[0.5])).unwrap();
        let noiseless = ResponseModel::noiseless();
        lattice
            .update_posterior(StateIndex(1), Response::Negative, &noiseless)
            .unwrap();
        let before = lattice.clone();
        assert_eq!(
            lattice.update_posterior(StateIndex(1), Response::Positive, &noiseless),
            Err(Error::ImpossibleResponse)
        );
        assert_eq!(lattice, before);
        assert_eq!(
            lattice.update_posterior(StateIndex(0), Response::Positive, &noiseless),
            Err(Error::EmptyPool)
        );
    }

    #[test]
    fn shrink_certain_negative() {
        let priors = priors_from_risks(&[0.5, 0.5]);
        let mut lattice =
            LatticeModel::from_distribution(&priors, vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        let commits = lattice.classify_and_shrink(&Thresholds::new(0.01, 0.01).unwrap());
        assert_eq!(commits.len(), 1);
        assert_eq!(commits[0].subject_id, B);
        assert_eq!(commits[0].decision, Decision::Negative);
        assert_eq!(commits[0].residual_error, 0.0);
        assert_eq!(lattice.probs(), &[0.5, 0.5]);
        assert_eq!(lattice.bit_to_subject(), vec![A]);
        assert!(matches!(
            lattice.classification_of(B),
            Some(Classification::Negative { stage: 0, .. })
        ));
        assert_eq!(lattice.encode_state(&[B]), Err(Error::InactiveSubject(B)));
    }

    #[test]
    fn shrink_nothing_when_uncertain() {
        let mut lattice = LatticeModel::build(&priors_from_risks(&[0.3; 4])).unwrap();
        assert!(lattice
            .classify_and_shrink(&Thresholds::new(0.01, 0.01).unwrap())
            .is_empty());
        assert_eq!(lattice.probs().len(), 16);
    }

    #[test]
    fn shrink_to_empty_lattice() {
        let mut lattice = LatticeModel::build(&priors_from_risks(&[0.3])).unwrap();
        lattice
            .update_posterior(
                StateIndex(1),
                Response::Positive,
                &ResponseModel::noiseless(),
            )
            .unwrap();
        let commits = lattice.classify_and_shrink(&Thresholds::default());
        assert_eq!(commits.len(), 1);
        assert_eq!(commits[0].decision, Decision::Positive);
        assert!(lattice.is_resolved());
        assert_eq!(lattice.probs(), &[1.0]);
    }

    #[test]
    fn project_truth_tracks_removed_bits() {
        let priors = priors_from_risks(&[0.5, 0.5, 0.5]);
        // B certainly negative
        let probs = (0..8)
            .map(|i| if i & 0b010 != 0 { 0.25 } else { 0.0 })
            .collect();
        let mut lattice = LatticeModel::from_distribution(&priors, probs).unwrap();
        lattice.classify_and_shrink(&Thresholds::default());
        assert_eq!(lattice.bit_to_subject(), vec![C, A]);
        // truth: A negative, B negative, C positive -> 0b110 in the full lattice
        assert_eq!(lattice.project_truth(StateIndex(0b110)), StateIndex(0b10));
    }
}
