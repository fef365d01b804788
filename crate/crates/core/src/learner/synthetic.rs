use super::{Batch, Learner};
use crate::error::{Error, Result};

/// Closed-form learning-progress model.
///
/// Scheme `k` has loss `a_k * exp(-sum_j T[k][j] * n_j) + c_k`, where `n_j`
/// counts training steps spent on scheme `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLearner {
    base: Vec<f64>,
    floor: Vec<f64>,
    transfer: Vec<Vec<f64>>,
    counts: Vec<u64>,
}

impl SyntheticLearner {
    pub fn new(base: Vec<f64>, floor: Vec<f64>, transfer: Vec<Vec<f64>>) -> Result<Self> {
        let k = base.len();
        if k == 0 || floor.len() != k || transfer.len() != k || transfer.iter().any(|r| r.len() != k) {
            return Err(Error::Dimension(format!(
                "synthetic learner needs K base losses, K floors and a KxK transfer matrix (K = {k})"
            )));
        }
        let all = base.iter().chain(&floor).chain(transfer.iter().flatten());
        if all.clone().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Param("synthetic learner entries must be finite and >= 0".into()));
        }
        Ok(SyntheticLearner {
            base,
            floor,
            transfer,
            counts: vec![0; k],
        })
    }

    pub fn arms(&self) -> usize {
        self.base.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn loss(&self, k: usize) -> f64 {
        let exposure: f64 = self.transfer[k]
            .iter()
            .zip(&self.counts)
            .map(|(t, &n)| t * n as f64)
            .sum();
        self.base[k] * (-exposure).exp() + self.floor[k]
    }

    pub fn train(&mut self, k: usize) {
        self.counts[k] += 1;
    }

    /// Mean loss over every scheme.
    pub fn target_loss(&self) -> f64 {
        (0..self.arms()).map(|k| self.loss(k)).sum::<f64>() / self.arms() as f64
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::Param(format!("arm {arm} out of range for {} schemes", self.arms())));
        }
        Ok(())
    }
}

impl Learner for SyntheticLearner {
    type Snapshot = Vec<u64>;

    fn train_step(&mut self, batch: &Batch<'_>) -> Result<f64> {
        self.check_arm(batch.arm)?;
        let loss = self.loss(batch.arm);
        self.train(batch.arm);
        Ok(loss)
    }

    fn eval_loss(&self, batch: &Batch<'_>) -> Result<f64> {
        self.check_arm(batch.arm)?;
        Ok(self.loss(batch.arm))
    }

    fn snapshot(&self) -> Vec<u64> {
        self.counts.clone()
    }

    fn restore(&mut self, snapshot: Vec<u64>) -> Result<()> {
        if snapshot.len() != self.arms() {
            return Err(Error::Dimension("snapshot arm count differs".into()));
        }
        self.counts = snapshot;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_transfer_is_constant() {
        let mut s = SyntheticLearner::new(vec![2.0, 1.0], vec![0.5, 0.25], vec![vec![0.0; 2]; 2]).unwrap();
        for _ in 0..50 {
            s.train(0);
            s.train(1);
        }
        assert_eq!(s.loss(0), 2.5);
        assert_eq!(s.loss(1), 1.25);
    }

    #[test]
    fn identity_transfer_decays_exponentially() {
        let mut s = SyntheticLearner::new(vec![1.0], vec![0.0], vec![vec![1.0]]).unwrap();
        for n in 1..=10 {
            s.train(0);
            assert!((s.loss(0) - (-(n as f64)).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_transfer_helps_other_arm() {
        let mut s = SyntheticLearner::new(vec![1.0, 1.0], vec![0.0, 0.0], vec![vec![0.0, 0.3], vec![0.0, 0.0]]).unwrap();
        let before = s.loss(0);
        s.train(1);
        assert!(s.loss(0) < before);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SyntheticLearner::new(vec![1.0], vec![0.0, 0.0], vec![vec![0.0]]).is_err());
        assert!(SyntheticLearner::new(vec![-1.0], vec![0.0], vec![vec![0.0]]).is_err());
    }
}
