use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Adam without weight decay or schedule.
///
/// Updated parameters are rounded to `f32` so the network state can be
/// stored in an `f32` checkpoint blob without loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            steps: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grad.len()
            )));
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let update = self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            *p = f64::from((*p - update) as f32);
        }
        Ok(())
    }

    /// `u64 steps | f64 lr | u64 n | m[n] | v[n]`, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 16 * self.m.len());
        out.extend_from_slice(&self.steps.to_le_bytes());
        out.extend_from_slice(&self.lr.to_le_bytes());
        out.extend_from_slice(&(self.m.len() as u64).to_le_bytes());
        for x in self.m.iter().chain(&self.v) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |i: usize| -> Option<[u8; 8]> { bytes.get(8 * i..8 * i + 8)?.try_into().ok() };
        let bad = || Error::Data("truncated optimizer state".into());
        let steps = u64::from_le_bytes(word(0).ok_or_else(bad)?);
        let lr = f64::from_le_bytes(word(1).ok_or_else(bad)?);
        let n = u64::from_le_bytes(word(2).ok_or_else(bad)?) as usize;
        if bytes.len() != 24 + 16 * n {
            return Err(Error::Data(format!(
                "optimizer state for {n} parameters should be {} bytes, found {}",
                24 + 16 * n,
                bytes.len()
            )));
        }
        let read = |i: usize| f64::from_le_bytes(word(i).expect("length checked"));
        Ok(Adam {
            lr,
            steps,
            m: (0..n).map(|i| read(3 + i)).collect(),
            v: (0..n).map(|i| read(3 + n + i)).collect(),
        })
    }
}
