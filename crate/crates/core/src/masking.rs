//! Masking schemes and mask generators over flat token sequences.
//!
//! A [`MaskMatrix`] holds one flag per token; `true` means the token is
//! visible (1), `false` means it is masked (0).

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_RATIOS: [f64; 5] = [0.15, 0.35, 0.55, 0.75, 0.95];
pub const DEFAULT_MAX_BLOCK: usize = 20;

/// A (mask ratio, block size) pair: one arm of the curriculum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskScheme {
    pub ratio: f64,
    pub block: usize,
}

/// Which generator turns a scheme into a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Block-wise masking; block size 1 is token-wise random masking.
    Block,
    /// Token-wise random masking followed by masking every later token.
    RandomAutoregressive,
}

/// Cartesian product of ratios and block sizes, indexed ratio-major:
/// arm `k = ratio_idx * blocks.len() + block_idx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPool {
    ratios: Vec<f64>,
    blocks: Vec<usize>,
}

impl Default for MaskPool {
    fn default() -> Self {
        MaskPool {
            ratios: DEFAULT_RATIOS.to_vec(),
            blocks: (1..=DEFAULT_MAX_BLOCK).collect(),
        }
    }
}

impl MaskPool {
    pub fn new(ratios: Vec<f64>, blocks: Vec<usize>) -> Result<Self> {
        if ratios.is_empty() || blocks.is_empty() {
            return Err(Error::Param("mask pool needs at least one ratio and one block size".into()));
        }
        if ratios.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(Error::Param(format!("mask ratios must lie in (0, 1]: {ratios:?}")));
        }
        if blocks.contains(&0) {
            return Err(Error::Param("block sizes must be >= 1".into()));
        }
        Ok(MaskPool { ratios, blocks })
    }

    pub fn len(&self) -> usize {
        self.ratios.len() * self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn scheme(&self, arm: usize) -> MaskScheme {
        let nb = self.blocks.len();
        MaskScheme {
            ratio: self.ratios[arm / nb],
            block: self.blocks[arm % nb],
        }
    }

    pub fn arm_of(&self, ratio_idx: usize, block_idx: usize) -> usize {
        ratio_idx * self.blocks.len() + block_idx
    }

    /// Arm whose scheme equals `scheme`, if any.
    pub fn find(&self, scheme: MaskScheme) -> Option<usize> {
        let r = self.ratios.iter().position(|&p| p == scheme.ratio)?;
        let b = self.blocks.iter().position(|&b| b == scheme.block)?;
        Some(self.arm_of(r, b))
    }

    pub fn schemes(&self) -> impl Iterator<Item = MaskScheme> + '_ {
        (0..self.len()).map(|k| self.scheme(k))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MaskMatrix {
    visible: Vec<bool>,
}

impl MaskMatrix {
    pub fn ones(len: usize) -> Self {
        MaskMatrix {
            visible: vec![true; len],
        }
    }

    pub fn zeros(len: usize) -> Self {
        MaskMatrix {
            visible: vec![false; len],
        }
    }

    pub fn from_visible(visible: Vec<bool>) -> Self {
        MaskMatrix { visible }
    }

    /// Parse a string of `0`/`1` characters.
    pub fn from_bits(bits: &str) -> Self {
        MaskMatrix {
            visible: bits.chars().filter(|c| !c.is_whitespace()).map(|c| c == '1').collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.visible.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visible.is_empty()
    }

    pub fn is_visible(&self, i: usize) -> bool {
        self.visible[i]
    }

    pub fn is_masked(&self, i: usize) -> bool {
        !self.visible[i]
    }

    pub fn mask(&mut self, i: usize) {
        self.visible[i] = false;
    }

    pub fn unmask(&mut self, i: usize) {
        self.visible[i] = true;
    }

    pub fn masked_count(&self) -> usize {
        self.visible.iter().filter(|v| !**v).count()
    }

    pub fn masked_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.visible[i]).collect()
    }

    pub fn visible_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.visible[i]).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.visible
    }

    /// Mask every index above the largest masked index.
    pub fn close_suffix(&mut self) {
        if let Some(last) = self.visible.iter().rposition(|v| !*v) {
            self.visible[last..].iter_mut().for_each(|v| *v = false);
        }
    }

    /// `u32 L` followed by the bits packed LSB-first, 1 = visible.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.len() as u32).to_le_bytes().to_vec();
        out.extend(self.visible.chunks(8).map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &v)| acc | (u8::from(v) << i))
        }));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::Data("mask bytes shorter than the length prefix".into()));
        }
        let len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        let payload = &bytes[4..];
        if payload.len() != len.div_ceil(8) {
            return Err(Error::Data(format!(
                "mask of length {len} needs {} payload bytes, found {}",
                len.div_ceil(8),
                payload.len()
            )));
        }
        let visible = (0..len).map(|i| payload[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(MaskMatrix { visible })
    }
}

impl std::fmt::Display for MaskMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.visible {
            f.write_str(if *v { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Number of tokens to mask: `floor(p * L)`. The tiny epsilon keeps
/// products such as `0.29 * 100` from rounding down a whole token.
pub fn masked_len(len: usize, ratio: f64) -> usize {
    ((ratio * len as f64) + 1e-9).floor() as usize
}

fn validate(len: usize, ratio: f64) -> Result<()> {
    if len < 2 {
        return Err(Error::Param(format!("sequence length must be >= 2, got {len}")));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Param(format!("mask ratio must lie in (0, 1], got {ratio}")));
    }
    Ok(())
}

fn degenerate(len: usize, ratio: f64) -> MaskMatrix {
    log::warn!("mask ratio {ratio} on {len} tokens masks nothing; returning an all-visible mask");
    MaskMatrix::ones(len)
}

/// Mask a uniformly random subset of exactly `floor(p * L)` tokens.
pub fn random_mask(len: usize, ratio: f64, rng: &mut Rng) -> Result<MaskMatrix> {
    validate(len, ratio)?;
    let l = masked_len(len, ratio);
    if l == 0 {
        return Ok(degenerate(len, ratio));
    }
    let mut m = MaskMatrix::ones(len);
    for i in index::sample(rng, len, l) {
        m.mask(i);
    }
    Ok(m)
}

/// Block-wise masking.
///
/// Picks a start offset `s` in `0..b`, shuffles the `c = (L-1)/b` block
/// indices and expands block `i` to the token indices `i*b + j + s`, with
/// `j` in `1..b` (or `0..b` when `full_blocks`). The last `l` expanded
/// indices are masked; if there are fewer than `l`, the shortfall is taken
/// from the tail of the ordered complement. Block size 1 is token-wise
/// random masking.
pub fn block_mask(
    len: usize,
    ratio: f64,
    block: usize,
    full_blocks: bool,
    rng: &mut Rng,
) -> Result<MaskMatrix> {
    validate(len, ratio)?;
    if block == 0 || block > len {
        return Err(Error::Param(format!("block size {block} invalid for length {len}")));
    }
    let l = masked_len(len, ratio);
    if l == 0 {
        return Ok(degenerate(len, ratio));
    }
    if block == 1 {
        return random_mask(len, ratio, rng);
    }
    let start = rng.random_range(0..block);
    let mut order: Vec<usize> = (0..(len - 1) / block).collect();
    order.shuffle(rng);
    Ok(expand_blocks(len, l, block, start, &order, full_blocks))
}

/// The deterministic part of [`block_mask`] for a given start offset and
/// block order. Expanded indices past the end of the sequence are dropped.
pub fn expand_blocks(
    len: usize,
    masked: usize,
    block: usize,
    start: usize,
    order: &[usize],
    full_blocks: bool,
) -> MaskMatrix {
    let first_j = if full_blocks { 0 } else { 1 };
    let ts: Vec<usize> = order
        .iter()
        .flat_map(|&i| (first_j..block).map(move |j| i * block + j + start))
        .filter(|&t| t < len)
        .collect();
    let mut m = MaskMatrix::ones(len);
    for &t in &ts[ts.len().saturating_sub(masked)..] {
        m.mask(t);
    }
    if ts.len() < masked {
        let mut taken = vec![false; len];
        ts.iter().for_each(|&t| taken[t] = true);
        let complement: Vec<usize> = (0..len).filter(|&i| !taken[i]).collect();
        let need = masked - ts.len();
        for &t in &complement[complement.len() - need..] {
            m.mask(t);
        }
    }
    m
}

/// Random token-wise mask whose masked set is then extended to every token
/// after the last masked one.
pub fn random_autoregressive_mask(len: usize, ratio: f64, rng: &mut Rng) -> Result<MaskMatrix> {
    let mut m = random_mask(len, ratio, rng)?;
    m.close_suffix();
    Ok(m)
}

/// Draw a training mask for `scheme` with the given generator.
pub fn generate(
    kind: MaskKind,
    scheme: MaskScheme,
    len: usize,
    full_blocks: bool,
    rng: &mut Rng,
) -> Result<MaskMatrix> {
    match kind {
        MaskKind::Block => block_mask(len, scheme.ratio, scheme.block.min(len), full_blocks, rng),
        MaskKind::RandomAutoregressive => random_autoregressive_mask(len, scheme.ratio, rng),
    }
}

/// Visible prefix of `known` tokens, everything after masked.
pub fn prefix_mask(len: usize, known: usize) -> Result<MaskMatrix> {
    if known >= len {
        return Err(Error::Param(format!(
            "prefix of {known} tokens leaves nothing to predict in {len}"
        )));
    }
    let mut m = MaskMatrix::zeros(len);
    (0..known).for_each(|i| m.unmask(i));
    Ok(m)
}

/// Skill-prompting mask: the first `prompt_timesteps` state-action pairs are
/// visible.
pub fn prompt_mask(len: usize, prompt_timesteps: usize) -> Result<MaskMatrix> {
    prefix_mask(len, 2 * prompt_timesteps)
}

/// Goal-conditioned planning mask: only the start state (token 0) and the
/// listed goal state tokens are visible.
pub fn goal_mask(len: usize, goal_tokens: &[usize]) -> Result<MaskMatrix> {
    let mut m = MaskMatrix::zeros(len);
    m.unmask(0);
    let mut prev: Option<usize> = None;
    for &g in goal_tokens {
        if g % 2 != 0 {
            return Err(Error::Param(format!("goal token {g} is an action position")));
        }
        if g >= len {
            return Err(Error::Param(format!("goal token {g} outside window of {len}")));
        }
        if prev.is_some_and(|p| g <= p) {
            return Err(Error::Param("goal tokens must be strictly increasing".into()));
        }
        prev = Some(g);
        m.unmask(g);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn pool_indexing() {
        let pool = MaskPool::default();
        assert_eq!(pool.len(), 100);
        assert_eq!(pool.scheme(0), MaskScheme { ratio: 0.15, block: 1 });
        assert_eq!(pool.scheme(99), MaskScheme { ratio: 0.95, block: 20 });
        assert_eq!(pool.scheme(21), MaskScheme { ratio: 0.35, block: 2 });
        for k in 0..pool.len() {
            assert_eq!(pool.find(pool.scheme(k)), Some(k));
        }
    }

    #[test]
    fn alg_trace_l8_p05_b2() {
        // s = 0, block order [2, 0, 1]: expanded [5, 1, 3]; l = 4 needs one
        // more token from the complement [0, 2, 4, 6, 7] tail, i.e. 7.
        let m = expand_blocks(8, 4, 2, 0, &[2, 0, 1], false);
        assert_eq!(m.to_string(), "10101010");
        assert_eq!(m.masked_indices(), vec![1, 3, 5, 7]);
    }

    #[test]
    fn full_blocks_variant() {
        // L=10, b=3, s=0, c=3, order [1,0,2]: ts = [3,4,5,0,1,2,6,7,8]; l=5
        // masks the last five: 1,2,6,7,8.
        let m = expand_blocks(10, 5, 3, 0, &[1, 0, 2], true);
        assert_eq!(m.masked_indices(), vec![1, 2, 6, 7, 8]);
    }

    #[test]
    fn expanded_indices_past_end_are_dropped() {
        // L=10, b=3, s=2: block 2 would expand to 9 and 10.
        let m = expand_blocks(10, 9, 3, 2, &[0, 1, 2], false);
        assert_eq!(m.masked_count(), 9);
    }

    #[test]
    fn random_mask_counts() {
        let mut rng = seeded(1);
        assert_eq!(random_mask(5, 0.2, &mut rng).unwrap().masked_count(), 1);
        assert_eq!(random_mask(10, 0.5, &mut rng).unwrap().masked_count(), 5);
        assert_eq!(random_mask(7, 1.0, &mut rng).unwrap().masked_count(), 7);
    }

    #[test]
    fn degenerate_ratio_gives_all_visible() {
        let mut rng = seeded(1);
        assert_eq!(random_mask(4, 0.2, &mut rng).unwrap(), MaskMatrix::ones(4));
        assert_eq!(block_mask(4, 0.2, 2, false, &mut rng).unwrap(), MaskMatrix::ones(4));
        assert_eq!(
            random_autoregressive_mask(4, 0.2, &mut rng).unwrap(),
            MaskMatrix::ones(4)
        );
    }

    #[test]
    fn full_masking_for_any_block() {
        let mut rng = seeded(2);
        for b in 1..=12 {
            let m = block_mask(12, 1.0, b, false, &mut rng).unwrap();
            assert_eq!(m.masked_count(), 12, "b={b}");
        }
    }

    #[test]
    fn parameter_errors() {
        let mut rng = seeded(0);
        assert!(matches!(block_mask(4, 0.5, 5, false, &mut rng), Err(Error::Param(_))));
        assert!(matches!(block_mask(4, 0.5, 0, false, &mut rng), Err(Error::Param(_))));
        assert!(matches!(random_mask(1, 0.5, &mut rng), Err(Error::Param(_))));
        assert!(matches!(random_mask(4, 0.0, &mut rng), Err(Error::Param(_))));
        assert!(matches!(random_mask(4, 1.5, &mut rng), Err(Error::Param(_))));
    }

    #[test]
    fn autoregressive_closure_rule() {
        let mut m = MaskMatrix::ones(8);
        m.mask(2);
        m.mask(5);
        m.close_suffix();
        assert_eq!(m.masked_indices(), vec![2, 5, 6, 7]);

        let mut tail = MaskMatrix::from_bits("11110000");
        tail.close_suffix();
        assert_eq!(tail, MaskMatrix::from_bits("11110000"));
    }

    #[test]
    fn autoregressive_has_at_least_floor_zeros() {
        let mut rng = seeded(3);
        for _ in 0..200 {
            let m = random_autoregressive_mask(16, 0.35, &mut rng).unwrap();
            assert!(m.masked_count() >= 5);
            let last = *m.masked_indices().last().unwrap();
            assert_eq!(last, 15);
        }
    }

    #[test]
    fn prompt_masks() {
        assert_eq!(prompt_mask(12, 3).unwrap().to_string(), "111111000000");
        assert_eq!(prompt_mask(4, 1).unwrap().to_string(), "1100");
        assert!(matches!(prompt_mask(4, 2), Err(Error::Param(_))));
    }

    #[test]
    fn goal_masks() {
        assert_eq!(goal_mask(10, &[4, 8]).unwrap().visible_indices(), vec![0, 4, 8]);
        assert_eq!(goal_mask(10, &[]).unwrap().visible_indices(), vec![0]);
        let goals: Vec<usize> = [20, 40, 60, 80].iter().map(|t| 2 * t).collect();
        assert_eq!(
            goal_mask(200, &goals).unwrap().visible_indices(),
            vec![0, 40, 80, 120, 160]
        );
        assert!(matches!(goal_mask(10, &[3]), Err(Error::Param(_))));
        assert!(matches!(goal_mask(10, &[6, 4]), Err(Error::Param(_))));
        assert!(matches!(goal_mask(10, &[10]), Err(Error::Param(_))));
    }

    #[test]
    fn byte_layout() {
        let m = MaskMatrix::from_bits("1011000011");
        let b = m.to_bytes();
        assert_eq!(b, vec![10, 0, 0, 0, 0b0000_1101, 0b0000_0011]);
        assert_eq!(MaskMatrix::from_bytes(&b).unwrap(), m);
        assert!(MaskMatrix::from_bytes(&b[..5]).is_err());
    }

    #[test]
    fn deterministic_under_pinned_rng() {
        let a = block_mask(64, 0.55, 7, false, &mut seeded(9)).unwrap();
        let b = block_mask(64, 0.55, 7, false, &mut seeded(9)).unwrap();
        assert_eq!(a, b);
    }
}
