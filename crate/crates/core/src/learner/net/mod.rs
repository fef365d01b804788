//! Bidirectional encoder-decoder for masked prediction over interleaved
//! state-action tokens.
//!
//! The encoder only sees visible tokens. Its outputs are scattered back
//! into the full token grid, masked slots are filled with a learned mask
//! embedding, and the decoder attends over the whole grid. Two linear heads
//! reconstruct states (even tokens) and actions (odd tokens).

mod adam;
mod checkpoint;
mod ops;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointManifest, MODEL_FILE};

use ndarray::{Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use ops::{view1, view1_mut, view2, Attention, Block, BlockCache, LayerNorm, Linear, LnCache, Mlp};

use crate::error::{Error, Result};
use crate::masking::MaskMatrix;
use crate::par;
use crate::rng::Rng;
use crate::traj::{NormStats, Window};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    /// Feed-forward width as a multiple of `hidden`.
    pub ff_mult: usize,
    /// Maximum token count `L` of a window.
    pub context_tokens: usize,
    /// Reconstruct every token (true) or only the masked ones.
    pub loss_on_all: bool,
}

impl NetConfig {
    /// Desk-scale defaults.
    pub fn desk(state_dim: usize, action_dim: usize) -> Self {
        NetConfig {
            state_dim,
            action_dim,
            hidden: 64,
            heads: 2,
            enc_layers: 2,
            dec_layers: 1,
            ff_mult: 2,
            context_tokens: 32,
            loss_on_all: true,
        }
    }

    /// Sizes used for the published DeepMind Control runs.
    pub fn paper_scale(state_dim: usize, action_dim: usize) -> Self {
        NetConfig {
            hidden: 256,
            heads: 4,
            enc_layers: 3,
            dec_layers: 2,
            ff_mult: 4,
            context_tokens: 64,
            ..Self::desk(state_dim, action_dim)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Config("net state/action dims must be positive".into()));
        }
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden {} must be a positive multiple of heads {}",
                self.hidden, self.heads
            )));
        }
        if self.ff_mult == 0 || self.context_tokens < 2 || !self.context_tokens.is_multiple_of(2) {
            return Err(Error::Config("ff_mult >= 1 and an even context >= 2 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Normal(f64),
    Const(f64),
}

#[derive(Debug, Clone)]
struct Layout {
    state_in: Linear,
    action_in: Linear,
    modality: usize,
    enc_pos: usize,
    mask_token: usize,
    dec_pos: usize,
    enc: Vec<Block>,
    enc_norm: LayerNorm,
    dec: Vec<Block>,
    dec_norm: LayerNorm,
    state_head: Linear,
    action_head: Linear,
    total: usize,
    inits: Vec<(std::ops::Range<usize>, Init)>,
    names: Vec<(String, std::ops::Range<usize>)>,
}

struct Alloc {
    next: usize,
    inits: Vec<(std::ops::Range<usize>, Init)>,
    names: Vec<(String, std::ops::Range<usize>)>,
}

impl Alloc {
    fn take(&mut self, name: String, len: usize, init: Init) -> usize {
        let start = self.next;
        self.next += len;
        self.inits.push((start..self.next, init));
        self.names.push((name, start..self.next));
        start
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize) -> Linear {
        let w = self.take(format!("{name}.weight"), din * dout, Init::FanIn(din));
        let b = self.take(format!("{name}.bias"), dout, Init::FanIn(din));
        Linear { w, b, din, dout }
    }

    fn norm(&mut self, name: &str, dim: usize) -> LayerNorm {
        let gamma = self.take(format!("{name}.gamma"), dim, Init::Const(1.0));
        let beta = self.take(format!("{name}.beta"), dim, Init::Const(0.0));
        LayerNorm { gamma, beta, dim }
    }

    fn block(&mut self, name: &str, cfg: &NetConfig) -> Block {
        let h = cfg.hidden;
        Block {
            ln1: self.norm(&format!("{name}.ln1"), h),
            attn: Attention {
                q: self.linear(&format!("{name}.attn.q"), h, h),
                k: self.linear(&format!("{name}.attn.k"), h, h),
                v: self.linear(&format!("{name}.attn.v"), h, h),
                o: self.linear(&format!("{name}.attn.o"), h, h),
                heads: cfg.heads,
                dim: h,
            },
            ln2: self.norm(&format!("{name}.ln2"), h),
            mlp: Mlp {
                fc1: self.linear(&format!("{name}.mlp.fc1"), h, h * cfg.ff_mult),
                fc2: self.linear(&format!("{name}.mlp.fc2"), h * cfg.ff_mult, h),
            },
        }
    }
}

impl Layout {
    fn new(cfg: &NetConfig) -> Self {
        let h = cfg.hidden;
        let l = cfg.context_tokens;
        let emb = Init::Normal(0.02);
        let mut a = Alloc {
            next: 0,
            inits: Vec::new(),
            names: Vec::new(),
        };
        let state_in = a.linear("state_in", cfg.state_dim, h);
        let action_in = a.linear("action_in", cfg.action_dim, h);
        let modality = a.take("modality".into(), 2 * h, emb);
        let enc_pos = a.take("enc_pos".into(), l * h, emb);
        let mask_token = a.take("mask_token".into(), h, emb);
        let dec_pos = a.take("dec_pos".into(), l * h, emb);
        let enc = (0..cfg.enc_layers).map(|i| a.block(&format!("enc.{i}"), cfg)).collect();
        let enc_norm = a.norm("enc_norm", h);
        let dec = (0..cfg.dec_layers).map(|i| a.block(&format!("dec.{i}"), cfg)).collect();
        let dec_norm = a.norm("dec_norm", h);
        let state_head = a.linear("state_head", h, cfg.state_dim);
        let action_head = a.linear("action_head", h, cfg.action_dim);
        Layout {
            state_in,
            action_in,
            modality,
            enc_pos,
            mask_token,
            dec_pos,
            enc,
            enc_norm,
            dec,
            dec_norm,
            state_head,
            action_head,
            total: a.next,
            inits: a.inits,
            names: a.names,
        }
    }
}

/// Intermediate values kept for the backward pass of one window.
struct Trace {
    visible: Vec<usize>,
    states_in: Array2<f64>,
    actions_in: Array2<f64>,
    enc: Vec<BlockCache>,
    enc_norm: Option<LnCache>,
    dec: Vec<BlockCache>,
    dec_norm: LnCache,
    dec_states: Array2<f64>,
    dec_actions: Array2<f64>,
}

/// Reconstruction of one window in normalized units.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// `W x Ds`
    pub states: Array2<f64>,
    /// `W x Da`
    pub actions: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPredictionNet {
    cfg: NetConfig,
    layout_total: usize,
    params: Vec<f64>,
}

impl MaskedPredictionNet {
    /// Fresh parameters; every value is representable in `f32`.
    pub fn new(cfg: NetConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(&cfg);
        let mut params = vec![0.0; layout.total];
        for (range, init) in &layout.inits {
            for p in &mut params[range.clone()] {
                let v = match *init {
                    Init::FanIn(fan) => {
                        let bound = 1.0 / (fan as f64).sqrt();
                        rng.random_range(-bound..bound)
                    }
                    Init::Normal(std) => Normal::new(0.0, std).expect("valid std").sample(rng),
                    Init::Const(c) => c,
                };
                *p = f64::from(v as f32);
            }
        }
        Ok(MaskedPredictionNet {
            layout_total: layout.total,
            cfg,
            params,
        })
    }

    pub fn from_params(cfg: NetConfig, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let total = Layout::new(&cfg).total;
        if params.len() != total {
            return Err(Error::Dimension(format!(
                "architecture needs {total} parameters, got {}",
                params.len()
            )));
        }
        Ok(MaskedPredictionNet {
            cfg,
            layout_total: total,
            params,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    pub fn param_count(&self) -> usize {
        self.layout_total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Named parameter ranges in declaration order.
    pub fn param_names(&self) -> Vec<(String, std::ops::Range<usize>)> {
        Layout::new(&self.cfg).names
    }

    fn check(&self, w: &Window, m: &MaskMatrix) -> Result<()> {
        if w.state_dim() != self.cfg.state_dim || w.action_dim() != self.cfg.action_dim {
            return Err(Error::Dimension(format!(
                "window dims ({}, {}) vs net ({}, {})",
                w.state_dim(),
                w.action_dim(),
                self.cfg.state_dim,
                self.cfg.action_dim
            )));
        }
        if w.token_len() > self.cfg.context_tokens {
            return Err(Error::Dimension(format!(
                "window of {} tokens exceeds context {}",
                w.token_len(),
                self.cfg.context_tokens
            )));
        }
        if m.len() != w.token_len() {
            return Err(Error::Dimension(format!(
                "mask length {} vs window tokens {}",
                m.len(),
                w.token_len()
            )));
        }
        Ok(())
    }

    fn forward_traced(&self, layout: &Layout, w: &Window, m: &MaskMatrix) -> Result<(Reconstruction, Trace)> {
        self.check(w, m)?;
        let p = &self.params[..];
        let h = self.cfg.hidden;
        let steps = w.timesteps();
        let len = w.token_len();
        let states_in = Array2::from_shape_vec((steps, self.cfg.state_dim), w.states().to_vec())
            .expect("checked shape");
        let actions_in = Array2::from_shape_vec((steps, self.cfg.action_dim), w.actions().to_vec())
            .expect("checked shape");
        let es = layout.state_in.forward(p, states_in.view());
        let ea = layout.action_in.forward(p, actions_in.view());
        let modality = view2(p, layout.modality, 2, h);
        let enc_pos = view2(p, layout.enc_pos, self.cfg.context_tokens, h);
        let dec_pos = view2(p, layout.dec_pos, self.cfg.context_tokens, h);

        let visible = m.visible_indices();
        let mut x = Array2::zeros((visible.len(), h));
        for (r, &i) in visible.iter().enumerate() {
            let src = if i % 2 == 0 { es.row(i / 2) } else { ea.row(i / 2) };
            let mut row = x.row_mut(r);
            row.assign(&src);
            row += &modality.row(i % 2);
            row += &enc_pos.row(i);
        }
        let mut enc = Vec::with_capacity(layout.enc.len());
        let mut enc_norm = None;
        if !visible.is_empty() {
            for blk in &layout.enc {
                let (y, c) = blk.forward(p, x.view());
                enc.push(c);
                x = y;
            }
            let (z, c) = layout.enc_norm.forward(p, x.view());
            enc_norm = Some(c);
            x = z;
        }

        let mask_token = view1(p, layout.mask_token, h);
        let mut d = Array2::zeros((len, h));
        let mut next_visible = 0;
        for i in 0..len {
            let mut row = d.row_mut(i);
            if m.is_visible(i) {
                row.assign(&x.row(next_visible));
                next_visible += 1;
            } else {
                row.assign(&mask_token);
            }
            row += &dec_pos.row(i);
        }
        let mut dec = Vec::with_capacity(layout.dec.len());
        for blk in &layout.dec {
            let (y, c) = blk.forward(p, d.view());
            dec.push(c);
            d = y;
        }
        let (out, dec_norm) = layout.dec_norm.forward(p, d.view());
        let even: Vec<usize> = (0..steps).map(|t| 2 * t).collect();
        let odd: Vec<usize> = (0..steps).map(|t| 2 * t + 1).collect();
        let dec_states = out.select(Axis(0), &even);
        let dec_actions = out.select(Axis(0), &odd);
        let rec = Reconstruction {
            states: layout.state_head.forward(p, dec_states.view()),
            actions: layout.action_head.forward(p, dec_actions.view()),
        };
        Ok((
            rec,
            Trace {
                visible,
                states_in,
                actions_in,
                enc,
                enc_norm,
                dec,
                dec_norm,
                dec_states,
                dec_actions,
            },
        ))
    }

    fn backward(&self, layout: &Layout, trace: &Trace, d_states: &Array2<f64>, d_actions: &Array2<f64>, g: &mut [f64]) {
        let p = &self.params[..];
        let h = self.cfg.hidden;
        let steps = trace.states_in.nrows();
        let len = 2 * steps;
        let dys = layout.state_head.backward(p, g, trace.dec_states.view(), d_states.view());
        let dya = layout.action_head.backward(p, g, trace.dec_actions.view(), d_actions.view());
        let mut dout = Array2::zeros((len, h));
        for t in 0..steps {
            dout.row_mut(2 * t).assign(&dys.row(t));
            dout.row_mut(2 * t + 1).assign(&dya.row(t));
        }
        let mut dd = layout.dec_norm.backward(p, g, &trace.dec_norm, dout.view());
        for (blk, c) in layout.dec.iter().zip(&trace.dec).rev() {
            dd = blk.backward(p, g, c, dd.view());
        }

        let mut dz = Array2::zeros((trace.visible.len(), h));
        {
            let mut is_visible = vec![usize::MAX; len];
            for (r, &i) in trace.visible.iter().enumerate() {
                is_visible[i] = r;
            }
            let mut gpos = ops::view2_mut(g, layout.dec_pos, self.cfg.context_tokens, h);
            for i in 0..len {
                let mut row = gpos.row_mut(i);
                row += &dd.row(i);
            }
            let mut gmask = view1_mut(g, layout.mask_token, h);
            for (i, &slot) in is_visible.iter().enumerate() {
                match slot {
                    usize::MAX => gmask += &dd.row(i),
                    r => dz.row_mut(r).assign(&dd.row(i)),
                }
            }
        }
        if trace.visible.is_empty() {
            return;
        }
        let mut dx = layout
            .enc_norm
            .backward(p, g, trace.enc_norm.as_ref().expect("encoder ran"), dz.view());
        for (blk, c) in layout.enc.iter().zip(&trace.enc).rev() {
            dx = blk.backward(p, g, c, dx.view());
        }
        let mut des = Array2::zeros((steps, h));
        let mut dea = Array2::zeros((steps, h));
        {
            let mut gpos = ops::view2_mut(g, layout.enc_pos, self.cfg.context_tokens, h);
            for (r, &i) in trace.visible.iter().enumerate() {
                let mut row = gpos.row_mut(i);
                row += &dx.row(r);
            }
        }
        {
            let mut gmod = ops::view2_mut(g, layout.modality, 2, h);
            for (r, &i) in trace.visible.iter().enumerate() {
                let mut row = gmod.row_mut(i % 2);
                row += &dx.row(r);
            }
        }
        for (r, &i) in trace.visible.iter().enumerate() {
            let mut row = if i % 2 == 0 { des.row_mut(i / 2) } else { dea.row_mut(i / 2) };
            row += &dx.row(r);
        }
        layout.state_in.backward_params(g, trace.states_in.view(), des.view());
        layout.action_in.backward_params(g, trace.actions_in.view(), dea.view());
    }

    /// Reconstruct every token of a normalized window.
    pub fn forward(&self, w: &Window, m: &MaskMatrix) -> Result<Reconstruction> {
        let layout = Layout::new(&self.cfg);
        Ok(self.forward_traced(&layout, w, m)?.0)
    }

    fn window_loss(&self, w: &Window, m: &MaskMatrix, rec: &Reconstruction) -> (f64, Array2<f64>, Array2<f64>) {
        let target_s = ndarray::ArrayView2::from_shape(rec.states.raw_dim(), w.states()).expect("shape");
        let target_a = ndarray::ArrayView2::from_shape(rec.actions.raw_dim(), w.actions()).expect("shape");
        let mut ds = &rec.states - &target_s;
        let mut da = &rec.actions - &target_a;
        if !self.cfg.loss_on_all {
            for t in 0..w.timesteps() {
                if m.is_visible(2 * t) {
                    ds.row_mut(t).fill(0.0);
                }
                if m.is_visible(2 * t + 1) {
                    da.row_mut(t).fill(0.0);
                }
            }
        }
        let count = if self.cfg.loss_on_all {
            ds.len() + da.len()
        } else {
            m.masked_indices()
                .iter()
                .map(|i| if i % 2 == 0 { self.cfg.state_dim } else { self.cfg.action_dim })
                .sum()
        };
        if count == 0 {
            return (0.0, ds * 0.0, da * 0.0);
        }
        let n = count as f64;
        let loss = (ds.iter().map(|v| v * v).sum::<f64>() + da.iter().map(|v| v * v).sum::<f64>()) / n;
        ds *= 2.0 / n;
        da *= 2.0 / n;
        (loss, ds, da)
    }

    fn check_batch(windows: &[Window], masks: &[MaskMatrix]) -> Result<()> {
        if windows.is_empty() || windows.len() != masks.len() {
            return Err(Error::Dimension(format!(
                "batch of {} windows with {} masks",
                windows.len(),
                masks.len()
            )));
        }
        Ok(())
    }

    /// Mean squared reconstruction error averaged over windows; each window
    /// averages over token dimensions.
    pub fn loss(&self, windows: &[Window], masks: &[MaskMatrix]) -> Result<f64> {
        Self::check_batch(windows, masks)?;
        let layout = Layout::new(&self.cfg);
        let losses = par::try_map_range(windows.len(), |i| {
            let (rec, _) = self.forward_traced(&layout, &windows[i], &masks[i])?;
            Ok::<_, Error>(self.window_loss(&windows[i], &masks[i], &rec).0)
        })?;
        Ok(losses.iter().sum::<f64>() / windows.len() as f64)
    }

    /// Batch loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, windows: &[Window], masks: &[MaskMatrix]) -> Result<(f64, Vec<f64>)> {
        Self::check_batch(windows, masks)?;
        let layout = Layout::new(&self.cfg);
        let scale = 1.0 / windows.len() as f64;
        let parts = par::try_map_range(windows.len(), |i| {
            let (rec, trace) = self.forward_traced(&layout, &windows[i], &masks[i])?;
            let (loss, mut ds, mut da) = self.window_loss(&windows[i], &masks[i], &rec);
            ds *= scale;
            da *= scale;
            let mut g = vec![0.0; self.layout_total];
            self.backward(&layout, &trace, &ds, &da, &mut g);
            Ok::<_, Error>((loss, g))
        })?;
        let mut grad = vec![0.0; self.layout_total];
        let mut total = 0.0;
        for (loss, g) in parts {
            total += loss;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((total * scale, grad))
    }

    /// Fill masked tokens of a raw (unnormalized) window with predictions.
    /// Visible tokens are copied through untouched; predicted actions are
    /// clamped to `[-1, 1]` after denormalization.
    pub fn predict_tokens(&self, stats: &NormStats, window: &Window, mask: &MaskMatrix) -> Result<Window> {
        let norm = stats.normalize(window)?;
        let rec = self.forward(&norm, mask)?;
        let pred = Window::new(
            rec.states.iter().copied().collect(),
            rec.actions.iter().copied().collect(),
            window.state_dim(),
            window.action_dim(),
            window.start_index,
        )?;
        let pred = stats.denormalize(&pred)?;
        let mut out = window.clone();
        for i in 0..window.token_len() {
            if mask.is_masked(i) {
                let src = pred.token(i);
                let dst = out.token_mut(i);
                dst.copy_from_slice(src);
                if i % 2 == 1 {
                    dst.iter_mut().for_each(|a| *a = a.clamp(-1.0, 1.0));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny() -> MaskedPredictionNet {
        let cfg = NetConfig {
            hidden: 8,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            ff_mult: 2,
            context_tokens: 8,
            ..NetConfig::desk(3, 2)
        };
        MaskedPredictionNet::new(cfg, &mut seeded(0)).unwrap()
    }

    fn window(seed: u64) -> Window {
        let mut rng = seeded(seed);
        Window::new(
            (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
            3,
            2,
            0,
        )
        .unwrap()
    }

    #[test]
    fn params_are_f32_representable() {
        let net = tiny();
        assert!(net.params().iter().all(|p| f64::from(*p as f32) == *p));
        let names = net.param_names();
        assert_eq!(names.last().unwrap().1.end, net.param_count());
    }

    #[test]
    fn output_shapes_mirror_input() {
        let net = tiny();
        let w = window(1);
        let rec = net.forward(&w, &MaskMatrix::from_bits("10110010")).unwrap();
        assert_eq!(rec.states.dim(), (4, 3));
        assert_eq!(rec.actions.dim(), (4, 2));
        let all_masked = net.forward(&w, &MaskMatrix::zeros(8)).unwrap();
        assert!(all_masked.states.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_errors() {
        let net = tiny();
        let w = window(1);
        assert!(matches!(net.forward(&w, &MaskMatrix::ones(6)), Err(Error::Dimension(_))));
        let long = Window::zeros(5, 3, 2);
        assert!(matches!(net.forward(&long, &MaskMatrix::ones(10)), Err(Error::Dimension(_))));
        assert!(net.loss(std::slice::from_ref(&w), &[]).is_err());
    }

    #[test]
    fn loss_is_order_invariant() {
        let net = tiny();
        let ws = vec![window(1), window(2), window(3)];
        let ms = vec![
            MaskMatrix::from_bits("10110010"),
            MaskMatrix::from_bits("00000001"),
            MaskMatrix::from_bits("11111111"),
        ];
        let a = net.loss(&ws, &ms).unwrap();
        let rw: Vec<_> = ws.iter().rev().cloned().collect();
        let rm: Vec<_> = ms.iter().rev().cloned().collect();
        let b = net.loss(&rw, &rm).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn zero_output_loss_is_mean_square() {
        let mut net = tiny();
        let names = net.param_names();
        for (name, range) in names {
            if name.starts_with("state_head") || name.starts_with("action_head") {
                net.params_mut()[range].iter_mut().for_each(|p| *p = 0.0);
            }
        }
        let w = window(4);
        let expect = w.states().iter().chain(w.actions()).map(|v| v * v).sum::<f64>() / 20.0;
        let got = net.loss(&[w], &[MaskMatrix::from_bits("11001100")]).unwrap();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn masked_only_loss_ignores_visible_tokens() {
        let mut cfg = tiny().config().clone();
        cfg.loss_on_all = false;
        let net = MaskedPredictionNet::new(cfg, &mut seeded(0)).unwrap();
        let w = window(5);
        assert_eq!(net.loss(std::slice::from_ref(&w), &[MaskMatrix::ones(8)]).unwrap(), 0.0);
        let (_, g) = net.loss_and_grad(&[w], &[MaskMatrix::ones(8)]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn copy_through_and_clamp() {
        let net = tiny();
        let stats = NormStats::identity(3, 2);
        let w = window(6);
        assert_eq!(net.predict_tokens(&stats, &w, &MaskMatrix::ones(8)).unwrap(), w);
        let m = MaskMatrix::from_bits("11000000");
        let wide = NormStats {
            action_std: vec![50.0, 50.0],
            ..stats.clone()
        };
        let out = net.predict_tokens(&wide, &w, &m).unwrap();
        assert_eq!(out.token(0), w.token(0));
        assert_eq!(out.token(1), w.token(1));
        for i in [3, 5, 7] {
            assert!(out.token(i).iter().all(|a| (-1.0..=1.0).contains(a)));
        }
        assert_eq!(out, net.predict_tokens(&wide, &w, &m).unwrap());
    }
}
