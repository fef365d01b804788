//! Layers with hand-written backward passes.
//!
//! Parameters live in one flat `f64` buffer; each layer only stores offsets
//! into it. Backward passes accumulate into a gradient buffer with the same
//! layout and return the gradient with respect to the layer input.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

pub(crate) fn view2(p: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout")
}

pub(crate) fn view2_mut(p: &mut [f64], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[off..off + rows * cols]).expect("layout")
}

pub(crate) fn view1(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[off..off + n])
}

pub(crate) fn view1_mut(p: &mut [f64], off: usize, n: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut p[off..off + n])
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn forward(&self, p: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&view2(p, self.w, self.din, self.dout));
        y += &view1(p, self.b, self.dout);
        y
    }

    pub fn backward(
        &self,
        p: &[f64],
        g: &mut [f64],
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
    ) -> Array2<f64> {
        let mut gw = view2_mut(g, self.w, self.din, self.dout);
        general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut gw);
        let mut gb = view1_mut(g, self.b, self.dout);
        gb += &dy.sum_axis(Axis(0));
        dy.dot(&view2(p, self.w, self.din, self.dout).t())
    }

    /// Weight gradient only; for input projections whose input gradient is
    /// never needed.
    pub fn backward_params(&self, g: &mut [f64], x: ArrayView2<'_, f64>, dy: ArrayView2<'_, f64>) {
        let mut gw = view2_mut(g, self.w, self.din, self.dout);
        general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut gw);
        let mut gb = view1_mut(g, self.b, self.dout);
        gb += &dy.sum_axis(Axis(0));
    }
}

pub(crate) const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
    pub dim: usize,
}

pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn forward(&self, p: &[f64], x: ArrayView2<'_, f64>) -> (Array2<f64>, LnCache) {
        let n = x.nrows();
        let d = self.dim as f64;
        let mut xhat = Array2::zeros((n, self.dim));
        let mut inv_std = Array1::zeros(n);
        for (r, row) in x.outer_iter().enumerate() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = is;
            xhat.row_mut(r).assign(&row.mapv(|v| (v - mean) * is));
        }
        let mut y = &xhat * &view1(p, self.gamma, self.dim);
        y += &view1(p, self.beta, self.dim);
        (y, LnCache { xhat, inv_std })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], c: &LnCache, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        {
            let mut gg = view1_mut(g, self.gamma, self.dim);
            gg += &(&dy * &c.xhat).sum_axis(Axis(0));
        }
        {
            let mut gb = view1_mut(g, self.beta, self.dim);
            gb += &dy.sum_axis(Axis(0));
        }
        let gamma = view1(p, self.gamma, self.dim);
        let d = self.dim as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for r in 0..dy.nrows() {
            let dxhat = &dy.row(r) * &gamma;
            let xh = c.xhat.row(r);
            let m1 = dxhat.sum() / d;
            let m2 = (&dxhat * &xh).sum() / d;
            let is = c.inv_std[r];
            dx.row_mut(r)
                .assign(&((&dxhat - m1 - &(&xh * m2)) * is));
        }
        dx
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
    pub dim: usize,
}

pub(crate) struct AttnCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
}

fn softmax_rows(m: &mut Array2<f64>) {
    for mut row in m.outer_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

impl Attention {
    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward(&self, p: &[f64], x: ArrayView2<'_, f64>) -> (Array2<f64>, AttnCache) {
        let q = self.q.forward(p, x);
        let k = self.k.forward(p, x);
        let v = self.v.forward(p, x);
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array2::zeros((x.nrows(), self.dim));
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t());
            scores *= scale;
            softmax_rows(&mut scores);
            ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
            probs.push(scores);
        }
        let y = self.o.forward(p, ctx.view());
        (
            y,
            AttnCache {
                x: x.to_owned(),
                q,
                k,
                v,
                probs,
                ctx,
            },
        )
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], c: &AttnCache, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let dctx = self.o.backward(p, g, c.ctx.view(), dy);
        let n = c.x.nrows();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros((n, self.dim));
        let mut dk = Array2::zeros((n, self.dim));
        let mut dv = Array2::zeros((n, self.dim));
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let pr = &c.probs[h];
            let dctx_h = dctx.slice(cols);
            let dp = dctx_h.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&pr.t().dot(&dctx_h));
            let mut ds = pr * &dp;
            let row_dot = ds.sum_axis(Axis(1));
            for (mut r, (pr_row, rd)) in ds.outer_iter_mut().zip(pr.outer_iter().zip(row_dot.iter())) {
                r.zip_mut_with(&pr_row, |d, &pv| *d -= pv * rd);
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let mut dx = self.q.backward(p, g, c.x.view(), dq.view());
        dx += &self.k.backward(p, g, c.x.view(), dk.view());
        dx += &self.v.backward(p, g, c.x.view(), dv.view());
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

pub(crate) struct MlpCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl Mlp {
    pub fn forward(&self, p: &[f64], x: ArrayView2<'_, f64>) -> (Array2<f64>, MlpCache) {
        let pre = self.fc1.forward(p, x);
        let act = pre.mapv(gelu);
        let y = self.fc2.forward(p, act.view());
        (
            y,
            MlpCache {
                x: x.to_owned(),
                pre,
                act,
            },
        )
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], c: &MlpCache, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut dact = self.fc2.backward(p, g, c.act.view(), dy);
        dact.zip_mut_with(&c.pre, |d, &x| *d *= gelu_grad(x));
        self.fc1.backward(p, g, c.x.view(), dact.view())
    }
}

/// Pre-norm transformer block: `h = x + attn(ln1(x))`, `y = h + mlp(ln2(h))`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Block {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

pub(crate) struct BlockCache {
    ln1: LnCache,
    attn: AttnCache,
    ln2: LnCache,
    mlp: MlpCache,
}

impl Block {
    pub fn forward(&self, p: &[f64], x: ArrayView2<'_, f64>) -> (Array2<f64>, BlockCache) {
        let (a, ln1) = self.ln1.forward(p, x);
        let (att, attn) = self.attn.forward(p, a.view());
        let h = &x + &att;
        let (b, ln2) = self.ln2.forward(p, h.view());
        let (m, mlp) = self.mlp.forward(p, b.view());
        (h + m, BlockCache { ln1, attn, ln2, mlp })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], c: &BlockCache, dy: ArrayView2<'_, f64>) -> Array2<f64> {
        let db = self.mlp.backward(p, g, &c.mlp, dy);
        let mut dh = self.ln2.backward(p, g, &c.ln2, db.view());
        dh += &dy;
        let da = self.attn.backward(p, g, &c.attn, dh.view());
        let mut dx = self.ln1.backward(p, g, &c.ln1, da.view());
        dx += &dh;
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(
        params: &mut [f64],
        x: &Array2<f64>,
        upstream: &Array2<f64>,
        fwd: impl Fn(&[f64], ArrayView2<'_, f64>) -> Array2<f64>,
        bwd: impl Fn(&[f64], &mut [f64], ArrayView2<'_, f64>) -> Array2<f64>,
    ) {
        let obj = |p: &[f64], x: ArrayView2<'_, f64>| (&fwd(p, x) * upstream).sum();
        let mut grad = vec![0.0; params.len()];
        let dx = bwd(params, &mut grad, x.view());
        let h = 1e-6;
        for i in 0..params.len() {
            let orig = params[i];
            params[i] = orig + h;
            let up = obj(params, x.view());
            params[i] = orig - h;
            let dn = obj(params, x.view());
            params[i] = orig;
            let num = (up - dn) / (2.0 * h);
            assert!((num - grad[i]).abs() < 1e-6 * (1.0 + num.abs()), "param {i}: {num} vs {}", grad[i]);
        }
        let mut xp = x.clone();
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let orig = xp[[r, c]];
            xp[[r, c]] = orig + h;
            let up = obj(params, xp.view());
            xp[[r, c]] = orig - h;
            let dn = obj(params, xp.view());
            xp[[r, c]] = orig;
            let num = (up - dn) / (2.0 * h);
            assert!((num - dx[[r, c]]).abs() < 1e-6 * (1.0 + num.abs()), "x[{r},{c}]: {num} vs {}", dx[[r, c]]);
        }
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    fn linear(off: &mut usize, din: usize, dout: usize) -> Linear {
        let l = Linear { w: *off, b: *off + din * dout, din, dout };
        *off += din * dout + dout;
        l
    }

    fn ln(off: &mut usize, dim: usize) -> LayerNorm {
        let l = LayerNorm { gamma: *off, beta: *off + dim, dim };
        *off += 2 * dim;
        l
    }

    #[test]
    fn block_gradients() {
        let dim = 4;
        let mut off = 0;
        let block = Block {
            ln1: ln(&mut off, dim),
            attn: Attention {
                q: linear(&mut off, dim, dim),
                k: linear(&mut off, dim, dim),
                v: linear(&mut off, dim, dim),
                o: linear(&mut off, dim, dim),
                heads: 2,
                dim,
            },
            ln2: ln(&mut off, dim),
            mlp: Mlp {
                fc1: linear(&mut off, dim, 8),
                fc2: linear(&mut off, 8, dim),
            },
        };
        let mut params = pseudo(off, 1);
        // keep layer norm gains away from zero
        for i in 0..dim {
            params[block.ln1.gamma + i] += 1.0;
            params[block.ln2.gamma + i] += 1.0;
        }
        let x = Array2::from_shape_vec((3, dim), pseudo(3 * dim, 2)).unwrap() * 2.0;
        let up = Array2::from_shape_vec((3, dim), pseudo(3 * dim, 3)).unwrap();
        fd_check(
            &mut params,
            &x,
            &up,
            |p, x| block.forward(p, x).0,
            |p, g, x| {
                let (_, c) = block.forward(p, x);
                block.backward(p, g, &c, up.view())
            },
        );
    }

    #[test]
    fn gelu_derivative() {
        for x in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut m = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -100.0, 0.0, 100.0]).unwrap();
        softmax_rows(&mut m);
        for r in m.outer_iter() {
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }
}
