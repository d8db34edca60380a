//! Parameterized building blocks recorded onto a [`Graph`].

use celm_tensor::{Graph, ParamStore, Tensor, Var};
use rand::{Rng, RngCore};

use crate::error::{CoreError, Result};

/// Scores below this are treated as masked out.
pub const MASK_VALUE: f64 = -1e30;

/// Denominator floor for kernelized attention.
pub const LINEAR_ATTENTION_EPS: f64 = 1e-6;

fn trainable(t: Tensor) -> Tensor {
    t.with_grad(true)
}

/// Affine map `x W + b` with `W: in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: String,
    pub bias: Option<String>,
}

impl Linear {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inp: usize,
        out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = format!("{name}.weight");
        let bound = 1.0 / (inp as f64).sqrt();
        store.insert(&weight, trainable(Tensor::uniform(&[inp, out], bound, rng)));
        let bias = bias.then(|| {
            let b = format!("{name}.bias");
            store.insert(&b, trainable(Tensor::zeros(&[1, out])));
            b
        });
        Linear { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, &self.weight)?;
        let y = g.matmul(x, w)?;
        match &self.bias {
            Some(b) => {
                let b = g.param(store, b)?;
                Ok(g.add_row(y, b)?)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: String,
    pub beta: String,
}

impl LayerNorm {
    pub fn init(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gamma = format!("{name}.gamma");
        let beta = format!("{name}.beta");
        store.insert(&gamma, trainable(Tensor::ones(&[1, dim])));
        store.insert(&beta, trainable(Tensor::zeros(&[1, dim])));
        LayerNorm { gamma, beta }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gm = g.param(store, &self.gamma)?;
        let bt = g.param(store, &self.beta)?;
        Ok(g.layer_norm(x, gm, bt)?)
    }
}

/// Two-layer GELU feed-forward block with biases.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl FeedForward {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut R) -> Self {
        FeedForward {
            fc1: Linear::init(store, &format!("{name}.fc1"), dim, hidden, true, rng),
            fc2: Linear::init(store, &format!("{name}.fc2"), hidden, dim, true, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        dropout: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let h = self.fc1.forward(g, store, x)?;
        let h = g.gelu(h);
        let h = g.dropout(h, dropout, rng);
        self.fc2.forward(g, store, h)
    }
}

fn check_heads(width: usize, heads: usize) -> Result<usize> {
    if heads == 0 || !width.is_multiple_of(heads) {
        return Err(CoreError::Config(format!("{heads} heads do not divide width {width}")));
    }
    Ok(width / heads)
}

/// Multi-head scaled dot-product attention over already projected
/// `q: Tq×D`, `k, v: Tk×D`. `mask` is an additive `Tq×Tk` constant.
pub fn softmax_attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize, mask: Option<Var>) -> Result<Var> {
    let (_, width) = g.dims(q);
    let dh = check_heads(width, heads)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (g.slice_cols(q, h * dh, dh)?, g.slice_cols(k, h * dh, dh)?, g.slice_cols(v, h * dh, dh)?)
        };
        let s = g.matmul_nt(qh, kh)?;
        let s = g.scale(s, scale);
        let s = match mask {
            Some(m) => g.add(s, m)?,
            None => s,
        };
        let p = g.softmax(s);
        outs.push(g.matmul(p, vh)?);
    }
    if heads == 1 {
        Ok(outs[0])
    } else {
        Ok(g.concat_cols(&outs)?)
    }
}

/// Multi-head kernelized attention with feature map `elu(x) + 1`:
/// `out_i = φ(q_i)ᵀ (Σ_j φ(k_j) v_jᵀ) / max(φ(q_i)ᵀ Σ_j φ(k_j), ε)`,
/// linear in sequence length.
pub fn linear_attention(g: &mut Graph, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
    let (_, width) = g.dims(q);
    let dh = check_heads(width, heads)?;
    let fq = g.elu_plus_one(q);
    let fk = g.elu_plus_one(k);
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (fq, fk, v)
        } else {
            (g.slice_cols(fq, h * dh, dh)?, g.slice_cols(fk, h * dh, dh)?, g.slice_cols(v, h * dh, dh)?)
        };
        let kv = g.matmul_tn(kh, vh)?;
        let num = g.matmul(qh, kv)?;
        let ksum = g.sum_axis(kh, 0)?;
        let den = g.matmul_nt(qh, ksum)?;
        outs.push(g.div_col(num, den, LINEAR_ATTENTION_EPS)?);
    }
    if heads == 1 {
        Ok(outs[0])
    } else {
        Ok(g.concat_cols(&outs)?)
    }
}

/// Causal additive mask for `t` positions.
pub fn causal_mask(g: &mut Graph, t: usize) -> Result<Var> {
    let mut m = vec![0.0; t * t];
    for i in 0..t {
        for j in i + 1..t {
            m[i * t + j] = MASK_VALUE;
        }
    }
    Ok(g.constant(&[t, t], m)?)
}

/// Fixed sinusoidal position table, `n × d`.
pub fn sinusoidal_positions(n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d as f64);
            out[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Pre-norm transformer block with kernelized self-attention
/// (q, k, v without bias, output with bias, feed-forward ×4).
#[derive(Debug, Clone)]
pub struct LinearAttentionBlock {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
    pub heads: usize,
}

impl LinearAttentionBlock {
    pub const FF_MULT: usize = 4;

    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_heads(dim, heads)?;
        Ok(LinearAttentionBlock {
            ln1: LayerNorm::init(store, &format!("{name}.ln1"), dim),
            q: Linear::init(store, &format!("{name}.q"), dim, dim, false, rng),
            k: Linear::init(store, &format!("{name}.k"), dim, dim, false, rng),
            v: Linear::init(store, &format!("{name}.v"), dim, dim, false, rng),
            out: Linear::init(store, &format!("{name}.out"), dim, dim, true, rng),
            ln2: LayerNorm::init(store, &format!("{name}.ln2"), dim),
            ff: FeedForward::init(store, &format!("{name}.ff"), dim, dim * Self::FF_MULT, rng),
            heads,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        dropout: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let h = self.ln1.forward(g, store, x)?;
        let q = self.q.forward(g, store, h)?;
        let k = self.k.forward(g, store, h)?;
        let v = self.v.forward(g, store, h)?;
        let a = linear_attention(g, q, k, v, self.heads)?;
        let a = self.out.forward(g, store, a)?;
        let a = g.dropout(a, dropout, rng);
        let x = g.add(x, a)?;
        let h = self.ln2.forward(g, store, x)?;
        let f = self.ff.forward(g, store, h, dropout, rng)?;
        let f = g.dropout(f, dropout, rng);
        Ok(g.add(x, f)?)
    }
}

/// Pre-norm cross-attention block: latents attend to a context, then a
/// feed-forward ×2. All projections carry biases.
#[derive(Debug, Clone)]
pub struct PerceiverBlock {
    pub ln_latent: LayerNorm,
    pub ln_context: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub ln_ff: LayerNorm,
    pub ff: FeedForward,
    pub heads: usize,
}

impl PerceiverBlock {
    pub const FF_MULT: usize = 2;

    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_heads(dim, heads)?;
        Ok(PerceiverBlock {
            ln_latent: LayerNorm::init(store, &format!("{name}.ln_latent"), dim),
            ln_context: LayerNorm::init(store, &format!("{name}.ln_context"), dim),
            q: Linear::init(store, &format!("{name}.q"), dim, dim, true, rng),
            k: Linear::init(store, &format!("{name}.k"), dim, dim, true, rng),
            v: Linear::init(store, &format!("{name}.v"), dim, dim, true, rng),
            out: Linear::init(store, &format!("{name}.out"), dim, dim, true, rng),
            ln_ff: LayerNorm::init(store, &format!("{name}.ln_ff"), dim),
            ff: FeedForward::init(store, &format!("{name}.ff"), dim, dim * Self::FF_MULT, rng),
            heads,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        latents: Var,
        context: Var,
        dropout: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        let hl = self.ln_latent.forward(g, store, latents)?;
        let hc = self.ln_context.forward(g, store, context)?;
        let q = self.q.forward(g, store, hl)?;
        let k = self.k.forward(g, store, hc)?;
        let v = self.v.forward(g, store, hc)?;
        let a = softmax_attention(g, q, k, v, self.heads, None)?;
        let a = self.out.forward(g, store, a)?;
        let a = g.dropout(a, dropout, rng);
        let x = g.add(latents, a)?;
        let h = self.ln_ff.forward(g, store, x)?;
        let f = self.ff.forward(g, store, h, dropout, rng)?;
        let f = g.dropout(f, dropout, rng);
        Ok(g.add(x, f)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_input(g: &mut Graph, n: usize, d: usize, rng: &mut ChaCha8Rng) -> Var {
        let t = Tensor::randn(&[n, d], 1.0, rng);
        g.constant(&[n, d], t.into_data()).unwrap()
    }

    #[test]
    fn single_key_returns_its_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Graph::new();
        let q = rand_input(&mut g, 5, 8, &mut rng);
        let k = rand_input(&mut g, 1, 8, &mut rng);
        let v = rand_input(&mut g, 1, 8, &mut rng);
        let out = linear_attention(&mut g, q, k, v, 2).unwrap();
        let vv = g.value(v).to_vec();
        for row in g.value(out).chunks(8) {
            for (a, b) in row.iter().zip(&vv) {
                assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn equal_keys_give_mean_value_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Graph::new();
        let q = rand_input(&mut g, 4, 6, &mut rng);
        let k = g.constant(&[3, 6], vec![0.3; 18]).unwrap();
        let v = rand_input(&mut g, 3, 6, &mut rng);
        let out = linear_attention(&mut g, q, k, v, 3).unwrap();
        let vv = g.value(v).to_vec();
        let mean: Vec<f64> = (0..6).map(|c| (vv[c] + vv[6 + c] + vv[12 + c]) / 3.0).collect();
        for row in g.value(out).chunks(6) {
            for (a, b) in row.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn causal_softmax_attention_ignores_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Graph::new();
        let x = rand_input(&mut g, 4, 4, &mut rng);
        let m = causal_mask(&mut g, 4).unwrap();
        let a = softmax_attention(&mut g, x, x, x, 2, Some(m)).unwrap();
        let first = g.value(a)[..4].to_vec();
        assert_eq!(first, g.value(x)[..4].to_vec());
    }

    #[test]
    fn heads_must_divide_width() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(LinearAttentionBlock::init(&mut store, "b", 10, 3, &mut rng).is_err());
    }

    #[test]
    fn sinusoid_first_row() {
        let p = sinusoidal_positions(2, 4);
        assert_eq!(&p[..4], &[0.0, 1.0, 0.0, 1.0]);
        assert!((p[4] - 1f64.sin()).abs() < 1e-15);
    }
}
