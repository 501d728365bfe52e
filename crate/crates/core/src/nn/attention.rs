use mxr_tensor::ops::{conv2d, matmul, softmax};
use mxr_tensor::{init, Float, Result, Tensor};
use rand::Rng;

use super::{join, Module, Param, Slot};

/// Query/key/value 1x1 projections and the residual gate.
pub struct SelfAttentionParams<T: Float> {
    /// `[C/8, C, 1, 1]`
    pub query: Param<T>,
    /// `[C/8, C, 1, 1]`
    pub key: Param<T>,
    /// `[C, C, 1, 1]`
    pub value: Param<T>,
    /// One element, starts at 0.
    pub gamma: Param<T>,
}

/// Convolutional self-attention over spatial positions.
///
/// For positions `q` (queries) and `k` (keys):
/// `attn[q, k] = softmax_k(f_q . g_k)` and
/// `out[:, q] = gamma * sum_k attn[q, k] * h[:, k] + x[:, q]`.
pub struct SelfAttention<T: Float> {
    pub params: SelfAttentionParams<T>,
    pub channels: usize,
}

impl<T: Float> SelfAttention<T> {
    /// Query/key width is `channels / 8`, at least 1.
    pub fn new(channels: usize, rng: &mut impl Rng) -> Result<Self> {
        let inner = (channels / 8).max(1);
        Ok(Self {
            params: SelfAttentionParams {
                query: Param::new(init::kaiming_normal(&[inner, channels, 1, 1], rng)?),
                key: Param::new(init::kaiming_normal(&[inner, channels, 1, 1], rng)?),
                value: Param::new(init::kaiming_normal(&[channels, channels, 1, 1], rng)?),
                gamma: Param::no_decay(Tensor::zeros(&[1])),
            },
            channels,
        })
    }

    fn project(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, usize)> {
        let (n, h, w) = (x.shape()[0], x.shape()[2], x.shape()[3]);
        let hw = h * w;
        let p = &self.params;
        let f = conv2d(x, &p.query.get(), None, 1, 0)?;
        let g = conv2d(x, &p.key.get(), None, 1, 0)?;
        let inner = f.shape()[1];
        let f = f.reshape(&[n, inner, hw])?;
        let g = g.reshape(&[n, inner, hw])?;
        Ok((f, g, hw))
    }

    /// `[N, HW, HW]`; row `q` holds the weights of query position `q`.
    pub fn attention_map(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (f, g, _) = self.project(x)?;
        softmax(&matmul(&f.transpose_last2()?, &g)?, 2)
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let shape = x.shape().to_vec();
        let (f, g, hw) = self.project(x)?;
        let attn = softmax(&matmul(&f.transpose_last2()?, &g)?, 2)?;
        let h = conv2d(x, &self.params.value.get(), None, 1, 0)?.reshape(&[shape[0], shape[1], hw])?;
        let o = matmul(&h, &attn.transpose_last2()?)?.reshape(&shape)?;
        o.scale_by(&self.params.gamma.get())?.add(x)
    }
}

impl<T: Float> Module<T> for SelfAttention<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        let p = &self.params;
        f(&join(prefix, "query"), Slot::Param(&p.query));
        f(&join(prefix, "key"), Slot::Param(&p.key));
        f(&join(prefix, "value"), Slot::Param(&p.value));
        f(&join(prefix, "gamma"), Slot::Param(&p.gamma));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_gate_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let att = SelfAttention::<f32>::new(16, &mut rng).unwrap();
        let x = init::normal::<f32>(&[2, 16, 4, 5], 1.0, &mut rng).unwrap();
        assert_eq!(att.forward(&x).unwrap().data(), x.data());
    }

    #[test]
    fn tiny_width_keeps_one_query_channel() {
        let att = SelfAttention::<f32>::new(3, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(att.params.query.shape(), vec![1, 3, 1, 1]);
    }

    #[test]
    fn single_position_reduces_to_value_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let att = SelfAttention::<f64>::new(8, &mut rng).unwrap();
        att.params.gamma.set_data(vec![0.7]).unwrap();
        let x = init::normal::<f64>(&[1, 8, 1, 1], 1.0, &mut rng).unwrap();
        let y = att.forward(&x).unwrap();
        let wh = att.params.value.get();
        for c in 0..8 {
            let proj: f64 = (0..8).map(|i| wh.data()[c * 8 + i] * x.data()[i]).sum();
            assert!((y.data()[c] - (0.7 * proj + x.data()[c])).abs() < 1e-12);
        }
    }
}
