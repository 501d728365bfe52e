use crate::error::{dim_err, Result};
use crate::{Float, Tensor};

fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// Max-subtracted softmax along `axis`.
pub fn softmax<T: Float>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return dim_err("softmax", format!("axis {axis} out of range for shape {:?}", x.shape()));
    }
    let (outer, len, inner) = split(x.shape(), axis);
    let xs = x.data();
    let mut out = vec![T::zero(); xs.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| xs[idx(k)]).fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for k in 0..len {
                let e = (xs[idx(k)] - max).exp();
                out[idx(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[idx(k)] /= total;
            }
        }
    }
    Tensor::from_op("softmax", out, x.shape().to_vec(), &[x], move |g, _, y| {
        let mut gx = vec![T::zero(); y.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |k: usize| (o * len + k) * inner + i;
                let dot: T = (0..len).map(|k| g[idx(k)] * y[idx(k)]).sum();
                for k in 0..len {
                    gx[idx(k)] = y[idx(k)] * (g[idx(k)] - dot);
                }
            }
        }
        vec![Some(gx)]
    })
}
