use crate::error::Result;
use crate::{Float, Tensor};

/// Pairwise-free f64 accumulation; deterministic in element order.
pub(crate) fn sum_f64<T: Float>(xs: &[T]) -> f64 {
    xs.iter().map(|v| v.as_f64()).sum()
}

impl<T: Float> Tensor<T> {
    pub fn sum(&self) -> Result<Self> {
        let s = T::cast(sum_f64(self.data()));
        let n = self.numel();
        Tensor::from_op("sum", vec![s], Vec::new(), &[self], move |g, _, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Result<Self> {
        let n = self.numel();
        let m = T::cast(sum_f64(self.data()) / n.max(1) as f64);
        Tensor::from_op("mean", vec![m], Vec::new(), &[self], move |g, _, _| {
            vec![Some(vec![g[0] / T::cast(n as f64); n])]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_four() {
        let x = Tensor::<f32>::from_vec(vec![1.0, 2.0, 3.0, 4.0], &[4]).unwrap();
        assert_eq!(x.mean().unwrap().item().unwrap(), 2.5);
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let x = Tensor::<f64>::param(vec![0.3, -1.0, 2.0], &[3]).unwrap();
        x.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 3]);
    }
}
