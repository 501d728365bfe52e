use crate::error::{dim_err, Result};
use crate::gemm::{gemm, Mat, MatMut};
use crate::{Float, Tensor};

/// Batched product `[..., M, K] x [..., K, P] -> [..., M, P]`.
///
/// Leading dims must match, or one operand may be a plain matrix that is
/// broadcast over the other's batch.
pub fn matmul<T: Float>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ra, rb) = (a.rank(), b.rank());
    if ra < 2 || rb < 2 {
        return dim_err("matmul", format!("operands need rank >= 2, got {:?} and {:?}", a.shape(), b.shape()));
    }
    let (m, k) = (a.shape()[ra - 2], a.shape()[ra - 1]);
    let (kb, p) = (b.shape()[rb - 2], b.shape()[rb - 1]);
    if k != kb {
        return dim_err(
            "matmul",
            format!("inner dimensions differ: {:?} x {:?}", a.shape(), b.shape()),
        );
    }
    let (lead_a, lead_b) = (&a.shape()[..ra - 2], &b.shape()[..rb - 2]);
    let lead: Vec<usize> = if lead_a == lead_b || lead_b.is_empty() {
        lead_a.to_vec()
    } else if lead_a.is_empty() {
        lead_b.to_vec()
    } else {
        return dim_err(
            "matmul",
            format!("batch dimensions {lead_a:?} and {lead_b:?} do not broadcast"),
        );
    };
    let batch: usize = lead.iter().product();
    let a_step = if lead_a.is_empty() { 0 } else { m * k };
    let b_step = if lead_b.is_empty() { 0 } else { k * p };

    let mut out = vec![T::zero(); batch * m * p];
    for i in 0..batch {
        gemm(
            T::one(),
            Mat::row_major(&a.data()[i * a_step..i * a_step + m * k], m, k),
            Mat::row_major(&b.data()[i * b_step..i * b_step + k * p], k, p),
            T::zero(),
            MatMut::row_major(&mut out[i * m * p..(i + 1) * m * p], m, p),
        );
    }
    let mut shape = lead;
    shape.extend([m, p]);
    Tensor::from_op("matmul", out, shape, &[a, b], move |g, inputs, _| {
        let (a, b) = (&inputs[0], &inputs[1]);
        // Broadcast operands accumulate over the batch (beta = 1 after the first).
        let ga = a.tracks_grad().then(|| {
            let mut ga = vec![T::zero(); a.numel()];
            for i in 0..batch {
                let dst = &mut ga[i * a_step..i * a_step + m * k];
                let beta = if a_step == 0 && i > 0 { T::one() } else { T::zero() };
                gemm(
                    T::one(),
                    Mat::row_major(&g[i * m * p..(i + 1) * m * p], m, p),
                    Mat::row_major(&b.data()[i * b_step..i * b_step + k * p], k, p).t(),
                    beta,
                    MatMut::row_major(dst, m, k),
                );
            }
            ga
        });
        let gb = b.tracks_grad().then(|| {
            let mut gb = vec![T::zero(); b.numel()];
            for i in 0..batch {
                let dst = &mut gb[i * b_step..i * b_step + k * p];
                let beta = if b_step == 0 && i > 0 { T::one() } else { T::zero() };
                gemm(
                    T::one(),
                    Mat::row_major(&a.data()[i * a_step..i * a_step + m * k], m, k).t(),
                    Mat::row_major(&g[i * m * p..(i + 1) * m * p], m, p),
                    beta,
                    MatMut::row_major(dst, k, p),
                );
            }
            gb
        });
        vec![ga, gb]
    })
}
