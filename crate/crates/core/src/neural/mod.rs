//! Small dense/convolutional network stack with reverse-mode gradients and Adam.
//!
//! Everything is `f64`. The layer menu is deliberately narrow: valid-padding
//! strided convolutions, dense layers, ReLU, flatten and softmax. Networks are
//! single-writer; clone one to hand a read-only snapshot to another thread.

mod adam;
mod gemm;
mod layers;
pub mod loss;
mod network;
mod tensor;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use layers::{Conv2d, Dense, Layer, LayerSpec};
pub use network::{Gradients, Network, NetworkBuilder};
pub use tensor::Tensor;

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.row_mut(i)[l] = 1.0;
    }
    t
}

/// Row-wise concatenation of two batch tensors.
pub fn concat_rows(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.batch();
    debug_assert_eq!(n, b.batch());
    let (wa, wb) = (a.row_len(), b.row_len());
    let mut data = Vec::with_capacity(n * (wa + wb));
    for i in 0..n {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    Tensor::new(vec![n, wa + wb], data).expect("sizes agree")
}

/// Keeps the first `width` columns of every row.
pub fn take_columns(t: &Tensor, width: usize) -> Tensor {
    let n = t.batch();
    let mut data = Vec::with_capacity(n * width);
    for i in 0..n {
        data.extend_from_slice(&t.row(i)[..width]);
    }
    Tensor::new(vec![n, width], data).expect("sizes agree")
}
