use crate::error::{dim_err, Result, TensorError};
use crate::ops::{par_map, par_zip3_map, par_zip_map};
use crate::{Float, Tensor};

/// Overflow-safe `ln(1 + e^x)`.
pub(crate) fn softplus_scalar<T: Float>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid_scalar<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn mish_scalar<T: Float>(x: T) -> T {
    x * softplus_scalar(x).tanh()
}

fn mish_grad_scalar<T: Float>(x: T) -> T {
    let t = softplus_scalar(x).tanh();
    t + x * (T::one() - t * t) * sigmoid_scalar(x)
}

impl<T: Float> Tensor<T> {
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(T) -> T + Sync,
        // derivative as a function of (input, output)
        df: impl Fn(T, T) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        let data = par_map(self.data(), f);
        Tensor::from_op(op, data, self.shape().to_vec(), &[self], move |g, inputs, out| {
            vec![Some(par_zip3_map(g, inputs[0].data(), out, |g, x, y| g * df(x, y)))]
        })
    }

    fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return dim_err(
                op,
                format!("shapes {:?} and {:?} differ", self.shape(), other.shape()),
            );
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        let data = par_zip_map(self.data(), other.data(), |a, b| a + b);
        Tensor::from_op("add", data, self.shape().to_vec(), &[self, other], |g, inputs, _| {
            inputs.iter().map(|t| t.tracks_grad().then(|| g.to_vec())).collect()
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        let data = par_zip_map(self.data(), other.data(), |a, b| a - b);
        Tensor::from_op("sub", data, self.shape().to_vec(), &[self, other], |g, inputs, _| {
            vec![
                inputs[0].tracks_grad().then(|| g.to_vec()),
                inputs[1].tracks_grad().then(|| par_map(g, |v| -v)),
            ]
        })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "mul")?;
        let data = par_zip_map(self.data(), other.data(), |a, b| a * b);
        Tensor::from_op("mul", data, self.shape().to_vec(), &[self, other], |g, inputs, _| {
            vec![
                inputs[0]
                    .tracks_grad()
                    .then(|| par_zip_map(g, inputs[1].data(), |g, b| g * b)),
                inputs[1]
                    .tracks_grad()
                    .then(|| par_zip_map(g, inputs[0].data(), |g, a| g * a)),
            ]
        })
    }

    pub fn add_scalar(&self, c: T) -> Result<Self> {
        self.unary("add_scalar", move |x| x + c, |_, _| T::one())
    }

    pub fn mul_scalar(&self, c: T) -> Result<Self> {
        self.unary("mul_scalar", move |x| x * c, move |_, _| c)
    }

    pub fn neg(&self) -> Result<Self> {
        self.mul_scalar(-T::one())
    }

    /// Multiplies every element by the value of a one-element tensor.
    pub fn scale_by(&self, s: &Self) -> Result<Self> {
        if s.numel() != 1 {
            return dim_err("scale_by", format!("scale must have one element, got {:?}", s.shape()));
        }
        let k = s.data()[0];
        let data = par_map(self.data(), |x| x * k);
        Tensor::from_op("scale_by", data, self.shape().to_vec(), &[self, s], |g, inputs, _| {
            let k = inputs[1].data()[0];
            vec![
                inputs[0].tracks_grad().then(|| par_map(g, |g| g * k)),
                inputs[1].tracks_grad().then(|| {
                    let dot: f64 = g
                        .iter()
                        .zip(inputs[0].data())
                        .map(|(&g, &x)| (g * x).as_f64())
                        .sum();
                    vec![T::cast(dot)]
                }),
            ]
        })
    }

    pub fn tanh(&self) -> Result<Self> {
        self.unary("tanh", |x| x.tanh(), |_, y| T::one() - y * y)
    }

    pub fn exp(&self) -> Result<Self> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    pub fn log(&self) -> Result<Self> {
        if let Some(i) = self.data().iter().position(|&v| v <= T::zero()) {
            return Err(TensorError::Domain {
                op: "log",
                detail: format!("element {i} is {} (must be positive)", self.data()[i]),
            });
        }
        self.unary("log", |x| x.ln(), |x, _| T::one() / x)
    }

    pub fn softplus(&self) -> Result<Self> {
        self.unary("softplus", softplus_scalar, |x, _| sigmoid_scalar(x))
    }

    pub fn sigmoid(&self) -> Result<Self> {
        self.unary("sigmoid", sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    pub fn relu(&self) -> Result<Self> {
        self.unary(
            "relu",
            |x| x.max(T::zero()),
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// `x * tanh(softplus(x))` as a single primitive.
    pub fn mish(&self) -> Result<Self> {
        self.unary("mish", mish_scalar, |x, _| mish_grad_scalar(x))
    }

    pub fn abs(&self) -> Result<Self> {
        self.unary("abs", |x| x.abs(), |x, _| {
            if x > T::zero() {
                T::one()
            } else if x < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    pub fn square(&self) -> Result<Self> {
        self.unary("square", |x| x * x, |x, _| x + x)
    }
}
