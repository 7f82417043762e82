//! Rank-4 tensor storage in `(batch, channels, height, width)` layout,
//! row-major with width fastest.
//!
//! Tensors are generic over the element type: `f32` is the production
//! precision, `f64` is used by gradient-check code paths.

use num_traits::Float;

use crate::Error;

/// Element type accepted by the tensor and network code.
pub trait Scalar: Float + std::fmt::Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Shape of a rank-4 tensor: `(n, c, h, w)`.
pub type Shape4 = (usize, usize, usize, usize);

/// Contiguous rank-4 array, `(n, c, h, w)` row-major with `w` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<F = f32> {
    shape: Shape4,
    data: Vec<F>,
}

/// How to fill a freshly created tensor.
pub enum FillSpec<F> {
    Zeros,
    Constant(F),
    FromValues(Vec<F>),
}

impl<F: Scalar> Tensor4<F> {
    pub fn create(shape: Shape4, fill: FillSpec<F>) -> Result<Self, Error> {
        let len = shape.0 * shape.1 * shape.2 * shape.3;
        let data = match fill {
            FillSpec::Zeros => vec![F::zero(); len],
            FillSpec::Constant(k) => vec![k; len],
            FillSpec::FromValues(v) => {
                if v.len() != len {
                    return Err(Error::ShapeMismatch(format!(
                        "expected {} values for shape {:?}, got {}",
                        len,
                        shape,
                        v.len()
                    )));
                }
                v
            }
        };
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape4) -> Self {
        Self::create(shape, FillSpec::Zeros).unwrap()
    }

    pub fn constant(shape: Shape4, k: F) -> Self {
        Self::create(shape, FillSpec::Constant(k)).unwrap()
    }

    pub fn from_values(shape: Shape4, values: Vec<F>) -> Result<Self, Error> {
        Self::create(shape, FillSpec::FromValues(values))
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.1 + c) * self.shape.2 + h) * self.shape.3 + w
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> F {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: F) {
        let i = self.index(n, c, h, w);
        self.data[i] = v;
    }

    /// Elementwise map; preserves shape.
    pub fn map_elementwise(&self, f: impl Fn(F) -> F) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Flatten to a vector in `(n, c, h, w)` order, `w` fastest. Each batch
    /// item occupies a contiguous run of length `c*h*w`.
    pub fn flatten(&self) -> Vec<F> {
        self.data.clone()
    }

    /// Reinterpret a flat vector as a tensor of the given shape.
    pub fn reshape_from(shape: Shape4, values: Vec<F>) -> Result<Self, Error> {
        Self::from_values(shape, values)
    }

    /// One batch item as a contiguous slice of length `c*h*w`.
    pub fn item(&self, n: usize) -> &[F] {
        let stride = self.shape.1 * self.shape.2 * self.shape.3;
        &self.data[n * stride..(n + 1) * stride]
    }

    /// Copy a `(1, c, h, w)` view of batch item `n`.
    pub fn item_tensor(&self, n: usize) -> Tensor4<F> {
        Tensor4 {
            shape: (1, self.shape.1, self.shape.2, self.shape.3),
            data: self.item(n).to_vec(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Lossless-in-spirit precision conversion (used by the 64-bit
    /// gradient-check mode).
    pub fn cast<G: Scalar>(&self) -> Tensor4<G> {
        Tensor4 {
            shape: self.shape,
            data: self.data.iter().map(|x| G::from_f64(x.as_f64())).collect(),
        }
    }
}
