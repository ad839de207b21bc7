//! Dense row-major numeric arrays used by the compute paths.
//!
//! [`Arr`] is the in-memory workhorse: a shape plus a contiguous buffer of a
//! single float type. The on-disk, dtype-tagged container lives in
//! [`crate::tensor`]; conversions between the two sit there as well.

use crate::linalg;
use num_traits::Float;
use std::fmt;

/// Float scalar usable by the graph engine. Training runs `f32`, gradient
/// checking runs `f64`; both share every code path via this trait.
pub trait Scalar:
    Float + fmt::Debug + fmt::Display + Send + Sync + Copy + Default + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;

    /// `c[m,n] = a[m,k] * b[k,n]` (row-major, contiguous), adding into `c`
    /// when `accumulate` is set. The f32 implementation dispatches to an
    /// AVX2+FMA kernel when the CPU supports it.
    fn gemm(m: usize, n: usize, k: usize, a: &[Self], b: &[Self], c: &mut [Self], accumulate: bool);
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn from_f32(v: f32) -> Self {
        v
    }
    fn gemm(m: usize, n: usize, k: usize, a: &[f32], b: &[f32], c: &mut [f32], accumulate: bool) {
        linalg::gemm_f32(m, n, k, a, b, c, accumulate);
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn gemm(m: usize, n: usize, k: usize, a: &[f64], b: &[f64], c: &mut [f64], accumulate: bool) {
        linalg::gemm_generic(m, n, k, a, b, c, accumulate);
    }
}

/// Dense row-major array. Rank 0 denotes a scalar holding exactly one value.
#[derive(Clone, PartialEq)]
pub struct Arr<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Arr<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product::<usize>();
        Arr {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    pub fn full(shape: &[usize], v: F) -> Self {
        let n = shape.iter().product::<usize>();
        Arr {
            shape: shape.to_vec(),
            data: vec![v; n],
        }
    }

    pub fn scalar(v: F) -> Self {
        Arr {
            shape: vec![],
            data: vec![v],
        }
    }

    /// Wraps an existing buffer. Panics if the element count disagrees with
    /// the shape; that is a programming error, not a data error.
    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match buffer of {} values",
            shape,
            data.len()
        );
        Arr {
            shape: shape.to_vec(),
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a rank-0 array.
    pub fn scalar_value(&self) -> F {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    pub fn map<G: Scalar>(&self, f: impl Fn(F) -> G) -> Arr<G> {
        Arr {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_f64(&self) -> Arr<f64> {
        self.map(|v| v.to_f64())
    }

    pub fn add_assign(&mut self, other: &Arr<F>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a = *a + *b;
        }
    }

    pub fn fill(&mut self, v: F) {
        self.data.fill(v);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, F> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Flat offset of a 4-d index; shape must have rank 4.
    #[inline]
    pub fn idx4(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.rank(), 4);
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    /// Flat offset of a 3-d index; shape must have rank 3.
    #[inline]
    pub fn idx3(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert_eq!(self.rank(), 3);
        (c * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> F {
        self.data[self.idx4(n, c, y, x)]
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> F {
        self.data[self.idx3(c, y, x)]
    }

    #[inline]
    pub fn set3(&mut self, c: usize, y: usize, x: usize, v: F) {
        let i = self.idx3(c, y, x);
        self.data[i] = v;
    }

    #[inline]
    pub fn set4(&mut self, n: usize, c: usize, y: usize, x: usize, v: F) {
        let i = self.idx4(n, c, y, x);
        self.data[i] = v;
    }

    /// Stacks rank-3 arrays of identical shape into one rank-4 array.
    pub fn stack(items: &[Arr<F>]) -> Arr<F> {
        assert!(!items.is_empty());
        let inner = items[0].shape.clone();
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&inner);
        let mut data = Vec::with_capacity(items.len() * items[0].numel());
        for it in items {
            assert_eq!(it.shape, inner, "stack requires identical shapes");
            data.extend_from_slice(&it.data);
        }
        Arr { shape, data }
    }

    /// Borrows element `n` of the leading axis as a rank-(r-1) view copy.
    pub fn index_axis0(&self, n: usize) -> Arr<F> {
        assert!(self.rank() >= 1 && n < self.shape[0]);
        let stride = self.numel() / self.shape[0];
        Arr {
            shape: self.shape[1..].to_vec(),
            data: self.data[n * stride..(n + 1) * stride].to_vec(),
        }
    }
}

impl<F: Scalar> fmt::Debug for Arr<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Arr{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} values]", self.numel())
        }
    }
}
