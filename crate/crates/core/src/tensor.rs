use crate::error::{Error, Result};

/// Dense row-major `f32` array with 1 to 4 dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {len} elements, data has {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        check_shape(shape).expect("invalid tensor shape");
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Fails unless the tensor is exactly `dims`-dimensional; returns the shape.
    pub fn expect_dims(&self, dims: usize, what: &str) -> Result<&[usize]> {
        if self.shape.len() != dims {
            return Err(Error::Shape(format!(
                "{what} must be {dims}-D, got shape {:?}",
                self.shape
            )));
        }
        Ok(&self.shape)
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// 2-D element access, row-major `[row][col]`.
    #[inline]
    pub fn at2(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.shape[1] + col]
    }

    #[inline]
    pub fn at3(&self, i: usize, row: usize, col: usize) -> f32 {
        self.data[(i * self.shape[1] + row) * self.shape[2] + col]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::Shape(format!(
            "tensors have 1 to 4 dimensions, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::Shape(format!("zero-length dimension in {shape:?}")));
    }
    Ok(())
}
