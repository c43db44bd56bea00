//! Dense real-valued tensors with an optional designated channel axis.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, data has {got}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("tensor contains a non-finite element at index {0}")]
    NonFinite(usize),
    #[error("channel axis {axis} out of range for rank {rank}")]
    BadAxis { axis: usize, rank: usize },
    #[error("tensor is empty")]
    Empty,
}

/// A dense row-major tensor of 32-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    channel_axis: Option<usize>,
}

impl Tensor {
    /// Build a tensor, validating that the shape matches the data length and
    /// every element is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                shape,
                expected,
                got: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Tensor {
            shape,
            data,
            channel_axis: None,
        })
    }

    /// One-dimensional tensor.
    pub fn from_vec(data: Vec<f32>) -> Result<Self, TensorError> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    /// Designate a channel axis; used as the default for per-channel scaling.
    pub fn with_channel_axis(mut self, axis: usize) -> Result<Self, TensorError> {
        if axis >= self.shape.len() {
            return Err(TensorError::BadAxis {
                axis,
                rank: self.shape.len(),
            });
        }
        self.channel_axis = Some(axis);
        Ok(self)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel_axis(&self) -> Option<usize> {
        self.channel_axis
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Channel index of a flat element index along `axis`.
    pub fn channel_of(&self, flat: usize, axis: usize) -> usize {
        let stride: usize = self.shape[axis + 1..].iter().product();
        (flat / stride) % self.shape[axis]
    }

    /// Elements grouped by channel along `axis`, widened to f64.
    pub fn channel_groups(&self, axis: usize) -> Result<Vec<Vec<f64>>, TensorError> {
        if axis >= self.shape.len() {
            return Err(TensorError::BadAxis {
                axis,
                rank: self.shape.len(),
            });
        }
        let mut groups = vec![Vec::new(); self.shape[axis]];
        let stride: usize = self.shape[axis + 1..].iter().product();
        for (i, &v) in self.data.iter().enumerate() {
            groups[(i / stride) % self.shape[axis]].push(v as f64);
        }
        Ok(groups)
    }

    pub(crate) fn from_parts(
        shape: Vec<usize>,
        data: Vec<f32>,
        channel_axis: Option<usize>,
    ) -> Self {
        Tensor {
            shape,
            data,
            channel_axis,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(
            Tensor::from_vec(vec![1.0, f32::NAN]),
            Err(TensorError::NonFinite(1))
        ));
    }

    #[test]
    fn channel_grouping_follows_strides() {
        // shape [2, 3]: axis 1 groups columns
        let t = Tensor::new(vec![2, 3], vec![0., 1., 2., 10., 11., 12.]).unwrap();
        let groups = t.channel_groups(1).unwrap();
        assert_eq!(groups, vec![vec![0., 10.], vec![1., 11.], vec![2., 12.]]);
        let groups0 = t.channel_groups(0).unwrap();
        assert_eq!(groups0[0], vec![0., 1., 2.]);
        assert!(t.channel_groups(2).is_err());
    }
}
