//! Pose sequence and token tensor types shared across the crate.

use crate::error::{Error, Result};
use crate::kernel::Matrix;

/// Detected 2D keypoints per frame: shape `frames x joints x 2`, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence2D {
    frames: usize,
    joints: usize,
    data: Vec<f64>,
}

impl PoseSequence2D {
    pub fn new(frames: usize, joints: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * joints * 2 {
            return Err(Error::Shape(format!(
                "2d sequence data length {} does not match {}x{}x2",
                data.len(),
                frames,
                joints
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("2d sequence contains non-finite values".into()));
        }
        Ok(PoseSequence2D {
            frames,
            joints,
            data,
        })
    }

    pub fn zeros(frames: usize, joints: usize) -> Self {
        PoseSequence2D {
            frames,
            joints,
            data: vec![0.0; frames * joints * 2],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, frame: usize, joint: usize) -> (f64, f64) {
        let base = (frame * self.joints + joint) * 2;
        (self.data[base], self.data[base + 1])
    }

    pub fn set(&mut self, frame: usize, joint: usize, x: f64, y: f64) {
        let base = (frame * self.joints + joint) * 2;
        self.data[base] = x;
        self.data[base + 1] = y;
    }

    /// Frames as rows of a `frames x (joints*2)` matrix.
    pub fn flattened_rows(&self) -> Matrix {
        Matrix::from_vec(self.frames, self.joints * 2, self.data.clone())
            .expect("layout is frame-major by construction")
    }

    /// New sequence containing only the given frames, in the given order.
    pub fn gather_frames(&self, idx: &[usize]) -> PoseSequence2D {
        let stride = self.joints * 2;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &f in idx {
            data.extend_from_slice(&self.data[f * stride..(f + 1) * stride]);
        }
        PoseSequence2D {
            frames: idx.len(),
            joints: self.joints,
            data,
        }
    }
}

/// 3D poses per frame: shape `frames x joints x 3`, frame-major. Coordinates
/// are in millimeters when the data are metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3DSequence {
    frames: usize,
    joints: usize,
    data: Vec<f64>,
}

impl Pose3DSequence {
    pub fn new(frames: usize, joints: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * joints * 3 {
            return Err(Error::Shape(format!(
                "3d sequence data length {} does not match {}x{}x3",
                data.len(),
                frames,
                joints
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape("3d sequence contains non-finite values".into()));
        }
        Ok(Pose3DSequence {
            frames,
            joints,
            data,
        })
    }

    pub fn zeros(frames: usize, joints: usize) -> Self {
        Pose3DSequence {
            frames,
            joints,
            data: vec![0.0; frames * joints * 3],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, frame: usize, joint: usize) -> [f64; 3] {
        let base = (frame * self.joints + joint) * 3;
        [self.data[base], self.data[base + 1], self.data[base + 2]]
    }

    pub fn set(&mut self, frame: usize, joint: usize, v: [f64; 3]) {
        let base = (frame * self.joints + joint) * 3;
        self.data[base..base + 3].copy_from_slice(&v);
    }

    /// Contiguous values of one frame (`joints * 3` floats).
    pub fn frame(&self, frame: usize) -> &[f64] {
        let stride = self.joints * 3;
        &self.data[frame * stride..(frame + 1) * stride]
    }

    pub fn gather_frames(&self, idx: &[usize]) -> Pose3DSequence {
        let stride = self.joints * 3;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &f in idx {
            data.extend_from_slice(&self.data[f * stride..(f + 1) * stride]);
        }
        Pose3DSequence {
            frames: idx.len(),
            joints: self.joints,
            data,
        }
    }
}

/// Embedded token tensor: shape `n_frames x joints x dim`, frame-major.
/// `n_frames` shrinks as pruning stages run; joints and dim never change.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTokens {
    n_frames: usize,
    joints: usize,
    dim: usize,
    data: Vec<f64>,
}

impl PoseTokens {
    pub fn zeros(n_frames: usize, joints: usize, dim: usize) -> Self {
        PoseTokens {
            n_frames,
            joints,
            dim,
            data: vec![0.0; n_frames * joints * dim],
        }
    }

    pub fn from_vec(n_frames: usize, joints: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_frames * joints * dim {
            return Err(Error::Shape(format!(
                "token data length {} does not match {}x{}x{}",
                data.len(),
                n_frames,
                joints,
                dim
            )));
        }
        Ok(PoseTokens {
            n_frames,
            joints,
            dim,
            data,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// One token's channel vector.
    pub fn token(&self, frame: usize, joint: usize) -> &[f64] {
        let base = (frame * self.joints + joint) * self.dim;
        &self.data[base..base + self.dim]
    }

    pub fn token_mut(&mut self, frame: usize, joint: usize) -> &mut [f64] {
        let base = (frame * self.joints + joint) * self.dim;
        &mut self.data[base..base + self.dim]
    }

    /// View of the whole tensor as a `(n_frames*joints) x dim` matrix.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.n_frames * self.joints, self.dim, self.data.clone())
            .expect("token layout is row-major by construction")
    }

    /// Inverse of [`PoseTokens::to_matrix`].
    pub fn from_matrix(m: Matrix, n_frames: usize, joints: usize) -> Result<Self> {
        if m.rows() != n_frames * joints {
            return Err(Error::Shape(format!(
                "matrix with {} rows cannot hold {}x{} tokens",
                m.rows(),
                n_frames,
                joints
            )));
        }
        let dim = m.cols();
        PoseTokens::from_vec(n_frames, joints, dim, m.into_data())
    }

    /// Tokens of one joint across frames as a `n_frames x dim` matrix.
    pub fn joint_matrix(&self, joint: usize) -> Matrix {
        let mut data = Vec::with_capacity(self.n_frames * self.dim);
        for f in 0..self.n_frames {
            data.extend_from_slice(self.token(f, joint));
        }
        Matrix::from_vec(self.n_frames, self.dim, data).expect("length by construction")
    }

    /// New tensor containing only the given frames, in the given order.
    pub fn gather_frames(&self, idx: &[usize]) -> PoseTokens {
        let stride = self.joints * self.dim;
        let mut data = Vec::with_capacity(idx.len() * stride);
        for &f in idx {
            data.extend_from_slice(&self.data[f * stride..(f + 1) * stride]);
        }
        PoseTokens {
            n_frames: idx.len(),
            joints: self.joints,
            dim: self.dim,
            data,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_preserves_joint_layout() {
        let mut t = PoseTokens::zeros(3, 2, 2);
        for f in 0..3 {
            for j in 0..2 {
                t.token_mut(f, j).copy_from_slice(&[f as f64, j as f64]);
            }
        }
        let g = t.gather_frames(&[2, 0]);
        assert_eq!(g.n_frames(), 2);
        assert_eq!(g.token(0, 1), &[2.0, 1.0]);
        assert_eq!(g.token(1, 0), &[0.0, 0.0]);
    }

    #[test]
    fn matrix_round_trip() {
        let t = PoseTokens::from_vec(2, 2, 3, (0..12).map(|i| i as f64).collect()).unwrap();
        let m = t.to_matrix();
        let back = PoseTokens::from_matrix(m, 2, 2).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(PoseSequence2D::new(1, 1, vec![0.0, f64::NAN]).is_err());
        assert!(Pose3DSequence::new(1, 1, vec![0.0, 1.0, f64::INFINITY]).is_err());
    }
}
