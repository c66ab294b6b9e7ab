//! Token recovery: restoring the full-length temporal resolution from the
//! surviving tokens, either with one multi-head cross-attention layer over
//! learnable queries (on tokens, before the regression head) or by linear
//! interpolation (on 3D poses, after the head).

use crate::error::{Error, Result};
use crate::kernel::Matrix;
use crate::model::{multi_head_attention, AttentionWeights};
use crate::types::{Pose3DSequence, PoseTokens};

/// Parameters of the cross-attention recovery layer: `frames x dim`
/// learnable query tokens (exactly zero at initialization) plus one set of
/// Q/K/V/O projections with bias. Adds `F*C + 4*(C^2 + C)` parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TraWeights {
    pub queries: Matrix,
    pub attn: AttentionWeights,
}

/// Recovers `frames` tokens per joint from the `r_M` surviving tokens: per
/// joint, the learnable queries attend over that joint's kept tokens, and
/// the result is added back onto the queries (residual).
///
/// At zero initialization the queries are zero, so the attention logits are
/// zero, the weights are uniform, and every recovered frame of a joint
/// equals the output-projected mean of its value-projected kept tokens.
pub fn tra_recover(last: &PoseTokens, w: &TraWeights, heads: usize) -> Result<PoseTokens> {
    let frames = w.queries.rows();
    let dim = w.queries.cols();
    if last.dim() != dim {
        return Err(Error::Shape(format!(
            "recovery: token dim {} vs query dim {}",
            last.dim(),
            dim
        )));
    }
    let joints = last.joints();
    let r = last.n_frames();
    if r == 0 {
        return Err(Error::Shape("recovery: no surviving tokens".into()));
    }
    let q_group: Vec<Vec<usize>> = vec![(0..frames).collect()];
    let kv_group: Vec<Vec<usize>> = vec![(0..r).collect()];
    let mut out = PoseTokens::zeros(frames, joints, dim);
    for j in 0..joints {
        let kv = last.joint_matrix(j);
        let (mca, _) =
            multi_head_attention(&w.queries, &kv, &w.attn, heads, &q_group, &kv_group, false)?;
        for f in 0..frames {
            let dst = out.token_mut(f, j);
            for ((d, &m), &q) in dst.iter_mut().zip(mca.row(f)).zip(w.queries.row(f)) {
                *d = q + m;
            }
        }
    }
    Ok(out)
}

/// Recovers a full `frames`-long 3D sequence from poses predicted at the
/// kept frames by linear interpolation. Kept frames are copied bitwise; in
/// between, each coordinate is interpolated between its bracketing kept
/// frames. The kept set must cover both endpoints (the uniform sampler
/// guarantees this), so no extrapolation ever happens.
pub fn tri_recover(poses: &Pose3DSequence, kept: &[usize], frames: usize) -> Result<Pose3DSequence> {
    if kept.len() != poses.frames() {
        return Err(Error::Recovery(format!(
            "kept list has {} entries for {} predicted frames",
            kept.len(),
            poses.frames()
        )));
    }
    if kept.len() < 2 {
        return Err(Error::Recovery(format!(
            "interpolation needs at least 2 kept frames, got {}",
            kept.len()
        )));
    }
    if kept.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Recovery("kept frames must be strictly ascending".into()));
    }
    if kept[0] != 0 || *kept.last().unwrap() != frames - 1 {
        return Err(Error::Recovery(format!(
            "kept frames must cover both endpoints 0 and {} (got first {}, last {})",
            frames - 1,
            kept[0],
            kept.last().unwrap()
        )));
    }
    let joints = poses.joints();
    let mut out = Pose3DSequence::zeros(frames, joints);
    for (i, &f) in kept.iter().enumerate() {
        for j in 0..joints {
            out.set(f, j, poses.get(i, j));
        }
    }
    for i in 0..kept.len() - 1 {
        let (a, b) = (kept[i], kept[i + 1]);
        let span = (b - a) as f64;
        for t in (a + 1)..b {
            let w = (t - a) as f64 / span;
            for j in 0..joints {
                let pa = poses.get(i, j);
                let pb = poses.get(i + 1, j);
                out.set(
                    t,
                    j,
                    [
                        pa[0] + w * (pb[0] - pa[0]),
                        pa[1] + w * (pb[1] - pa[1]),
                        pa[2] + w * (pb[2] - pa[2]),
                    ],
                );
            }
        }
    }
    Ok(out)
}
