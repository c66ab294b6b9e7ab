//! A minimal video pose transformer: per-joint pose embedding with learned
//! spatial and temporal position tables, a stack of pre-norm blocks (spatial
//! attention, then temporal attention, then FFN), and a linear regression
//! head.
//!
//! Weight convention: every linear layer stores its matrix input-major
//! (`in x out`) and is applied as `y = x * W + b` on row vectors. Temporal
//! position encodings are added at embedding time and indexed by original
//! frame index, so pruned tokens keep their temporal identity.

use crate::error::{Error, Result};
use crate::kernel::{layer_norm_rows, softmax_in_place, Matrix};
use crate::recover::TraWeights;
use crate::rng::Rng;
use crate::types::{Pose3DSequence, PoseSequence2D, PoseTokens};

/// Head-averaged, joint-averaged temporal attention matrix (`N x N`,
/// row-stochastic).
pub type TemporalAttention = Matrix;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub frames: usize,
    pub joints: usize,
    pub blocks: usize,
    pub dim: usize,
    pub heads: usize,
    pub ffn_ratio: usize,
    /// Neighbor count for the cluster pruning criterion.
    pub knn_k: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be >= 1".into()));
        }
        if self.joints == 0 {
            return Err(Error::Config("joints must be >= 1".into()));
        }
        if self.blocks == 0 {
            return Err(Error::Config("blocks must be >= 1".into()));
        }
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "dim {} must be a positive multiple of heads {}",
                self.dim, self.heads
            )));
        }
        if self.ffn_ratio == 0 {
            return Err(Error::Config("ffn_ratio must be >= 1".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }
}

/// Q/K/V/O projections of one attention layer, each `dim x dim` with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub bq: Vec<f64>,
    pub bk: Vec<f64>,
    pub bv: Vec<f64>,
    pub bo: Vec<f64>,
}

impl AttentionWeights {
    pub fn zeros(dim: usize) -> Self {
        AttentionWeights {
            wq: Matrix::zeros(dim, dim),
            wk: Matrix::zeros(dim, dim),
            wv: Matrix::zeros(dim, dim),
            wo: Matrix::zeros(dim, dim),
            bq: vec![0.0; dim],
            bk: vec![0.0; dim],
            bv: vec![0.0; dim],
            bo: vec![0.0; dim],
        }
    }
}

/// Gain and bias of one layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormWeights {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

impl NormWeights {
    pub fn ones(dim: usize) -> Self {
        NormWeights {
            gain: vec![1.0; dim],
            bias: vec![0.0; dim],
        }
    }
}

/// Parameters of one transformer block: three pre-norm sub-layers (spatial
/// attention, temporal attention, FFN), each with its own layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub spatial_norm: NormWeights,
    pub spatial_attn: AttentionWeights,
    pub temporal_norm: NormWeights,
    pub temporal_attn: AttentionWeights,
    pub ffn_norm: NormWeights,
    pub ffn_w1: Matrix,
    pub ffn_b1: Vec<f64>,
    pub ffn_w2: Matrix,
    pub ffn_b2: Vec<f64>,
}

impl BlockWeights {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let c = cfg.dim;
        let h = cfg.ffn_ratio * c;
        BlockWeights {
            spatial_norm: NormWeights::ones(c),
            spatial_attn: AttentionWeights::zeros(c),
            temporal_norm: NormWeights::ones(c),
            temporal_attn: AttentionWeights::zeros(c),
            ffn_norm: NormWeights::ones(c),
            ffn_w1: Matrix::zeros(c, h),
            ffn_b1: vec![0.0; h],
            ffn_w2: Matrix::zeros(h, c),
            ffn_b2: vec![0.0; c],
        }
    }
}

/// All parameters of the model. Shapes are fully determined by
/// [`ModelConfig`]; the total parameter count follows the closed form
/// documented on [`base_parameter_count`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    /// `2 x dim` per-joint linear embedding.
    pub embed_weight: Matrix,
    pub embed_bias: Vec<f64>,
    /// `joints x dim` learned per-joint position table.
    pub spatial_pos: Matrix,
    /// `frames x dim` learned per-frame position table.
    pub temporal_pos: Matrix,
    pub blocks: Vec<BlockWeights>,
    /// `dim x 3` regression head.
    pub head_weight: Matrix,
    pub head_bias: Vec<f64>,
    /// Cross-attention recovery parameters, present only when the pipeline
    /// recovers tokens by attention.
    pub tra: Option<TraWeights>,
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
    Matrix::from_vec(rows, cols, data).expect("length by construction")
}

/// Builds deterministic weights from a seed: scaled-uniform (Glorot) draws
/// for every matrix, zero biases, unit norm gains. The learnable recovery
/// queries are the one exception and are exactly zero.
pub fn init_weights(cfg: &ModelConfig, rng: &mut Rng, with_tra: bool) -> Result<ModelWeights> {
    cfg.validate()?;
    let c = cfg.dim;
    let hidden = cfg.ffn_ratio * c;
    let embed_weight = glorot(rng, 2, c);
    let spatial_pos = glorot(rng, cfg.joints, c);
    let temporal_pos = glorot(rng, cfg.frames, c);
    let mut blocks = Vec::with_capacity(cfg.blocks);
    for _ in 0..cfg.blocks {
        let spatial_attn = AttentionWeights {
            wq: glorot(rng, c, c),
            wk: glorot(rng, c, c),
            wv: glorot(rng, c, c),
            wo: glorot(rng, c, c),
            bq: vec![0.0; c],
            bk: vec![0.0; c],
            bv: vec![0.0; c],
            bo: vec![0.0; c],
        };
        let temporal_attn = AttentionWeights {
            wq: glorot(rng, c, c),
            wk: glorot(rng, c, c),
            wv: glorot(rng, c, c),
            wo: glorot(rng, c, c),
            bq: vec![0.0; c],
            bk: vec![0.0; c],
            bv: vec![0.0; c],
            bo: vec![0.0; c],
        };
        blocks.push(BlockWeights {
            spatial_norm: NormWeights::ones(c),
            spatial_attn,
            temporal_norm: NormWeights::ones(c),
            temporal_attn,
            ffn_norm: NormWeights::ones(c),
            ffn_w1: glorot(rng, c, hidden),
            ffn_b1: vec![0.0; hidden],
            ffn_w2: glorot(rng, hidden, c),
            ffn_b2: vec![0.0; c],
        });
    }
    let head_weight = glorot(rng, c, 3);
    let head_bias = vec![0.0; 3];
    let tra = if with_tra {
        Some(TraWeights {
            queries: Matrix::zeros(cfg.frames, c),
            attn: AttentionWeights {
                wq: glorot(rng, c, c),
                wk: glorot(rng, c, c),
                wv: glorot(rng, c, c),
                wo: glorot(rng, c, c),
                bq: vec![0.0; c],
                bk: vec![0.0; c],
                bv: vec![0.0; c],
                bo: vec![0.0; c],
            },
        })
    } else {
        None
    };
    Ok(ModelWeights {
        config: cfg.clone(),
        embed_weight,
        embed_bias: vec![0.0; c],
        spatial_pos,
        temporal_pos,
        blocks,
        head_weight,
        head_bias,
        tra,
    })
}

impl ModelWeights {
    /// All-zero weights (norm gains included). Useful for tests: a stack of
    /// zero blocks is the identity on tokens.
    pub fn zeros(cfg: &ModelConfig, with_tra: bool) -> Result<Self> {
        cfg.validate()?;
        let c = cfg.dim;
        let mut w = ModelWeights {
            config: cfg.clone(),
            embed_weight: Matrix::zeros(2, c),
            embed_bias: vec![0.0; c],
            spatial_pos: Matrix::zeros(cfg.joints, c),
            temporal_pos: Matrix::zeros(cfg.frames, c),
            blocks: (0..cfg.blocks).map(|_| BlockWeights::zeros(cfg)).collect(),
            head_weight: Matrix::zeros(c, 3),
            head_bias: vec![0.0; 3],
            tra: None,
        };
        if with_tra {
            w.tra = Some(TraWeights {
                queries: Matrix::zeros(cfg.frames, c),
                attn: AttentionWeights::zeros(c),
            });
        }
        Ok(w)
    }

    /// Canonical enumeration of every parameter tensor as
    /// `(name, dims, values)`. This is the serialization order of the weight
    /// file and the basis of [`parameter_count`].
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        fn push_mat<'a>(
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
            name: String,
            m: &'a Matrix,
        ) {
            out.push((name, vec![m.rows(), m.cols()], m.data()));
        }
        fn push_vec<'a>(
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
            name: String,
            v: &'a [f64],
        ) {
            out.push((name, vec![v.len()], v));
        }
        fn push_attn<'a>(
            out: &mut Vec<(String, Vec<usize>, &'a [f64])>,
            prefix: &str,
            a: &'a AttentionWeights,
        ) {
            push_mat(out, format!("{prefix}.wq"), &a.wq);
            push_mat(out, format!("{prefix}.wk"), &a.wk);
            push_mat(out, format!("{prefix}.wv"), &a.wv);
            push_mat(out, format!("{prefix}.wo"), &a.wo);
            push_vec(out, format!("{prefix}.bq"), &a.bq);
            push_vec(out, format!("{prefix}.bk"), &a.bk);
            push_vec(out, format!("{prefix}.bv"), &a.bv);
            push_vec(out, format!("{prefix}.bo"), &a.bo);
        }
        push_mat(&mut out, "embed.weight".into(), &self.embed_weight);
        push_vec(&mut out, "embed.bias".into(), &self.embed_bias);
        push_mat(&mut out, "pos.spatial".into(), &self.spatial_pos);
        push_mat(&mut out, "pos.temporal".into(), &self.temporal_pos);
        for (i, b) in self.blocks.iter().enumerate() {
            push_vec(&mut out, format!("block{i}.norm1.gain"), &b.spatial_norm.gain);
            push_vec(&mut out, format!("block{i}.norm1.bias"), &b.spatial_norm.bias);
            push_attn(&mut out, &format!("block{i}.spatial_attn"), &b.spatial_attn);
            push_vec(&mut out, format!("block{i}.norm2.gain"), &b.temporal_norm.gain);
            push_vec(&mut out, format!("block{i}.norm2.bias"), &b.temporal_norm.bias);
            push_attn(&mut out, &format!("block{i}.temporal_attn"), &b.temporal_attn);
            push_vec(&mut out, format!("block{i}.norm3.gain"), &b.ffn_norm.gain);
            push_vec(&mut out, format!("block{i}.norm3.bias"), &b.ffn_norm.bias);
            push_mat(&mut out, format!("block{i}.ffn.w1"), &b.ffn_w1);
            push_vec(&mut out, format!("block{i}.ffn.b1"), &b.ffn_b1);
            push_mat(&mut out, format!("block{i}.ffn.w2"), &b.ffn_w2);
            push_vec(&mut out, format!("block{i}.ffn.b2"), &b.ffn_b2);
        }
        push_mat(&mut out, "head.weight".into(), &self.head_weight);
        push_vec(&mut out, "head.bias".into(), &self.head_bias);
        if let Some(tra) = &self.tra {
            push_mat(&mut out, "tra.queries".into(), &tra.queries);
            push_attn(&mut out, "tra.attn", &tra.attn);
        }
        out
    }
}

/// Total parameter count by enumeration of every tensor.
pub fn parameter_count(w: &ModelWeights) -> usize {
    w.named_tensors().iter().map(|(_, _, v)| v.len()).sum()
}

/// Closed-form parameter count excluding the temporal position table and any
/// recovery parameters:
///
/// `J*C + 6*C + 3 + L * ((8 + 2*ffn_ratio)*C^2 + (15 + ffn_ratio)*C)`
///
/// (embedding `2C + C`, spatial table `J*C`, per block two attention layers
/// `4(C^2+C)` each, FFN `2*ffn_ratio*C^2 + (ffn_ratio+1)*C`, three norms
/// `6C`, head `3C + 3`). Independent of the frame count; the temporal table
/// contributes a further `F*C`, counted by [`temporal_pos_parameter_count`].
pub fn base_parameter_count(cfg: &ModelConfig) -> usize {
    let c = cfg.dim;
    let per_block = (8 + 2 * cfg.ffn_ratio) * c * c + (15 + cfg.ffn_ratio) * c;
    cfg.joints * c + 6 * c + 3 + cfg.blocks * per_block
}

/// Parameters of the temporal position table: `frames * dim`.
pub fn temporal_pos_parameter_count(cfg: &ModelConfig) -> usize {
    cfg.frames * cfg.dim
}

/// Parameters added by attention recovery: `F*C + 4*(C^2 + C)`.
pub fn tra_parameter_count(cfg: &ModelConfig) -> usize {
    cfg.frames * cfg.dim + 4 * (cfg.dim * cfg.dim + cfg.dim)
}

/// `y = x * w + b` with the bias broadcast over rows.
pub fn linear(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if b.len() != w.cols() {
        return Err(Error::Shape(format!(
            "linear: bias length {} vs {} output columns",
            b.len(),
            w.cols()
        )));
    }
    let mut y = x.matmul(w)?;
    for i in 0..y.rows() {
        for (v, bb) in y.row_mut(i).iter_mut().zip(b.iter()) {
            *v += bb;
        }
    }
    Ok(y)
}

fn gelu_in_place(m: &mut Matrix) {
    // tanh form of GELU.
    const SQRT_2_OVER_PI: f64 = 0.7978845608028654;
    for v in m.data_mut().iter_mut() {
        let x = *v;
        *v = 0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044715 * x * x * x)).tanh());
    }
}

/// Embeds a 2D pose sequence: per-joint linear map `2 -> dim` plus the
/// learned spatial (per-joint) and temporal (per-frame) position encodings.
pub fn embed_poses(p: &PoseSequence2D, w: &ModelWeights) -> Result<PoseTokens> {
    let cfg = &w.config;
    if p.frames() != cfg.frames || p.joints() != cfg.joints {
        return Err(Error::Shape(format!(
            "input sequence {}x{} does not match configured {}x{}",
            p.frames(),
            p.joints(),
            cfg.frames,
            cfg.joints
        )));
    }
    let coords = Matrix::from_vec(p.frames() * p.joints(), 2, p.data().to_vec())
        .expect("sequence layout is frame-major");
    let mut tokens = linear(&coords, &w.embed_weight, &w.embed_bias)?;
    for f in 0..p.frames() {
        for j in 0..p.joints() {
            let row = tokens.row_mut(f * p.joints() + j);
            for ((v, s), t) in row
                .iter_mut()
                .zip(w.spatial_pos.row(j).iter())
                .zip(w.temporal_pos.row(f).iter())
            {
                *v += s + t;
            }
        }
    }
    PoseTokens::from_matrix(tokens, p.frames(), p.joints())
}

/// Per-token linear map `dim -> 3`. The output frame count equals the input
/// token frame count.
pub fn regression_head(x: &PoseTokens, w: &ModelWeights) -> Result<Pose3DSequence> {
    if x.dim() != w.config.dim {
        return Err(Error::Shape(format!(
            "head: token dim {} vs configured {}",
            x.dim(),
            w.config.dim
        )));
    }
    let out = linear(&x.to_matrix(), &w.head_weight, &w.head_bias)?;
    Pose3DSequence::new(x.n_frames(), x.joints(), out.into_data())
}

/// Softmax attention weights of one head over contiguous channel range `cs`:
/// `softmax(Q_h K_h^T * scale)` for the stream rows, as a `n_q x n_kv`
/// matrix.
fn head_attention_weights(
    q: &Matrix,
    k: &Matrix,
    q_rows: &[usize],
    k_rows: &[usize],
    cs: std::ops::Range<usize>,
    scale: f64,
) -> Matrix {
    let qh = q.gather_scaled(q_rows, cs.clone(), scale);
    let kh_t = k.gather_transposed(k_rows, cs);
    let mut logits = qh.matmul(&kh_t).expect("head slices share the head dim");
    for i in 0..logits.rows() {
        softmax_in_place(logits.row_mut(i));
    }
    logits
}

/// Multi-head attention core shared by the block sub-layers and the
/// cross-attention recovery: projects `q_src` to queries and `kv_src` to
/// keys/values, attends within each `(group, head)`, and applies the output
/// projection. `groups` partitions the rows of `q_src`/`kv_src` into
/// independent attention streams (frames for spatial attention, joints for
/// temporal attention; one global group for cross-attention).
///
/// Returns the projected output and, when `want_alpha` is set, the attention
/// weights averaged over heads and groups (`group_q x group_kv`).
pub fn multi_head_attention(
    q_src: &Matrix,
    kv_src: &Matrix,
    w: &AttentionWeights,
    heads: usize,
    q_groups: &[Vec<usize>],
    kv_groups: &[Vec<usize>],
    want_alpha: bool,
) -> Result<(Matrix, Option<Matrix>)> {
    let c = q_src.cols();
    if kv_src.cols() != c {
        return Err(Error::Shape("attention: query/key dim mismatch".into()));
    }
    if !c.is_multiple_of(heads) {
        return Err(Error::Shape(format!(
            "attention: dim {c} not divisible by {heads} heads"
        )));
    }
    if q_groups.len() != kv_groups.len() {
        return Err(Error::Shape("attention: group count mismatch".into()));
    }
    let d = c / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let q = linear(q_src, &w.wq, &w.bq)?;
    let k = linear(kv_src, &w.wk, &w.bk)?;
    let v = linear(kv_src, &w.wv, &w.bv)?;

    let mut ctx = Matrix::zeros(q_src.rows(), c);
    let nq0 = q_groups[0].len();
    let nkv0 = kv_groups[0].len();
    let mut alpha_avg = if want_alpha {
        Some(Matrix::zeros(nq0, nkv0))
    } else {
        None
    };

    for (qg, kg) in q_groups.iter().zip(kv_groups.iter()) {
        if qg.len() != nq0 || kg.len() != nkv0 {
            return Err(Error::Shape("attention: ragged groups".into()));
        }
        for h in 0..heads {
            let cs = h * d..(h + 1) * d;
            let alpha = head_attention_weights(&q, &k, qg, kg, cs.clone(), scale);
            if let Some(avg) = alpha_avg.as_mut() {
                for (o, a) in avg.data_mut().iter_mut().zip(alpha.data().iter()) {
                    *o += a;
                }
            }
            let vh = v.gather_scaled(kg, cs.clone(), 1.0);
            let weighted = alpha.matmul(&vh)?;
            for (a, &qi) in qg.iter().enumerate() {
                ctx.row_mut(qi)[cs.clone()].copy_from_slice(weighted.row(a));
            }
        }
    }

    if let Some(avg) = alpha_avg.as_mut() {
        let norm = 1.0 / (q_groups.len() * heads) as f64;
        for v in avg.data_mut().iter_mut() {
            *v *= norm;
        }
    }
    let out = linear(&ctx, &w.wo, &w.bo)?;
    Ok((out, alpha_avg))
}

fn frame_groups(n: usize, j: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|f| (f * j..(f + 1) * j).collect())
        .collect()
}

fn joint_groups(n: usize, j: usize) -> Vec<Vec<usize>> {
    (0..j)
        .map(|jj| (0..n).map(|f| f * j + jj).collect())
        .collect()
}

/// One pre-norm transformer block: spatial attention over the joints of each
/// frame, temporal attention over the frames of each joint, then the FFN.
/// Never changes the token frame count. Also returns the head- and
/// joint-averaged temporal attention matrix.
pub fn transformer_block(
    x: &PoseTokens,
    bw: &BlockWeights,
    cfg: &ModelConfig,
    block_idx: usize,
) -> Result<(PoseTokens, TemporalAttention)> {
    if x.dim() != cfg.dim {
        return Err(Error::Shape(format!(
            "block {}: token dim {} vs configured {}",
            block_idx,
            x.dim(),
            cfg.dim
        )));
    }
    let (n, j) = (x.n_frames(), x.joints());
    let mut m = x.to_matrix();

    // Spatial attention sub-layer.
    let ln = layer_norm_rows(&m, &bw.spatial_norm.gain, &bw.spatial_norm.bias)?;
    let groups = frame_groups(n, j);
    let (sp, _) = multi_head_attention(&ln, &ln, &bw.spatial_attn, cfg.heads, &groups, &groups, false)?;
    m.add_assign(&sp)?;

    // Temporal attention sub-layer.
    let ln = layer_norm_rows(&m, &bw.temporal_norm.gain, &bw.temporal_norm.bias)?;
    let groups = joint_groups(n, j);
    let (tp, alpha) =
        multi_head_attention(&ln, &ln, &bw.temporal_attn, cfg.heads, &groups, &groups, true)?;
    m.add_assign(&tp)?;
    let alpha = alpha.expect("alpha requested");

    // FFN sub-layer.
    let ln = layer_norm_rows(&m, &bw.ffn_norm.gain, &bw.ffn_norm.bias)?;
    let mut hidden = linear(&ln, &bw.ffn_w1, &bw.ffn_b1)?;
    gelu_in_place(&mut hidden);
    let ff = linear(&hidden, &bw.ffn_w2, &bw.ffn_b2)?;
    m.add_assign(&ff)?;

    if !m.is_finite() {
        return Err(Error::Numeric {
            block: block_idx,
            detail: "non-finite activation after block".into(),
        });
    }
    Ok((PoseTokens::from_matrix(m, n, j)?, alpha))
}

/// Head- and joint-averaged temporal attention of one block's temporal
/// sub-layer applied to `x` as it stands (no residual update). This is the
/// score source for attention-based pruning, evaluated on the tokens
/// entering the pruning block.
pub fn temporal_attention(
    x: &PoseTokens,
    bw: &BlockWeights,
    cfg: &ModelConfig,
) -> Result<TemporalAttention> {
    let (n, j) = (x.n_frames(), x.joints());
    let m = x.to_matrix();
    let ln = layer_norm_rows(&m, &bw.temporal_norm.gain, &bw.temporal_norm.bias)?;
    let q = linear(&ln, &bw.temporal_attn.wq, &bw.temporal_attn.bq)?;
    let k = linear(&ln, &bw.temporal_attn.wk, &bw.temporal_attn.bk)?;
    let d = cfg.head_dim();
    let scale = 1.0 / (d as f64).sqrt();
    let mut avg = Matrix::zeros(n, n);
    let groups = joint_groups(n, j);
    for g in &groups {
        for h in 0..cfg.heads {
            let cs = h * d..(h + 1) * d;
            let alpha = head_attention_weights(&q, &k, g, g, cs, scale);
            for (o, a) in avg.data_mut().iter_mut().zip(alpha.data().iter()) {
                *o += a;
            }
        }
    }
    let norm = 1.0 / (j * cfg.heads) as f64;
    for v in avg.data_mut().iter_mut() {
        *v *= norm;
    }
    Ok(avg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ModelConfig {
        ModelConfig {
            frames: 4,
            joints: 2,
            blocks: 2,
            dim: 4,
            heads: 2,
            ffn_ratio: 2,
            knn_k: 2,
        }
    }

    #[test]
    fn embed_zero_input_replicates_bias() {
        let cfg = tiny_cfg();
        let mut w = ModelWeights::zeros(&cfg, false).unwrap();
        w.embed_bias = vec![1.0, 2.0, 3.0, 4.0];
        let p = PoseSequence2D::zeros(cfg.frames, cfg.joints);
        let t = embed_poses(&p, &w).unwrap();
        for f in 0..cfg.frames {
            for j in 0..cfg.joints {
                assert_eq!(t.token(f, j), &[1.0, 2.0, 3.0, 4.0]);
            }
        }
    }

    #[test]
    fn embed_hand_linear_map() {
        let cfg = ModelConfig {
            frames: 1,
            joints: 1,
            blocks: 1,
            dim: 1,
            heads: 1,
            ffn_ratio: 2,
            knn_k: 1,
        };
        let mut w = ModelWeights::zeros(&cfg, false).unwrap();
        w.embed_weight = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let mut p = PoseSequence2D::zeros(1, 1);
        p.set(0, 0, 5.0, 7.0);
        let t = embed_poses(&p, &w).unwrap();
        assert_eq!(t.token(0, 0), &[5.0]);
    }

    #[test]
    fn embed_frame_permutation_equivariance() {
        let cfg = tiny_cfg();
        let mut rng = Rng::new(5);
        let mut w = init_weights(&cfg, &mut rng, false).unwrap();
        w.temporal_pos = Matrix::zeros(cfg.frames, cfg.dim);
        let mut p = PoseSequence2D::zeros(cfg.frames, cfg.joints);
        for f in 0..cfg.frames {
            for j in 0..cfg.joints {
                p.set(f, j, f as f64, j as f64 + 0.5);
            }
        }
        let t = embed_poses(&p, &w).unwrap();
        let perm = [2usize, 0, 3, 1];
        let p_perm = p.gather_frames(&perm);
        let t_perm = embed_poses(&p_perm, &w).unwrap();
        for (out_f, &src_f) in perm.iter().enumerate() {
            for j in 0..cfg.joints {
                assert_eq!(t_perm.token(out_f, j), t.token(src_f, j));
            }
        }
    }

    #[test]
    fn block_singleton_attention_is_one() {
        let cfg = ModelConfig {
            frames: 1,
            joints: 1,
            blocks: 1,
            dim: 2,
            heads: 1,
            ffn_ratio: 2,
            knn_k: 1,
        };
        let mut rng = Rng::new(9);
        let w = init_weights(&cfg, &mut rng, false).unwrap();
        let x = PoseTokens::from_vec(1, 1, 2, vec![0.3, -0.7]).unwrap();
        let (_, alpha) = transformer_block(&x, &w.blocks[0], &cfg, 0).unwrap();
        assert_eq!(alpha.rows(), 1);
        assert_eq!(alpha.get(0, 0), 1.0);
    }

    #[test]
    fn zero_weight_stack_is_identity() {
        let cfg = tiny_cfg();
        let w = ModelWeights::zeros(&cfg, false).unwrap();
        let mut rng = Rng::new(3);
        let data: Vec<f64> = (0..cfg.frames * cfg.joints * cfg.dim)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let mut x = PoseTokens::from_vec(cfg.frames, cfg.joints, cfg.dim, data).unwrap();
        let orig = x.clone();
        for (i, b) in w.blocks.iter().enumerate() {
            let (nx, _) = transformer_block(&x, b, &cfg, i).unwrap();
            x = nx;
        }
        assert_eq!(x, orig);
    }

    #[test]
    fn block_alpha_rows_sum_to_one() {
        let cfg = ModelConfig {
            frames: 3,
            joints: 2,
            blocks: 1,
            dim: 4,
            heads: 2,
            ffn_ratio: 2,
            knn_k: 1,
        };
        let mut rng = Rng::new(21);
        let w = init_weights(&cfg, &mut rng, false).unwrap();
        let data: Vec<f64> = (0..3 * 2 * 4).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let x = PoseTokens::from_vec(3, 2, 4, data).unwrap();
        let (_, alpha) = transformer_block(&x, &w.blocks[0], &cfg, 0).unwrap();
        for i in 0..3 {
            let s: f64 = alpha.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn block_never_changes_frame_count() {
        let cfg = tiny_cfg();
        let mut rng = Rng::new(2);
        let w = init_weights(&cfg, &mut rng, false).unwrap();
        let x = PoseTokens::zeros(cfg.frames, cfg.joints, cfg.dim);
        let (y, _) = transformer_block(&x, &w.blocks[0], &cfg, 0).unwrap();
        assert_eq!(y.n_frames(), cfg.frames);
    }

    #[test]
    fn head_examples() {
        let cfg = ModelConfig {
            frames: 2,
            joints: 1,
            blocks: 1,
            dim: 1,
            heads: 1,
            ffn_ratio: 2,
            knn_k: 1,
        };
        let mut w = ModelWeights::zeros(&cfg, false).unwrap();
        w.head_bias = vec![4.0, 5.0, 6.0];
        let x = PoseTokens::zeros(2, 1, 1);
        let q = regression_head(&x, &w).unwrap();
        assert_eq!(q.get(0, 0), [4.0, 5.0, 6.0]);
        assert_eq!(q.get(1, 0), [4.0, 5.0, 6.0]);

        w.head_weight = Matrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        w.head_bias = vec![0.0; 3];
        let x = PoseTokens::from_vec(1, 1, 1, vec![2.0]).unwrap();
        let q = regression_head(&x, &w).unwrap();
        assert_eq!(q.get(0, 0), [2.0, 2.0, 2.0]);
    }

    #[test]
    fn head_preserves_frame_count() {
        let cfg = ModelConfig {
            frames: 81,
            joints: 2,
            blocks: 1,
            dim: 2,
            heads: 1,
            ffn_ratio: 2,
            knn_k: 1,
        };
        let mut rng = Rng::new(1);
        let w = init_weights(&cfg, &mut rng, false).unwrap();
        let x = PoseTokens::zeros(81, 2, 2);
        assert_eq!(regression_head(&x, &w).unwrap().frames(), 81);
    }

    #[test]
    fn init_deterministic_and_zero_queries() {
        let cfg = tiny_cfg();
        let a = init_weights(&cfg, &mut Rng::new(77), true).unwrap();
        let b = init_weights(&cfg, &mut Rng::new(77), true).unwrap();
        assert_eq!(a, b);
        let tra = a.tra.as_ref().unwrap();
        assert!(tra.queries.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_count_matches_formula() {
        // Large preset-like shape: enumeration agrees with the closed form.
        let cfg = ModelConfig {
            frames: 243,
            joints: 17,
            blocks: 8,
            dim: 512,
            heads: 8,
            ffn_ratio: 2,
            knn_k: 2,
        };
        let mut rng = Rng::new(0);
        let w = init_weights(&cfg, &mut rng, false).unwrap();
        assert_eq!(
            parameter_count(&w),
            base_parameter_count(&cfg) + temporal_pos_parameter_count(&cfg)
        );
        let w = init_weights(&cfg, &mut rng, true).unwrap();
        assert_eq!(
            parameter_count(&w),
            base_parameter_count(&cfg) + temporal_pos_parameter_count(&cfg) + tra_parameter_count(&cfg)
        );
    }

    #[test]
    fn base_count_independent_of_frames() {
        let mut cfg = tiny_cfg();
        let c1 = base_parameter_count(&cfg);
        cfg.frames = 999;
        assert_eq!(base_parameter_count(&cfg), c1);

        // The enumerated count minus the temporal table is also F-independent.
        let mut rng = Rng::new(4);
        let small = {
            let mut c = tiny_cfg();
            c.frames = 4;
            let w = init_weights(&c, &mut rng, false).unwrap();
            parameter_count(&w) - temporal_pos_parameter_count(&c)
        };
        let large = {
            let mut c = tiny_cfg();
            c.frames = 64;
            let w = init_weights(&c, &mut rng, false).unwrap();
            parameter_count(&w) - temporal_pos_parameter_count(&c)
        };
        assert_eq!(small, large);
    }

    #[test]
    fn non_finite_activation_names_block() {
        let cfg = tiny_cfg();
        let mut w = ModelWeights::zeros(&cfg, false).unwrap();
        // Overflow the FFN: the first layer blows activations up to ~1e200,
        // the second multiplies by 1e200 again, past the f64 range.
        let hidden = cfg.ffn_ratio * cfg.dim;
        let mut w1 = Matrix::zeros(cfg.dim, hidden);
        for i in 0..cfg.dim {
            w1.set(i, i, 1e200);
        }
        w.blocks[1].ffn_w1 = w1;
        w.blocks[1].ffn_w2 =
            Matrix::from_vec(hidden, cfg.dim, vec![1e200; hidden * cfg.dim]).unwrap();
        let mut rng = Rng::new(6);
        let data: Vec<f64> = (0..cfg.frames * cfg.joints * cfg.dim)
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let x = PoseTokens::from_vec(cfg.frames, cfg.joints, cfg.dim, data).unwrap();
        match transformer_block(&x, &w.blocks[1], &cfg, 1) {
            Err(Error::Numeric { block, .. }) => assert_eq!(block, 1),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = tiny_cfg();
        cfg.dim = 5;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.blocks = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_cfg();
        cfg.ffn_ratio = 0;
        assert!(cfg.validate().is_err());
    }
}
