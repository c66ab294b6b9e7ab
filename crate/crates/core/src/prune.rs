//! Temporal token pruning: four selection strategies (density-peaks
//! clustering, attention received, motion magnitude, uniform sampling) and
//! the hierarchical schedule that applies them across the block stack.
//!
//! Every selector returns exactly `r` unique indices into the current token
//! set, sorted ascending. Score ties are broken toward the lower frame
//! index; inside the density-peak separation rule, "higher density" means
//! lexicographically greater `(density, -index)`, which makes the whole
//! selection a total order and lets oracle tests demand exact agreement.

use crate::error::{Error, Result};
use crate::kernel::{mean_pool_spatial, Matrix};
use crate::model::{self, ModelConfig, ModelWeights};
use crate::types::{PoseSequence2D, PoseTokens};

/// Token pruning strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Density-peaks clustering on spatially pooled tokens.
    Cluster,
    /// Attention received per token (column sums of temporal attention).
    Attention,
    /// Frame-to-frame motion magnitude of the input 2D sequence.
    Motion,
    /// Uniform temporal sampling.
    Sampler,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Cluster => "cluster",
            Strategy::Attention => "attention",
            Strategy::Motion => "motion",
            Strategy::Sampler => "sampler",
        }
    }

    pub fn parse(s: &str) -> Result<Strategy> {
        match s {
            "cluster" => Ok(Strategy::Cluster),
            "attention" => Ok(Strategy::Attention),
            "motion" => Ok(Strategy::Motion),
            "sampler" => Ok(Strategy::Sampler),
            other => Err(Error::Config(format!(
                "unknown strategy '{other}' (expected cluster, attention, motion, or sampler)"
            ))),
        }
    }
}

/// The hierarchical pruning plan: stage `m` reduces the token count to
/// `tokens_per_stage[m]` immediately before block `block_indices[m]` runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneSchedule {
    /// Tokens kept per stage (the `r` list); strictly decreasing, first
    /// entry below the frame count.
    pub tokens_per_stage: Vec<usize>,
    /// Block index of each stage (the `b` list); strictly increasing and
    /// below the block count.
    pub block_indices: Vec<usize>,
    pub strategy: Strategy,
}

impl PruneSchedule {
    pub fn validate(&self, frames: usize, blocks: usize) -> Result<()> {
        let r = &self.tokens_per_stage;
        let b = &self.block_indices;
        if r.is_empty() || b.is_empty() {
            return Err(Error::Schedule("schedule needs at least one stage".into()));
        }
        if r.len() != b.len() {
            return Err(Error::Schedule(format!(
                "r has {} entries but b has {}",
                r.len(),
                b.len()
            )));
        }
        if r[0] >= frames {
            return Err(Error::Schedule(format!(
                "first stage must prune: r[0] = {} is not below F = {frames}",
                r[0]
            )));
        }
        if r.contains(&0) {
            return Err(Error::Schedule("every stage must keep at least one token".into()));
        }
        if r.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Schedule(format!("r must be strictly decreasing: {r:?}")));
        }
        if b.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Schedule(format!("b must be strictly increasing: {b:?}")));
        }
        if *b.last().unwrap() >= blocks {
            return Err(Error::Schedule(format!(
                "last stage block {} is not below L = {blocks}",
                b.last().unwrap()
            )));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.tokens_per_stage.len()
    }

    /// Stage index pruned immediately before block `l`, if any.
    pub fn stage_at_block(&self, l: usize) -> Option<usize> {
        self.block_indices.iter().position(|&b| b == l)
    }
}

/// One pruning stage as recorded by the schedule runner.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStage {
    /// Block index the stage ran before.
    pub block: usize,
    /// Selected positions into the previous stage's token list (ascending).
    pub kept_in_stage: Vec<usize>,
    /// The same selection composed down to original frame indices (ascending).
    pub kept_original: Vec<usize>,
    /// Per-token scores over the previous stage's tokens, when the strategy
    /// produces them (cluster, attention, motion).
    pub scores: Option<Vec<f64>>,
}

/// Provenance of every surviving token across all stages.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub total_frames: usize,
    pub stages: Vec<SelectionStage>,
}

impl SelectionTrace {
    /// Original frame indices surviving after the last stage. With no stages
    /// this is empty; callers treat that as "all frames".
    pub fn final_kept(&self) -> Option<&[usize]> {
        self.stages.last().map(|s| s.kept_original.as_slice())
    }

    /// Checks that each stage's original indices are the previous stage's
    /// indices gathered by the stage selection.
    pub fn verify_composition(&self) -> Result<()> {
        let mut prev: Vec<usize> = (0..self.total_frames).collect();
        for (i, stage) in self.stages.iter().enumerate() {
            let composed: Vec<usize> = stage.kept_in_stage.iter().map(|&p| prev[p]).collect();
            if composed != stage.kept_original {
                return Err(Error::Internal(format!(
                    "trace stage {i} composition mismatch"
                )));
            }
            if stage
                .kept_original
                .windows(2)
                .any(|w| w[1] <= w[0])
            {
                return Err(Error::Internal(format!("trace stage {i} not ascending")));
            }
            prev = composed;
        }
        Ok(())
    }
}

/// Top-`r` indices by score, ties toward the lower index, returned ascending
/// together with the full score vector.
fn top_r_by_score(scores: Vec<f64>, r: usize) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| a.cmp(&b))
    });
    let mut sel: Vec<usize> = order[..r].to_vec();
    sel.sort_unstable();
    (sel, scores)
}

/// Uniform temporal sampling: `r` indices `round(j * (n-1) / (r-1))` with
/// round-half-up; `r = 1` keeps index 0. Always includes both endpoints when
/// `r >= 2`.
pub fn tps_select(n: usize, r: usize) -> Result<Vec<usize>> {
    if r == 0 || r > n {
        return Err(Error::Schedule(format!(
            "sampler: cannot keep {r} of {n} tokens"
        )));
    }
    if r == 1 {
        return Ok(vec![0]);
    }
    let idx = (0..r)
        .map(|j| ((j * (n - 1)) as f64 / (r - 1) as f64).round() as usize)
        .collect();
    Ok(idx)
}

/// Densities, separation distances, and center scores of the density-peaks
/// criterion.
#[derive(Debug, Clone)]
pub struct DpcScores {
    /// `exp(-mean of the k smallest squared distances)` per token; in (0, 1].
    pub densities: Vec<f64>,
    /// Euclidean distance to the nearest higher-density token; the unique
    /// highest-density token gets its maximum distance to any token.
    pub separations: Vec<f64>,
    /// `density * separation` per token.
    pub scores: Vec<f64>,
}

/// Evaluates the density-peaks criterion on pooled tokens (one row per
/// token). Neighbors exclude the token itself and are the `k` smallest
/// `(squared distance, index)` pairs; the density sum runs over them in that
/// order.
pub fn dpc_knn_scores(pooled: &Matrix, k: usize) -> Result<DpcScores> {
    let n = pooled.rows();
    if n < 2 {
        return Err(Error::Param(format!(
            "density-peaks scoring needs at least 2 tokens, got {n}"
        )));
    }
    if k >= n {
        return Err(Error::Param(format!(
            "knn_k = {k} must be below the token count {n}"
        )));
    }
    let d2 = pooled.pairwise_sq_dist();
    let mut densities = Vec::with_capacity(n);
    for i in 0..n {
        let mut neigh: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (d2.get(i, j), j))
            .collect();
        neigh.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let sum: f64 = neigh[..k].iter().map(|&(d, _)| d).sum();
        densities.push((-sum / k as f64).exp());
    }
    // higher(j, i): j counts as denser than i under the (density, -index)
    // total order.
    let higher = |j: usize, i: usize| -> bool {
        densities[j] > densities[i] || (densities[j] == densities[i] && j < i)
    };
    let mut separations = Vec::with_capacity(n);
    for i in 0..n {
        let mut best: Option<f64> = None;
        for j in 0..n {
            if j != i && higher(j, i) {
                let d = d2.get(i, j).sqrt();
                best = Some(match best {
                    Some(b) if b <= d => b,
                    _ => d,
                });
            }
        }
        let sep = match best {
            Some(d) => d,
            None => {
                // Global density peak: maximum distance to any token.
                let mut max = 0.0f64;
                for j in 0..n {
                    if j != i {
                        max = max.max(d2.get(i, j).sqrt());
                    }
                }
                max
            }
        };
        separations.push(sep);
    }
    let scores = densities
        .iter()
        .zip(separations.iter())
        .map(|(r, d)| r * d)
        .collect();
    Ok(DpcScores {
        densities,
        separations,
        scores,
    })
}

/// Cluster pruning: pool spatially, score with the density-peaks criterion,
/// keep the top-`r` scored tokens.
pub fn tpc_select(tokens: &PoseTokens, r: usize, k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = tokens.n_frames();
    if r > n {
        return Err(Error::Schedule(format!(
            "cluster: cannot keep {r} of {n} tokens"
        )));
    }
    let pooled = mean_pool_spatial(tokens);
    let dpc = dpc_knn_scores(&pooled, k)?;
    Ok(top_r_by_score(dpc.scores, r))
}

/// Attention pruning: a token's score is the attention it receives summed
/// over queries (column sums of the row-stochastic temporal attention).
pub fn tpa_select(alpha: &Matrix, r: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = alpha.rows();
    if alpha.cols() != n {
        return Err(Error::Shape(format!(
            "attention matrix must be square, got {}x{}",
            n,
            alpha.cols()
        )));
    }
    if r > n {
        return Err(Error::Schedule(format!(
            "attention: cannot keep {r} of {n} tokens"
        )));
    }
    let mut scores = vec![0.0; n];
    for q in 0..n {
        for (t, s) in alpha.row(q).iter().zip(scores.iter_mut()) {
            *s += t;
        }
    }
    Ok(top_r_by_score(scores, r))
}

/// Frame-to-frame differences of a flattened sequence; the first row is
/// zero by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMatrix {
    values: Matrix,
}

impl MotionMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }
}

/// Builds the motion matrix of a `n x (J*2)` flattened sequence: row 0 is
/// zero, row t is `s[t] - s[t-1]` over the rows actually present (i.e. the
/// currently surviving frames).
pub fn compute_motion(flat: &Matrix) -> MotionMatrix {
    let (n, c) = (flat.rows(), flat.cols());
    let mut values = Matrix::zeros(n, c);
    for t in 1..n {
        let prev = flat.row(t - 1);
        let cur = flat.row(t);
        let out = values.row_mut(t);
        for ((o, a), b) in out.iter_mut().zip(cur.iter()).zip(prev.iter()) {
            *o = a - b;
        }
    }
    MotionMatrix { values }
}

/// Motion pruning: a token's score is the absolute sum of its motion row.
pub fn tpmo_select(m: &MotionMatrix, r: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = m.rows();
    if r > n {
        return Err(Error::Schedule(format!(
            "motion: cannot keep {r} of {n} tokens"
        )));
    }
    let scores = (0..n)
        .map(|t| m.values.row(t).iter().map(|v| v.abs()).sum())
        .collect();
    Ok(top_r_by_score(scores, r))
}

/// Everything the schedule runner needs besides the tokens: block weights
/// for feature extraction (and attention scoring), the input 2D sequence for
/// the motion criterion, and an optional frame that must survive every stage
/// (the center frame of the single-frame pipeline).
pub struct ScheduleContext<'a> {
    pub config: &'a ModelConfig,
    pub weights: &'a ModelWeights,
    pub input: &'a PoseSequence2D,
    pub keep_frame: Option<usize>,
}

/// Runs the full block stack, pruning the token set to the stage width
/// immediately before each scheduled block. Returns the final tokens and the
/// per-stage selection trace.
pub fn run_schedule(
    mut x: PoseTokens,
    sched: &PruneSchedule,
    ctx: &ScheduleContext,
) -> Result<(PoseTokens, SelectionTrace)> {
    let cfg = ctx.config;
    sched.validate(cfg.frames, cfg.blocks)?;
    if x.n_frames() != cfg.frames {
        return Err(Error::Shape(format!(
            "schedule expects {} input tokens, got {}",
            cfg.frames,
            x.n_frames()
        )));
    }
    if ctx.weights.blocks.len() != cfg.blocks {
        return Err(Error::Shape(format!(
            "weights carry {} blocks, config expects {}",
            ctx.weights.blocks.len(),
            cfg.blocks
        )));
    }
    if let Some(cf) = ctx.keep_frame {
        if cf >= cfg.frames {
            return Err(Error::Param(format!(
                "kept frame {cf} out of range for F = {}",
                cfg.frames
            )));
        }
    }

    let mut current: Vec<usize> = (0..cfg.frames).collect();
    let mut stages = Vec::with_capacity(sched.stages());

    for l in 0..cfg.blocks {
        if let Some(m) = sched.stage_at_block(l) {
            let n = x.n_frames();
            let r = sched.tokens_per_stage[m];
            if r > n {
                return Err(Error::Schedule(format!(
                    "stage {m} keeps {r} tokens but only {n} remain"
                )));
            }
            let (mut sel, scores) = match sched.strategy {
                Strategy::Sampler => (tps_select(n, r)?, None),
                Strategy::Cluster => {
                    let (sel, scores) = tpc_select(&x, r, cfg.knn_k)?;
                    (sel, Some(scores))
                }
                Strategy::Attention => {
                    let alpha = model::temporal_attention(&x, &ctx.weights.blocks[l], cfg)?;
                    let (sel, scores) = tpa_select(&alpha, r)?;
                    (sel, Some(scores))
                }
                Strategy::Motion => {
                    let survivors = ctx.input.gather_frames(&current);
                    let motion = compute_motion(&survivors.flattened_rows());
                    let (sel, scores) = tpmo_select(&motion, r)?;
                    (sel, Some(scores))
                }
            };
            if let Some(cf) = ctx.keep_frame {
                let pos = current.iter().position(|&o| o == cf).ok_or_else(|| {
                    Error::Internal(format!("kept frame {cf} lost before stage {m}"))
                })?;
                if let Err(at) = sel.binary_search(&pos) {
                    sel.insert(at, pos);
                }
            }
            let kept_original: Vec<usize> = sel.iter().map(|&p| current[p]).collect();
            x = x.gather_frames(&sel);
            current = kept_original.clone();
            stages.push(SelectionStage {
                block: l,
                kept_in_stage: sel,
                kept_original,
                scores,
            });
        }
        let (next, _alpha) = model::transformer_block(&x, &ctx.weights.blocks[l], cfg, l)?;
        x = next;
    }

    Ok((
        x,
        SelectionTrace {
            total_frames: cfg.frames,
            stages,
        },
    ))
}
