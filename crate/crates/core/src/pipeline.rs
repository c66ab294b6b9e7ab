//! The two inference pipelines: sequence-to-sequence (prune, run the stack,
//! recover full length) and sequence-to-frame (prune with the center frame
//! pinned, return only the center pose).

use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, ModelWeights};
use crate::prune::{run_schedule, PruneSchedule, ScheduleContext, SelectionTrace, Strategy};
use crate::recover::{tra_recover, tri_recover};
use crate::types::{Pose3DSequence, PoseSequence2D};

/// Inference pipeline shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// 3D poses of all frames in one pass.
    Seq2Seq,
    /// 3D pose of the center frame only.
    Seq2Frame,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Seq2Seq => "seq2seq",
            Mode::Seq2Frame => "seq2frame",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "seq2seq" => Ok(Mode::Seq2Seq),
            "seq2frame" => Ok(Mode::Seq2Frame),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected seq2seq or seq2frame)"
            ))),
        }
    }
}

/// Token recovery choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recovery {
    /// Cross-attention over learnable queries, on tokens before the head.
    Tra,
    /// Linear interpolation of 3D poses after the head.
    Tri,
    /// No recovery (single-frame pipeline).
    None,
}

impl Recovery {
    pub fn name(&self) -> &'static str {
        match self {
            Recovery::Tra => "tra",
            Recovery::Tri => "tri",
            Recovery::None => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Recovery> {
        match s {
            "tra" => Ok(Recovery::Tra),
            "tri" => Ok(Recovery::Tri),
            "none" => Ok(Recovery::None),
            other => Err(Error::Config(format!(
                "unknown recovery '{other}' (expected tra, tri, or none)"
            ))),
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub recovery: Recovery,
    pub schedule: PruneSchedule,
    pub model: ModelConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.schedule.validate(self.model.frames, self.model.blocks)?;
        match (self.mode, self.recovery) {
            (Mode::Seq2Seq, Recovery::None) => {
                return Err(Error::Config(
                    "seq2seq requires a recovery strategy (tra or tri)".into(),
                ))
            }
            (Mode::Seq2Frame, Recovery::Tra) | (Mode::Seq2Frame, Recovery::Tri) => {
                return Err(Error::Config(
                    "seq2frame outputs one frame and takes recovery = none".into(),
                ))
            }
            _ => {}
        }
        if self.recovery == Recovery::Tri && self.schedule.strategy != Strategy::Sampler {
            return Err(Error::Config(
                "interpolation recovery (tri) requires the sampler strategy".into(),
            ));
        }
        Ok(())
    }

    /// Center frame index of the single-frame pipeline.
    pub fn center_frame(&self) -> usize {
        self.model.frames / 2
    }
}

fn check_weights(cfg: &ModelConfig, w: &ModelWeights) -> Result<()> {
    if w.config != *cfg {
        return Err(Error::Config(format!(
            "weights were built for F={} J={} L={} C={} H={}, config wants F={} J={} L={} C={} H={}",
            w.config.frames,
            w.config.joints,
            w.config.blocks,
            w.config.dim,
            w.config.heads,
            cfg.frames,
            cfg.joints,
            cfg.blocks,
            cfg.dim,
            cfg.heads
        )));
    }
    Ok(())
}

/// Sequence-to-sequence forward pass: embed, run the scheduled stack, recover
/// full length (by cross-attention on tokens or by interpolating the head's
/// poses), and return all `F` frames plus the selection trace.
pub fn seq2seq_forward(
    p: &PoseSequence2D,
    cfg: &PipelineConfig,
    w: &ModelWeights,
) -> Result<(Pose3DSequence, SelectionTrace)> {
    cfg.validate()?;
    if cfg.mode != Mode::Seq2Seq {
        return Err(Error::Config("pipeline is not configured as seq2seq".into()));
    }
    check_weights(&cfg.model, w)?;
    let x = model::embed_poses(p, w)?;
    let ctx = ScheduleContext {
        config: &cfg.model,
        weights: w,
        input: p,
        keep_frame: None,
    };
    let (x, trace) = run_schedule(x, &cfg.schedule, &ctx)?;
    let poses = match cfg.recovery {
        Recovery::Tra => {
            let tra = w.tra.as_ref().ok_or_else(|| {
                Error::Config("recovery = tra but the weights carry no recovery tensors".into())
            })?;
            let full = tra_recover(&x, tra, cfg.model.heads)?;
            model::regression_head(&full, w)?
        }
        Recovery::Tri => {
            let sparse = model::regression_head(&x, w)?;
            let kept = trace
                .final_kept()
                .ok_or_else(|| Error::Internal("schedule produced no stages".into()))?;
            tri_recover(&sparse, kept, cfg.model.frames)?
        }
        Recovery::None => unreachable!("rejected by validate"),
    };
    Ok((poses, trace))
}

/// Sequence-to-frame forward pass: the center frame's token is re-inserted
/// at every pruning stage if the strategy dropped it, the head runs on the
/// final token set, and only the center pose is returned (as a one-frame
/// sequence).
pub fn seq2frame_forward(
    p: &PoseSequence2D,
    cfg: &PipelineConfig,
    w: &ModelWeights,
) -> Result<(Pose3DSequence, SelectionTrace)> {
    cfg.validate()?;
    if cfg.mode != Mode::Seq2Frame {
        return Err(Error::Config("pipeline is not configured as seq2frame".into()));
    }
    check_weights(&cfg.model, w)?;
    let center = cfg.center_frame();
    let x = model::embed_poses(p, w)?;
    let ctx = ScheduleContext {
        config: &cfg.model,
        weights: w,
        input: p,
        keep_frame: Some(center),
    };
    let (x, trace) = run_schedule(x, &cfg.schedule, &ctx)?;
    let poses = model::regression_head(&x, w)?;
    let kept = trace
        .final_kept()
        .ok_or_else(|| Error::Internal("schedule produced no stages".into()))?;
    let pos = kept
        .iter()
        .position(|&f| f == center)
        .ok_or_else(|| Error::Internal("center frame missing from final token set".into()))?;
    Ok((poses.gather_frames(&[pos]), trace))
}

/// Unpruned sequence-to-sequence forward (embed, all blocks, head). This is
/// the benchmarking baseline.
pub fn baseline_forward(
    p: &PoseSequence2D,
    cfg: &ModelConfig,
    w: &ModelWeights,
) -> Result<Pose3DSequence> {
    cfg.validate()?;
    check_weights(cfg, w)?;
    let mut x = model::embed_poses(p, w)?;
    for (l, bw) in w.blocks.iter().enumerate() {
        let (next, _) = model::transformer_block(&x, bw, cfg, l)?;
        x = next;
    }
    model::regression_head(&x, w)
}
