//! Analytic cost accounting, evaluation metrics, throughput benchmarking,
//! and selection statistics.
//!
//! Cost convention: a block's temporal streams cost
//! `J * ((4 + 2*ffn_ratio) * N * D^2 + 2 * N^2 * D)` units and its spatial
//! streams `N * ((4 + 2*ffn_ratio) * J * D^2 + 2 * J^2 * D)`, counting the
//! Q/K/V/O projections, both attention products, and the FFN matrices, and
//! ignoring softmax and normalization. Embedding and head costs are reported
//! separately and excluded from the reduction ratio.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pipeline::{baseline_forward, seq2frame_forward, seq2seq_forward, Mode, PipelineConfig};
use crate::prune::{PruneSchedule, SelectionTrace};
use crate::rng::Rng;
use crate::types::{Pose3DSequence, PoseSequence2D};
use crate::ModelWeights;

/// Cost of one block at a given token count.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCost {
    pub block: usize,
    pub tokens: usize,
    pub temporal: f64,
    pub spatial: f64,
}

impl BlockCost {
    pub fn total(&self) -> f64 {
        self.temporal + self.spatial
    }
}

/// Per-block and total analytic cost of a scheduled model next to the
/// unpruned baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopsReport {
    pub per_block: Vec<BlockCost>,
    pub total: f64,
    pub baseline_total: f64,
    /// `1 - total / baseline_total`, in `[0, 1]`.
    pub reduction_ratio: f64,
    /// Embedding cost (`F * J * 2 * D`), excluded from the ratio.
    pub embed: f64,
    /// Head cost at the final token count (`r_M * J * 3 * D`), excluded
    /// from the ratio.
    pub head: f64,
}

/// Cost of one transformer block: `(temporal, spatial)` stream totals for
/// `n` tokens of width `d` over `j` joints.
pub fn block_flops(n: usize, d: usize, j: usize, ffn_ratio: usize) -> (f64, f64) {
    let (nf, df, jf) = (n as f64, d as f64, j as f64);
    let proj = (4 + 2 * ffn_ratio) as f64;
    let temporal = jf * (proj * nf * df * df + 2.0 * nf * nf * df);
    let spatial = nf * (proj * jf * df * df + 2.0 * jf * jf * df);
    (temporal, spatial)
}

/// Token count in effect during each block under a schedule: the full frame
/// count until the first stage, then each stage's width from its block on.
pub fn token_count_profile(cfg: &ModelConfig, sched: &PruneSchedule) -> Result<Vec<usize>> {
    cfg.validate()?;
    sched.validate(cfg.frames, cfg.blocks)?;
    let mut profile = Vec::with_capacity(cfg.blocks);
    let mut n = cfg.frames;
    for l in 0..cfg.blocks {
        if let Some(m) = sched.stage_at_block(l) {
            n = sched.tokens_per_stage[m];
        }
        profile.push(n);
    }
    Ok(profile)
}

/// Analytic cost of the scheduled model against the unpruned baseline.
pub fn schedule_flops(cfg: &ModelConfig, sched: &PruneSchedule) -> Result<FlopsReport> {
    let profile = token_count_profile(cfg, sched)?;
    let per_block: Vec<BlockCost> = profile
        .iter()
        .enumerate()
        .map(|(l, &n)| {
            let (temporal, spatial) = block_flops(n, cfg.dim, cfg.joints, cfg.ffn_ratio);
            BlockCost {
                block: l,
                tokens: n,
                temporal,
                spatial,
            }
        })
        .collect();
    let total: f64 = per_block.iter().map(BlockCost::total).sum();
    let (bt, bs) = block_flops(cfg.frames, cfg.dim, cfg.joints, cfg.ffn_ratio);
    let baseline_total = (bt + bs) * cfg.blocks as f64;
    let final_tokens = *profile.last().expect("blocks >= 1");
    Ok(FlopsReport {
        per_block,
        total,
        baseline_total,
        reduction_ratio: 1.0 - total / baseline_total,
        embed: (cfg.frames * cfg.joints * 2 * cfg.dim) as f64,
        head: (final_tokens * cfg.joints * 3 * cfg.dim) as f64,
    })
}

/// Cost report of the unpruned model itself (reduction 0).
pub fn baseline_flops_report(cfg: &ModelConfig) -> Result<FlopsReport> {
    cfg.validate()?;
    let per_block: Vec<BlockCost> = (0..cfg.blocks)
        .map(|l| {
            let (temporal, spatial) = block_flops(cfg.frames, cfg.dim, cfg.joints, cfg.ffn_ratio);
            BlockCost {
                block: l,
                tokens: cfg.frames,
                temporal,
                spatial,
            }
        })
        .collect();
    let total: f64 = per_block.iter().map(BlockCost::total).sum();
    Ok(FlopsReport {
        per_block,
        total,
        baseline_total: total,
        reduction_ratio: 0.0,
        embed: (cfg.frames * cfg.joints * 2 * cfg.dim) as f64,
        head: (cfg.frames * cfg.joints * 3 * cfg.dim) as f64,
    })
}

impl FlopsReport {
    /// CSV form: one `block,...` row per block (5 fields), then `embed`,
    /// `head`, and `baseline` summary rows (2 fields each).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,block,tokens,temporal,spatial\n");
        for b in &self.per_block {
            out.push_str(&format!(
                "block,{},{},{},{}\n",
                b.block, b.tokens, b.temporal, b.spatial
            ));
        }
        out.push_str(&format!("embed,{}\n", self.embed));
        out.push_str(&format!("head,{}\n", self.head));
        out.push_str(&format!("baseline,{}\n", self.baseline_total));
        out
    }

    pub fn from_csv(text: &str) -> Result<FlopsReport> {
        let mut per_block = Vec::new();
        let mut embed = None;
        let mut head = None;
        let mut baseline = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || i == 0 {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let loc = format!("line {}", i + 1);
            let parse_f = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse {
                    location: loc.clone(),
                    detail: format!("bad number '{s}'"),
                })
            };
            match fields[0] {
                "block" if fields.len() == 5 => per_block.push(BlockCost {
                    block: fields[1].parse().map_err(|_| Error::Parse {
                        location: loc.clone(),
                        detail: "bad block index".into(),
                    })?,
                    tokens: fields[2].parse().map_err(|_| Error::Parse {
                        location: loc.clone(),
                        detail: "bad token count".into(),
                    })?,
                    temporal: parse_f(fields[3])?,
                    spatial: parse_f(fields[4])?,
                }),
                "embed" if fields.len() == 2 => embed = Some(parse_f(fields[1])?),
                "head" if fields.len() == 2 => head = Some(parse_f(fields[1])?),
                "baseline" if fields.len() == 2 => baseline = Some(parse_f(fields[1])?),
                other => {
                    return Err(Error::Parse {
                        location: loc,
                        detail: format!("unexpected row '{other}'"),
                    })
                }
            }
        }
        let (embed, head, baseline_total) = match (embed, head, baseline) {
            (Some(e), Some(h), Some(b)) => (e, h, b),
            _ => {
                return Err(Error::Parse {
                    location: "end of file".into(),
                    detail: "missing embed/head/baseline rows".into(),
                })
            }
        };
        let total: f64 = per_block.iter().map(BlockCost::total).sum();
        Ok(FlopsReport {
            per_block,
            total,
            baseline_total,
            reduction_ratio: 1.0 - total / baseline_total,
            embed,
            head,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("block  tokens      temporal         spatial\n");
        for b in &self.per_block {
            out.push_str(&format!(
                "{:<5}  {:<6}  {:>14.4e}  {:>14.4e}\n",
                b.block, b.tokens, b.temporal, b.spatial
            ));
        }
        out.push_str(&format!(
            "total:     {:.4e} ({:.2} G)\nbaseline:  {:.4e} ({:.2} G)\nreduction: {:.4} ({:.1}%)\n",
            self.total,
            self.total / 1e9,
            self.baseline_total,
            self.baseline_total / 1e9,
            self.reduction_ratio,
            self.reduction_ratio * 100.0
        ));
        out.push_str(&format!(
            "embed: {:.4e}   head: {:.4e}   (excluded from the ratio)\n",
            self.embed, self.head
        ));
        out
    }
}

/// Mean per-joint position error: the average Euclidean distance between
/// predicted and ground-truth joints over all frames.
pub fn mpjpe(pred: &Pose3DSequence, gt: &Pose3DSequence) -> Result<f64> {
    if pred.frames() != gt.frames() || pred.joints() != gt.joints() {
        return Err(Error::Shape(format!(
            "mpjpe: {}x{} vs {}x{}",
            pred.frames(),
            pred.joints(),
            gt.frames(),
            gt.joints()
        )));
    }
    let mut sum = 0.0;
    for f in 0..pred.frames() {
        for j in 0..pred.joints() {
            let a = pred.get(f, j);
            let b = gt.get(f, j);
            sum += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        }
    }
    Ok(sum / (pred.frames() * pred.joints()) as f64)
}

/// Frame noise: 2D position error of the detected poses against ground
/// truth, restricted to the selected frames. Measures the quality of a
/// selection.
pub fn frame_noise(det: &PoseSequence2D, gt: &PoseSequence2D, kept: &[usize]) -> Result<f64> {
    if det.frames() != gt.frames() || det.joints() != gt.joints() {
        return Err(Error::Shape(format!(
            "frame_noise: {}x{} vs {}x{}",
            det.frames(),
            det.joints(),
            gt.frames(),
            gt.joints()
        )));
    }
    if kept.is_empty() {
        return Err(Error::Param("frame_noise: empty kept set".into()));
    }
    if let Some(&bad) = kept.iter().find(|&&f| f >= det.frames()) {
        return Err(Error::Param(format!(
            "frame_noise: kept frame {bad} out of range for F = {}",
            det.frames()
        )));
    }
    let mut sum = 0.0;
    for &f in kept {
        for j in 0..det.joints() {
            let (ax, ay) = det.get(f, j);
            let (bx, by) = gt.get(f, j);
            sum += ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
        }
    }
    Ok(sum / (kept.len() * det.joints()) as f64)
}

/// Histogram of which original frames survive selection, over a set of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionStats {
    pub frames: usize,
    pub samples: usize,
    /// `counts[f]` = number of runs whose final kept set contains frame `f`.
    pub counts: Vec<u64>,
}

/// Counts final-stage kept frames over traces from the same frame count.
pub fn selection_stats(traces: &[SelectionTrace], frames: usize) -> Result<SelectionStats> {
    let mut counts = vec![0u64; frames];
    for (i, t) in traces.iter().enumerate() {
        if t.total_frames != frames {
            return Err(Error::Param(format!(
                "trace {i} covers {} frames, expected {frames}",
                t.total_frames
            )));
        }
        let kept = t
            .final_kept()
            .ok_or_else(|| Error::Param(format!("trace {i} has no stages")))?;
        for &f in kept {
            if f >= frames {
                return Err(Error::Internal(format!("trace {i} frame {f} out of range")));
            }
            counts[f] += 1;
        }
    }
    Ok(SelectionStats {
        frames,
        samples: traces.len(),
        counts,
    })
}

impl SelectionStats {
    pub fn total_mass(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// CSV form: `frame_index,count,samples`, one row per frame.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_index,count,samples\n");
        for (f, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{f},{c},{}\n", self.samples));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<SelectionStats> {
        let mut counts = Vec::new();
        let mut samples = 0usize;
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let loc = format!("line {}", i + 1);
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    location: loc,
                    detail: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let f: usize = fields[0].parse().map_err(|_| Error::Parse {
                location: loc.clone(),
                detail: "bad frame index".into(),
            })?;
            if f != counts.len() {
                return Err(Error::Parse {
                    location: loc.clone(),
                    detail: format!("expected frame {} next, got {f}", counts.len()),
                });
            }
            counts.push(fields[1].parse().map_err(|_| Error::Parse {
                location: loc.clone(),
                detail: "bad count".into(),
            })?);
            samples = fields[2].parse().map_err(|_| Error::Parse {
                location: loc,
                detail: "bad sample count".into(),
            })?;
        }
        Ok(SelectionStats {
            frames: counts.len(),
            samples,
            counts,
        })
    }

    pub fn to_text(&self) -> String {
        let max = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut out = format!("{} samples over {} frames\n", self.samples, self.frames);
        for (f, &c) in self.counts.iter().enumerate() {
            let bar = "#".repeat((c * 40 / max) as usize);
            out.push_str(&format!("{f:>5} {c:>6} {bar}\n"));
        }
        out
    }
}

/// Benchmark knobs.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    /// Distinct input sequences per repetition.
    pub sequences: usize,
    /// Untimed warmup passes before measuring.
    pub warmup: usize,
    /// Timed repetitions (mean and std are reported over these).
    pub repetitions: usize,
    /// Dispatch sequences across threads instead of the default
    /// single-threaded latency measurement.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            sequences: 1,
            warmup: 1,
            repetitions: 3,
            parallel: false,
            seed: 0,
        }
    }
}

/// Wall-clock throughput of repeated forward passes.
#[derive(Debug, Clone)]
pub struct BenchResult {
    /// Input frames processed per second, averaged over repetitions.
    pub fps_mean: f64,
    /// Sample standard deviation over repetitions (0 for one repetition).
    pub fps_std: f64,
    pub seconds_per_rep: Vec<f64>,
    pub frames_per_rep: usize,
    /// Checksum of the outputs; identical across repetitions by construction.
    pub output_checksum: u64,
}

fn fnv1a(acc: u64, bytes: &[u8]) -> u64 {
    let mut h = acc;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001B3);
    }
    h
}

fn checksum_poses(seqs: &[Pose3DSequence]) -> u64 {
    let mut h = 0xCBF29CE484222325u64;
    for s in seqs {
        for v in s.data() {
            h = fnv1a(h, &v.to_le_bytes());
        }
    }
    h
}

/// Random-walk synthetic input sequences for benchmarking.
pub fn synthetic_sequences(
    cfg: &ModelConfig,
    count: usize,
    seed: u64,
) -> Vec<PoseSequence2D> {
    let mut rng = Rng::new(seed);
    (0..count)
        .map(|_| {
            let mut p = PoseSequence2D::zeros(cfg.frames, cfg.joints);
            let mut state: Vec<(f64, f64)> = (0..cfg.joints)
                .map(|_| (rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)))
                .collect();
            for f in 0..cfg.frames {
                for (j, s) in state.iter_mut().enumerate() {
                    s.0 += rng.uniform(-0.02, 0.02);
                    s.1 += rng.uniform(-0.02, 0.02);
                    p.set(f, j, s.0, s.1);
                }
            }
            p
        })
        .collect()
}

/// Measures forward throughput. `pipe = None` benches the unpruned baseline;
/// otherwise the configured pipeline runs (its model config must equal
/// `cfg`). Outputs are checksummed and must be identical across repetitions.
pub fn bench_throughput(
    pipe: Option<&PipelineConfig>,
    cfg: &ModelConfig,
    w: &ModelWeights,
    opts: &BenchOptions,
) -> Result<BenchResult> {
    if opts.sequences == 0 {
        return Err(Error::Param("bench needs at least one sequence".into()));
    }
    if opts.repetitions == 0 {
        return Err(Error::Param("bench needs at least one repetition".into()));
    }
    if let Some(pc) = pipe {
        pc.validate()?;
        if pc.model != *cfg {
            return Err(Error::Config("pipeline model differs from bench model".into()));
        }
    }
    let inputs = synthetic_sequences(cfg, opts.sequences, opts.seed);
    let run_one = |p: &PoseSequence2D| -> Result<Pose3DSequence> {
        match pipe {
            None => baseline_forward(p, cfg, w),
            Some(pc) => match pc.mode {
                Mode::Seq2Seq => Ok(seq2seq_forward(p, pc, w)?.0),
                Mode::Seq2Frame => Ok(seq2frame_forward(p, pc, w)?.0),
            },
        }
    };
    let run_all = |outputs: &mut Vec<Pose3DSequence>| -> Result<()> {
        outputs.clear();
        if opts.parallel && opts.sequences > 1 {
            let workers = std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .min(opts.sequences);
            let mut slots: Vec<Option<Result<Pose3DSequence>>> =
                (0..opts.sequences).map(|_| None).collect();
            let chunk = opts.sequences.div_ceil(workers);
            std::thread::scope(|scope| {
                for (slot_chunk, input_chunk) in
                    slots.chunks_mut(chunk).zip(inputs.chunks(chunk))
                {
                    scope.spawn(move || {
                        for (slot, p) in slot_chunk.iter_mut().zip(input_chunk.iter()) {
                            *slot = Some(run_one(p));
                        }
                    });
                }
            });
            for slot in slots {
                outputs.push(slot.expect("worker filled every slot")?);
            }
        } else {
            for p in &inputs {
                outputs.push(run_one(p)?);
            }
        }
        Ok(())
    };

    let mut outputs = Vec::with_capacity(opts.sequences);
    for _ in 0..opts.warmup {
        run_all(&mut outputs)?;
    }
    let frames_per_rep = cfg.frames * opts.sequences;
    let mut seconds = Vec::with_capacity(opts.repetitions);
    let mut checksum = None;
    for _ in 0..opts.repetitions {
        let t = Instant::now();
        run_all(&mut outputs)?;
        seconds.push(t.elapsed().as_secs_f64());
        let c = checksum_poses(&outputs);
        match checksum {
            None => checksum = Some(c),
            Some(prev) if prev != c => {
                return Err(Error::Internal(
                    "outputs differed between benchmark repetitions".into(),
                ))
            }
            _ => {}
        }
    }
    let fps: Vec<f64> = seconds.iter().map(|s| frames_per_rep as f64 / s).collect();
    let mean = fps.iter().sum::<f64>() / fps.len() as f64;
    let std = if fps.len() > 1 {
        (fps.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / (fps.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BenchResult {
        fps_mean: mean,
        fps_std: std,
        seconds_per_rep: seconds,
        frames_per_rep,
        output_checksum: checksum.expect("repetitions >= 1"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_weights;
    use crate::pipeline::Recovery;
    use crate::prune::Strategy;
    use proptest::prelude::*;

    fn mixste_like() -> (ModelConfig, PruneSchedule) {
        (
            ModelConfig {
                frames: 243,
                joints: 17,
                blocks: 8,
                dim: 512,
                heads: 8,
                ffn_ratio: 2,
                knn_k: 2,
            },
            PruneSchedule {
                tokens_per_stage: vec![121, 81],
                block_indices: vec![0, 3],
                strategy: Strategy::Sampler,
            },
        )
    }

    #[test]
    fn block_flops_examples() {
        // Single stream (J = 1): (4+2*2)*N*D^2 + 2*N^2*D at N=2, D=1.
        let (t, _) = block_flops(2, 1, 1, 2);
        assert_eq!(t, 24.0);

        // Quadratic term dominates: doubling N approaches 4x.
        let (t1, _) = block_flops(1_000_000, 1, 1, 2);
        let (t2, _) = block_flops(2_000_000, 1, 1, 2);
        assert!((t2 / t1 - 4.0).abs() < 0.01);

        // J = 1 spatial stream: N * (8*D^2 + 2*D).
        let (_, s) = block_flops(5, 3, 1, 2);
        assert_eq!(s, 5.0 * (8.0 * 9.0 + 2.0 * 3.0));
    }

    #[test]
    fn schedule_flops_profile_and_ratio() {
        let (cfg, sched) = mixste_like();
        let profile = token_count_profile(&cfg, &sched).unwrap();
        assert_eq!(profile, vec![121, 121, 121, 81, 81, 81, 81, 81]);

        let report = schedule_flops(&cfg, &sched).unwrap();
        // Closed-form oracle: per-block cost a*N + b*N^2 with
        // a = (J*8 + 8*J)*D^2 + 2*J^2*D, b = 2*J*D.
        let d = cfg.dim as f64;
        let j = cfg.joints as f64;
        let a = 16.0 * j * d * d + 2.0 * j * j * d;
        let b = 2.0 * j * d;
        let cost = |n: f64| a * n + b * n * n;
        let want_total = 3.0 * cost(121.0) + 5.0 * cost(81.0);
        let want_baseline = 8.0 * cost(243.0);
        assert!((report.total - want_total).abs() < 1.0);
        assert!((report.baseline_total - want_baseline).abs() < 1.0);
        let want_ratio = 1.0 - want_total / want_baseline;
        assert!((report.reduction_ratio - want_ratio).abs() < 1e-12);
        assert!(report.reduction_ratio > 0.52 && report.reduction_ratio < 0.66);
        assert!(report.total <= report.baseline_total);
    }

    #[test]
    fn one_stage_reduces_less_than_hierarchical() {
        let (cfg, sched) = mixste_like();
        let one_stage = PruneSchedule {
            tokens_per_stage: vec![81],
            block_indices: vec![3],
            strategy: Strategy::Sampler,
        };
        let hier = schedule_flops(&cfg, &sched).unwrap();
        let single = schedule_flops(&cfg, &one_stage).unwrap();
        assert!(single.reduction_ratio < hier.reduction_ratio);
        assert!(single.reduction_ratio > 0.0);
    }

    #[test]
    fn baseline_report_has_zero_reduction() {
        let (cfg, _) = mixste_like();
        let report = baseline_flops_report(&cfg).unwrap();
        assert_eq!(report.reduction_ratio, 0.0);
        assert_eq!(report.total, report.baseline_total);
    }

    #[test]
    fn increasing_any_stage_width_decreases_ratio() {
        let (cfg, sched) = mixste_like();
        let base = schedule_flops(&cfg, &sched).unwrap().reduction_ratio;
        for stage in 0..sched.stages() {
            let mut bigger = sched.clone();
            bigger.tokens_per_stage[stage] += 1;
            assert!(bigger.validate(cfg.frames, cfg.blocks).is_ok());
            let r = schedule_flops(&cfg, &bigger).unwrap().reduction_ratio;
            assert!(r < base, "stage {stage}: {r} !< {base}");
        }
    }

    #[test]
    fn valid_schedules_always_reduce() {
        let (cfg, _) = mixste_like();
        let scheds = [
            (vec![242], vec![7]),
            (vec![121, 81, 49], vec![0, 3, 5]),
            (vec![189, 121, 81, 49], vec![0, 3, 5, 7]),
        ];
        for (r, b) in scheds {
            let sched = PruneSchedule {
                tokens_per_stage: r,
                block_indices: b,
                strategy: Strategy::Sampler,
            };
            let report = schedule_flops(&cfg, &sched).unwrap();
            assert!(report.total < report.baseline_total);
            assert!(report.reduction_ratio > 0.0);
        }
    }

    #[test]
    fn flops_csv_round_trip() {
        let (cfg, sched) = mixste_like();
        let report = schedule_flops(&cfg, &sched).unwrap();
        let parsed = FlopsReport::from_csv(&report.to_csv()).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn mpjpe_examples() {
        let mut a = Pose3DSequence::zeros(2, 3);
        let b = Pose3DSequence::zeros(2, 3);
        assert_eq!(mpjpe(&a, &b).unwrap(), 0.0);

        for f in 0..2 {
            for j in 0..3 {
                a.set(f, j, [3.0, 4.0, 0.0]);
            }
        }
        assert!((mpjpe(&a, &b).unwrap() - 5.0).abs() < 1e-12);

        let mut c = Pose3DSequence::zeros(2, 3);
        c.set(1, 2, [0.0, 0.0, 12.0]);
        assert!((mpjpe(&c, &b).unwrap() - 12.0 / 6.0).abs() < 1e-12);

        let short = Pose3DSequence::zeros(1, 3);
        assert!(mpjpe(&short, &b).is_err());
    }

    #[test]
    fn frame_noise_examples() {
        let det = PoseSequence2D::zeros(4, 2);
        let gt = PoseSequence2D::zeros(4, 2);
        assert_eq!(frame_noise(&det, &gt, &[0, 2]).unwrap(), 0.0);

        // Noise only on pruned frames is invisible.
        let mut noisy = PoseSequence2D::zeros(4, 2);
        noisy.set(1, 0, 100.0, 100.0);
        noisy.set(3, 1, -50.0, 0.0);
        assert_eq!(frame_noise(&noisy, &gt, &[0, 2]).unwrap(), 0.0);

        // Uniform (0.6, 0.8) offset on kept frames: distance 1 everywhere.
        let mut off = PoseSequence2D::zeros(4, 2);
        for f in [0usize, 2] {
            for j in 0..2 {
                off.set(f, j, 0.6, 0.8);
            }
        }
        assert!((frame_noise(&off, &gt, &[0, 2]).unwrap() - 1.0).abs() < 1e-12);

        assert!(frame_noise(&det, &gt, &[9]).is_err());
        assert!(frame_noise(&det, &gt, &[]).is_err());
    }

    #[test]
    fn selection_stats_tps_histogram() {
        use crate::prune::{SelectionStage, SelectionTrace};
        let kept = crate::prune::tps_select(9, 3).unwrap();
        let trace = SelectionTrace {
            total_frames: 9,
            stages: vec![SelectionStage {
                block: 0,
                kept_in_stage: kept.clone(),
                kept_original: kept.clone(),
                scores: None,
            }],
        };
        let stats = selection_stats(&[trace.clone(), trace.clone()], 9).unwrap();
        assert_eq!(stats.samples, 2);
        assert_eq!(stats.total_mass(), 6);
        for f in 0..9 {
            let want = if kept.contains(&f) { 2 } else { 0 };
            assert_eq!(stats.counts[f], want);
        }

        let single = selection_stats(&[trace], 9).unwrap();
        assert!(single.counts.iter().all(|&c| c <= 1));

        let parsed = SelectionStats::from_csv(&stats.to_csv()).unwrap();
        assert_eq!(parsed, stats);
    }

    fn tiny_pipeline() -> PipelineConfig {
        PipelineConfig {
            mode: crate::pipeline::Mode::Seq2Seq,
            recovery: Recovery::Tri,
            schedule: PruneSchedule {
                tokens_per_stage: vec![5, 3],
                block_indices: vec![0, 1],
                strategy: Strategy::Sampler,
            },
            model: ModelConfig {
                frames: 9,
                joints: 2,
                blocks: 2,
                dim: 4,
                heads: 2,
                ffn_ratio: 2,
                knn_k: 2,
            },
        }
    }

    #[test]
    fn bench_validates_and_is_deterministic() {
        let pc = tiny_pipeline();
        let mut rng = crate::rng::Rng::new(1);
        let w = init_weights(&pc.model, &mut rng, false).unwrap();
        let bad = BenchOptions {
            sequences: 0,
            ..BenchOptions::default()
        };
        assert!(bench_throughput(Some(&pc), &pc.model, &w, &bad).is_err());

        let opts = BenchOptions {
            sequences: 3,
            warmup: 1,
            repetitions: 3,
            parallel: false,
            seed: 5,
        };
        let a = bench_throughput(Some(&pc), &pc.model, &w, &opts).unwrap();
        let b = bench_throughput(Some(&pc), &pc.model, &w, &opts).unwrap();
        assert_eq!(a.output_checksum, b.output_checksum);
        assert!(a.fps_mean > 0.0);

        // Parallel dispatch computes the same outputs.
        let par = BenchOptions {
            parallel: true,
            ..opts
        };
        let c = bench_throughput(Some(&pc), &pc.model, &w, &par).unwrap();
        assert_eq!(c.output_checksum, a.output_checksum);

        // Baseline on the same weights also runs.
        let base = bench_throughput(None, &pc.model, &w, &opts).unwrap();
        assert!(base.fps_mean > 0.0);
    }

    #[test]
    fn flops_accounting_agrees_with_executed_trace() {
        let pc = tiny_pipeline();
        let mut rng = crate::rng::Rng::new(2);
        let w = init_weights(&pc.model, &mut rng, false).unwrap();
        let p = synthetic_sequences(&pc.model, 1, 3).remove(0);
        let (_, trace) = crate::pipeline::seq2seq_forward(&p, &pc, &w).unwrap();
        let report = schedule_flops(&pc.model, &pc.schedule).unwrap();
        // Derive the per-block counts the execution actually used.
        let mut n = pc.model.frames;
        let mut executed = Vec::new();
        for l in 0..pc.model.blocks {
            if let Some(stage) = trace.stages.iter().find(|s| s.block == l) {
                n = stage.kept_original.len();
            }
            executed.push(n);
        }
        let reported: Vec<usize> = report.per_block.iter().map(|b| b.tokens).collect();
        assert_eq!(executed, reported);
    }

    proptest! {
        #[test]
        fn mpjpe_metric_properties(seed in 0u64..200) {
            let mut rng = crate::rng::Rng::new(seed);
            let frames = 1 + rng.below(5);
            let joints = 1 + rng.below(4);
            let mk = |rng: &mut crate::rng::Rng| {
                let data: Vec<f64> = (0..frames * joints * 3).map(|_| rng.uniform(-5.0, 5.0)).collect();
                Pose3DSequence::new(frames, joints, data).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let ab = mpjpe(&a, &b).unwrap();
            let ba = mpjpe(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert_eq!(mpjpe(&a, &a).unwrap(), 0.0);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
