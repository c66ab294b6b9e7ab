//! Embedded oracle suites behind `vpt selftest`: quick, deterministic checks
//! of the library against independent reference computations.

use vpt_core::analysis::token_count_profile;
use vpt_core::io::config::{preset, preset_names};
use vpt_core::kernel::mean_pool_spatial;
use vpt_core::model::init_weights;
use vpt_core::prune::{tpc_select, tps_select};
use vpt_core::recover::{tra_recover, tri_recover};
use vpt_core::{ModelConfig, Pose3DSequence, PoseTokens, Rng};

use crate::oracle::{dpc_reference, pool_reference, tps_reference};

pub type SuiteResult = Result<String, String>;

/// Cluster selection against the quadratic reference on random instances.
pub fn suite_dpc_agreement(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = Rng::new(seed);
    for t in 0..instances {
        let n = 3 + rng.below(10); // n <= 12
        let kmax = 3.min(n - 1);
        let k = 1 + rng.below(kmax);
        let r = 1 + rng.below(n);
        let j = 1 + rng.below(3);
        let c = 1 + rng.below(4);
        let data: Vec<f64> = (0..n * j * c).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let tokens = PoseTokens::from_vec(n, j, c, data).map_err(|e| e.to_string())?;
        let (got, _) = tpc_select(&tokens, r, k).map_err(|e| e.to_string())?;

        let pooled_lib = mean_pool_spatial(&tokens);
        let pooled_ref = pool_reference(&tokens);
        for (i, ref_row) in pooled_ref.iter().enumerate() {
            for (ch, want) in ref_row.iter().enumerate() {
                if (pooled_lib.get(i, ch) - want).abs() > 1e-12 {
                    return Err(format!("instance {t}: pooling mismatch at ({i},{ch})"));
                }
            }
        }
        let want = dpc_reference(&pooled_ref, k, r);
        if got != want.selected {
            return Err(format!(
                "instance {t} (n={n} k={k} r={r}): selected {got:?}, reference {:?}",
                want.selected
            ));
        }
    }
    Ok(format!("{instances} random instances agree with the reference"))
}

/// Interpolation recovery is exact on kept frames and on affine signals.
pub fn suite_tri_exactness(instances: usize, seed: u64) -> SuiteResult {
    let mut rng = Rng::new(seed);
    for t in 0..instances {
        let frames = 10 + rng.below(342); // up to 351
        let r = 9 + rng.below(frames - 9);
        let kept = tps_select(frames, r).map_err(|e| e.to_string())?;
        let joints = 1 + rng.below(3);
        let a: Vec<[f64; 3]> = (0..joints)
            .map(|_| {
                [
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-5.0, 5.0),
                ]
            })
            .collect();
        let b: Vec<[f64; 3]> = (0..joints)
            .map(|_| {
                [
                    rng.uniform(-0.5, 0.5),
                    rng.uniform(-0.5, 0.5),
                    rng.uniform(-0.5, 0.5),
                ]
            })
            .collect();
        let mut sampled = Pose3DSequence::zeros(r, joints);
        for (i, &f) in kept.iter().enumerate() {
            for j in 0..joints {
                let tt = f as f64;
                sampled.set(
                    i,
                    j,
                    [
                        a[j][0] + tt * b[j][0],
                        a[j][1] + tt * b[j][1],
                        a[j][2] + tt * b[j][2],
                    ],
                );
            }
        }
        let out = tri_recover(&sampled, &kept, frames).map_err(|e| e.to_string())?;
        for (i, &f) in kept.iter().enumerate() {
            for j in 0..joints {
                let got = out.get(f, j);
                let want = sampled.get(i, j);
                if got.iter().zip(want.iter()).any(|(x, y)| x.to_bits() != y.to_bits()) {
                    return Err(format!("instance {t}: kept frame {f} not copied bitwise"));
                }
            }
        }
        for f in 0..frames {
            for j in 0..joints {
                let got = out.get(f, j);
                let tt = f as f64;
                for c in 0..3 {
                    let want = a[j][c] + tt * b[j][c];
                    if (got[c] - want).abs() > 1e-9 {
                        return Err(format!(
                            "instance {t}: frame {f} joint {j} coord {c}: |{got:?} - {want}| > 1e-9",
                            got = got[c]
                        ));
                    }
                }
            }
        }
    }
    Ok(format!("{instances} affine sequences reconstructed exactly"))
}

/// Zero-initialized recovery queries give identical recovered frames.
pub fn suite_tra_zero_init(draws: usize, seed: u64) -> SuiteResult {
    let mut rng = Rng::new(seed);
    for t in 0..draws {
        let heads = 1 + rng.below(3);
        let dim = heads * (1 + rng.below(4));
        let cfg = ModelConfig {
            frames: 3 + rng.below(12),
            joints: 1 + rng.below(3),
            blocks: 1,
            dim,
            heads,
            ffn_ratio: 2,
            knn_k: 1,
        };
        let w = init_weights(&cfg, &mut Rng::new(seed ^ (t as u64) << 1), true)
            .map_err(|e| e.to_string())?;
        let tra = w.tra.as_ref().expect("initialized with recovery weights");
        let r = 1 + rng.below(cfg.frames);
        let data: Vec<f64> = (0..r * cfg.joints * dim)
            .map(|_| rng.uniform(-2.0, 2.0))
            .collect();
        let last = PoseTokens::from_vec(r, cfg.joints, dim, data).map_err(|e| e.to_string())?;
        let out = tra_recover(&last, tra, cfg.heads).map_err(|e| e.to_string())?;
        if out.n_frames() != cfg.frames {
            return Err(format!("draw {t}: recovered {} frames", out.n_frames()));
        }
        for j in 0..cfg.joints {
            let first = out.token(0, j);
            for f in 1..cfg.frames {
                let cur = out.token(f, j);
                if cur.iter().zip(first.iter()).any(|(a, b)| (a - b).abs() > 1e-9) {
                    return Err(format!("draw {t}: joint {j} frames differ"));
                }
            }
        }
    }
    Ok(format!("{draws} weight draws produce uniform recovered frames"))
}

/// Hierarchical schedule: per-block token counts of the shipped presets.
pub fn suite_schedule_counts() -> SuiteResult {
    let mixste = preset("mixste").map_err(|e| e.to_string())?;
    let profile = token_count_profile(&mixste.pipeline.model, &mixste.pipeline.schedule)
        .map_err(|e| e.to_string())?;
    let want = vec![121, 121, 121, 81, 81, 81, 81, 81];
    if profile != want {
        return Err(format!("mixste profile {profile:?}, expected {want:?}"));
    }
    for name in preset_names() {
        let cfg = preset(name).map_err(|e| e.to_string())?;
        let profile = token_count_profile(&cfg.pipeline.model, &cfg.pipeline.schedule)
            .map_err(|e| e.to_string())?;
        let stages = &cfg.pipeline.schedule.tokens_per_stage;
        if stages.windows(2).any(|w| w[1] >= w[0]) {
            return Err(format!("{name}: stage widths not strictly decreasing"));
        }
        if profile.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("{name}: profile increases: {profile:?}"));
        }
        if *profile.last().unwrap() != *stages.last().unwrap() {
            return Err(format!("{name}: final count mismatch"));
        }
    }
    Ok("all presets validate with decreasing token counts".into())
}

/// Uniform sampler against the direct formula, including composition.
pub fn suite_tps_pattern(seed: u64) -> SuiteResult {
    let mut rng = Rng::new(seed);
    for _ in 0..200 {
        let n = 2 + rng.below(400);
        let r = 1 + rng.below(n);
        let got = tps_select(n, r).map_err(|e| e.to_string())?;
        if got != tps_reference(n, r) {
            return Err(format!("pattern mismatch at n={n} r={r}"));
        }
        if r >= 2 && (got[0] != 0 || *got.last().unwrap() != n - 1) {
            return Err(format!("endpoints missing at n={n} r={r}"));
        }
    }
    Ok("200 sampling patterns match the formula".into())
}

/// Runs every suite, printing one line each; returns whether all passed.
pub fn run_all() -> bool {
    let suites: Vec<(&str, SuiteResult)> = vec![
        ("dpc-agreement", suite_dpc_agreement(300, 11)),
        ("tri-exactness", suite_tri_exactness(300, 12)),
        ("tra-zero-init", suite_tra_zero_init(50, 13)),
        ("schedule-counts", suite_schedule_counts()),
        ("tps-pattern", suite_tps_pattern(14)),
    ];
    let mut ok = true;
    for (name, result) in suites {
        match result {
            Ok(detail) => println!("ok   {name}: {detail}"),
            Err(detail) => {
                ok = false;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    ok
}
