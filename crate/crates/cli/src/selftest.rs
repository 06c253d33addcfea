//! Built-in invariant checks behind `ugda selftest`.
//!
//! Each check re-derives its expected answer from scratch (brute-force
//! enumeration, independent bit counting, naive per-pixel references) rather
//! than trusting the library code under test. One `ok`/`FAIL` line is
//! printed per check; any failure makes the command exit with code 1.

use std::fs;

use ugda_core::augment::{augment_batch, channel_stats, AugmentConfig};
use ugda_core::image::{ImageF, StereoPair};
use ugda_core::io::kitti::{decode_kitti_disparity, encode_kitti_disparity};
use ugda_core::io::pfm::{encode_pfm, parse_pfm, PfmData};
use ugda_core::loss::{finite_difference_check, LossConfig};
use ugda_core::metrics::{compute_d1, compute_epe};
use ugda_core::rng::{RngStream, Side, StatKind, StreamKey};
use ugda_core::stereo::{
    build_cost_volume, census_transform, sgm_aggregate, CostVolume, Directions, DisparityMap,
    SgmParams,
};

use crate::{cmds, CmdResult, Failure, SelftestArgs};

type CheckResult = Result<(), String>;

struct Check {
    name: &'static str,
    run: fn() -> CheckResult,
}

const CHECKS: &[Check] = &[
    Check {
        name: "moment-exactness",
        run: moment_exactness,
    },
    Check {
        name: "zero-spread-identity",
        run: zero_spread_identity,
    },
    Check {
        name: "census-affine-invariance",
        run: census_affine_invariance,
    },
    Check {
        name: "cost-volume-brute-force",
        run: cost_volume_brute_force,
    },
    Check {
        name: "sgm-path-enumeration",
        run: sgm_path_enumeration,
    },
    Check {
        name: "metric-reference",
        run: metric_reference,
    },
    Check {
        name: "pfm-round-trip",
        run: pfm_round_trip,
    },
    Check {
        name: "kitti-round-trip",
        run: kitti_round_trip,
    },
    Check {
        name: "gradient-check",
        run: gradient_check,
    },
];

pub(crate) fn run(args: &SelftestArgs) -> CmdResult {
    let mut text = String::new();
    let mut failures = 0usize;
    for check in CHECKS {
        match (check.run)() {
            Ok(()) => text.push_str(&format!("ok {}\n", check.name)),
            Err(msg) => {
                failures += 1;
                text.push_str(&format!("FAIL {}: {msg}\n", check.name));
            }
        }
    }
    text.push_str(&format!(
        "selftest: {} checks, {failures} failures\n",
        CHECKS.len()
    ));
    print!("{text}");

    if let Some(out) = &args.out {
        let out_dir = cmds::ensure_out(out)?;
        fs::write(out_dir.join("selftest.txt"), &text)?;
        let tokens = vec![
            "selftest".to_string(),
            "--out".into(),
            out_dir.display().to_string(),
        ];
        cmds::write_run_cfg(&out_dir, &tokens)?;
    }

    if failures == 0 {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "{failures} selftest check(s) failed"
        )))
    }
}

/// Deterministic scratch stream for building test data.
fn stream(seed: u64, tag: u32) -> RngStream {
    RngStream::new(
        seed,
        StreamKey {
            pair: tag,
            side: Side::Left,
            channel: 0,
            stat: StatKind::Aux,
        },
    )
}

fn random_image(seed: u64, tag: u32, h: usize, w: usize, c: usize) -> ImageF {
    let mut s = stream(seed, tag);
    ImageF::from_vec(h, w, c, (0..h * w * c).map(|_| s.next_uniform()).collect())
        .expect("valid dims")
}

/// Augmented channel statistics must land exactly on the logged targets
/// (up to 1e-9) whenever the channel's own deviation clears the floor.
fn moment_exactness() -> CheckResult {
    for seed in 0..10u64 {
        let pairs: Vec<StereoPair> = (0..4)
            .map(|i| {
                StereoPair::new(
                    random_image(seed, 2 * i, 24, 32, 3),
                    random_image(seed, 2 * i + 1, 24, 32, 3),
                )
                .expect("same dims")
            })
            .collect();
        let cfg = AugmentConfig {
            seed,
            ..Default::default()
        };
        let (augmented, log) = augment_batch(&pairs, &cfg).map_err(|e| e.to_string())?;
        for (k, rec) in log.iter().enumerate() {
            let img = if k % 2 == 0 {
                &augmented[k / 2].left
            } else {
                &augmented[k / 2].right
            };
            let stats = channel_stats(img);
            for c in 0..3 {
                if rec.stats.std[c] < cfg.sigma_floor {
                    continue;
                }
                let e_mu = (stats.mean[c] - rec.draw.mu_prime[c]).abs();
                let e_sigma = (stats.std[c] - rec.draw.sigma_prime[c]).abs();
                if e_mu > 1e-9 || e_sigma > 1e-9 {
                    return Err(format!(
                        "seed {seed}, record {k}, channel {c}: mean off by {e_mu:.3e}, \
                         std off by {e_sigma:.3e}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// When every image pooled into the spread is identical (the spread is
/// measured over both sides of every pair), the spread is exactly zero and
/// augmentation must return bit-identical images for any seed.
fn zero_spread_identity() -> CheckResult {
    for seed in 1..=5u64 {
        let img = random_image(seed, 100, 16, 20, 3);
        let pair = StereoPair::new(img.clone(), img).expect("same dims");
        for batch_size in [1usize, 4] {
            let batch = vec![pair.clone(); batch_size];
            let cfg = AugmentConfig {
                seed,
                ..Default::default()
            };
            let (augmented, _) = augment_batch(&batch, &cfg).map_err(|e| e.to_string())?;
            for (i, out) in augmented.iter().enumerate() {
                if out.left.data != pair.left.data || out.right.data != pair.right.data {
                    return Err(format!(
                        "seed {seed}, batch size {batch_size}, pair {i}: output differs \
                         from input despite zero spread"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Census codes ignore positive-gain affine intensity maps: comparisons
/// inside the window depend only on intensity order.
fn census_affine_invariance() -> CheckResult {
    for t in 0..20u32 {
        let img = random_image(7, 300 + t, 20, 24, 1);
        let mut s = stream(7, 400 + t);
        let gain = 0.2 + 3.0 * s.next_uniform();
        let bias = s.next_uniform() - 0.5;
        let mapped = ImageF::from_vec(
            img.height,
            img.width,
            1,
            img.data.iter().map(|v| gain * v + bias).collect(),
        )
        .expect("valid dims");
        let a = census_transform(&img, 5).map_err(|e| e.to_string())?;
        let b = census_transform(&mapped, 5).map_err(|e| e.to_string())?;
        if a.codes != b.codes || a.valid != b.valid {
            return Err(format!(
                "census codes changed under gain {gain:.4}, bias {bias:.4}"
            ));
        }
    }
    Ok(())
}

/// The cost volume must equal an independently computed Hamming distance
/// (bit-loop popcount) under the documented border/sentinel rule.
fn cost_volume_brute_force() -> CheckResult {
    let window = 5usize;
    let radius = window / 2;
    let d_max = 8usize;
    let left = census_transform(&random_image(9, 500, 16, 18, 1), window)
        .map_err(|e| e.to_string())?;
    let right = census_transform(&random_image(9, 501, 16, 18, 1), window)
        .map_err(|e| e.to_string())?;
    let vol = build_cost_volume(&left, &right, d_max).map_err(|e| e.to_string())?;
    let sentinel = (window * window - 1) as f64;
    for y in 0..16 {
        for x in 0..18 {
            for d in 0..=d_max {
                let expect = if x >= d + radius {
                    let mut diff = left.codes[y * 18 + x] ^ right.codes[y * 18 + x - d];
                    let mut n = 0.0;
                    while diff != 0 {
                        n += (diff & 1) as f64;
                        diff >>= 1;
                    }
                    n
                } else {
                    sentinel
                };
                if vol.at(y, x, d) != expect {
                    return Err(format!(
                        "volume({y},{x},{d}) = {}, brute force says {expect}",
                        vol.at(y, x, d)
                    ));
                }
            }
        }
    }
    Ok(())
}

/// On a 1×5 scanline with d_max = 1 the aggregate must equal an exhaustive
/// enumeration of all 2^5 disparity paths.
fn sgm_path_enumeration() -> CheckResult {
    let costs = [
        5.0, 1.0, 4.0, 2.0, 0.0, 7.0, 3.0, 3.0, 6.0, 0.0,
    ];
    let vol = CostVolume {
        height: 1,
        width: 5,
        d_max: 1,
        cost: costs.to_vec(),
    };
    let (p1, p2) = (2.0, 4.0);
    let params = SgmParams {
        p1,
        p2,
        directions: Directions::Four,
        ..Default::default()
    };
    let agg = sgm_aggregate(&vol, &params).map_err(|e| e.to_string())?;

    let pen = |a: usize, b: usize| -> f64 {
        match a.abs_diff(b) {
            0 => 0.0,
            1 => p1,
            _ => p2,
        }
    };
    let c = |x: usize, d: usize| costs[x * 2 + d];
    // best_lr[i][d]: cheapest path over columns 0..=i ending at disparity d
    // (and the mirror image for right-to-left).
    let mut best_lr = [[f64::INFINITY; 2]; 5];
    let mut best_rl = [[f64::INFINITY; 2]; 5];
    for path in 0..32usize {
        let ds: Vec<usize> = (0..5).map(|i| (path >> i) & 1).collect();
        let mut e = 0.0;
        for i in 0..5 {
            e += c(i, ds[i]);
            if i > 0 {
                e += pen(ds[i], ds[i - 1]);
            }
            best_lr[i][ds[i]] = best_lr[i][ds[i]].min(e);
        }
        let mut e = 0.0;
        for i in (0..5).rev() {
            e += c(i, ds[i]);
            if i < 4 {
                e += pen(ds[i], ds[i + 1]);
            }
            best_rl[i][ds[i]] = best_rl[i][ds[i]].min(e);
        }
    }
    for x in 0..5 {
        for d in 0..2 {
            let l_lr = if x == 0 {
                c(x, d)
            } else {
                best_lr[x][d] - best_lr[x - 1][0].min(best_lr[x - 1][1])
            };
            let l_rl = if x == 4 {
                c(x, d)
            } else {
                best_rl[x][d] - best_rl[x + 1][0].min(best_rl[x + 1][1])
            };
            // Vertical directions see no predecessor on a one-row image.
            let expect = l_lr + l_rl + 2.0 * c(x, d);
            if agg.at(0, x, d) != expect {
                return Err(format!(
                    "aggregate(0,{x},{d}) = {}, enumeration says {expect}",
                    agg.at(0, x, d)
                ));
            }
        }
    }
    Ok(())
}

/// EPE and the bad-pixel report must match a naive per-pixel reference
/// exactly, and the bad-pixel rate must not increase with the threshold.
fn metric_reference() -> CheckResult {
    for t in 0..50u32 {
        let (h, w) = (1 + (t as usize % 13), 1 + (t as usize * 7 % 17));
        let mut s = stream(13, 600 + t);
        let mut pred = DisparityMap::new(h, w);
        let mut gt = DisparityMap::new(h, w);
        for i in 0..h * w {
            pred.disparity[i] = 20.0 * s.next_uniform();
            pred.valid[i] = s.next_uniform() < 0.8;
            gt.disparity[i] = 20.0 * s.next_uniform();
            gt.valid[i] = s.next_uniform() < 0.8;
        }
        pred.valid[0] = true;
        gt.valid[0] = true;

        let threshold = 3.0;
        let mut sum = 0.0;
        let mut n = 0usize;
        let mut bad = 0usize;
        for i in 0..h * w {
            if pred.valid[i] && gt.valid[i] {
                let e = (pred.disparity[i] - gt.disparity[i]).abs();
                sum += e;
                n += 1;
                if e > threshold {
                    bad += 1;
                }
            }
        }
        let epe = compute_epe(&pred, &gt).map_err(|e| e.to_string())?;
        if epe != sum / n as f64 {
            return Err(format!("case {t}: epe {epe} vs reference {}", sum / n as f64));
        }
        let report = compute_d1(&pred, &gt, threshold).map_err(|e| e.to_string())?;
        if report.n_valid != n || report.n_bad != bad || report.d1 != bad as f64 / n as f64 {
            return Err(format!(
                "case {t}: d1 report ({}, {}, {}) vs reference ({n}, {bad}, {})",
                report.n_valid,
                report.n_bad,
                report.d1,
                bad as f64 / n as f64
            ));
        }
        let mut last = f64::INFINITY;
        for thr in [1.0, 2.0, 3.0] {
            let r = compute_d1(&pred, &gt, thr).map_err(|e| e.to_string())?;
            if r.d1 > last {
                return Err(format!("case {t}: bad-pixel rate grew from {last} at {thr} px"));
            }
            last = r.d1;
        }
    }
    Ok(())
}

/// PFM encode → parse must reproduce the payload bit-for-bit for both byte
/// orders (scale sign).
fn pfm_round_trip() -> CheckResult {
    for t in 0..20u32 {
        let (h, w) = (1 + (t as usize % 7), 1 + (t as usize * 3 % 9));
        let mut s = stream(17, 700 + t);
        let data: Vec<f32> = (0..h * w)
            .map(|i| {
                if i % 11 == 3 {
                    f32::INFINITY
                } else {
                    (200.0 * s.next_uniform() - 100.0) as f32
                }
            })
            .collect();
        let scale = if t % 2 == 0 { -1.0 } else { 0.5 };
        let pfm = PfmData {
            height: h,
            width: w,
            channels: 1,
            data,
            scale,
        };
        let bytes = encode_pfm(&pfm).map_err(|e| e.to_string())?;
        let back = parse_pfm(&bytes).map_err(|e| e.to_string())?;
        if back.height != h || back.width != w || back.channels != 1 || back.scale != scale {
            return Err(format!("case {t}: header fields changed"));
        }
        let bits_match = back
            .data
            .iter()
            .zip(pfm.data.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !bits_match {
            return Err(format!("case {t}: payload bits changed"));
        }
    }
    Ok(())
}

/// 16-bit benchmark encoding: values on the 1/256 grid survive the
/// encode → decode round trip exactly; invalid pixels map to zero samples.
fn kitti_round_trip() -> CheckResult {
    let (h, w) = (7, 9);
    let mut s = stream(19, 800);
    let mut d = DisparityMap::new(h, w);
    for i in 0..h * w {
        let quantized = (s.next_uniform() * 65535.0).ceil();
        d.disparity[i] = quantized / 256.0;
        d.valid[i] = i % 5 != 2;
    }
    let bytes = encode_kitti_disparity(&d).map_err(|e| e.to_string())?;
    let back = decode_kitti_disparity(&bytes).map_err(|e| e.to_string())?;
    for i in 0..h * w {
        if back.valid[i] != d.valid[i] {
            return Err(format!("pixel {i}: validity changed"));
        }
        if d.valid[i] && back.disparity[i] != d.disparity[i] {
            return Err(format!(
                "pixel {i}: {} decoded as {}",
                d.disparity[i], back.disparity[i]
            ));
        }
    }
    Ok(())
}

/// Analytic gradients of the total loss agree with central finite
/// differences to 1e-3 relative error.
fn gradient_check() -> CheckResult {
    let report = finite_difference_check(5, 6, 6, 4, &LossConfig::default(), 0.0)
        .map_err(|e| e.to_string())?;
    if report.max_rel_err <= 1e-3 {
        Ok(())
    } else {
        Err(format!(
            "max relative error {} exceeds 1e-3 over {} coordinates",
            report.max_rel_err, report.checked
        ))
    }
}
