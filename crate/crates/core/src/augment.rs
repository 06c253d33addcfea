//! Uncertainty-guided channel-statistics augmentation.
//!
//! Pipeline: per-image channel means and standard deviations → batch-level
//! spread of those statistics → Gaussian draws scaled by the spread produce
//! target statistics per image → each channel is re-stylized by the affine
//! map that moves its statistics onto the targets.
//!
//! The batch spread acts as the uncertainty scale: a batch with no
//! statistical variation (single pair with identical images, or identical
//! copies) has zero spread, so augmentation degenerates to the identity map
//! regardless of seed.

use crate::error::{Error, Result};
use crate::image::{elementwise_affine, ImageF, StereoPair};
use crate::rng::{RngStream, Side, StatKind, StreamKey};
use rayon::prelude::*;

/// Per-image, per-channel mean and standard deviation (population
/// normalization, 1/HW).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Standard deviation of per-image channel statistics across a batch
/// (population normalization, 1/B).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStatSpread {
    pub sigma_mu: Vec<f64>,
    pub sigma_sigma: Vec<f64>,
}

/// Sampled perturbation: standard-normal draws and the target statistics
/// they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationDraw {
    pub eps_mu: Vec<f64>,
    pub eps_sigma: Vec<f64>,
    pub mu_prime: Vec<f64>,
    /// Target standard deviation after the positivity clamp.
    pub sigma_prime: Vec<f64>,
}

/// Whether left and right images of a pair share one draw or get two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// One (eps_mu, eps_sigma) set per pair, applied to both sides. Each
    /// side's target statistics still derive from its own measured stats.
    Shared,
    /// Each side draws from its own substream.
    Independent,
}

/// What to do with out-of-range values after re-stylization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClipPolicy {
    /// Keep values as computed; the output is flagged `unclipped`. Target
    /// statistics are met exactly.
    None,
    /// Clamp every sample into [0, 1]; disturbs the target statistics.
    Clip01,
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub pair_mode: PairMode,
    /// Lower clamp for the target standard deviation; keeps the rescale
    /// positive so pixel ordering is never inverted. Also the threshold
    /// below which a channel counts as constant and is shifted, not scaled.
    pub sigma_floor: f64,
    pub clip_policy: ClipPolicy,
    /// Probability that a pair is augmented at all (one gate per pair).
    pub apply_probability: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            pair_mode: PairMode::Shared,
            sigma_floor: 1e-6,
            clip_policy: ClipPolicy::None,
            apply_probability: 1.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_floor > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma_floor must be > 0, got {}",
                self.sigma_floor
            )));
        }
        if !(0.0..=1.0).contains(&self.apply_probability) {
            return Err(Error::InvalidInput(format!(
                "apply_probability must lie in [0,1], got {}",
                self.apply_probability
            )));
        }
        Ok(())
    }
}

/// Population mean and standard deviation of each channel.
///
/// A channel whose samples are all identical reports a standard deviation of
/// exactly 0 (detected via min == max, bypassing floating-point summation
/// error).
pub fn channel_stats(img: &ImageF) -> ChannelStats {
    let c = img.channels;
    let n = img.pixels() as f64;
    let mut mean = vec![0.0; c];
    let mut std = vec![0.0; c];
    for ch in 0..c {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut i = ch;
        while i < img.data.len() {
            let v = img.data[i];
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            i += c;
        }
        if lo == hi {
            mean[ch] = lo;
            std[ch] = 0.0;
            continue;
        }
        let mu = sum / n;
        let mut acc = 0.0;
        let mut i = ch;
        while i < img.data.len() {
            let d = img.data[i] - mu;
            acc += d * d;
            i += c;
        }
        mean[ch] = mu;
        std[ch] = (acc / n).sqrt();
    }
    ChannelStats { mean, std }
}

/// Population standard deviation of a statistic vector; exactly 0 when all
/// entries coincide.
fn spread_of(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.sqrt()
}

/// Per-image statistics plus their spread across the batch.
pub fn batch_spread(images: &[ImageF]) -> Result<(Vec<ChannelStats>, BatchStatSpread)> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("batch must be non-empty".into()))?;
    let c = first.channels;
    if images.iter().any(|im| im.channels != c) {
        return Err(Error::DimensionMismatch(
            "batch images must share a channel count".into(),
        ));
    }
    let stats: Vec<ChannelStats> = images.iter().map(channel_stats).collect();
    let mut sigma_mu = vec![0.0; c];
    let mut sigma_sigma = vec![0.0; c];
    for ch in 0..c {
        let means: Vec<f64> = stats.iter().map(|s| s.mean[ch]).collect();
        let stds: Vec<f64> = stats.iter().map(|s| s.std[ch]).collect();
        sigma_mu[ch] = spread_of(&means);
        sigma_sigma[ch] = spread_of(&stds);
    }
    Ok((
        stats,
        BatchStatSpread {
            sigma_mu,
            sigma_sigma,
        },
    ))
}

/// Builds target statistics from explicitly supplied standard-normal draws.
/// This is the deterministic core of [`sample_perturbation`] and doubles as
/// the forced-epsilon test hook.
pub fn perturbation_from_eps(
    stats: &ChannelStats,
    spread: &BatchStatSpread,
    eps_mu: &[f64],
    eps_sigma: &[f64],
    cfg: &AugmentConfig,
) -> PerturbationDraw {
    let c = stats.mean.len();
    let mut mu_prime = vec![0.0; c];
    let mut sigma_prime = vec![0.0; c];
    for ch in 0..c {
        mu_prime[ch] = stats.mean[ch] + eps_mu[ch] * spread.sigma_mu[ch];
        sigma_prime[ch] = (stats.std[ch] + eps_sigma[ch] * spread.sigma_sigma[ch])
            .max(cfg.sigma_floor);
    }
    PerturbationDraw {
        eps_mu: eps_mu.to_vec(),
        eps_sigma: eps_sigma.to_vec(),
        mu_prime,
        sigma_prime,
    }
}

/// Draws per-channel perturbations for one image. Each channel consumes the
/// first gaussian of its own (pair, side, channel, statistic) substream, so
/// the result is independent of evaluation order.
pub fn sample_perturbation(
    stats: &ChannelStats,
    spread: &BatchStatSpread,
    seed: u64,
    pair: u32,
    side: Side,
    cfg: &AugmentConfig,
) -> PerturbationDraw {
    let c = stats.mean.len();
    let mut eps_mu = vec![0.0; c];
    let mut eps_sigma = vec![0.0; c];
    for ch in 0..c {
        eps_mu[ch] = RngStream::new(
            seed,
            StreamKey {
                pair,
                side,
                channel: ch as u8,
                stat: StatKind::Mean,
            },
        )
        .next_gaussian();
        eps_sigma[ch] = RngStream::new(
            seed,
            StreamKey {
                pair,
                side,
                channel: ch as u8,
                stat: StatKind::Std,
            },
        )
        .next_gaussian();
    }
    perturbation_from_eps(stats, spread, &eps_mu, &eps_sigma, cfg)
}

/// Re-stylizes an image so each channel's statistics become the draw's
/// targets.
///
/// A channel with `std >= sigma_floor` gets the affine map
/// `x ↦ (x − μ)/σ · σ' + μ'`, implemented as one gain/bias pair per channel
/// so that a draw whose targets equal the measured statistics reproduces the
/// input bit for bit. A degenerate (constant) channel is shifted by
/// `μ' − μ`; no rescale is attempted.
pub fn apply_augmentation(
    img: &ImageF,
    stats: &ChannelStats,
    draw: &PerturbationDraw,
    cfg: &AugmentConfig,
) -> Result<ImageF> {
    let c = img.channels;
    if stats.mean.len() != c || draw.mu_prime.len() != c {
        return Err(Error::DimensionMismatch(format!(
            "stats for {} channels, draw for {}, image has {}",
            stats.mean.len(),
            draw.mu_prime.len(),
            c
        )));
    }
    let mut gain = vec![1.0; c];
    let mut bias = vec![0.0; c];
    for ch in 0..c {
        if stats.std[ch] >= cfg.sigma_floor {
            gain[ch] = draw.sigma_prime[ch] / stats.std[ch];
            bias[ch] = draw.mu_prime[ch] - gain[ch] * stats.mean[ch];
        } else {
            gain[ch] = 1.0;
            bias[ch] = draw.mu_prime[ch] - stats.mean[ch];
        }
    }
    let mut out = elementwise_affine(img, &gain, &bias)?;
    match cfg.clip_policy {
        ClipPolicy::None => out.unclipped = true,
        ClipPolicy::Clip01 => {
            for v in &mut out.data {
                *v = v.clamp(0.0, 1.0);
            }
            out.unclipped = false;
        }
    }
    Ok(out)
}

/// One line of the draw log: which pair/side, whether augmentation was
/// applied, the measured statistics, and the sampled draw. Skipped records
/// carry zero epsilons and targets equal to the measured statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawRecord {
    pub pair: u32,
    pub side: Side,
    pub applied: bool,
    pub stats: ChannelStats,
    pub draw: PerturbationDraw,
}

/// Augments a batch of stereo pairs.
///
/// Phase 1 pools all 2B images (left and right) and computes the batch
/// spread. Phase 2 runs per pair, in parallel: one Bernoulli gate per pair
/// decides applied/skipped; in shared mode both sides reuse one epsilon set,
/// in independent mode each side draws its own. Results and the draw log are
/// identical for any thread count because every random quantity comes from
/// its own keyed substream and outputs are collected in pair order.
///
/// The draw log lists records in pair order, left before right.
pub fn augment_batch(
    pairs: &[StereoPair],
    cfg: &AugmentConfig,
) -> Result<(Vec<StereoPair>, Vec<DrawRecord>)> {
    augment_batch_at(pairs, cfg, 0)
}

/// Like [`augment_batch`], but pair substreams and the draw log are keyed
/// starting from `first_pair_index` instead of 0. Callers that split a long
/// run into consecutive batches pass each batch's global offset so that no
/// two pairs in the run ever share a random substream.
pub fn augment_batch_at(
    pairs: &[StereoPair],
    cfg: &AugmentConfig,
    first_pair_index: u32,
) -> Result<(Vec<StereoPair>, Vec<DrawRecord>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::InvalidInput("batch must be non-empty".into()));
    }
    for (i, p) in pairs.iter().enumerate() {
        if p.left.channels != 3 || p.right.channels != 3 {
            return Err(Error::InvalidInput(format!(
                "pair {i}: augmentation expects 3-channel images"
            )));
        }
    }

    let pooled: Vec<ImageF> = pairs
        .iter()
        .flat_map(|p| [p.left.clone(), p.right.clone()])
        .collect();
    let (stats, spread) = batch_spread(&pooled)?;

    let results: Vec<(StereoPair, [DrawRecord; 2])> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let pair_idx = first_pair_index + i as u32;
            let stats_l = &stats[2 * i];
            let stats_r = &stats[2 * i + 1];
            let gate = RngStream::new(
                cfg.seed,
                StreamKey {
                    pair: pair_idx,
                    side: Side::Left,
                    channel: 0,
                    stat: StatKind::Gate,
                },
            )
            .next_uniform();
            let applied = gate <= cfg.apply_probability;

            let zeros = vec![0.0; 3];
            let (out, rec_l, rec_r) = if !applied {
                let rec = |side: Side, st: &ChannelStats| DrawRecord {
                    pair: pair_idx,
                    side,
                    applied: false,
                    stats: st.clone(),
                    draw: perturbation_from_eps(st, &spread, &zeros, &zeros, cfg),
                };
                (
                    pair.clone(),
                    rec(Side::Left, stats_l),
                    rec(Side::Right, stats_r),
                )
            } else {
                let draw_l =
                    sample_perturbation(stats_l, &spread, cfg.seed, pair_idx, Side::Left, cfg);
                let draw_r = match cfg.pair_mode {
                    PairMode::Shared => perturbation_from_eps(
                        stats_r,
                        &spread,
                        &draw_l.eps_mu,
                        &draw_l.eps_sigma,
                        cfg,
                    ),
                    PairMode::Independent => sample_perturbation(
                        stats_r,
                        &spread,
                        cfg.seed,
                        pair_idx,
                        Side::Right,
                        cfg,
                    ),
                };
                let left = apply_augmentation(&pair.left, stats_l, &draw_l, cfg)?;
                let right = apply_augmentation(&pair.right, stats_r, &draw_r, cfg)?;
                (
                    StereoPair { left, right },
                    DrawRecord {
                        pair: pair_idx,
                        side: Side::Left,
                        applied: true,
                        stats: stats_l.clone(),
                        draw: draw_l,
                    },
                    DrawRecord {
                        pair: pair_idx,
                        side: Side::Right,
                        applied: true,
                        stats: stats_r.clone(),
                        draw: draw_r,
                    },
                )
            };
            Ok((out, [rec_l, rec_r]))
        })
        .collect::<Result<_>>()?;

    let mut out_pairs = Vec::with_capacity(pairs.len());
    let mut log = Vec::with_capacity(2 * pairs.len());
    for (p, [l, r]) in results {
        out_pairs.push(p);
        log.push(l);
        log.push(r);
    }
    Ok((out_pairs, log))
}

/// Serializes draw records, one per line, tab-separated:
///
/// ```text
/// pair  side  applied|skipped  then per channel (r, g, b):
///                              mean std eps_mu eps_sigma mu_prime sigma_prime
/// ```
///
/// 21 fields per line. Floats use Rust's shortest round-trip formatting, so
/// `parse_draw_log` recovers the exact values.
pub fn format_draw_log(records: &[DrawRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.pair.to_string());
        out.push('\t');
        out.push(r.side.letter());
        out.push('\t');
        out.push_str(if r.applied { "applied" } else { "skipped" });
        for c in 0..3 {
            for v in [
                r.stats.mean[c],
                r.stats.std[c],
                r.draw.eps_mu[c],
                r.draw.eps_sigma[c],
                r.draw.mu_prime[c],
                r.draw.sigma_prime[c],
            ] {
                out.push('\t');
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}

/// Parses the format written by [`format_draw_log`].
pub fn parse_draw_log(text: &str) -> Result<Vec<DrawRecord>> {
    let mut records = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = ln + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 21 {
            return Err(Error::DrawLogParse {
                line: lineno,
                msg: format!("expected 21 tab-separated fields, got {}", fields.len()),
            });
        }
        let bad = |msg: String| Error::DrawLogParse { line: lineno, msg };
        let pair: u32 = fields[0]
            .parse()
            .map_err(|e| bad(format!("pair index: {e}")))?;
        let side = match fields[1] {
            "L" => Side::Left,
            "R" => Side::Right,
            other => return Err(bad(format!("side must be L or R, got {other:?}"))),
        };
        let applied = match fields[2] {
            "applied" => true,
            "skipped" => false,
            other => {
                return Err(bad(format!(
                    "flag must be applied or skipped, got {other:?}"
                )))
            }
        };
        let mut nums = [0.0f64; 18];
        for (i, f) in fields[3..].iter().enumerate() {
            nums[i] = f
                .parse()
                .map_err(|e| bad(format!("field {}: {e}", i + 4)))?;
        }
        let pick = |off: usize| -> Vec<f64> { (0..3).map(|c| nums[c * 6 + off]).collect() };
        records.push(DrawRecord {
            pair,
            side,
            applied,
            stats: ChannelStats {
                mean: pick(0),
                std: pick(1),
            },
            draw: PerturbationDraw {
                eps_mu: pick(2),
                eps_sigma: pick(3),
                mu_prime: pick(4),
                sigma_prime: pick(5),
            },
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, Side, StatKind, StreamKey};

    fn random_image(seed: u64, h: usize, w: usize) -> ImageF {
        let mut s = RngStream::new(
            seed,
            StreamKey {
                pair: 0,
                side: Side::Left,
                channel: 0,
                stat: StatKind::Aux,
            },
        );
        let data = (0..h * w * 3).map(|_| s.next_uniform()).collect();
        ImageF::from_vec(h, w, 3, data).unwrap()
    }

    #[test]
    fn stats_of_constant_image_are_exact() {
        let img = ImageF::constant(5, 7, 3, 0.3);
        let st = channel_stats(&img);
        assert_eq!(st.mean, vec![0.3, 0.3, 0.3]);
        assert_eq!(st.std, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn stats_direct_summation() {
        let img = ImageF::from_vec(2, 2, 1, vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        let st = channel_stats(&img);
        assert!((st.mean[0] - 0.5).abs() < 1e-15);
        assert!((st.std[0] - 0.125f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn stats_invariant_under_mirror() {
        let img = random_image(11, 9, 13);
        let a = channel_stats(&img);
        let b = channel_stats(&img.flip_horizontal());
        for c in 0..3 {
            assert!((a.mean[c] - b.mean[c]).abs() < 1e-12);
            assert!((a.std[c] - b.std[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn spread_of_single_image_is_exactly_zero() {
        let (_, sp) = batch_spread(&[random_image(1, 8, 8)]).unwrap();
        assert_eq!(sp.sigma_mu, vec![0.0; 3]);
        assert_eq!(sp.sigma_sigma, vec![0.0; 3]);
    }

    #[test]
    fn spread_of_two_constant_images() {
        let a = ImageF::constant(4, 4, 3, 0.2);
        let b = ImageF::constant(4, 4, 3, 0.6);
        let (_, sp) = batch_spread(&[a, b]).unwrap();
        for c in 0..3 {
            assert!((sp.sigma_mu[c] - 0.2).abs() < 1e-15);
            assert_eq!(sp.sigma_sigma[c], 0.0);
        }
    }

    #[test]
    fn spread_of_identical_copies_is_exactly_zero() {
        let img = random_image(2, 6, 6);
        let batch: Vec<ImageF> = (0..5).map(|_| img.clone()).collect();
        let (_, sp) = batch_spread(&batch).unwrap();
        assert_eq!(sp.sigma_mu, vec![0.0; 3]);
        assert_eq!(sp.sigma_sigma, vec![0.0; 3]);
    }

    #[test]
    fn forced_zero_eps_reproduces_stats() {
        let st = ChannelStats {
            mean: vec![0.4, 0.5, 0.6],
            std: vec![0.1, 0.0, 0.2],
        };
        let sp = BatchStatSpread {
            sigma_mu: vec![0.05; 3],
            sigma_sigma: vec![0.02; 3],
        };
        let cfg = AugmentConfig::default();
        let d = perturbation_from_eps(&st, &sp, &[0.0; 3], &[0.0; 3], &cfg);
        assert_eq!(d.mu_prime, st.mean);
        assert_eq!(d.sigma_prime, vec![0.1, 1e-6, 0.2]);
    }

    #[test]
    fn mean_target_substitution() {
        let st = ChannelStats {
            mean: vec![0.5; 3],
            std: vec![0.1; 3],
        };
        let sp = BatchStatSpread {
            sigma_mu: vec![0.2; 3],
            sigma_sigma: vec![0.0; 3],
        };
        let d = perturbation_from_eps(&st, &sp, &[1.5; 3], &[0.0; 3], &AugmentConfig::default());
        for c in 0..3 {
            assert!((d.mu_prime[c] - 0.8).abs() < 1e-15);
        }
    }

    #[test]
    fn sigma_target_clamped_at_floor() {
        let st = ChannelStats {
            mean: vec![0.5; 3],
            std: vec![0.1; 3],
        };
        let sp = BatchStatSpread {
            sigma_mu: vec![0.0; 3],
            sigma_sigma: vec![0.2; 3],
        };
        let d = perturbation_from_eps(&st, &sp, &[0.0; 3], &[-1.0; 3], &AugmentConfig::default());
        assert_eq!(d.sigma_prime, vec![1e-6; 3]);
    }

    #[test]
    fn apply_with_identity_targets_is_bit_identical() {
        let img = random_image(3, 12, 10);
        let st = channel_stats(&img);
        let draw = PerturbationDraw {
            eps_mu: vec![0.0; 3],
            eps_sigma: vec![0.0; 3],
            mu_prime: st.mean.clone(),
            sigma_prime: st.std.clone(),
        };
        let out = apply_augmentation(&img, &st, &draw, &AugmentConfig::default()).unwrap();
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn apply_direct_substitution() {
        let img = ImageF::from_vec(1, 2, 1, vec![0.0, 1.0]).unwrap();
        let st = channel_stats(&img);
        assert_eq!(st.mean[0], 0.5);
        assert_eq!(st.std[0], 0.5);
        let draw = PerturbationDraw {
            eps_mu: vec![0.0],
            eps_sigma: vec![0.0],
            mu_prime: vec![0.6],
            sigma_prime: vec![0.25],
        };
        let out = apply_augmentation(&img, &st, &draw, &AugmentConfig::default()).unwrap();
        assert!((out.data[0] - 0.35).abs() < 1e-15);
        assert!((out.data[1] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn constant_channel_is_shifted() {
        let img = ImageF::constant(3, 3, 1, 0.4);
        let st = channel_stats(&img);
        let draw = PerturbationDraw {
            eps_mu: vec![1.0],
            eps_sigma: vec![0.0],
            mu_prime: vec![0.5],
            sigma_prime: vec![1e-6],
        };
        let out = apply_augmentation(&img, &st, &draw, &AugmentConfig::default()).unwrap();
        for &v in &out.data {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn moment_exactness_on_random_image() {
        let img = random_image(17, 24, 24);
        let pair = StereoPair::new(img.clone(), random_image(18, 24, 24)).unwrap();
        let pair2 = StereoPair::new(random_image(19, 24, 24), random_image(20, 24, 24)).unwrap();
        let cfg = AugmentConfig {
            seed: 99,
            ..Default::default()
        };
        let (aug, log) = augment_batch(&[pair, pair2], &cfg).unwrap();
        for (i, p) in aug.iter().enumerate() {
            for (side_idx, im) in [&p.left, &p.right].into_iter().enumerate() {
                let rec = &log[2 * i + side_idx];
                assert!(rec.applied);
                let st = channel_stats(im);
                for c in 0..3 {
                    assert!(
                        (st.mean[c] - rec.draw.mu_prime[c]).abs() < 1e-9,
                        "mean off: {} vs {}",
                        st.mean[c],
                        rec.draw.mu_prime[c]
                    );
                    assert!(
                        (st.std[c] - rec.draw.sigma_prime[c]).abs() < 1e-9,
                        "std off: {} vs {}",
                        st.std[c],
                        rec.draw.sigma_prime[c]
                    );
                }
            }
        }
    }

    #[test]
    fn identical_pair_batch_is_identity_for_any_seed() {
        let img = random_image(5, 16, 16);
        let pair = StereoPair::new(img.clone(), img.clone()).unwrap();
        for seed in [0u64, 1, 42, 31337] {
            let cfg = AugmentConfig {
                seed,
                ..Default::default()
            };
            let (aug, log) = augment_batch(std::slice::from_ref(&pair), &cfg).unwrap();
            assert_eq!(aug[0].left.data, img.data);
            assert_eq!(aug[0].right.data, img.data);
            assert!(log.iter().all(|r| r.applied));
        }
    }

    #[test]
    fn apply_probability_zero_skips_everything() {
        let pair = StereoPair::new(random_image(7, 8, 8), random_image(8, 8, 8)).unwrap();
        let cfg = AugmentConfig {
            apply_probability: 0.0,
            seed: 1,
            ..Default::default()
        };
        let (aug, log) = augment_batch(std::slice::from_ref(&pair), &cfg).unwrap();
        assert_eq!(aug[0].left.data, pair.left.data);
        assert_eq!(aug[0].right.data, pair.right.data);
        assert!(log.iter().all(|r| !r.applied));
        for r in &log {
            assert_eq!(r.draw.eps_mu, vec![0.0; 3]);
            assert_eq!(r.draw.mu_prime, r.stats.mean);
        }
    }

    #[test]
    fn shared_mode_reuses_epsilons_across_sides() {
        let pair = StereoPair::new(random_image(9, 8, 8), random_image(10, 8, 8)).unwrap();
        let pair_b = StereoPair::new(random_image(11, 8, 8), random_image(12, 8, 8)).unwrap();
        let cfg = AugmentConfig {
            seed: 5,
            ..Default::default()
        };
        let (_, log) = augment_batch(&[pair.clone(), pair_b.clone()], &cfg).unwrap();
        for i in 0..2 {
            assert_eq!(log[2 * i].draw.eps_mu, log[2 * i + 1].draw.eps_mu);
            assert_eq!(log[2 * i].draw.eps_sigma, log[2 * i + 1].draw.eps_sigma);
        }
        let cfg_ind = AugmentConfig {
            pair_mode: PairMode::Independent,
            seed: 5,
            ..Default::default()
        };
        let (_, log_ind) = augment_batch(&[pair, pair_b], &cfg_ind).unwrap();
        assert_ne!(log_ind[0].draw.eps_mu, log_ind[1].draw.eps_mu);
    }

    #[test]
    fn augmentation_preserves_pixel_order() {
        let img = random_image(21, 16, 16);
        let other = random_image(22, 16, 16);
        let pair = StereoPair::new(img.clone(), other).unwrap();
        let cfg = AugmentConfig {
            seed: 3,
            ..Default::default()
        };
        let (aug, _) = augment_batch(std::slice::from_ref(&pair), &cfg).unwrap();
        let a = &pair.left.data;
        let b = &aug[0].left.data;
        for c in 0..3 {
            for i in (c..a.len()).step_by(3).take(200) {
                for j in (c..a.len()).step_by(3).take(200) {
                    let s1 = (a[i] - a[j]).signum();
                    let s2 = (b[i] - b[j]).signum();
                    if s1 != 0.0 {
                        assert_eq!(s1, s2);
                    }
                }
            }
        }
    }

    #[test]
    fn draw_log_round_trip_is_exact() {
        let pair = StereoPair::new(random_image(30, 10, 10), random_image(31, 10, 10)).unwrap();
        let pair_b = StereoPair::new(random_image(32, 10, 10), random_image(33, 10, 10)).unwrap();
        let cfg = AugmentConfig {
            seed: 77,
            apply_probability: 0.5,
            ..Default::default()
        };
        let (_, log) = augment_batch(&[pair, pair_b], &cfg).unwrap();
        let text = format_draw_log(&log);
        let back = parse_draw_log(&text).unwrap();
        assert_eq!(log, back);
    }

    #[test]
    fn draw_log_parse_rejects_malformed_lines() {
        assert!(matches!(
            parse_draw_log("0\tL\n"),
            Err(Error::DrawLogParse { line: 1, .. })
        ));
        let mut fields = vec!["0", "X", "applied"];
        fields.extend(std::iter::repeat("0.0").take(18));
        let line = fields.join("\t");
        assert!(parse_draw_log(&line).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = AugmentConfig {
            sigma_floor: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.sigma_floor = 1e-6;
        cfg.apply_probability = 1.5;
        assert!(cfg.validate().is_err());
    }
}
