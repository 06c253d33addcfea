//! Implementations of the file-driven subcommands.
//!
//! Shared conventions: manifest pairs are indexed by their position after
//! the manifest is read (entries are sorted by left-image path), and every
//! per-pair output file carries that index as a four-digit stem. All
//! parallel sections collect results in pair order before anything is
//! written, so outputs are byte-identical for any `--jobs` value.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use ugda_core::augment::{augment_batch_at, format_draw_log, AugmentConfig, DrawRecord};
use ugda_core::image::{ImageF, StereoPair};
use ugda_core::io::pfm::{pfm_from_disparity, write_pfm};
use ugda_core::io::{load_disparity, load_image, read_manifest, save_image_png8, ManifestEntry};
use ugda_core::loss::grad::finite_difference_check;
use ugda_core::loss::{consistency_loss, extract_features, smooth_l1, ToyExtractor};
use ugda_core::metrics::{
    compute_d1, error_map, feature_histogram, image_histogram, Histogram, MetricReport, HIST_BINS,
};
use ugda_core::stereo::match_pair;

use crate::{
    AugmentArgs, CmdResult, ConsistencyArgs, EvalArgs, Failure, GradcheckArgs, HistArgs, MatchArgs,
};

/// Sizes the global worker pool. A value of 0 keeps the library default
/// (one thread per CPU). Must run before any parallel work.
pub(crate) fn configure_jobs(jobs: usize) -> CmdResult {
    if jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Failure::Input(format!("cannot configure {jobs} worker threads: {e}")))?;
    }
    Ok(())
}

fn canonical(path: &Path) -> Result<PathBuf, Failure> {
    fs::canonicalize(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Creates the output directory (if needed) and returns its absolute path.
pub(crate) fn ensure_out(path: &Path) -> Result<PathBuf, Failure> {
    fs::create_dir_all(path)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", path.display())))?;
    canonical(path)
}

/// Writes the `run.cfg` echo file: one argument token per line, replayable
/// with `ugda $(cat run.cfg)`. Every flag is written in resolved form, so
/// the replay does not depend on environment variables, the working
/// directory, or future default changes.
pub(crate) fn write_run_cfg(out_dir: &Path, tokens: &[String]) -> CmdResult {
    let mut text = tokens.join("\n");
    text.push('\n');
    fs::write(out_dir.join("run.cfg"), text)?;
    Ok(())
}

/// Four-digit stem identifying a manifest pair in output filenames.
fn pair_stem(index: usize) -> String {
    format!("{index:04}")
}

fn load_stereo_pair(entry: &ManifestEntry) -> Result<StereoPair, Failure> {
    let left = load_image(&entry.left)?;
    let right = load_image(&entry.right)?;
    StereoPair::new(left, right).map_err(Into::into)
}

/// Consecutive manifest batches: `(first_pair_index, entries)`.
fn batches<'a>(
    entries: &'a [ManifestEntry],
    batch: usize,
) -> impl Iterator<Item = (usize, &'a [ManifestEntry])> {
    entries
        .chunks(batch)
        .enumerate()
        .map(move |(k, c)| (k * batch, c))
}

/// Loads one manifest batch in parallel, keeping manifest order.
fn load_batch(chunk: &[ManifestEntry]) -> Result<Vec<StereoPair>, Failure> {
    chunk.par_iter().map(load_stereo_pair).collect()
}

fn validated_augment_config(args: &crate::AugArgs, seed: u64) -> Result<AugmentConfig, Failure> {
    if args.batch == 0 {
        return Err(Failure::Input("--batch must be at least 1".into()));
    }
    let cfg = args.to_core(seed);
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn augment(args: &AugmentArgs) -> CmdResult {
    let manifest_path = canonical(&args.io.manifest)?;
    let entries = read_manifest(&manifest_path)?;
    let out_dir = ensure_out(&args.io.out)?;
    let cfg = validated_augment_config(&args.aug, args.seed.seed)?;

    let mut records: Vec<DrawRecord> = Vec::with_capacity(2 * entries.len());
    for (base, chunk) in batches(&entries, args.aug.batch) {
        let pairs = load_batch(chunk)?;
        let (augmented, log) = augment_batch_at(&pairs, &cfg, base as u32)?;
        for (j, pair) in augmented.iter().enumerate() {
            let stem = pair_stem(base + j);
            save_image_png8(&out_dir.join(format!("aug_{stem}_L.png")), &pair.left)?;
            save_image_png8(&out_dir.join(format!("aug_{stem}_R.png")), &pair.right)?;
        }
        records.extend(log);
    }
    fs::write(out_dir.join("draws.log"), format_draw_log(&records))?;

    let mut tokens = vec![
        "augment".to_string(),
        "--manifest".into(),
        manifest_path.display().to_string(),
        "--out".into(),
        out_dir.display().to_string(),
        "--seed".into(),
        args.seed.seed.to_string(),
    ];
    args.aug.tokens(&mut tokens);
    tokens.push("--jobs".into());
    tokens.push(args.jobs.jobs.to_string());
    write_run_cfg(&out_dir, &tokens)
}

/// Per-pair `match` outcome, kept in manifest order.
struct MatchOutcome {
    disp: ugda_core::stereo::DisparityMap,
    report: Option<MetricReport>,
}

pub(crate) fn run_match(args: &MatchArgs) -> CmdResult {
    let manifest_path = canonical(&args.io.manifest)?;
    let entries = read_manifest(&manifest_path)?;
    let out_dir = ensure_out(&args.io.out)?;
    let params = args.sgm.to_core();
    params.validate()?;
    if !(args.threshold > 0.0) {
        return Err(Failure::Input(format!(
            "--threshold must be positive, got {}",
            args.threshold
        )));
    }

    let outcomes: Vec<MatchOutcome> = entries
        .par_iter()
        .map(|entry| -> Result<MatchOutcome, Failure> {
            let pair = load_stereo_pair(entry)?;
            let disp = match_pair(&pair, &params, args.sgm.dmax, args.sgm.lr_tol)?;
            let report = match &entry.gt {
                Some(gt_path) => {
                    let gt = load_disparity(gt_path)?;
                    Some(compute_d1(&disp, &gt, args.threshold)?)
                }
                None => None,
            };
            Ok(MatchOutcome { disp, report })
        })
        .collect::<Result<_, _>>()?;

    for (i, outcome) in outcomes.iter().enumerate() {
        let stem = pair_stem(i);
        write_pfm(
            &out_dir.join(format!("disp_{stem}.pfm")),
            &pfm_from_disparity(&outcome.disp),
        )?;
    }

    let scored: Vec<(usize, &MetricReport)> = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, o)| o.report.as_ref().map(|r| (i, r)))
        .collect();
    if !scored.is_empty() {
        write_metrics_csv(&out_dir.join("metrics.csv"), &scored)?;
        write_metrics_txt(
            &out_dir.join("metrics.txt"),
            entries.len(),
            &scored,
            args.threshold,
        )?;
    }

    let mut tokens = vec![
        "match".to_string(),
        "--manifest".into(),
        manifest_path.display().to_string(),
        "--out".into(),
        out_dir.display().to_string(),
    ];
    args.sgm.tokens(&mut tokens);
    tokens.push("--threshold".into());
    tokens.push(args.threshold.to_string());
    tokens.push("--jobs".into());
    tokens.push(args.jobs.jobs.to_string());
    write_run_cfg(&out_dir, &tokens)
}

/// Finds `disp_NNNN.pfm` (preferred) or `disp_NNNN.png` under `dir`.
fn resolve_prediction(dir: &Path, stem: &str) -> Result<PathBuf, Failure> {
    for ext in ["pfm", "png"] {
        let candidate = dir.join(format!("disp_{stem}.{ext}"));
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(Failure::Input(format!(
        "no prediction disp_{stem}.pfm or disp_{stem}.png in {}",
        dir.display()
    )))
}

pub(crate) fn eval(args: &EvalArgs) -> CmdResult {
    let manifest_path = canonical(&args.io.manifest)?;
    let pred_dir = canonical(&args.pred_dir)?;
    let entries = read_manifest(&manifest_path)?;
    let out_dir = ensure_out(&args.io.out)?;
    if !(args.threshold > 0.0) {
        return Err(Failure::Input(format!(
            "--threshold must be positive, got {}",
            args.threshold
        )));
    }
    if !(args.map_clip > 0.0) {
        return Err(Failure::Input(format!(
            "--map-clip must be positive, got {}",
            args.map_clip
        )));
    }

    let with_gt: Vec<(usize, &ManifestEntry)> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.gt.is_some())
        .collect();
    if with_gt.is_empty() {
        return Err(Failure::Input(format!(
            "{}: no entry carries ground truth; nothing to score",
            manifest_path.display()
        )));
    }

    type Scored = (usize, MetricReport, Option<(ImageF, f64)>);
    let scored: Vec<Scored> = with_gt
        .par_iter()
        .map(|&(i, entry)| -> Result<Scored, Failure> {
            let pred = load_disparity(&resolve_prediction(&pred_dir, &pair_stem(i))?)?;
            let gt = load_disparity(entry.gt.as_deref().expect("filtered on gt"))?;
            let report = compute_d1(&pred, &gt, args.threshold)?;
            let map = if args.error_maps {
                Some(error_map(&pred, &gt, args.map_clip)?)
            } else {
                None
            };
            Ok((i, report, map))
        })
        .collect::<Result<_, _>>()?;

    for (i, report, map) in &scored {
        if let Some((img, epe)) = map {
            let stem = pair_stem(*i);
            save_image_png8(&out_dir.join(format!("errmap_{stem}.png")), img)?;
            fs::write(
                out_dir.join(format!("errmap_{stem}.txt")),
                format!("epe={epe}\nclip={}\n", args.map_clip),
            )?;
            debug_assert_eq!(*epe, report.epe);
        }
    }

    let rows: Vec<(usize, &MetricReport)> = scored.iter().map(|(i, r, _)| (*i, r)).collect();
    write_metrics_csv(&out_dir.join("metrics.csv"), &rows)?;
    write_metrics_txt(
        &out_dir.join("metrics.txt"),
        entries.len(),
        &rows,
        args.threshold,
    )?;

    let mut tokens = vec![
        "eval".to_string(),
        "--manifest".into(),
        manifest_path.display().to_string(),
        "--pred-dir".into(),
        pred_dir.display().to_string(),
        "--out".into(),
        out_dir.display().to_string(),
        "--threshold".into(),
        args.threshold.to_string(),
    ];
    if args.error_maps {
        tokens.push("--error-maps".into());
    }
    tokens.push("--map-clip".into());
    tokens.push(args.map_clip.to_string());
    tokens.push("--jobs".into());
    tokens.push(args.jobs.jobs.to_string());
    write_run_cfg(&out_dir, &tokens)
}

fn write_metrics_csv(path: &Path, rows: &[(usize, &MetricReport)]) -> CmdResult {
    let mut text = String::from("pair,epe,d1,threshold,n_valid,n_bad\n");
    for (i, r) in rows {
        text.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            r.epe, r.d1, r.threshold, r.n_valid, r.n_bad
        ));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Aggregate report as key=value lines. The aggregate pools pixels across
/// pairs: total bad count over total valid count, and a valid-count-weighted
/// mean of the per-pair EPEs.
fn write_metrics_txt(
    path: &Path,
    pairs_total: usize,
    rows: &[(usize, &MetricReport)],
    threshold: f64,
) -> CmdResult {
    let n_valid: usize = rows.iter().map(|(_, r)| r.n_valid).sum();
    let n_bad: usize = rows.iter().map(|(_, r)| r.n_bad).sum();
    let epe_sum: f64 = rows.iter().map(|(_, r)| r.epe * r.n_valid as f64).sum();
    let epe = epe_sum / n_valid as f64;
    let d1 = n_bad as f64 / n_valid as f64;
    let text = format!(
        "pairs={pairs_total}\nscored={}\nthreshold={threshold}\nepe={epe}\nd1={d1}\nn_valid={n_valid}\nn_bad={n_bad}\n",
        rows.len()
    );
    fs::write(path, text)?;
    Ok(())
}

/// One `consistency` table row. `disparity` is absent when the manifest has
/// no ground truth for the pair.
struct ConsistencyRow {
    pair: usize,
    l_cons: f64,
    disparity: Option<f64>,
    total: f64,
}

pub(crate) fn consistency(args: &ConsistencyArgs) -> CmdResult {
    let manifest_path = canonical(&args.io.manifest)?;
    let entries = read_manifest(&manifest_path)?;
    let out_dir = ensure_out(&args.io.out)?;
    let aug_cfg = validated_augment_config(&args.aug, args.seed.seed)?;
    let loss_cfg = args.loss.to_core();
    loss_cfg.validate()?;
    let params = args.sgm.to_core();
    params.validate()?;
    let extractor = ToyExtractor::default_frozen();

    let mut rows: Vec<ConsistencyRow> = Vec::with_capacity(entries.len());
    let mut records: Vec<DrawRecord> = Vec::with_capacity(2 * entries.len());
    for (base, chunk) in batches(&entries, args.aug.batch) {
        let pairs = load_batch(chunk)?;
        let (augmented, log) = augment_batch_at(&pairs, &aug_cfg, base as u32)?;
        let chunk_rows: Vec<ConsistencyRow> = (0..pairs.len())
            .into_par_iter()
            .map(|j| -> Result<ConsistencyRow, Failure> {
                let orig = &pairs[j];
                let aug = &augmented[j];
                let f_l = extract_features(&orig.left, &extractor)?;
                let f_l_aug = extract_features(&aug.left, &extractor)?;
                let f_r = extract_features(&orig.right, &extractor)?;
                let f_r_aug = extract_features(&aug.right, &extractor)?;
                let l_cons = consistency_loss(&f_l, &f_l_aug, &f_r, &f_r_aug, &loss_cfg)?;
                // The disparity loss scores the matcher on the augmented
                // pair (the input a training step would see) against the
                // manifest ground truth.
                let disparity = match &chunk[j].gt {
                    Some(gt_path) => {
                        let gt = load_disparity(gt_path)?;
                        let pred = match_pair(aug, &params, args.sgm.dmax, args.sgm.lr_tol)?;
                        Some(smooth_l1(&pred, &gt, loss_cfg.smooth_l1_beta)?)
                    }
                    None => None,
                };
                let total = disparity.unwrap_or(0.0) + loss_cfg.lambda * l_cons;
                Ok(ConsistencyRow {
                    pair: base + j,
                    l_cons,
                    disparity,
                    total,
                })
            })
            .collect::<Result<_, _>>()?;
        rows.extend(chunk_rows);
        records.extend(log);
    }

    let mut table = String::from("pair\tl_cons\tdisparity\ttotal\n");
    for row in &rows {
        let disparity = match row.disparity {
            Some(v) => v.to_string(),
            None => "-".to_string(),
        };
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            row.pair, row.l_cons, disparity, row.total
        ));
    }
    fs::write(out_dir.join("consistency.tsv"), table)?;
    fs::write(out_dir.join("draws.log"), format_draw_log(&records))?;

    let mut tokens = vec![
        "consistency".to_string(),
        "--manifest".into(),
        manifest_path.display().to_string(),
        "--out".into(),
        out_dir.display().to_string(),
        "--seed".into(),
        args.seed.seed.to_string(),
    ];
    args.aug.tokens(&mut tokens);
    args.loss.tokens(&mut tokens);
    args.sgm.tokens(&mut tokens);
    tokens.push("--jobs".into());
    tokens.push(args.jobs.jobs.to_string());
    write_run_cfg(&out_dir, &tokens)
}

pub(crate) fn gradcheck(args: &GradcheckArgs) -> CmdResult {
    let cfg = args.loss.to_core();
    cfg.validate()?;
    if args.height < 2 || args.width < 2 {
        return Err(Failure::Input(
            "--height and --width must be at least 2 (reflect padding needs two rows/columns)"
                .into(),
        ));
    }
    if args.samples == 0 {
        return Err(Failure::Input("--samples must be at least 1".into()));
    }
    if !(args.tol > 0.0) {
        return Err(Failure::Input(format!(
            "--tol must be positive, got {}",
            args.tol
        )));
    }

    let report = finite_difference_check(
        args.seed.seed,
        args.height,
        args.width,
        args.samples,
        &cfg,
        args.corrupt,
    )?;
    let pass = report.max_rel_err <= args.tol;
    let text = format!(
        "max_rel_err={}\nchecked={}\ntol={}\nresult={}\n",
        report.max_rel_err,
        report.checked,
        args.tol,
        if pass { "pass" } else { "fail" }
    );
    print!("{text}");

    if let Some(out) = &args.out {
        let out_dir = ensure_out(out)?;
        fs::write(out_dir.join("gradcheck.txt"), &text)?;
        let mut tokens = vec![
            "gradcheck".to_string(),
            "--seed".into(),
            args.seed.seed.to_string(),
            "--height".into(),
            args.height.to_string(),
            "--width".into(),
            args.width.to_string(),
            "--samples".into(),
            args.samples.to_string(),
            "--tol".into(),
            args.tol.to_string(),
        ];
        args.loss.tokens(&mut tokens);
        tokens.push("--out".into());
        tokens.push(out_dir.display().to_string());
        if args.corrupt != 0.0 {
            tokens.push("--corrupt".into());
            tokens.push(args.corrupt.to_string());
        }
        write_run_cfg(&out_dir, &tokens)?;
    }

    if pass {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed: max relative error {} exceeds tolerance {}",
            report.max_rel_err, args.tol
        )))
    }
}

fn write_histogram_csv(path: &Path, hist: &Histogram, channel_names: &[&str]) -> CmdResult {
    debug_assert_eq!(channel_names.len(), hist.counts.len());
    let mut text = String::from("bin_center");
    for name in channel_names {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    let width = (hist.hi - hist.lo) / HIST_BINS as f64;
    for b in 0..HIST_BINS {
        let center = hist.lo + (b as f64 + 0.5) * width;
        text.push_str(&center.to_string());
        for channel in &hist.counts {
            text.push(',');
            text.push_str(&channel[b].to_string());
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn hist(args: &HistArgs) -> CmdResult {
    let manifest_path = canonical(&args.io.manifest)?;
    let entries = read_manifest(&manifest_path)?;
    let out_dir = ensure_out(&args.io.out)?;
    let cfg = validated_augment_config(&args.aug, args.seed.seed)?;
    let extractor = ToyExtractor::default_frozen();

    let mut records: Vec<DrawRecord> = Vec::with_capacity(2 * entries.len());
    for (base, chunk) in batches(&entries, args.aug.batch) {
        let pairs = load_batch(chunk)?;
        let (augmented, log) = augment_batch_at(&pairs, &cfg, base as u32)?;

        // (filename, histogram, channel names), computed in parallel and
        // written in order.
        type Job = (String, Histogram, &'static [&'static str]);
        let jobs: Vec<Job> = (0..pairs.len())
            .into_par_iter()
            .map(|j| -> Result<Vec<Job>, Failure> {
                let stem = pair_stem(base + j);
                let mut out: Vec<Job> = Vec::with_capacity(8);
                let sides = [
                    ("L", &pairs[j].left, &augmented[j].left),
                    ("R", &pairs[j].right, &augmented[j].right),
                ];
                for (letter, orig, aug) in sides {
                    const RGB: &[&str] = &["r", "g", "b"];
                    const MEAN: &[&str] = &["mean"];
                    out.push((
                        format!("img_orig_{stem}_{letter}.csv"),
                        image_histogram(orig),
                        RGB,
                    ));
                    out.push((
                        format!("img_aug_{stem}_{letter}.csv"),
                        image_histogram(aug),
                        RGB,
                    ));
                    out.push((
                        format!("feat_orig_{stem}_{letter}.csv"),
                        feature_histogram(&extract_features(orig, &extractor)?),
                        MEAN,
                    ));
                    out.push((
                        format!("feat_aug_{stem}_{letter}.csv"),
                        feature_histogram(&extract_features(aug, &extractor)?),
                        MEAN,
                    ));
                }
                Ok(out)
            })
            .collect::<Result<Vec<Vec<Job>>, Failure>>()?
            .into_iter()
            .flatten()
            .collect();
        for (name, histogram, names) in &jobs {
            write_histogram_csv(&out_dir.join(name), histogram, names)?;
        }
        records.extend(log);
    }
    fs::write(out_dir.join("draws.log"), format_draw_log(&records))?;

    let mut tokens = vec![
        "hist".to_string(),
        "--manifest".into(),
        manifest_path.display().to_string(),
        "--out".into(),
        out_dir.display().to_string(),
        "--seed".into(),
        args.seed.seed.to_string(),
    ];
    args.aug.tokens(&mut tokens);
    tokens.push("--jobs".into());
    tokens.push(args.jobs.jobs.to_string());
    write_run_cfg(&out_dir, &tokens)
}
