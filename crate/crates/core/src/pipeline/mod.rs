//! The end-to-end commands behind the `znet` binary.
//!
//! Each command reads a [`RunConfig`], writes its outputs plus the resolved
//! configuration (`run.cfg`) into `out_dir`, and returns a short summary.
//! Given the same inputs and config every command produces identical bytes.
//!
//! | command    | reads                                    | writes |
//! |------------|------------------------------------------|--------|
//! | `phantom`  | —                                        | `CaseXX.mhd/.raw`, `CaseXX_segmentation.mhd/.raw` |
//! | `train`    | images + masks in `data_dir`             | `model.ckpt`, `checkpoints/epoch_NNNN.ckpt`, `train.log` |
//! | `predict`  | `checkpoint`, images in `data_dir`       | `CaseXX_segmentation.mhd/.raw`, optional `overlays/*.ppm` |
//! | `evaluate` | masks in `pred_dir` and `gt_dir`         | `metrics.csv`, `metrics.txt` |
//! | `simulate` | masks in `data_dir`                      | `simulation.csv`, `simulation.txt` |

mod config;
mod data;

pub use config::{CaseSelection, PhantomSet, RunConfig, KEYS};
pub use data::{
    case_id, discover_cases, discover_masks, load_image, load_mask, mask_file_name, overlay_ppm,
    prepare_input, CaseFiles, MASK_SUFFIX,
};

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, simulate_uniform, MetricReport, SimulationTable};
use crate::model::{load_checkpoint, save_checkpoint, TrainState, ZNet};
use crate::preprocess::{
    augment, make_phantom, reconstruct, save_mhd, unify, AugmentSpec, PhantomSpec, Volume,
};
use crate::tensor::{Precision, Scalar};
use crate::train::{binarize, predict, train, Dataset, TrainEvent, TrainLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Phantom,
    Train,
    Predict,
    Evaluate,
    Simulate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Phantom => "phantom",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::Simulate => "simulate",
        })
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phantom" => Ok(Command::Phantom),
            "train" => Ok(Command::Train),
            "predict" => Ok(Command::Predict),
            "evaluate" => Ok(Command::Evaluate),
            "simulate" => Ok(Command::Simulate),
            _ => Err(Error::config(format!("unknown command {s:?}"))),
        }
    }
}

/// Sizes the global worker pool; 0 keeps the default. Later calls are no-ops.
pub fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

/// Runs `cmd` and returns a human-readable summary. `progress` receives
/// one line per completed training epoch.
pub fn run(cmd: Command, cfg: &RunConfig, progress: &mut dyn FnMut(&str)) -> Result<String> {
    match cmd {
        Command::Phantom => {
            let files = cmd_phantom(cfg)?;
            Ok(format!(
                "wrote {} cases ({} volumes) to {}\n",
                files.len() / 2,
                files.len(),
                cfg.out_dir.display()
            ))
        }
        Command::Train => {
            let s = cmd_train(cfg, progress)?;
            Ok(format!(
                "trained to epoch {} ({} steps), last loss {}\ncheckpoint {}\nlog {}\n",
                s.log.state.epoch,
                s.log.state.step,
                s.log
                    .last_loss()
                    .map_or("n/a".to_string(), |l| l.to_string()),
                s.checkpoint.display(),
                s.log_file.display()
            ))
        }
        Command::Predict => {
            let files = cmd_predict(cfg)?;
            Ok(format!(
                "wrote {} masks to {}\n",
                files.len(),
                cfg.out_dir.display()
            ))
        }
        Command::Evaluate => Ok(cmd_evaluate(cfg)?.to_text()),
        Command::Simulate => Ok(cmd_simulate(cfg)?.to_text()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes one phantom image and mask per geometry; returns the header paths.
pub fn cmd_phantom(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    cfg.persist("phantom")?;
    let geometries = cfg.phantoms.geometries();
    let files = geometries
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut spec =
                PhantomSpec::from_geometry(g, cfg.phantom_shape, cfg.seed.wrapping_add(i as u64));
            spec.noise = cfg.phantom_noise;
            let (image, mask) =
                make_phantom(&spec).map_err(|e| e.context(&format!("phantom {}", g.id)))?;
            let stem = format!("Case{}", g.id);
            let ip = cfg.out_dir.join(format!("{stem}.mhd"));
            let mp = cfg.out_dir.join(mask_file_name(&stem));
            save_mhd(&ip, &image)?;
            save_mhd(&mp, &mask)?;
            Ok([ip, mp])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(files.into_iter().flatten().collect())
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log_file: PathBuf,
    pub log: TrainLog,
}

/// Loads every non-validation case, preprocesses it, and adds
/// `augment_copies` augmented variants of each slice.
pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let cases: Vec<CaseFiles> = discover_cases(&cfg.data_dir)?
        .into_iter()
        .filter(|c| !cfg.validation.contains(&c.id))
        .collect();
    if cases.is_empty() {
        return Err(Error::config(format!(
            "no training cases in {} outside the validation split {:?}",
            cfg.data_dir.display(),
            cfg.validation
        )));
    }
    for c in &cases {
        if c.mask.is_none() {
            return Err(Error::config(format!(
                "missing mask {} for {}",
                cfg.data_dir.join(mask_file_name(&c.stem)).display(),
                c.image.display()
            )));
        }
    }
    let target = cfg.target();
    let prepared = cases
        .par_iter()
        .map(|c| {
            let image = load_image(&c.image)?;
            let mask = load_mask(c.mask.as_deref().expect("checked above"))?;
            if image.dims() != mask.dims() {
                return Err(Error::config(format!(
                    "case {}: image dims {:?} but mask dims {:?}",
                    c.id,
                    image.dims(),
                    mask.dims()
                )));
            }
            let (x, _) = prepare_input(&image, cfg.method, target, &cfg.clahe)?;
            let (y, _) = unify(&mask, cfg.method, target)?;
            Ok((x, y))
        })
        .collect::<Result<Vec<_>>>()?;

    // A separate stream from the epoch shuffles, drawn in case/slice order.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut data = Dataset::new(target);
    let (h, w) = target;
    for (x, y) in &prepared {
        for z in 0..x.depth() {
            let (img, msk) = (x.slice(z), y.slice(z));
            data.push(img.to_vec(), msk.to_vec())?;
            for _ in 0..cfg.augment_copies {
                let spec = AugmentSpec {
                    seed: rng.gen(),
                    ..cfg.augment
                };
                let (ai, am) = augment(img, msk, h, w, &spec)?;
                data.push(ai, am)?;
            }
        }
    }
    Ok(data)
}

/// Preprocess → augment → train, with checkpoints and a loss log.
pub fn cmd_train(cfg: &RunConfig, progress: &mut dyn FnMut(&str)) -> Result<TrainSummary> {
    cfg.persist("train")?;
    let data = build_dataset(cfg)?;
    match cfg.model.precision {
        Precision::F32 => train_with::<f32>(cfg, &data, progress),
        Precision::F64 => train_with::<f64>(cfg, &data, progress),
    }
}

fn train_with<T: Scalar>(
    cfg: &RunConfig,
    data: &Dataset,
    progress: &mut dyn FnMut(&str),
) -> Result<TrainSummary> {
    let (mut net, start) = match &cfg.resume {
        Some(path) => {
            let ck = load_checkpoint::<T>(path, Some(&cfg.model))?;
            if ck.arch != cfg.architecture {
                return Err(Error::config(format!(
                    "checkpoint {} holds a {} network, config asks for {}",
                    path.display(),
                    ck.arch,
                    cfg.architecture
                )));
            }
            ck.into_net()?
        }
        None => (
            ZNet::<T>::build(cfg.model, cfg.architecture, cfg.seed)?,
            TrainState::default(),
        ),
    };
    let ckpt_dir = cfg.out_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let log_file = cfg.out_dir.join("train.log");
    let file = if cfg.resume.is_some() {
        OpenOptions::new().create(true).append(true).open(&log_file)
    } else {
        File::create(&log_file)
    }
    .map_err(|e| Error::io(&log_file, e))?;
    let mut log_out = BufWriter::new(file);
    let io = |e| Error::io(&log_file, e);

    let log = train(&mut net, data, &cfg.train, start, |net, ev| {
        writeln!(log_out, "{}", ev.log_line()).map_err(io)?;
        if let TrainEvent::EpochEnd {
            epoch,
            mean_loss,
            state,
        } = *ev
        {
            log_out.flush().map_err(io)?;
            progress(&format!("epoch {epoch} mean_loss {mean_loss}"));
            if cfg.checkpoint_every > 0 && state.epoch % cfg.checkpoint_every == 0 {
                save_checkpoint(
                    ckpt_dir.join(format!("epoch_{:04}.ckpt", state.epoch)),
                    net,
                    state,
                )?;
            }
        }
        Ok(())
    })?;
    log_out.flush().map_err(io)?;
    let checkpoint = cfg.out_dir.join("model.ckpt");
    save_checkpoint(&checkpoint, &net, log.state)?;
    Ok(TrainSummary {
        checkpoint,
        log_file,
        log,
    })
}

fn selected_cases(cfg: &RunConfig) -> Result<Vec<CaseFiles>> {
    let all = discover_cases(&cfg.data_dir)?;
    let wanted: Option<&[String]> = match &cfg.predict_cases {
        CaseSelection::All => None,
        CaseSelection::Validation => Some(&cfg.validation),
        CaseSelection::Ids(ids) => Some(ids),
    };
    let Some(wanted) = wanted else { return Ok(all) };
    if let Some(missing) = wanted.iter().find(|id| !all.iter().any(|c| &c.id == *id)) {
        if matches!(cfg.predict_cases, CaseSelection::Ids(_)) {
            return Err(Error::config(format!(
                "case {missing} not found in {}",
                cfg.data_dir.display()
            )));
        }
    }
    let cases: Vec<CaseFiles> = all.into_iter().filter(|c| wanted.contains(&c.id)).collect();
    if cases.is_empty() {
        return Err(Error::config(format!(
            "none of the cases {wanted:?} are in {}",
            cfg.data_dir.display()
        )));
    }
    Ok(cases)
}

/// Segments each selected case and writes the masks at original geometry.
pub fn cmd_predict(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let ckpt = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::config("predict needs `checkpoint`"))?;
    cfg.persist("predict")?;
    let cases = selected_cases(cfg)?;
    match cfg.model.precision {
        Precision::F32 => predict_with::<f32>(cfg, ckpt, &cases),
        Precision::F64 => predict_with::<f64>(cfg, ckpt, &cases),
    }
}

fn predict_with<T: Scalar>(
    cfg: &RunConfig,
    ckpt: &Path,
    cases: &[CaseFiles],
) -> Result<Vec<PathBuf>> {
    let ck = load_checkpoint::<T>(ckpt, Some(&cfg.model))?;
    if ck.arch != cfg.architecture {
        return Err(Error::config(format!(
            "checkpoint {} holds a {} network, config asks for {}",
            ckpt.display(),
            ck.arch,
            cfg.architecture
        )));
    }
    let (net, _) = ck.into_net()?;
    if cfg.overlay {
        create_dir(&cfg.out_dir.join("overlays"))?;
    }
    cases
        .par_iter()
        .map(|c| -> Result<PathBuf> {
            let image = load_image(&c.image)?;
            let (x, rec) = prepare_input(&image, cfg.method, cfg.target(), &cfg.clahe)?;
            let p = predict(&net, &x, cfg.train.batch_size)?;
            let mask = reconstruct(&binarize(&p, 0.5)?, &rec)?;
            let out = cfg.out_dir.join(mask_file_name(&c.stem));
            save_mhd(&out, &mask)?;
            if cfg.overlay {
                let reference = c.mask.as_deref().map(load_mask).transpose()?;
                write_overlays(cfg, c, &image, &mask, reference.as_ref())?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context("predict"))
}

fn write_overlays(
    cfg: &RunConfig,
    c: &CaseFiles,
    image: &Volume,
    pred: &Volume,
    reference: Option<&Volume>,
) -> Result<()> {
    let lo = image.data().iter().copied().fold(f32::INFINITY, f32::min);
    let hi = image
        .data()
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    let reference = reference.filter(|r| r.dims() == image.dims());
    for z in 0..image.depth() {
        let ppm = overlay_ppm(
            image.slice(z),
            image.slice_dims(),
            (lo, hi),
            pred.slice(z),
            reference.map(|r| r.slice(z)),
        );
        write_file(
            &cfg.out_dir
                .join("overlays")
                .join(format!("{}_z{z:03}.ppm", c.stem)),
            ppm,
        )?;
    }
    Ok(())
}

/// Scores every mask in `pred_dir` against the same case in `gt_dir`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<MetricReport> {
    let pred_dir = cfg
        .pred_dir
        .as_ref()
        .ok_or_else(|| Error::config("evaluate needs `pred_dir`"))?;
    let gt_dir = cfg.gt_dir.as_ref().unwrap_or(&cfg.data_dir);
    cfg.persist("evaluate")?;
    let preds = discover_masks(pred_dir)?;
    let gts = discover_masks(gt_dir)?;
    let mut refs = Vec::with_capacity(preds.len());
    for (id, _) in &preds {
        let (_, path) = gts.iter().find(|(g, _)| g == id).ok_or_else(|| {
            Error::config(format!(
                "prediction for case {id} has no reference mask in {}",
                gt_dir.display()
            ))
        })?;
        refs.push((id.clone(), path.clone()));
    }
    let load_all = |list: &[(String, PathBuf)]| -> Result<Vec<(String, Volume)>> {
        list.par_iter()
            .map(|(id, p)| Ok((id.clone(), load_mask(p)?)))
            .collect()
    };
    let report = evaluate(&load_all(&preds)?, &load_all(&refs)?, cfg.hd_mode)?;
    write_file(&cfg.out_dir.join("metrics.csv"), report.to_csv())?;
    write_file(&cfg.out_dir.join("metrics.txt"), report.to_text())?;
    Ok(report)
}

/// Round-trips every mask in `data_dir` through each uniform-size method.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulationTable> {
    cfg.persist("simulate")?;
    let masks = discover_masks(&cfg.data_dir)?
        .par_iter()
        .map(|(id, p)| Ok((id.clone(), load_mask(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let table = simulate_uniform(&masks, &cfg.methods, cfg.target())?;
    write_file(&cfg.out_dir.join("simulation.csv"), table.to_csv())?;
    write_file(&cfg.out_dir.join("simulation.txt"), table.to_text())?;
    Ok(table)
}
