use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use siforecast::drift_model::{train_resume, AdamWConfig, Checkpoint, NeuralDrift, TrainState};
use siforecast::dynamics::spectrum::{wavenumber, Fft2};
use siforecast::dynamics::{downsample, enstrophy_spectrum, simulate_jump_diffusion, simulate_ns, TransitionDataset};
use siforecast::eval::{angles, conditional_moment_errors, kde_kl, kde_pair, ErrorReport, KlEstimate};
use siforecast::exec;
use siforecast::io::{write_csv, Array};
use siforecast::rng::{normal_vec, Streams};
use siforecast::sampler::{rollout_ensemble, sample_ensemble};
use siforecast::{DriftField, GmmSpec};

use crate::config::{invalid, require_path, sha256_hex, RunConfig, Task};

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub pairs: usize,
    pub dim: usize,
    pub lag: f64,
    /// Raw states were divided by this.
    pub scale: f64,
    pub config_hash: String,
    /// SHA-256 of each data file.
    pub files: BTreeMap<String, String>,
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.out_dir.as_path();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.stamp(dir)?;
    Ok(dir)
}

/// Save `array` and return the SHA-256 of the bytes written.
fn save(array: &Array, path: &Path) -> Result<String> {
    let mut buf = Vec::new();
    array.write_to(&mut buf)?;
    std::fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(sha256_hex(&buf))
}

fn write_toml(path: &Path, value: &impl Serialize) -> Result<()> {
    std::fs::write(path, toml::to_string(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Standard-normal conditioning states paired with independent draws from
/// `target`; row `k` uses its own stream.
fn gmm_pairs(target: &GmmSpec, n: usize, seed: u64) -> Result<TransitionDataset> {
    let d = target.dim();
    let streams = Streams::new(seed, "gmm-pairs");
    let rows = exec::map_range(n, |k| {
        let mut rng = streams.stream(k as u64);
        let x0 = normal_vec(&mut rng, d);
        (x0, target.sample(&mut rng))
    });
    let (mut x0, mut x1) = (Vec::with_capacity(n * d), Vec::with_capacity(n * d));
    for (a, b) in rows {
        x0.extend(a);
        x1.extend(b);
    }
    Ok(TransitionDataset::new(d, 1.0, x0, x1)?)
}

pub fn gen_data(cfg: &RunConfig) -> Result<String> {
    let n = cfg.data.n_pairs;
    let data = match cfg.task {
        Task::GmmSynthetic => {
            if n == 0 {
                return Err(invalid("data.n_pairs must be at least 1"));
            }
            gmm_pairs(&cfg.gmm.target, n, cfg.seed)?
        }
        Task::JumpDiffusion => simulate_jump_diffusion(&cfg.jump, n, cfg.data.burn_in)?,
        Task::NavierStokes => simulate_ns(&cfg.navier_stokes, cfg.data.n_snapshots, cfg.data.burn_in)?,
    };
    let dir = out_dir(cfg)?;
    let mut files = BTreeMap::new();
    files.insert("x0".to_string(), save(&Array::matrix(data.dim, data.x0.clone())?, &dir.join("x0.sifa"))?);
    files.insert("x1".to_string(), save(&Array::matrix(data.dim, data.x1.clone())?, &dir.join("x1.sifa"))?);
    let manifest = Manifest {
        task: cfg.task,
        pairs: data.len(),
        dim: data.dim,
        lag: data.lag,
        scale: data.scale,
        config_hash: cfg.hash()?,
        files,
    };
    write_toml(&dir.join("manifest.toml"), &manifest)?;
    Ok(format!("wrote {} pairs of dimension {} to {}", data.len(), data.dim, dir.display()))
}

pub fn load_dataset(dir: &Path) -> Result<(TransitionDataset, Manifest)> {
    let text = std::fs::read_to_string(dir.join("manifest.toml"))
        .map_err(|e| invalid(format!("{} is not a dataset directory: {e}", dir.display())))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| invalid(format!("manifest: {}", e.message())))?;
    let x0 = Array::load(&dir.join("x0.sifa"))?;
    let x1 = Array::load(&dir.join("x1.sifa"))?;
    for a in [&x0, &x1] {
        if a.cols()? != manifest.dim {
            return Err(invalid(format!("dataset arrays have {} columns, manifest says {}", a.cols()?, manifest.dim)));
        }
    }
    let mut data = TransitionDataset::new(manifest.dim, manifest.lag, x0.data, x1.data)?;
    data.scale = manifest.scale;
    Ok((data, manifest))
}

#[derive(Serialize)]
struct TrainSummary {
    start_step: u64,
    final_step: u64,
    model_id: String,
}

pub fn train(cfg: &RunConfig) -> Result<String> {
    let (data, _) = load_dataset(require_path(&cfg.data.dir, "data.dir")?)?;
    let sched = cfg.schedule()?;
    let tc = &cfg.train.train;
    tc.validate()?;
    let mut state = match &cfg.train.resume {
        Some(_) => {
            let path = require_path(&cfg.train.resume, "train.resume")?;
            let ck = Checkpoint::load(path).map_err(|e| invalid(format!("checkpoint {}: {e}", path.display())))?;
            if ck.schedule != sched {
                return Err(invalid("the checkpoint was trained with a different schedule"));
            }
            let opt = ck.optimizer(AdamWConfig {
                weight_decay: tc.weight_decay,
                ..Default::default()
            });
            TrainState { model: ck.model, opt }
        }
        None => TrainState::new(NeuralDrift::new(data.dim, &cfg.model.hidden, cfg.model.activation, cfg.seed)?, tc),
    };
    let start_step = state.opt.step;
    let mut epochs = Vec::new();
    let report = train_resume(&mut state, &data, tc, &sched, |e, _| epochs.push(e))?;

    let dir = out_dir(cfg)?;
    write_csv(&dir.join("loss.csv"), &["step", "loss"], report.loss_log.iter().map(|&(s, l)| vec![s as f64, l]))?;
    let rows = epochs.iter().enumerate().map(|(i, &e)| {
        let val = report.val_loss.get(i).copied().unwrap_or(f64::NAN);
        vec![e as f64, report.epoch_loss[i], val]
    });
    write_csv(&dir.join("epochs.csv"), &["epoch", "train_loss", "val_loss"], rows)?;
    let ck = Checkpoint {
        model: state.model,
        schedule: sched,
        step: state.opt.step,
        moments: Some((state.opt.m, state.opt.v)),
    };
    let mut buf = Vec::new();
    ck.write_to(&mut buf)?;
    std::fs::write(dir.join("checkpoint.sifd"), &buf)?;
    let summary = TrainSummary {
        start_step,
        final_step: ck.step,
        model_id: sha256_hex(&buf),
    };
    write_toml(&dir.join("train.toml"), &summary)?;
    Ok(format!("trained steps {}..{}; checkpoint in {}", start_step, ck.step, dir.display()))
}

#[derive(Serialize)]
struct ForecastIndex {
    model_id: String,
    config_hash: String,
    lags: usize,
    ensembles: Vec<EnsembleEntry>,
}

#[derive(Serialize)]
struct EnsembleEntry {
    file: String,
    condition: usize,
    lag: usize,
    members: usize,
    x0: Vec<f64>,
}

fn conditioning_states(cfg: &RunConfig, dim: usize) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = match &cfg.forecast.x0_file {
        Some(_) => {
            let a = Array::load(require_path(&cfg.forecast.x0_file, "forecast.x0_file")?)?;
            let c = a.cols()?;
            a.data.chunks(c).map(<[f64]>::to_vec).collect()
        }
        None => cfg.forecast.x0.clone(),
    };
    if rows.is_empty() {
        return Err(invalid("no conditioning states: set forecast.x0 or forecast.x0_file"));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(invalid(format!("dimension mismatch: model has dimension {dim}, conditioning state has {}", r.len())));
    }
    Ok(rows)
}

pub fn forecast(cfg: &RunConfig) -> Result<String> {
    let path = require_path(&cfg.forecast.checkpoint, "forecast.checkpoint")?;
    let bytes = std::fs::read(path)?;
    let ck = Checkpoint::read_from(&mut bytes.as_slice()).map_err(|e| invalid(format!("checkpoint {}: {e}", path.display())))?;
    if ck.schedule != cfg.schedule()? {
        return Err(invalid("the checkpoint was trained with a different schedule"));
    }
    let k = cfg.forecast.lags;
    if k == 0 {
        return Err(invalid("forecast.lags must be at least 1"));
    }
    cfg.sampler.validate()?;
    let x0s = conditioning_states(cfg, ck.model.dim())?;
    let dir = out_dir(cfg)?;
    let mut index = ForecastIndex {
        model_id: sha256_hex(&bytes),
        config_hash: cfg.hash()?,
        lags: k,
        ensembles: Vec::new(),
    };
    for (i, x0) in x0s.iter().enumerate() {
        let lags = if k == 1 {
            vec![sample_ensemble(&ck.model, &ck.schedule, &cfg.sampler, x0)?]
        } else {
            rollout_ensemble(&ck.model, &ck.schedule, &cfg.sampler, x0, k)?
        };
        for (j, e) in lags.iter().enumerate() {
            let file = format!("ensemble_{i:03}_lag{:02}.sifa", j + 1);
            save(&Array::matrix(e.dim, e.samples.clone())?, &dir.join(&file))?;
            index.ensembles.push(EnsembleEntry {
                file,
                condition: i,
                lag: j + 1,
                members: e.len(),
                x0: x0.clone(),
            });
        }
    }
    write_toml(&dir.join("forecast.toml"), &index)?;
    Ok(format!("wrote {} ensembles to {}", index.ensembles.len(), dir.display()))
}

/// `sum_k |w_hat(k)|^2 / |k|^2`, the kinetic energy on the same
/// normalization as the enstrophy spectrum.
fn total_energy(fft: &Fft2, field: &[f64]) -> f64 {
    let n = fft.n();
    let c = fft.coefficients(field);
    let mut e = 0.0;
    for i in 0..n {
        let ky = wavenumber(i, n) as f64;
        for j in 0..n {
            let kx = wavenumber(j, n) as f64;
            let k2 = kx * kx + ky * ky;
            if k2 > 0.0 {
                e += c[i * n + j].norm_sqr() / k2;
            }
        }
    }
    e
}

fn grid_side(dim: usize) -> Result<usize> {
    let n = (dim as f64).sqrt().round() as usize;
    if n * n != dim || n < 2 {
        return Err(invalid(format!("dimension {dim} is not a square grid")));
    }
    Ok(n)
}

fn mean_spectrum(rows: &[f64], dim: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let spectra = exec::map_range(rows.len() / dim, |r| enstrophy_spectrum(&rows[r * dim..(r + 1) * dim]));
    let spectra: Vec<Vec<f64>> = spectra.into_iter().collect::<Result<_, _>>()?;
    let m = spectra.len() as f64;
    let shells = spectra[0].len();
    let mut mean = vec![0.0; shells];
    let mut std = vec![0.0; shells];
    for k in 0..shells {
        let col: Vec<f64> = spectra.iter().map(|s| s[k]).collect();
        mean[k] = exec::pairwise_sum(&col) / m;
        if spectra.len() > 1 {
            let sq: Vec<f64> = col.iter().map(|v| (v - mean[k]).powi(2)).collect();
            std[k] = (exec::pairwise_sum(&sq) / (m - 1.0)).sqrt();
        }
    }
    Ok((mean, std))
}

#[derive(Serialize)]
struct EvalReport {
    ensemble_members: usize,
    reference_members: usize,
    moments: ErrorReport,
    kl: BTreeMap<String, KlEstimate>,
}

pub fn eval(cfg: &RunConfig) -> Result<String> {
    let ens = Array::load(require_path(&cfg.eval.ensemble, "eval.ensemble")?)?;
    let refs = Array::load(require_path(&cfg.eval.reference, "eval.reference")?)?;
    let d = ens.cols()?;
    if refs.cols()? != d {
        return Err(invalid(format!("dimension mismatch: ensemble has dimension {d}, reference has {}", refs.cols()?)));
    }
    let column = |a: &Array, j: usize| a.data.iter().skip(j).step_by(d).copied().collect::<Vec<f64>>();
    let mut summaries: Vec<(String, Vec<f64>, Vec<f64>)> = (0..d.min(cfg.eval.max_coordinates))
        .map(|j| (format!("x{j}"), column(&refs, j), column(&ens, j)))
        .collect();
    match cfg.task {
        Task::JumpDiffusion if d == 2 => summaries.push(("angle".into(), angles(&refs.data), angles(&ens.data))),
        Task::NavierStokes => {
            let fft = Fft2::new(grid_side(d)?);
            let totals = |a: &Array, f: &(dyn Fn(&[f64]) -> f64 + Sync)| exec::map_range(a.data.len() / d, |r| f(&a.data[r * d..(r + 1) * d]));
            let enstrophy = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            let energy = |x: &[f64]| total_energy(&fft, x);
            summaries.push(("enstrophy".into(), totals(&refs, &enstrophy), totals(&ens, &enstrophy)));
            summaries.push(("energy".into(), totals(&refs, &energy), totals(&ens, &energy)));
        }
        _ => {}
    }

    let dir = out_dir(cfg)?;
    let mut kl = BTreeMap::new();
    for (name, p, q) in &summaries {
        let pair = kde_pair(p, q, &cfg.eval.kde)?;
        let rows = pair.p.grid.iter().zip(&pair.p.density).zip(&pair.q.density).map(|((x, a), b)| vec![*x, *a, *b]);
        write_csv(&dir.join(format!("kde_{name}.csv")), &["x", "reference", "ensemble"], rows)?;
        kl.insert(name.clone(), kde_kl(p, q, &cfg.eval.kde, cfg.eval.bootstrap, cfg.seed)?);
    }
    let kl_rows: Vec<String> = summaries
        .iter()
        .map(|(name, _, _)| format!("{name},{},{}", kl[name].value, kl[name].std))
        .collect();
    std::fs::write(dir.join("kl.csv"), format!("summary,kl,std\n{}\n", kl_rows.join("\n")))?;
    let moments = conditional_moment_errors(&ens.data, &refs.data, d)?;
    std::fs::write(
        dir.join("error_report.csv"),
        format!("err_mean,err_std,mean_is_absolute\n{},{},{}\n", moments.err_mean, moments.err_std, moments.mean_is_absolute),
    )?;
    if cfg.task == Task::NavierStokes {
        let (me, _) = mean_spectrum(&ens.data, d)?;
        let (mr, _) = mean_spectrum(&refs.data, d)?;
        let rows = me.iter().zip(&mr).enumerate().map(|(k, (a, b))| vec![k as f64, *a, *b]);
        write_csv(&dir.join("spectrum.csv"), &["k", "ensemble", "reference"], rows)?;
    }
    let report = EvalReport {
        ensemble_members: ens.data.len() / d,
        reference_members: refs.data.len() / d,
        moments,
        kl,
    };
    write_toml(&dir.join("report.toml"), &report)?;
    Ok(format!("evaluated {} summaries into {}", summaries.len(), dir.display()))
}

pub fn spectra(cfg: &RunConfig) -> Result<String> {
    let fields = Array::load(require_path(&cfg.spectra.fields, "spectra.fields")?)?;
    let d = fields.cols()?;
    grid_side(d)?;
    let (data, d) = match cfg.spectra.downsample {
        Some(m) => {
            let rows = exec::map_range(fields.data.len() / d, |r| downsample(&fields.data[r * d..(r + 1) * d], m));
            let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_, _>>().map_err(|e| invalid(e.to_string()))?;
            (rows.concat(), m * m)
        }
        None => (fields.data, d),
    };
    if data.is_empty() {
        return Err(invalid("no fields to analyse"));
    }
    let (mean, std) = mean_spectrum(&data, d)?;
    let dir = out_dir(cfg)?;
    let rows = mean.iter().zip(&std).enumerate().map(|(k, (m, s))| vec![k as f64, *m, *s]);
    write_csv(&dir.join("spectrum.csv"), &["k", "mean", "std"], rows)?;
    Ok(format!("wrote {} shells to {}", mean.len(), dir.join("spectrum.csv").display()))
}
