use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{apply_seed_override, load_config};
use super::csv_io::{write_ber_csv, write_compare_csv, write_dbr_csv, write_psd_csv, BerRow, CompareRow};
use super::manifest::{config_digest, sha256_hex, RunManifest};
use crate::channel::dbr;
use crate::error::{Error, Result};
use crate::montecarlo::{
    bpsk_reference, run_dcsk_sweep, run_multiuser, run_sweep, user_frame, BerPoint, ExperimentConfig,
};
use crate::waveform::{
    design_srrc, estimate_psd, multiuser_plans, samples_per_chip_for, shape_stream, PsdEstimate,
};

/// Averaged periodogram segments used for PSD output.
pub const PSD_SEGMENTS: usize = 100;
/// Minimum number of PSD bins across one subcarrier band.
const PSD_BINS_PER_BAND: f64 = 256.0;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub strict: bool,
    /// Seed that replaces the configured one (value of `CHAOSCOMM_SEED`).
    pub seed_override: Option<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PsdOptions {
    /// Transmit all-zero chips; every bin then reads the floor value.
    pub zero_signal: bool,
}

fn load(config: &Path, opts: &RunOptions) -> Result<ExperimentConfig> {
    let mut cfg = load_config(config, opts.strict)?;
    apply_seed_override(&mut cfg, opts.seed_override.as_deref())?;
    Ok(cfg)
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(job)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn with_bpsk(point: BerPoint) -> BerRow {
    BerRow {
        point,
        bpsk_ref: bpsk_reference(point.ebn0_db),
    }
}

/// `ber.csv` → `ber.user2.csv`.
fn user_path(out: &Path, user: usize) -> PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    let name = match out.extension() {
        Some(ext) => format!("{stem}.user{user}.{}", ext.to_string_lossy()),
        None => format!("{stem}.user{user}"),
    };
    out.with_file_name(name)
}

/// BER sweep. With several users the main file pools all users' counts and
/// each user's own curve goes to `<stem>.user<u>.<ext>`.
pub fn cmd_ber(config: &Path, out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let cfg = load(config, opts)?;
    let mut manifest = RunManifest::start(config_digest(&cfg));
    let curves = with_workers(opts.workers, || run_multiuser(&cfg))?;
    let pooled: Vec<BerRow> = cfg
        .ebn0_grid_db
        .iter()
        .enumerate()
        .map(|(i, &db)| {
            let bits = curves.iter().map(|c| c[i].bits_simulated).sum();
            let errors = curves.iter().map(|c| c[i].bit_errors).sum();
            with_bpsk(BerPoint::from_counts(db, bits, errors))
        })
        .collect();
    write_ber_csv(create(out)?, &pooled)?;
    manifest.outputs.push(out.to_path_buf());
    if curves.len() > 1 {
        for (u, curve) in curves.iter().enumerate() {
            let path = user_path(out, u);
            let rows: Vec<BerRow> = curve.iter().copied().map(with_bpsk).collect();
            write_ber_csv(create(&path)?, &rows)?;
            manifest.outputs.push(path);
        }
    }
    manifest.finish(out)
}

/// DCSK versus MC-DCSK at the configured β, one row per scheme per grid
/// point.
pub fn cmd_sweep_compare(config: &Path, out: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let cfg = load(config, opts)?;
    let mut manifest = RunManifest::start(config_digest(&cfg));
    let (dcsk, mcdcsk) = with_workers(opts.workers, || Ok((run_dcsk_sweep(&cfg)?, run_sweep(&cfg)?)))?;
    let rows: Vec<CompareRow> = dcsk
        .into_iter()
        .zip(mcdcsk)
        .flat_map(|(d, m)| {
            [
                CompareRow {
                    scheme: "dcsk".into(),
                    row: with_bpsk(d),
                },
                CompareRow {
                    scheme: "mcdcsk".into(),
                    row: with_bpsk(m),
                },
            ]
        })
        .collect();
    write_compare_csv(create(out)?, &rows)?;
    manifest.outputs.push(out.to_path_buf());
    manifest.finish(out)
}

pub fn dbr_table(max_m: usize) -> Result<Vec<(usize, f64)>> {
    if max_m < 2 {
        return Err(Error::Config(format!("max M must be ≥ 2, got {max_m}")));
    }
    (2..=max_m).map(|m| Ok((m, dbr(m)?))).collect()
}

pub fn cmd_dbr(max_m: usize, out: &Path) -> Result<RunManifest> {
    let rows = dbr_table(max_m)?;
    let mut manifest = RunManifest::start(sha256_hex(format!("dbr max_m={max_m}").as_bytes()));
    write_dbr_csv(create(out)?, &rows)?;
    manifest.outputs.push(out.to_path_buf());
    manifest.finish(out)
}

/// Spectrum of all configured users transmitting together on the shared
/// sample grid.
pub fn psd_for_config(cfg: &ExperimentConfig, opts: &PsdOptions) -> Result<PsdEstimate> {
    cfg.validate()?;
    let params = &cfg.params;
    let f_p = cfg.waveform.fundamental_freq;
    let l = samples_per_chip_for(params, f_p, cfg.users, cfg.waveform.samples_per_chip);
    let plans = multiuser_plans(params, f_p, cfg.users, l)?;
    let filt = design_srrc(params.rolloff, cfg.waveform.span_chips, l)?;
    let fs = plans[0].sample_rate;
    let segment_len = ((PSD_BINS_PER_BAND * fs / params.subcarrier_bandwidth()).ceil() as usize).next_power_of_two();
    let needed = (PSD_SEGMENTS + 1) * segment_len / 2;
    let samples_per_frame = (params.spreading_factor * l) as u64;
    let frames = (needed as u64).div_ceil(samples_per_frame);

    let signals = plans
        .par_iter()
        .enumerate()
        .map(|(u, plan)| {
            let mut rows = vec![Vec::new(); params.m_subcarriers];
            for f in 0..frames {
                let (_, chips) = user_frame(cfg, u, f)?;
                for (acc, row) in rows.iter_mut().zip(chips.rows()) {
                    if opts.zero_signal {
                        acc.resize(acc.len() + row.len(), 0.0);
                    } else {
                        acc.extend_from_slice(row);
                    }
                }
            }
            shape_stream(&rows, plan, &filt)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![0.0; signals[0].len()];
    for s in &signals {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    estimate_psd(&total, fs, segment_len)
}

pub fn cmd_psd(config: &Path, out: &Path, opts: &RunOptions, psd_opts: &PsdOptions) -> Result<RunManifest> {
    let cfg = load(config, opts)?;
    let mut manifest = RunManifest::start(config_digest(&cfg));
    let psd = with_workers(opts.workers, || psd_for_config(&cfg, psd_opts))?;
    write_psd_csv(create(out)?, &psd)?;
    manifest.outputs.push(out.to_path_buf());
    manifest.finish(out)
}
