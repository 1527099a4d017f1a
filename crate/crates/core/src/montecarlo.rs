//! Monte Carlo bit-error-rate experiments.
//!
//! Every random quantity of frame `f` (chaotic reference, data bits and the
//! noise of each branch) is drawn from its own substream keyed by
//! `(seed, frame, branch)`. Frames are simulated in parallel blocks and the
//! stopping rule is applied to the in-order prefix of frames, so results do
//! not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chaos::{generate_sequence, normalize_energy, splitmix64, ChaosMapKind, ChaoticSequence};
use crate::channel::{add_awgn, bit_energy, calibrate_noise, stream_rng, substream, NoiseSpec};
use crate::error::{Error, Result};
use crate::modem::{
    dcsk_demodulate, dcsk_modulate, mcdcsk_decode, mcdcsk_frame, BitBlock, ChipFrame, FrameParams, ReceivedFrame,
};
use crate::waveform::{
    design_srrc, multiuser_plans, samples_per_chip_for, WaveformLink, DEFAULT_SPAN_CHIPS,
};

/// Two-sided 95 % standard normal quantile.
const Z_95: f64 = 1.959_963_984_540_054;

/// Approximate number of bits per parallel work item.
const BLOCK_BITS: u64 = 4096;

const CHAOS_BRANCH: u64 = u64::MAX;
const BITS_BRANCH: u64 = u64::MAX - 1;
const WAVEFORM_NOISE_BRANCH: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    ChipLevel,
    Waveform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSettings {
    /// `None` picks the smallest Nyquist-feasible value.
    pub samples_per_chip: Option<usize>,
    pub fundamental_freq: f64,
    pub span_chips: usize,
}

impl WaveformSettings {
    pub fn for_bandwidth(bandwidth: f64) -> Self {
        Self {
            samples_per_chip: None,
            fundamental_freq: 2.0 * bandwidth,
            span_chips: DEFAULT_SPAN_CHIPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub params: FrameParams,
    pub chaos_map: ChaosMapKind,
    pub model: Model,
    pub ebn0_grid_db: Vec<f64>,
    pub max_bits: u64,
    pub target_errors: u64,
    pub master_seed: u64,
    pub users: usize,
    pub waveform: WaveformSettings,
}

impl ExperimentConfig {
    pub fn new(params: FrameParams) -> Self {
        Self {
            params,
            chaos_map: ChaosMapKind::default(),
            model: Model::default(),
            ebn0_grid_db: (0..=7).map(|i| 2.0 * i as f64).collect(),
            max_bits: 10_000_000,
            target_errors: 100,
            master_seed: 0,
            users: 1,
            waveform: WaveformSettings::for_bandwidth(params.bandwidth),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.m_subcarriers < 2 {
            return Err(Error::TooFewSubcarriers(self.params.m_subcarriers));
        }
        if self.params.spreading_factor == 0 {
            return Err(Error::InvalidParameter("spreading factor must be ≥ 1".into()));
        }
        if self.max_bits < 1000 {
            return Err(Error::InvalidParameter(format!("max_bits {} < 1000", self.max_bits)));
        }
        if self.target_errors < 10 {
            return Err(Error::InvalidParameter(format!(
                "target_errors {} < 10",
                self.target_errors
            )));
        }
        if self.ebn0_grid_db.is_empty() {
            return Err(Error::InvalidParameter("Eb/N0 grid is empty".into()));
        }
        if self.ebn0_grid_db.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidParameter("Eb/N0 grid contains NaN".into()));
        }
        if self.ebn0_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("Eb/N0 grid must be strictly increasing".into()));
        }
        if self.users == 0 {
            return Err(Error::InvalidParameter("users must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// One measured point of a BER curve with its 95 % Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub ebn0_db: f64,
    pub bits_simulated: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl BerPoint {
    pub fn from_counts(ebn0_db: f64, bits_simulated: u64, bit_errors: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(bit_errors, bits_simulated);
        let ber = if bits_simulated == 0 {
            0.0
        } else {
            bit_errors as f64 / bits_simulated as f64
        };
        Self {
            ebn0_db,
            bits_simulated,
            bit_errors,
            ber,
            ci_low: ci_low.min(ber),
            ci_high: ci_high.max(ber),
        }
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn overlaps(&self, other: &BerPoint) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// 95 % Wilson score interval for `errors` successes in `trials`.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Coherent BPSK over AWGN, `½·erfc(√(Eb/N0))`.
pub fn bpsk_reference(ebn0_db: f64) -> f64 {
    let ratio = 10f64.powf(ebn0_db / 10.0);
    0.5 * statrs::function::erf::erfc(ratio.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scheme {
    McDcsk,
    Dcsk,
}

fn user_seed(master: u64, user: usize) -> u64 {
    if user == 0 {
        master
    } else {
        splitmix64(master ^ (user as u64).wrapping_mul(0xa076_1d64_78bd_642f))
    }
}

fn random_bits(stream: u64, n: usize) -> Vec<i8> {
    let mut rng = stream_rng(stream);
    (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
}

fn frame_reference(cfg: &ExperimentConfig, seed: u64, frame: u64) -> Result<ChaoticSequence> {
    let beta = cfg.params.spreading_factor;
    normalize_energy(generate_sequence(cfg.chaos_map, substream(seed, frame, CHAOS_BRANCH), beta)?)
}

fn frame_chips(cfg: &ExperimentConfig, seed: u64, frame: u64) -> Result<(BitBlock, ChipFrame)> {
    let reference = frame_reference(cfg, seed, frame)?;
    let bits = BitBlock::new(random_bits(
        substream(seed, frame, BITS_BRANCH),
        cfg.params.bits_per_frame(),
    ))?;
    let chips = mcdcsk_frame(&bits, &reference, &cfg.params)?;
    Ok((bits, chips))
}

/// Bits and chips of frame `frame` for user `user`; every simulation and
/// the PSD generator draw frames through here.
pub fn user_frame(cfg: &ExperimentConfig, user: usize, frame: u64) -> Result<(BitBlock, ChipFrame)> {
    frame_chips(cfg, user_seed(cfg.master_seed, user), frame)
}

/// Bit energy in chip units for normalized chips.
fn chip_bit_energy(cfg: &ExperimentConfig, scheme: Scheme) -> Result<f64> {
    let e = cfg.params.spreading_factor as f64;
    match scheme {
        Scheme::McDcsk => bit_energy(cfg.params.m_subcarriers, e, e),
        Scheme::Dcsk => bit_energy(2, e, e),
    }
}

/// Runs frames until every user has `target_errors` errors or `max_bits`
/// bits. Returns per-user `(bits, errors)`.
fn run_frames<F>(cfg: &ExperimentConfig, users: usize, bits_per_frame: u64, simulate: F) -> Result<Vec<(u64, u64)>>
where
    F: Fn(u64) -> Result<Vec<u64>> + Sync,
{
    let frames_per_block = (BLOCK_BITS / bits_per_frame).max(1);
    let blocks_per_wave = (2 * rayon::current_num_threads()).max(1) as u64;
    let mut errors = vec![0u64; users];
    let mut frames = 0u64;
    loop {
        let wave_start = frames;
        let wave: Vec<Result<Vec<Vec<u64>>>> = (0..blocks_per_wave)
            .into_par_iter()
            .map(|b| {
                let start = wave_start + b * frames_per_block;
                (start..start + frames_per_block).map(&simulate).collect()
            })
            .collect();
        for block in wave {
            for frame_errors in block? {
                for (total, e) in errors.iter_mut().zip(frame_errors) {
                    *total += e;
                }
                frames += 1;
                let bits = frames * bits_per_frame;
                if bits >= cfg.max_bits || errors.iter().all(|e| *e >= cfg.target_errors) {
                    return Ok(errors.into_iter().map(|e| (bits, e)).collect());
                }
            }
        }
    }
}

fn add_branch_noise(rx: &mut ReceivedFrame, noise: NoiseSpec, seed: u64, frame: u64) {
    let beta = rx.beta();
    add_awgn(rx.reference_mut(), &noise.with_stream(substream(seed, frame, 0)));
    for (i, row) in rx.data_mut().chunks_exact_mut(beta).enumerate() {
        add_awgn(row, &noise.with_stream(substream(seed, frame, i as u64 + 1)));
    }
}

fn chip_level_point(cfg: &ExperimentConfig, scheme: Scheme, user: usize, ebn0_db: f64) -> Result<BerPoint> {
    let noise = calibrate_noise(ebn0_db, chip_bit_energy(cfg, scheme)?)?;
    let seed = user_seed(cfg.master_seed, user);
    let beta = cfg.params.spreading_factor;
    let counts = match scheme {
        Scheme::McDcsk => run_frames(cfg, 1, cfg.params.bits_per_frame() as u64, |frame| {
            let (bits, chips) = frame_chips(cfg, seed, frame)?;
            let mut rx = ReceivedFrame::from_chip_frame(&chips)?;
            add_branch_noise(&mut rx, noise, seed, frame);
            Ok(vec![mcdcsk_decode(&rx).errors_against(&bits) as u64])
        })?,
        Scheme::Dcsk => run_frames(cfg, 1, 1, |frame| {
            let reference = frame_reference(cfg, seed, frame)?;
            let bit = random_bits(substream(seed, frame, BITS_BRANCH), 1)[0];
            let mut tx = dcsk_modulate(bit, &reference);
            let (first, second) = tx.split_at_mut(beta);
            add_awgn(first, &noise.with_stream(substream(seed, frame, 0)));
            add_awgn(second, &noise.with_stream(substream(seed, frame, 1)));
            Ok(vec![u64::from(dcsk_demodulate(&tx, beta)? != bit)])
        })?,
    };
    let (bits, errors) = counts[0];
    Ok(BerPoint::from_counts(ebn0_db, bits, errors))
}

/// Shared-medium waveform simulation of `users` users on adjacent bands.
fn waveform_points(cfg: &ExperimentConfig, users: usize, ebn0_db: f64) -> Result<Vec<BerPoint>> {
    let params = &cfg.params;
    let settings = &cfg.waveform;
    let l = samples_per_chip_for(params, settings.fundamental_freq, users, settings.samples_per_chip);
    let plans = multiuser_plans(params, settings.fundamental_freq, users, l)?;
    let filt = design_srrc(params.rolloff, settings.span_chips, l)?;
    let links = plans
        .iter()
        .map(|plan| WaveformLink::new(params, plan, &filt))
        .collect::<Result<Vec<_>>>()?;
    // cosine carriers halve the passband energy of every chip
    let noise = calibrate_noise(ebn0_db, chip_bit_energy(cfg, Scheme::McDcsk)? / 2.0)?;
    let seeds: Vec<u64> = (0..users).map(|u| user_seed(cfg.master_seed, u)).collect();
    let counts = run_frames(cfg, users, params.bits_per_frame() as u64, |frame| {
        let mut samples = vec![0.0; links[0].len()];
        let mut sent = Vec::with_capacity(users);
        for (link, &seed) in links.iter().zip(&seeds) {
            let (bits, chips) = frame_chips(cfg, seed, frame)?;
            link.transmit_into(&chips, &mut samples)?;
            sent.push(bits);
        }
        add_awgn(
            &mut samples,
            &noise.with_stream(substream(cfg.master_seed, frame, WAVEFORM_NOISE_BRANCH)),
        );
        links
            .iter()
            .zip(&sent)
            .map(|(link, bits)| Ok(mcdcsk_decode(&link.receive(&samples)?).errors_against(bits) as u64))
            .collect()
    })?;
    Ok(counts
        .into_iter()
        .map(|(bits, errors)| BerPoint::from_counts(ebn0_db, bits, errors))
        .collect())
}

/// Measures one MC-DCSK point for user 0. `+∞` dB runs noise-free.
pub fn run_ber_point(cfg: &ExperimentConfig, ebn0_db: f64) -> Result<BerPoint> {
    cfg.validate()?;
    match cfg.model {
        Model::ChipLevel => chip_level_point(cfg, Scheme::McDcsk, 0, ebn0_db),
        Model::Waveform => Ok(waveform_points(cfg, 1, ebn0_db)?[0]),
    }
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<BerPoint>> {
    cfg.validate()?;
    cfg.ebn0_grid_db.iter().map(|&db| run_ber_point(cfg, db)).collect()
}

/// Conventional DCSK with the configured β (2β chips per bit), simulated
/// at chip level whatever `cfg.model` says. Frame `f` of this run and frame
/// `f` of a two-subcarrier MC-DCSK run share reference, bit and noise.
pub fn run_dcsk_point(cfg: &ExperimentConfig, ebn0_db: f64) -> Result<BerPoint> {
    cfg.validate()?;
    chip_level_point(cfg, Scheme::Dcsk, 0, ebn0_db)
}

pub fn run_dcsk_sweep(cfg: &ExperimentConfig) -> Result<Vec<BerPoint>> {
    cfg.validate()?;
    cfg.ebn0_grid_db.iter().map(|&db| run_dcsk_point(cfg, db)).collect()
}

/// Per-user BER curves, indexed `[user][grid point]`.
///
/// At chip level users are independent links with their own seeds. The
/// waveform model sums all users on one sample grid, user `u` offset by
/// `u·B`, and receives each from the shared noisy signal.
pub fn run_multiuser(cfg: &ExperimentConfig) -> Result<Vec<Vec<BerPoint>>> {
    cfg.validate()?;
    match cfg.model {
        Model::ChipLevel => (0..cfg.users)
            .map(|u| {
                cfg.ebn0_grid_db
                    .iter()
                    .map(|&db| chip_level_point(cfg, Scheme::McDcsk, u, db))
                    .collect()
            })
            .collect(),
        Model::Waveform => {
            let mut per_user = vec![Vec::with_capacity(cfg.ebn0_grid_db.len()); cfg.users];
            for &db in &cfg.ebn0_grid_db {
                for (curve, point) in per_user.iter_mut().zip(waveform_points(cfg, cfg.users, db)?) {
                    curve.push(point);
                }
            }
            Ok(per_user)
        }
    }
}
