//! Passband waveform model.
//!
//! Chips are shaped by a unit-energy square-root raised-cosine pulse sampled
//! `L` times per chip, each frame row rides its own cosine subcarrier, and the
//! receiver downconverts, matched-filters and samples once per chip. The
//! model is real-valued; subcarriers sit on a uniform grid `f_p + i·Δ` with
//! `Δ = (1 + α)/Tc`, so their bands are disjoint.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::modem::{dot, ChipFrame, FrameParams, ReceivedFrame};

/// Default one-sided filter span in chips.
pub const DEFAULT_SPAN_CHIPS: usize = 8;
/// Lower bound on samples per chip.
pub const MIN_SAMPLES_PER_CHIP: usize = 8;
/// `power_db` value reported for bins with zero power.
pub const PSD_FLOOR_DB: f64 = -300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SrrcFilter {
    pub rolloff: f64,
    pub span_chips: usize,
    pub samples_per_chip: usize,
    pub taps: Vec<f64>,
}

impl SrrcFilter {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Samples between the start of a shaped chip and its peak.
    pub fn group_delay(&self) -> usize {
        self.span_chips * self.samples_per_chip
    }
}

/// Square-root raised-cosine impulse response at `t` chip durations.
fn srrc_at(alpha: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0 - alpha + 4.0 * alpha / PI;
    }
    let four_at = 4.0 * alpha * t;
    if alpha > 0.0 && (1.0 - four_at * four_at).abs() < 1e-10 {
        let q = PI / (4.0 * alpha);
        return alpha * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * q.sin() + (1.0 - 2.0 / PI) * q.cos());
    }
    ((PI * t * (1.0 - alpha)).sin() + four_at * (PI * t * (1.0 + alpha)).cos())
        / (PI * t * (1.0 - four_at * four_at))
}

pub fn design_srrc(rolloff: f64, span_chips: usize, samples_per_chip: usize) -> Result<SrrcFilter> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::InvalidFilter(format!("rolloff {rolloff} outside [0, 1]")));
    }
    if span_chips < 4 {
        return Err(Error::InvalidFilter(format!("span {span_chips} < 4 chips")));
    }
    if samples_per_chip < 2 {
        return Err(Error::InvalidFilter(format!(
            "{samples_per_chip} samples per chip, need at least 2"
        )));
    }
    let half = span_chips * samples_per_chip;
    let one_side: Vec<f64> = (0..=half)
        .map(|n| srrc_at(rolloff, n as f64 / samples_per_chip as f64))
        .collect();
    let mut taps: Vec<f64> = one_side.iter().rev().chain(&one_side[1..]).copied().collect();
    let norm = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|h| *h /= norm);
    Ok(SrrcFilter {
        rolloff,
        span_chips,
        samples_per_chip,
        taps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubcarrierPlan {
    pub fundamental_freq: f64,
    pub spacing: f64,
    pub m: usize,
    pub phases: Vec<f64>,
    pub sample_rate: f64,
}

impl SubcarrierPlan {
    /// Grid for one user starting at `fundamental_freq`, zero phases.
    pub fn new(params: &FrameParams, fundamental_freq: f64, sample_rate: f64) -> Result<Self> {
        let plan = Self {
            fundamental_freq,
            spacing: params.subcarrier_bandwidth(),
            m: params.m_subcarriers,
            phases: vec![0.0; params.m_subcarriers],
            sample_rate,
        };
        plan.check_nyquist()?;
        Ok(plan)
    }

    pub fn required_sample_rate(&self) -> f64 {
        2.0 * (self.fundamental_freq + (self.m as f64 + 1.0) * self.spacing)
    }

    pub fn check_nyquist(&self) -> Result<()> {
        let required = self.required_sample_rate();
        if self.sample_rate < required * (1.0 - 1e-12) {
            return Err(Error::Nyquist {
                sample_rate: self.sample_rate,
                required,
            });
        }
        Ok(())
    }

    /// Frequency of subcarrier `i` for `i = 1..=M`.
    pub fn frequency(&self, i: usize) -> f64 {
        self.fundamental_freq + i as f64 * self.spacing
    }

    /// Subcarrier carrying frame row `row` (row 0 → subcarrier 1).
    pub fn row_frequency(&self, row: usize) -> f64 {
        self.frequency(row + 1)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.m).map(|i| self.frequency(i)).collect()
    }

    fn carrier(&self, row: usize, len: usize) -> Vec<f64> {
        let w = TAU * self.row_frequency(row) / self.sample_rate;
        let phi = self.phases[row];
        (0..len).map(|n| (w * n as f64 + phi).cos()).collect()
    }
}

/// Samples per chip used by the waveform model: the requested value, or the
/// smallest value at least [`MIN_SAMPLES_PER_CHIP`] that keeps every user's
/// band below Nyquist.
pub fn samples_per_chip_for(
    params: &FrameParams,
    fundamental_freq: f64,
    users: usize,
    requested: Option<usize>,
) -> usize {
    requested.unwrap_or_else(|| {
        let top = fundamental_freq
            + users.saturating_sub(1) as f64 * params.bandwidth
            + (params.m_subcarriers as f64 + 1.0) * params.subcarrier_bandwidth();
        let needed = (2.0 * top * params.chip_duration() * (1.0 - 1e-12)).ceil() as usize;
        needed.max(MIN_SAMPLES_PER_CHIP)
    })
}

/// One plan per user; user `u` is offset by `u·B`.
pub fn multiuser_plans(
    params: &FrameParams,
    fundamental_freq: f64,
    users: usize,
    samples_per_chip: usize,
) -> Result<Vec<SubcarrierPlan>> {
    if users == 0 {
        return Err(Error::InvalidParameter("at least one user is required".into()));
    }
    if !(fundamental_freq > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "fundamental frequency must be positive, got {fundamental_freq}"
        )));
    }
    let sample_rate = samples_per_chip as f64 / params.chip_duration();
    (0..users)
        .map(|u| SubcarrierPlan::new(params, fundamental_freq + u as f64 * params.bandwidth, sample_rate))
        .collect()
}

fn check_plan_matches(plan: &SubcarrierPlan, rows: usize, filt: &SrrcFilter) -> Result<()> {
    if plan.m != rows || plan.phases.len() != rows {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} subcarriers, frame has {rows} rows",
            plan.m
        )));
    }
    plan.check_nyquist()?;
    if filt.samples_per_chip < 2 {
        return Err(Error::InvalidFilter("fewer than 2 samples per chip".into()));
    }
    Ok(())
}

/// Number of samples produced for `beta` chips.
pub fn waveform_len(beta: usize, filt: &SrrcFilter) -> usize {
    (beta + 2 * filt.span_chips) * filt.samples_per_chip
}

fn shape_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    beta: usize,
    plan: &SubcarrierPlan,
    filt: &SrrcFilter,
) -> Vec<f64> {
    let l = filt.samples_per_chip;
    let len = waveform_len(beta, filt);
    let mut out = vec![0.0; len];
    let mut baseband = vec![0.0; len];
    for (r, row) in rows.enumerate() {
        if row.iter().all(|c| *c == 0.0) {
            continue;
        }
        baseband.iter_mut().for_each(|v| *v = 0.0);
        for (k, &chip) in row.iter().enumerate() {
            if chip == 0.0 {
                continue;
            }
            for (b, h) in baseband[k * l..].iter_mut().zip(&filt.taps) {
                *b += chip * h;
            }
        }
        for ((o, b), c) in out.iter_mut().zip(&baseband).zip(plan.carrier(r, len)) {
            *o += b * c;
        }
    }
    out
}

/// Pulse-shapes every row and places it on its subcarrier.
pub fn shape_and_modulate(frame: &ChipFrame, plan: &SubcarrierPlan, filt: &SrrcFilter) -> Result<Vec<f64>> {
    check_plan_matches(plan, frame.num_rows(), filt)?;
    Ok(shape_rows(frame.rows(), frame.beta(), plan, filt))
}

/// Shapes a long stream: `rows[r]` is the concatenated chips of subcarrier
/// `r` across consecutive frames.
pub fn shape_stream(rows: &[Vec<f64>], plan: &SubcarrierPlan, filt: &SrrcFilter) -> Result<Vec<f64>> {
    let beta = rows.first().map_or(0, Vec::len);
    if beta == 0 || rows.iter().any(|r| r.len() != beta) {
        return Err(Error::DimensionMismatch("stream rows must be equal and non-empty".into()));
    }
    check_plan_matches(plan, rows.len(), filt)?;
    Ok(shape_rows(rows.iter().map(Vec::as_slice), beta, plan, filt))
}

/// Coherent per-subcarrier receiver: downconversion with gain 2, matched
/// filtering and sampling at each chip peak.
pub fn matched_filter_bank(
    samples: &[f64],
    plan: &SubcarrierPlan,
    filt: &SrrcFilter,
    params: &FrameParams,
) -> Result<ReceivedFrame> {
    let rows = params.m_subcarriers;
    check_plan_matches(plan, rows, filt)?;
    let beta = params.spreading_factor;
    let expected = waveform_len(beta, filt);
    if samples.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "expected {expected} samples for {beta} chips, got {}",
            samples.len()
        )));
    }
    let expected_rate = filt.samples_per_chip as f64 / params.chip_duration();
    if (plan.sample_rate - expected_rate).abs() > 1e-9 * expected_rate {
        return Err(Error::InvalidParameter(format!(
            "plan sample rate {} does not match {} samples per chip",
            plan.sample_rate, filt.samples_per_chip
        )));
    }
    let l = filt.samples_per_chip;
    let n = filt.len();
    let mut branches = Vec::with_capacity(rows);
    for r in 0..rows {
        let mixed: Vec<f64> = samples
            .iter()
            .zip(plan.carrier(r, samples.len()))
            .map(|(s, c)| 2.0 * s * c)
            .collect();
        let chips: Vec<f64> = (0..beta).map(|k| dot(&mixed[k * l..k * l + n], &filt.taps)).collect();
        branches.push(chips);
    }
    let p = branches.remove(0);
    ReceivedFrame::from_rows(p, &branches)
}

/// Transmitter/receiver pair for fixed-size frames with the per-chip
/// carrier-weighted pulses precomputed. Produces the same samples as
/// [`shape_and_modulate`] / [`matched_filter_bank`].
#[derive(Debug, Clone)]
pub struct WaveformLink {
    beta: usize,
    rows: usize,
    samples_per_chip: usize,
    len: usize,
    // weights[(r * beta + k) * taps + j] = h[j]·cos(carrier_r at sample kL + j)
    weights: Vec<f64>,
    taps: usize,
}

impl WaveformLink {
    pub fn new(params: &FrameParams, plan: &SubcarrierPlan, filt: &SrrcFilter) -> Result<Self> {
        let rows = params.m_subcarriers;
        check_plan_matches(plan, rows, filt)?;
        let expected_rate = filt.samples_per_chip as f64 / params.chip_duration();
        if (plan.sample_rate - expected_rate).abs() > 1e-9 * expected_rate {
            return Err(Error::InvalidParameter("plan sample rate does not match filter".into()));
        }
        let beta = params.spreading_factor;
        let l = filt.samples_per_chip;
        let taps = filt.len();
        let len = waveform_len(beta, filt);
        let mut weights = Vec::with_capacity(rows * beta * taps);
        for r in 0..rows {
            let carrier = plan.carrier(r, len);
            for k in 0..beta {
                weights.extend(filt.taps.iter().zip(&carrier[k * l..]).map(|(h, c)| h * c));
            }
        }
        Ok(Self {
            beta,
            rows,
            samples_per_chip: l,
            len,
            weights,
            taps,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn pulse(&self, row: usize, chip: usize) -> &[f64] {
        let start = (row * self.beta + chip) * self.taps;
        &self.weights[start..start + self.taps]
    }

    /// Adds the passband signal of `frame` to `out`.
    pub fn transmit_into(&self, frame: &ChipFrame, out: &mut [f64]) -> Result<()> {
        if frame.num_rows() != self.rows || frame.beta() != self.beta || out.len() != self.len {
            return Err(Error::DimensionMismatch("frame does not fit this link".into()));
        }
        for (r, row) in frame.rows().enumerate() {
            for (k, &chip) in row.iter().enumerate() {
                let start = k * self.samples_per_chip;
                for (o, w) in out[start..start + self.taps].iter_mut().zip(self.pulse(r, k)) {
                    *o += chip * w;
                }
            }
        }
        Ok(())
    }

    pub fn transmit(&self, frame: &ChipFrame) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len];
        self.transmit_into(frame, &mut out)?;
        Ok(out)
    }

    pub fn receive(&self, samples: &[f64]) -> Result<ReceivedFrame> {
        if samples.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples, got {}",
                self.len,
                samples.len()
            )));
        }
        let mut branch = |r: usize| -> Vec<f64> {
            (0..self.beta)
                .map(|k| {
                    let start = k * self.samples_per_chip;
                    2.0 * dot(&samples[start..start + self.taps], self.pulse(r, k))
                })
                .collect()
        };
        let p = branch(0);
        let s: Vec<f64> = (1..self.rows).flat_map(&mut branch).collect();
        ReceivedFrame::new(p, s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    pub power_db: Vec<f64>,
    pub resolution_bw: f64,
}

impl PsdEstimate {
    pub fn linear(&self) -> Vec<f64> {
        self.power_db
            .iter()
            .map(|db| if *db <= PSD_FLOOR_DB { 0.0 } else { 10f64.powf(db / 10.0) })
            .collect()
    }

    /// Integrated power, `Σ psd · Δf`.
    pub fn total_power(&self) -> f64 {
        self.linear().iter().sum::<f64>() * self.resolution_bw
    }

    pub fn bin_of(&self, freq: f64) -> usize {
        let i = (freq / self.resolution_bw).round();
        (i.max(0.0) as usize).min(self.freqs.len() - 1)
    }
}

fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(PSD_FLOOR_DB)
    } else {
        PSD_FLOOR_DB
    }
}

/// Averaged periodogram with Hann-tapered, 50 % overlapping segments,
/// scaled as a one-sided density (power per Hz).
pub fn estimate_psd(samples: &[f64], sample_rate: f64, segment_len: usize) -> Result<PsdEstimate> {
    if segment_len < 2 {
        return Err(Error::InvalidParameter("segment length must be at least 2".into()));
    }
    if !(sample_rate > 0.0) {
        return Err(Error::InvalidParameter(format!("sample rate {sample_rate} not positive")));
    }
    if samples.len() < 2 * segment_len {
        return Err(Error::TooFewSamples {
            needed: 2 * segment_len,
            got: samples.len(),
        });
    }
    let hop = segment_len / 2;
    let window: Vec<f64> = (0..segment_len)
        .map(|n| 0.5 - 0.5 * (TAU * n as f64 / segment_len as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];
    let mut segments = 0usize;
    let mut start = 0;
    while start + segment_len <= samples.len() {
        for ((b, x), w) in buf.iter_mut().zip(&samples[start..start + segment_len]).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += hop;
    }
    let scale = 1.0 / (segments as f64 * sample_rate * window_power);
    let power_db = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (segment_len.is_multiple_of(2) && k == bins - 1) { 1.0 } else { 2.0 };
            to_db(p * scale * one_sided)
        })
        .collect();
    let resolution_bw = sample_rate / segment_len as f64;
    Ok(PsdEstimate {
        freqs: (0..bins).map(|k| k as f64 * resolution_bw).collect(),
        power_db,
        resolution_bw,
    })
}

/// A contiguous run of bins above a threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lobe {
    /// Power-weighted centroid.
    pub center_hz: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    pub peak_db: f64,
    pub first_bin: usize,
    pub last_bin: usize,
}

/// Spectral lobes: maximal runs of bins within `drop_db` of the global peak.
pub fn find_lobes(psd: &PsdEstimate, drop_db: f64) -> Vec<Lobe> {
    let peak = psd.power_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak <= PSD_FLOOR_DB {
        return Vec::new();
    }
    let threshold = peak - drop_db;
    let linear = psd.linear();
    let mut lobes = Vec::new();
    let mut i = 0;
    let n = psd.power_db.len();
    while i < n {
        if psd.power_db[i] < threshold {
            i += 1;
            continue;
        }
        let first = i;
        while i < n && psd.power_db[i] >= threshold {
            i += 1;
        }
        let last = i - 1;
        let (num, den) = (first..=last).fold((0.0, 0.0), |(a, b), k| {
            (a + linear[k] * psd.freqs[k], b + linear[k])
        });
        lobes.push(Lobe {
            center_hz: num / den,
            low_hz: psd.freqs[first],
            high_hz: psd.freqs[last],
            peak_db: psd.power_db[first..=last].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            first_bin: first,
            last_bin: last,
        });
    }
    lobes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{generate_sequence, normalize_energy, ChaosMapKind};
    use crate::modem::{mcdcsk_decode, mcdcsk_frame, BitBlock};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_params(m: usize) -> FrameParams {
        FrameParams::derive(400.0, 1.0, m, 0.25).unwrap()
    }

    fn setup(m: usize, users: usize) -> (FrameParams, Vec<SubcarrierPlan>, SrrcFilter) {
        let p = default_params(m);
        let l = samples_per_chip_for(&p, 2.0, users, None);
        let plans = multiuser_plans(&p, 2.0, users, l).unwrap();
        let filt = design_srrc(p.rolloff, DEFAULT_SPAN_CHIPS, l).unwrap();
        (p, plans, filt)
    }

    fn random_frame(p: &FrameParams, rng: &mut ChaCha8Rng) -> (BitBlock, ChipFrame) {
        let x = normalize_energy(generate_sequence(ChaosMapKind::Chebyshev2, rng.random(), p.spreading_factor).unwrap())
            .unwrap();
        let bits = BitBlock::new((0..p.bits_per_frame()).map(|_| if rng.random() { 1 } else { -1 }).collect()).unwrap();
        let frame = mcdcsk_frame(&bits, &x, p).unwrap();
        (bits, frame)
    }

    #[test]
    fn srrc_unit_energy_and_symmetry() {
        for alpha in [0.0, 0.1, 0.25, 0.5, 1.0] {
            for (span, l) in [(4, 2), (8, 8), (8, 43), (12, 5)] {
                let f = design_srrc(alpha, span, l).unwrap();
                assert_eq!(f.len(), 2 * span * l + 1);
                let e: f64 = f.taps.iter().map(|h| h * h).sum();
                assert!((e - 1.0).abs() < 1e-9);
                let n = f.len();
                for k in 0..n {
                    assert!((f.taps[k] - f.taps[n - 1 - k]).abs() < 1e-12);
                }
                assert!(f.taps.iter().all(|h| h.is_finite()));
            }
        }
    }

    #[test]
    fn srrc_singular_points_are_continuous() {
        // t = ±1/(4α) lands on the grid for α = 0.25, L = 8
        let f = design_srrc(0.25, 8, 8).unwrap();
        let c = f.group_delay();
        let scale = f.taps[c] / srrc_at(0.25, 0.0);
        for side in [-1e-7, 1e-7] {
            assert!((f.taps[c + 8] / scale - srrc_at(0.25, 1.0 + side)).abs() < 1e-6);
            assert!((f.taps[c - 8] / scale - srrc_at(0.25, -1.0 + side)).abs() < 1e-6);
        }
        let limit = srrc_at(0.25, 1.0);
        let near = srrc_at(0.25, 1.0 + 1e-7);
        assert!((limit - near).abs() < 1e-6);
        assert!((srrc_at(0.3, 1e-9) - srrc_at(0.3, 0.0)).abs() < 1e-6);
    }

    #[test]
    fn srrc_rejects_bad_inputs() {
        assert!(design_srrc(-0.1, 8, 8).is_err());
        assert!(design_srrc(1.1, 8, 8).is_err());
        assert!(design_srrc(0.25, 3, 8).is_err());
        assert!(design_srrc(0.25, 8, 1).is_err());
    }

    /// Self-convolution sampled at chip instants, by direct summation.
    fn isi_ratio(f: &SrrcFilter) -> f64 {
        let n = f.len();
        let conv = |lag: isize| -> f64 {
            (0..n as isize)
                .filter_map(|i| {
                    let j = i + lag;
                    (0..n as isize).contains(&j).then(|| f.taps[i as usize] * f.taps[j as usize])
                })
                .sum()
        };
        let peak = conv(0);
        let l = f.samples_per_chip as isize;
        (1..=(2 * f.span_chips) as isize)
            .map(|k| conv(k * l).abs().max(conv(-k * l).abs()))
            .fold(0.0, f64::max)
            / peak
    }

    #[test]
    fn srrc_nyquist_isi() {
        for alpha in [0.25, 0.5, 1.0] {
            let f = design_srrc(alpha, 8, 8).unwrap();
            assert!(isi_ratio(&f) < 1e-3, "alpha {alpha}: {}", isi_ratio(&f));
        }
        // longer spans only get better
        let f = design_srrc(0.25, 16, 8).unwrap();
        assert!(isi_ratio(&f) < 2e-4);
    }

    #[test]
    fn plan_grid_and_nyquist() {
        let p = default_params(4);
        let plan = SubcarrierPlan::new(&p, 2.0, 10.0).unwrap();
        assert!((plan.spacing - 0.25).abs() < 1e-12);
        assert_eq!(plan.frequencies(), vec![2.25, 2.5, 2.75, 3.0]);
        let err = SubcarrierPlan::new(&p, 2.0, 6.0).unwrap_err();
        assert!(matches!(err, Error::Nyquist { .. }));
        assert_eq!(samples_per_chip_for(&p, 2.0, 1, None), 33);
        assert_eq!(samples_per_chip_for(&p, 2.0, 2, None), 43);
        assert_eq!(samples_per_chip_for(&p, 2.0, 2, Some(50)), 50);
        assert!(multiuser_plans(&p, 2.0, 1, 20).is_err());
    }

    #[test]
    fn single_row_tone() {
        // one all-ones row with α = 0: a shaped tone whose spectrum peaks at f_1
        let p = FrameParams::with_spreading_factor(400.0, 1.0, 2, 0.0, 200).unwrap();
        let p = FrameParams { m_subcarriers: 1, ..p };
        let filt = design_srrc(0.0, 8, 16).unwrap();
        let plan = SubcarrierPlan {
            fundamental_freq: 0.5,
            spacing: p.subcarrier_bandwidth(),
            m: 1,
            phases: vec![0.0],
            sample_rate: 16.0 / p.chip_duration(),
        };
        let frame = ChipFrame::from_rows(&[vec![1.0; 200]]).unwrap();
        let y = shape_and_modulate(&frame, &plan, &filt).unwrap();
        assert_eq!(y.len(), (200 + 16) * 16);
        let psd = estimate_psd(&y, plan.sample_rate, 512).unwrap();
        let peak = (0..psd.freqs.len())
            .max_by(|a, b| psd.power_db[*a].total_cmp(&psd.power_db[*b]))
            .unwrap();
        assert!((psd.freqs[peak] - plan.frequency(1)).abs() <= psd.resolution_bw);
    }

    #[test]
    fn zero_frame_gives_zero_waveform_and_zero_branches() {
        let (p, plans, filt) = setup(4, 1);
        let frame = ChipFrame::zeros(4, p.spreading_factor);
        let y = shape_and_modulate(&frame, &plans[0], &filt).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
        let rx = matched_filter_bank(&y, &plans[0], &filt, &p).unwrap();
        assert!(rx.reference().iter().all(|v| *v == 0.0));
        assert!(rx.statistics().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn waveform_energy_is_sum_of_row_energies() {
        // a cosine halves power, so passband energy is half the chip energy
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in [2, 4, 8] {
            let (p, plans, filt) = setup(m, 1);
            let (_, frame) = random_frame(&p, &mut rng);
            let y = shape_and_modulate(&frame, &plans[0], &filt).unwrap();
            let energy: f64 = y.iter().map(|v| v * v).sum();
            let rows: f64 = (0..m).map(|i| frame.row_energy(i)).sum();
            assert!((energy / (rows / 2.0) - 1.0).abs() < 0.02, "m {m}: {energy} vs {}", rows / 2.0);
        }
    }

    #[test]
    fn loopback_recovers_chips_and_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for m in [2, 4, 8] {
            let (p, plans, filt) = setup(m, 1);
            for _ in 0..100 {
                let (bits, frame) = random_frame(&p, &mut rng);
                let y = shape_and_modulate(&frame, &plans[0], &filt).unwrap();
                let rx = matched_filter_bank(&y, &plans[0], &filt, &p).unwrap();
                let mut err2 = 0.0;
                for (a, b) in rx.reference().iter().zip(frame.row(0)) {
                    err2 += (a - b).powi(2);
                }
                for i in 1..m {
                    for (a, b) in rx.data_row(i - 1).iter().zip(frame.row(i)) {
                        err2 += (a - b).powi(2);
                    }
                }
                let rms = (err2 / (m * p.spreading_factor) as f64).sqrt();
                assert!(rms < 1e-2, "m {m}: rms {rms}");
                assert_eq!(mcdcsk_decode(&rx), bits);
            }
        }
    }

    #[test]
    fn link_matches_reference_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for m in [2, 8] {
            let (p, plans, filt) = setup(m, 1);
            let link = WaveformLink::new(&p, &plans[0], &filt).unwrap();
            let (_, frame) = random_frame(&p, &mut rng);
            let a = shape_and_modulate(&frame, &plans[0], &filt).unwrap();
            let b = link.transmit(&frame).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
            let noisy: Vec<f64> = a.iter().map(|v| v + 0.1 * rng.random::<f64>()).collect();
            let ra = matched_filter_bank(&noisy, &plans[0], &filt, &p).unwrap();
            let rb = link.receive(&noisy).unwrap();
            for (x, y) in ra.statistics().iter().zip(rb.statistics()) {
                assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn receiver_rejects_mismatched_input() {
        let (p, plans, filt) = setup(4, 1);
        assert!(matched_filter_bank(&[0.0; 10], &plans[0], &filt, &p).is_err());
        let frame = ChipFrame::zeros(3, p.spreading_factor);
        assert!(shape_and_modulate(&frame, &plans[0], &filt).is_err());
        let mut bad = plans[0].clone();
        bad.sample_rate = 1.0;
        assert!(matches!(
            shape_and_modulate(&ChipFrame::zeros(4, p.spreading_factor), &bad, &filt),
            Err(Error::Nyquist { .. })
        ));
    }

    #[test]
    fn adjacent_band_leakage_below_one_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (p, plans, filt) = setup(8, 1);
        let beta = p.spreading_factor;
        for active in [1usize, 3, 6] {
            let chips = normalize_energy(generate_sequence(ChaosMapKind::Chebyshev2, rng.random(), beta).unwrap()).unwrap();
            let rows: Vec<Vec<f64>> = (0..8)
                .map(|r| if r == active { chips.chips().to_vec() } else { vec![0.0; beta] })
                .collect();
            let y = shape_and_modulate(&ChipFrame::from_rows(&rows).unwrap(), &plans[0], &filt).unwrap();
            let rx = matched_filter_bank(&y, &plans[0], &filt, &p).unwrap();
            let branch = |r: usize| if r == 0 { rx.reference().to_vec() } else { rx.data_row(r - 1).to_vec() };
            let energy = |v: Vec<f64>| v.iter().map(|x| x * x).sum::<f64>();
            let in_band = energy(branch(active));
            for nb in [active - 1, active + 1] {
                let leak = energy(branch(nb));
                assert!(leak < 0.01 * in_band, "row {active} -> {nb}: {leak} vs {in_band}");
            }
        }
    }

    #[test]
    fn psd_of_tone_and_power_normalization() {
        let fs = 100.0;
        let f0 = 12.3;
        let x: Vec<f64> = (0..40_000).map(|n| (TAU * f0 * n as f64 / fs).cos()).collect();
        let psd = estimate_psd(&x, fs, 1024).unwrap();
        let peak = (0..psd.freqs.len())
            .max_by(|a, b| psd.power_db[*a].total_cmp(&psd.power_db[*b]))
            .unwrap();
        assert!((psd.freqs[peak] - f0).abs() <= psd.resolution_bw);
        assert!((psd.total_power() / 0.5 - 1.0).abs() < 0.05);
        assert!(psd.freqs.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(psd.freqs.len(), psd.power_db.len());
    }

    #[test]
    fn psd_white_noise_is_flat() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let seg = 256;
        let x: Vec<f64> = (0..seg * 51).map(|_| StandardNormal.sample(&mut rng)).collect();
        let psd = estimate_psd(&x, 1.0, seg).unwrap();
        // 101 segments at 50 % overlap
        let interior = &psd.linear()[1..psd.freqs.len() - 1];
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        let worst = interior
            .iter()
            .map(|p| (10.0 * (p / mean).log10()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 3.0, "max deviation {worst} dB");
        let ms = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((psd.total_power() / ms - 1.0).abs() < 0.05);
    }

    #[test]
    fn psd_needs_two_segments() {
        assert!(matches!(
            estimate_psd(&[0.0; 100], 1.0, 64),
            Err(Error::TooFewSamples { needed: 128, got: 100 })
        ));
        let zero = estimate_psd(&[0.0; 256], 1.0, 64).unwrap();
        assert!(zero.power_db.iter().all(|p| *p == PSD_FLOOR_DB));
        assert!(find_lobes(&zero, 10.0).is_empty());
    }

    fn mcdcsk_stream(m: usize, frames: usize, seed: u64) -> (FrameParams, SubcarrierPlan, Vec<f64>) {
        let (p, plans, filt) = setup(m, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = vec![Vec::new(); m];
        for _ in 0..frames {
            let (_, frame) = random_frame(&p, &mut rng);
            for (acc, row) in rows.iter_mut().zip(frame.rows()) {
                acc.extend_from_slice(row);
            }
        }
        let y = shape_stream(&rows, &plans[0], &filt).unwrap();
        (p, plans[0].clone(), y)
    }

    #[test]
    fn mcdcsk_spectrum_has_disjoint_lobes() {
        let (p, plan, y) = mcdcsk_stream(4, 300, 8);
        let bc = p.subcarrier_bandwidth();
        let seg = (256.0 * plan.sample_rate / bc) as usize;
        let seg = seg.next_power_of_two();
        let psd = estimate_psd(&y, plan.sample_rate, seg).unwrap();
        let lobes = find_lobes(&psd, 10.0);
        assert_eq!(lobes.len(), 4, "{lobes:?}");
        let top = lobes.iter().map(|l| l.peak_db).fold(f64::NEG_INFINITY, f64::max);
        for (lobe, f) in lobes.iter().zip(plan.frequencies()) {
            assert!((lobe.center_hz - f).abs() <= psd.resolution_bw, "{} vs {f}", lobe.center_hz);
        }
        for pair in lobes.windows(2) {
            let gap = psd.power_db[pair[0].last_bin..=pair[1].first_bin]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            assert!(gap <= pair[0].peak_db.min(pair[1].peak_db) - 20.0, "null only {gap} vs {top}");
        }
        // -30 dB width of a lobe, bounded by its neighbouring nulls
        for (i, lobe) in lobes.iter().enumerate() {
            let lo = if i == 0 { 0 } else { lobes[i - 1].last_bin };
            let hi = if i + 1 == lobes.len() { psd.freqs.len() - 1 } else { lobes[i + 1].first_bin };
            let above: Vec<usize> = (lo..=hi).filter(|k| psd.power_db[*k] >= lobe.peak_db - 30.0).collect();
            let width = psd.freqs[*above.last().unwrap()] - psd.freqs[above[0]];
            // truncation skirts of the span-8 filter and of the neighbouring
            // lobes push the -30 dB edge slightly outwards
            assert!((width / bc - 1.0).abs() < 0.15, "lobe {i}: width {width} vs {bc}");
        }
        // a single user occupies about M·Bc = B
        let band = lobes.last().unwrap().high_hz - lobes[0].low_hz;
        assert!((band / p.bandwidth - 1.0).abs() < 0.1, "occupied {band}");
        let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!((psd.total_power() / ms - 1.0).abs() < 0.05);
    }
}
