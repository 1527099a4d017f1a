//! AWGN channel, Eb/N0 calibration and energy-efficiency bookkeeping.
//!
//! Energies are measured in chip units: a unit-energy chip pulse with
//! amplitude `x` carries energy `x²`, so a normalized `β`-chip row carries
//! `β`. Each matched-filter chip sample then sees noise of variance `N0/2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chaos::splitmix64;
use crate::error::{Error, Result};
use crate::modem::ChipFrame;

/// `E_b = E_data + E_ref/(M - 1)`.
pub fn bit_energy(m: usize, e_data: f64, e_ref: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::TooFewSubcarriers(m));
    }
    if e_data < 0.0 || e_ref < 0.0 {
        return Err(Error::InvalidParameter("energies must be non-negative".into()));
    }
    Ok(e_data + e_ref / (m - 1) as f64)
}

/// Data-energy-to-bit-energy ratio with equal per-subcarrier energies.
pub fn dbr(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::TooFewSubcarriers(m));
    }
    Ok((m - 1) as f64 / m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub m_subcarriers: usize,
    pub e_data: f64,
    pub e_ref: f64,
    pub e_bit: f64,
    pub dbr: f64,
}

impl EnergyReport {
    pub fn new(m: usize, e_data: f64, e_ref: f64) -> Result<Self> {
        let e_bit = bit_energy(m, e_data, e_ref)?;
        Ok(Self {
            m_subcarriers: m,
            e_data,
            e_ref,
            e_bit,
            dbr: if e_bit > 0.0 { e_data / e_bit } else { 0.0 },
        })
    }

    /// Measures a transmitted frame. `E_data` is the mean energy of the data
    /// rows.
    pub fn measure(frame: &ChipFrame) -> Result<Self> {
        let m = frame.num_rows();
        if m < 2 {
            return Err(Error::TooFewSubcarriers(m));
        }
        let e_data = (1..m).map(|i| frame.row_energy(i)).sum::<f64>() / (m - 1) as f64;
        Self::new(m, e_data, frame.row_energy(0))
    }
}

/// Noise level plus the identifier of the random substream that draws it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// One-sided density; samples have variance `n0/2`.
    pub n0: f64,
    pub rng_stream: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            n0: 0.0,
            rng_stream: 0,
        }
    }

    pub fn with_stream(self, rng_stream: u64) -> Self {
        Self { rng_stream, ..self }
    }

    pub fn sample_variance(&self) -> f64 {
        self.n0 / 2.0
    }

    /// Same level, rescaled so the per-sample variance becomes `variance`.
    pub fn with_sample_variance(self, variance: f64) -> Self {
        Self {
            n0: 2.0 * variance,
            ..self
        }
    }
}

/// `N0 = E_b / 10^(Eb/N0 dB / 10)`. `+∞` dB yields a noiseless channel.
pub fn calibrate_noise(ebn0_db: f64, e_bit: f64) -> Result<NoiseSpec> {
    if !(e_bit > 0.0) || !e_bit.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bit energy must be positive, got {e_bit}"
        )));
    }
    if ebn0_db.is_nan() {
        return Err(Error::InvalidParameter("Eb/N0 is NaN".into()));
    }
    Ok(NoiseSpec {
        n0: e_bit / 10f64.powf(ebn0_db / 10.0),
        rng_stream: 0,
    })
}

/// Identifier of an independent random substream, a pure function of the
/// experiment seed, frame index and branch index.
pub fn substream(master_seed: u64, frame: u64, branch: u64) -> u64 {
    let a = splitmix64(master_seed);
    let b = splitmix64(a ^ frame.wrapping_mul(0xd134_2543_de82_ef95));
    splitmix64(b ^ branch.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn stream_rng(stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream)
}

/// Adds the noise of `spec` in place.
pub fn add_awgn(signal: &mut [f64], spec: &NoiseSpec) {
    if spec.n0 == 0.0 {
        return;
    }
    let sigma = spec.sample_variance().sqrt();
    let mut rng = stream_rng(spec.rng_stream);
    for (s, n) in signal.iter_mut().zip(StandardNormal.sample_iter(&mut rng)) {
        let n: f64 = n;
        *s += sigma * n;
    }
}

pub fn apply_awgn(signal: &[f64], spec: &NoiseSpec) -> Vec<f64> {
    let mut out = signal.to_vec();
    add_awgn(&mut out, spec);
    out
}
