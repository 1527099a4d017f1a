//! DCSK and multi-carrier DCSK framing and correlator decoding.
//!
//! Bits are antipodal (`-1` / `+1`). A multi-carrier frame carries one
//! reference row followed by `M - 1` data rows, each the reference multiplied
//! by its bit. The receiver correlates every data row with the (noisy)
//! reference row and takes the sign.

use serde::{Deserialize, Serialize};

use crate::chaos::ChaoticSequence;
use crate::error::{Error, Result};

/// Antipodal decision with the tie broken towards `+1`.
#[inline]
pub fn decide(statistic: f64) -> i8 {
    if statistic < 0.0 {
        -1
    } else {
        1
    }
}

/// Largest integer spreading factor that fits `M` subcarriers of bandwidth
/// `(1 + α)/Tc` into `B` within one bit duration `Tb`.
pub fn spreading_factor(bit_duration: f64, bandwidth: f64, m: usize, rolloff: f64) -> Result<usize> {
    if !(bit_duration > 0.0) || !bit_duration.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bit duration must be positive, got {bit_duration}"
        )));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if m < 2 {
        return Err(Error::TooFewSubcarriers(m));
    }
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::InvalidParameter(format!(
            "rolloff must lie in [0, 1], got {rolloff}"
        )));
    }
    let budget = bit_duration * bandwidth / (m as f64 * (1.0 + rolloff));
    // absorb rounding error on budgets that are integers in exact arithmetic
    let beta = (budget * (1.0 + 1e-12)).floor();
    if beta < 1.0 {
        return Err(Error::InfeasibleBudget { budget });
    }
    Ok(beta as usize)
}

/// Frame-level parameter bundle `(M, β, Tb, B, α)`; `Tc = Tb/β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub m_subcarriers: usize,
    pub spreading_factor: usize,
    pub bit_duration: f64,
    pub bandwidth: f64,
    pub rolloff: f64,
}

impl FrameParams {
    /// Derives β from the bandwidth budget.
    pub fn derive(bit_duration: f64, bandwidth: f64, m: usize, rolloff: f64) -> Result<Self> {
        let beta = spreading_factor(bit_duration, bandwidth, m, rolloff)?;
        Ok(Self {
            m_subcarriers: m,
            spreading_factor: beta,
            bit_duration,
            bandwidth,
            rolloff,
        })
    }

    /// Uses an explicit β, which must not exceed the budget.
    pub fn with_spreading_factor(
        bit_duration: f64,
        bandwidth: f64,
        m: usize,
        rolloff: f64,
        beta: usize,
    ) -> Result<Self> {
        if beta == 0 {
            return Err(Error::InvalidParameter("spreading factor must be ≥ 1".into()));
        }
        let allowed = spreading_factor(bit_duration, bandwidth, m, rolloff)?;
        if beta > allowed {
            return Err(Error::SpreadingFactorOverBudget {
                requested: beta,
                allowed,
            });
        }
        Ok(Self {
            m_subcarriers: m,
            spreading_factor: beta,
            bit_duration,
            bandwidth,
            rolloff,
        })
    }

    pub fn chip_duration(&self) -> f64 {
        self.bit_duration / self.spreading_factor as f64
    }

    /// Occupied bandwidth of one subcarrier, `(1 + α)/Tc`.
    pub fn subcarrier_bandwidth(&self) -> f64 {
        (1.0 + self.rolloff) / self.chip_duration()
    }

    pub fn bits_per_frame(&self) -> usize {
        self.m_subcarriers - 1
    }
}

/// `M - 1` antipodal bits sent in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitBlock {
    bits: Vec<i8>,
    pub user_id: u32,
}

impl BitBlock {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b != 1 && **b != -1) {
            return Err(Error::InvalidParameter(format!("bit value {b} is not ±1")));
        }
        Ok(Self { bits, user_id: 0 })
    }

    pub fn bits(&self) -> &[i8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn errors_against(&self, other: &BitBlock) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

/// `M × β` chips; row 0 is the reference, row `i` is `bits[i-1]·reference`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipFrame {
    rows: usize,
    beta: usize,
    chips: Vec<f64>,
}

impl ChipFrame {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let beta = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || beta == 0 {
            return Err(Error::DimensionMismatch("chip frame must be non-empty".into()));
        }
        if rows.iter().any(|r| r.len() != beta) {
            return Err(Error::DimensionMismatch("ragged chip frame rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            beta,
            chips: rows.concat(),
        })
    }

    pub fn zeros(rows: usize, beta: usize) -> Self {
        Self {
            rows,
            beta,
            chips: vec![0.0; rows * beta],
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.chips[i * self.beta..(i + 1) * self.beta]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.chips.chunks_exact(self.beta)
    }

    pub fn row_energy(&self, i: usize) -> f64 {
        self.row(i).iter().map(|c| c * c).sum()
    }
}

/// The receiver's matrix memories: `p` holds the reference branch and `s`
/// the `M - 1` data branches, all sampled once per chip.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    beta: usize,
    p: Vec<f64>,
    s: Vec<f64>,
}

impl ReceivedFrame {
    pub fn new(p: Vec<f64>, s: Vec<f64>) -> Result<Self> {
        let beta = p.len();
        if beta == 0 {
            return Err(Error::DimensionMismatch("reference branch is empty".into()));
        }
        if s.is_empty() || !s.len().is_multiple_of(beta) {
            return Err(Error::DimensionMismatch(format!(
                "data memory of {} samples is not a whole number of {beta}-chip rows",
                s.len()
            )));
        }
        Ok(Self { beta, p, s })
    }

    pub fn from_rows(p: Vec<f64>, s: &[Vec<f64>]) -> Result<Self> {
        if s.iter().any(|r| r.len() != p.len()) {
            return Err(Error::DimensionMismatch("data row length differs from reference".into()));
        }
        Self::new(p, s.concat())
    }

    /// Treats row 0 of `frame` as the reference branch.
    pub fn from_chip_frame(frame: &ChipFrame) -> Result<Self> {
        if frame.num_rows() < 2 {
            return Err(Error::DimensionMismatch("frame has no data rows".into()));
        }
        Self::new(frame.row(0).to_vec(), frame.chips[frame.beta..].to_vec())
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn data_rows(&self) -> usize {
        self.s.len() / self.beta
    }

    pub fn reference(&self) -> &[f64] {
        &self.p
    }

    pub fn data_row(&self, i: usize) -> &[f64] {
        &self.s[i * self.beta..(i + 1) * self.beta]
    }

    pub fn reference_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.s
    }

    /// Correlator outputs `P × S'`, one per data row.
    pub fn statistics(&self) -> Vec<f64> {
        self.s
            .chunks_exact(self.beta)
            .map(|row| dot(&self.p, row))
            .collect()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conventional DCSK: `β` reference chips followed by `bit·reference`.
pub fn dcsk_modulate(bit: i8, reference: &ChaoticSequence) -> Vec<f64> {
    let s = f64::from(bit);
    let chips = reference.chips();
    chips.iter().copied().chain(chips.iter().map(|x| s * x)).collect()
}

pub fn dcsk_statistic(rx: &[f64], beta: usize) -> Result<f64> {
    if beta == 0 || rx.len() != 2 * beta {
        return Err(Error::DimensionMismatch(format!(
            "DCSK frame needs {} samples, got {}",
            2 * beta,
            rx.len()
        )));
    }
    let (reference, data) = rx.split_at(beta);
    Ok(dot(reference, data))
}

pub fn dcsk_demodulate(rx: &[f64], beta: usize) -> Result<i8> {
    dcsk_statistic(rx, beta).map(decide)
}

pub fn mcdcsk_frame(bits: &BitBlock, reference: &ChaoticSequence, params: &FrameParams) -> Result<ChipFrame> {
    let beta = params.spreading_factor;
    if bits.len() != params.bits_per_frame() {
        return Err(Error::DimensionMismatch(format!(
            "expected {} bits, got {}",
            params.bits_per_frame(),
            bits.len()
        )));
    }
    if reference.len() != beta {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} chips, frame needs {beta}",
            reference.len()
        )));
    }
    let x = reference.chips();
    let mut chips = Vec::with_capacity(params.m_subcarriers * beta);
    chips.extend_from_slice(x);
    for &b in bits.bits() {
        let s = f64::from(b);
        chips.extend(x.iter().map(|c| s * c));
    }
    Ok(ChipFrame {
        rows: params.m_subcarriers,
        beta,
        chips,
    })
}

/// Parallel correlator decoder `sign(P × S')`.
pub fn mcdcsk_decode(rx: &ReceivedFrame) -> BitBlock {
    BitBlock {
        bits: rx.statistics().into_iter().map(decide).collect(),
        user_id: 0,
    }
}

/// Splits a bit stream into `M - 1`-bit blocks, padding the last one with
/// `+1`. Returns the blocks and the pad length.
pub fn serial_to_parallel(bitstream: &[i8], m: usize) -> Result<(Vec<BitBlock>, usize)> {
    if m < 2 {
        return Err(Error::TooFewSubcarriers(m));
    }
    let width = m - 1;
    let pad = (width - bitstream.len() % width) % width;
    let blocks = bitstream
        .chunks(width)
        .map(|chunk| {
            let mut bits = chunk.to_vec();
            bits.resize(width, 1);
            BitBlock::new(bits)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((blocks, pad))
}

/// Inverse of [`serial_to_parallel`].
pub fn parallel_to_serial(blocks: &[BitBlock], pad: usize) -> Vec<i8> {
    let mut out: Vec<i8> = blocks.iter().flat_map(|b| b.bits().iter().copied()).collect();
    out.truncate(out.len().saturating_sub(pad));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{generate_sequence, normalize_energy, ChaosMapKind};
    use proptest::prelude::*;

    fn seq(chips: &[f64]) -> ChaoticSequence {
        ChaoticSequence::from_chips(chips.to_vec()).unwrap()
    }

    fn chaotic(seed: u64, beta: usize) -> ChaoticSequence {
        normalize_energy(generate_sequence(ChaosMapKind::Chebyshev2, seed, beta).unwrap()).unwrap()
    }

    fn params(m: usize, beta: usize) -> FrameParams {
        FrameParams {
            m_subcarriers: m,
            spreading_factor: beta,
            bit_duration: beta as f64,
            bandwidth: 1e9,
            rolloff: 0.25,
        }
    }

    #[test]
    fn spreading_factor_table() {
        assert_eq!(spreading_factor(400.0, 1.0, 64, 0.25).unwrap(), 5);
        assert_eq!(spreading_factor(400.0, 1.0, 16, 0.25).unwrap(), 20);
        assert_eq!(spreading_factor(400.0, 1.0, 8, 0.25).unwrap(), 40);
        assert_eq!(spreading_factor(400.0, 1.0, 2, 0.25).unwrap(), 160);
    }

    #[test]
    fn spreading_factor_floors_and_rejects() {
        assert_eq!(spreading_factor(400.0, 1.0, 3, 0.25).unwrap(), 106);
        let err = spreading_factor(400.0, 1.0, 512, 0.25).unwrap_err();
        assert!(err.to_string().starts_with("bandwidth/carrier budget infeasible"));
        assert!(matches!(
            spreading_factor(400.0, 1.0, 1, 0.25),
            Err(Error::TooFewSubcarriers(1))
        ));
        assert!(spreading_factor(400.0, 1.0, 4, 1.5).is_err());
        assert!(spreading_factor(0.0, 1.0, 4, 0.5).is_err());
    }

    #[test]
    fn chip_duration_consistent() {
        for m in [2, 3, 7, 8, 16, 64] {
            let p = FrameParams::derive(400.0, 1.0, m, 0.25).unwrap();
            let tb = p.chip_duration() * p.spreading_factor as f64;
            assert!((tb - 400.0).abs() <= 1e-9 * 400.0);
        }
    }

    #[test]
    fn explicit_beta_over_budget() {
        let err = FrameParams::with_spreading_factor(400.0, 1.0, 64, 0.25, 7).unwrap_err();
        assert!(matches!(
            err,
            Error::SpreadingFactorOverBudget {
                requested: 7,
                allowed: 5
            }
        ));
        assert!(FrameParams::with_spreading_factor(400.0, 1.0, 64, 0.25, 5).is_ok());
        assert!(FrameParams::with_spreading_factor(400.0, 1.0, 4, 0.25, 20).is_ok());
    }

    #[test]
    fn dcsk_examples() {
        let x = seq(&[0.5, -0.5]);
        assert_eq!(dcsk_modulate(1, &x), vec![0.5, -0.5, 0.5, -0.5]);
        assert_eq!(dcsk_modulate(-1, &x), vec![0.5, -0.5, -0.5, 0.5]);

        let x = chaotic(3, 16);
        let tx = dcsk_modulate(-1, &x);
        let stat = dcsk_statistic(&tx, 16).unwrap();
        assert!((stat + x.energy()).abs() < 1e-12);
        assert_eq!(dcsk_demodulate(&tx, 16).unwrap(), -1);
        assert_eq!(dcsk_demodulate(&dcsk_modulate(1, &x), 16).unwrap(), 1);
        assert_eq!(dcsk_demodulate(&[0.0; 8], 4).unwrap(), 1);
        assert!(dcsk_demodulate(&[0.0; 7], 4).is_err());
    }

    #[test]
    fn frame_examples() {
        let f = mcdcsk_frame(
            &BitBlock::new(vec![-1]).unwrap(),
            &seq(&[1.0, -1.0, 1.0]),
            &params(2, 3),
        )
        .unwrap();
        assert_eq!(f.row(0), &[1.0, -1.0, 1.0]);
        assert_eq!(f.row(1), &[-1.0, 1.0, -1.0]);

        let x = chaotic(9, 10);
        let f = mcdcsk_frame(&BitBlock::new(vec![1, 1]).unwrap(), &x, &params(3, 10)).unwrap();
        for row in f.rows() {
            assert_eq!(row, x.chips());
        }

        let bits = BitBlock::new(vec![1, -1, -1, 1]).unwrap();
        let f = mcdcsk_frame(&bits, &x, &params(5, 10)).unwrap();
        for i in 1..5 {
            let c = dot(f.row(i), f.row(0));
            assert!((c - f64::from(bits.bits()[i - 1]) * 10.0).abs() < 1e-12);
            assert!((f.row_energy(i) / 10.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_dimension_errors() {
        let x = chaotic(1, 10);
        assert!(mcdcsk_frame(&BitBlock::new(vec![1]).unwrap(), &x, &params(3, 10)).is_err());
        assert!(mcdcsk_frame(&BitBlock::new(vec![1, 1]).unwrap(), &x, &params(3, 11)).is_err());
        assert!(BitBlock::new(vec![1, 0]).is_err());
    }

    #[test]
    fn decode_examples() {
        let rx = ReceivedFrame::from_rows(vec![1.0, 1.0], &[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        assert_eq!(mcdcsk_decode(&rx).bits(), &[1, -1]);

        let rx = ReceivedFrame::from_rows(vec![1.0, -1.0], &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(mcdcsk_decode(&rx).bits(), &[1]);

        assert!(ReceivedFrame::from_rows(vec![1.0, -1.0], &[vec![1.0]]).is_err());
        assert!(ReceivedFrame::new(vec![], vec![1.0]).is_err());
        assert!(ReceivedFrame::new(vec![1.0, 2.0], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn serial_to_parallel_examples() {
        let (blocks, pad) = serial_to_parallel(&[1, -1, 1, -1], 3).unwrap();
        assert_eq!(pad, 0);
        assert_eq!(blocks.iter().map(|b| b.bits().to_vec()).collect::<Vec<_>>(), vec![vec![1, -1], vec![1, -1]]);

        let (blocks, pad) = serial_to_parallel(&[1, -1, 1], 3).unwrap();
        assert_eq!(pad, 1);
        assert_eq!(blocks[1].bits(), &[1, 1]);
        assert_eq!(parallel_to_serial(&blocks, pad), vec![1, -1, 1]);

        let (blocks, pad) = serial_to_parallel(&[], 5).unwrap();
        assert!(blocks.is_empty());
        assert_eq!(pad, 0);
    }

    #[test]
    fn exhaustive_noise_free_round_trip() {
        for m in 2..=6usize {
            for seed in 0..5u64 {
                let x = chaotic(seed, 13);
                for pattern in 0..(1u32 << (m - 1)) {
                    let bits: Vec<i8> = (0..m - 1)
                        .map(|i| if pattern >> i & 1 == 1 { -1 } else { 1 })
                        .collect();
                    let block = BitBlock::new(bits).unwrap();
                    let frame = mcdcsk_frame(&block, &x, &params(m, 13)).unwrap();
                    let rx = ReceivedFrame::from_chip_frame(&frame).unwrap();
                    assert_eq!(mcdcsk_decode(&rx), block);
                }
            }
        }
    }

    #[test]
    fn dcsk_round_trip_random_references() {
        for seed in 0..1000u64 {
            let x = chaotic(seed, 1 + (seed as usize % 40));
            for b in [-1i8, 1] {
                assert_eq!(dcsk_demodulate(&dcsk_modulate(b, &x), x.len()).unwrap(), b);
            }
        }
    }

    #[test]
    fn two_carrier_frame_matches_dcsk_statistic() {
        // Same reference, bit and noise vectors feed both receivers.
        let x = chaotic(11, 32);
        let n_ref: Vec<f64> = chaotic(12, 32).chips().to_vec();
        let n_data: Vec<f64> = chaotic(13, 32).chips().iter().map(|v| 0.7 * v).collect();
        for b in [-1i8, 1] {
            let frame = mcdcsk_frame(&BitBlock::new(vec![b]).unwrap(), &x, &params(2, 32)).unwrap();
            let p: Vec<f64> = frame.row(0).iter().zip(&n_ref).map(|(a, n)| a + n).collect();
            let s: Vec<f64> = frame.row(1).iter().zip(&n_data).map(|(a, n)| a + n).collect();
            let mc = ReceivedFrame::new(p, s).unwrap().statistics()[0];

            let mut tx = dcsk_modulate(b, &x);
            for (t, n) in tx.iter_mut().zip(n_ref.iter().chain(&n_data)) {
                *t += n;
            }
            assert_eq!(mc, dcsk_statistic(&tx, 32).unwrap());
        }
    }

    proptest! {
        #[test]
        fn decoder_scale_invariant(
            p in prop::collection::vec(-5.0f64..5.0, 8),
            s in prop::collection::vec(-5.0f64..5.0, 24),
            scale in 1e-6f64..1e6,
        ) {
            let rx = ReceivedFrame::new(p.clone(), s.clone()).unwrap();
            let scaled = ReceivedFrame::new(
                p.iter().map(|v| v * scale).collect(),
                s.iter().map(|v| v * scale).collect(),
            ).unwrap();
            prop_assert_eq!(mcdcsk_decode(&rx), mcdcsk_decode(&scaled));
        }

        #[test]
        fn spreading_factor_monotone(
            tb in 10.0f64..2000.0,
            b in 0.1f64..10.0,
            m in 2usize..64,
            alpha in 0.0f64..1.0,
        ) {
            let base = spreading_factor(tb, b, m, alpha).unwrap_or(0);
            prop_assert!(spreading_factor(tb, b, m + 1, alpha).unwrap_or(0) <= base);
            prop_assert!(spreading_factor(tb, b, m, (alpha + 0.1).min(1.0)).unwrap_or(0) <= base);
            prop_assert!(spreading_factor(tb * 1.5, b, m, alpha).unwrap_or(0) >= base);
            prop_assert!(spreading_factor(tb, b * 1.5, m, alpha).unwrap_or(0) >= base);
        }

        #[test]
        fn serial_parallel_round_trip(bits in prop::collection::vec(prop_oneof![Just(-1i8), Just(1i8)], 0..200), m in 2usize..20) {
            let (blocks, pad) = serial_to_parallel(&bits, m).unwrap();
            prop_assert!(blocks.iter().all(|b| b.len() == m - 1));
            prop_assert_eq!(parallel_to_serial(&blocks, pad), bits);
        }
    }
}
