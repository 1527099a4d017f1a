#![no_main]

use chaoscomm::modem::{dcsk_demodulate, mcdcsk_decode, ReceivedFrame};
use libfuzzer_sys::fuzz_target;

// Layout: one byte of β, one byte of data-row count, then little-endian
// f64 samples.
fuzz_target!(|data: &[u8]| {
    let [beta, rows, rest @ ..] = data else {
        return;
    };
    let beta = *beta as usize;
    let rows = *rows as usize;
    let samples: Vec<f64> = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();

    if let Ok(bit) = dcsk_demodulate(&samples, beta) {
        assert!(bit == 1 || bit == -1);
    }
    if beta == 0 || samples.len() < beta * (rows + 1) {
        let _ = ReceivedFrame::new(samples.get(..beta.min(samples.len())).unwrap_or_default().to_vec(), Vec::new());
        return;
    }
    let p = samples[..beta].to_vec();
    let s = samples[beta..beta * (rows + 1)].to_vec();
    if let Ok(frame) = ReceivedFrame::new(p, s) {
        let bits = mcdcsk_decode(&frame);
        assert_eq!(bits.len(), rows);
        assert!(bits.bits().iter().all(|b| *b == 1 || *b == -1));
    }
});
