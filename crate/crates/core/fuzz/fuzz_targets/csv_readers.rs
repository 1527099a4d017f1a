#![no_main]

use chaoscomm::cli::{
    read_ber_csv, read_compare_csv, read_dbr_csv, read_psd_csv, write_ber_csv, write_compare_csv, write_dbr_csv,
    write_psd_csv,
};
use libfuzzer_sys::fuzz_target;

// Anything a reader accepts must survive a write/read round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = read_ber_csv(text) {
        let mut out = Vec::new();
        write_ber_csv(&mut out, &rows).unwrap();
        assert_eq!(read_ber_csv(std::str::from_utf8(&out).unwrap()).unwrap(), rows);
    }
    if let Ok(rows) = read_compare_csv(text) {
        let mut out = Vec::new();
        write_compare_csv(&mut out, &rows).unwrap();
        assert_eq!(read_compare_csv(std::str::from_utf8(&out).unwrap()).unwrap(), rows);
    }
    if let Ok(rows) = read_dbr_csv(text) {
        let mut out = Vec::new();
        write_dbr_csv(&mut out, &rows).unwrap();
        assert_eq!(read_dbr_csv(std::str::from_utf8(&out).unwrap()).unwrap(), rows);
    }
    if let Ok(psd) = read_psd_csv(text) {
        let mut out = Vec::new();
        write_psd_csv(&mut out, &psd).unwrap();
        let again = read_psd_csv(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(again.freqs, psd.freqs);
        assert_eq!(again.power_db, psd.power_db);
    }
});
