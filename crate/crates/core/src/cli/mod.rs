//! Experiment orchestration behind the `chaoscomm` binary.

mod commands;
mod config;
mod csv_io;
mod manifest;

pub use commands::{
    cmd_ber, cmd_dbr, cmd_psd, cmd_sweep_compare, dbr_table, psd_for_config, PsdOptions, RunOptions,
    PSD_SEGMENTS,
};
pub use config::{apply_seed_override, load_config, parse_config, CONFIG_KEYS, SEED_ENV};
pub use csv_io::{
    read_ber_csv, read_compare_csv, read_dbr_csv, read_psd_csv, write_ber_csv, write_compare_csv, write_dbr_csv,
    write_psd_csv, BerRow, CompareRow, BER_HEADER, COMPARE_HEADER, DBR_HEADER, PSD_HEADER,
};
pub use manifest::{config_digest, RunManifest};
