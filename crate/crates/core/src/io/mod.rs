//! On-disk formats: binary frame files, CSV maps and curves, report JSON.

pub mod csv;
pub mod frame_file;
pub mod report_json;

pub use csv::{map_from_csv, map_to_csv, read_map_csv, snr_from_csv, snr_to_csv, write_map_csv, write_snr_csv};
pub use frame_file::{
    read_binary, read_frame_file, read_sidecar, sidecar_path, write_frame_file, FrameFileReader, FrameFileWriter,
    FrameHeader, Sidecar,
};
pub use report_json::{read_report, report_from_json, report_to_json, write_report, REPORT_SCHEMA};
