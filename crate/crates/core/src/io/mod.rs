//! File formats and reporting: flat configs, histogram and event files, run manifests
//! and text/CSV reports.

mod config;
mod eventfile;
mod histfile;
mod manifest;
mod report;

/// An I/O error that names the file it concerns.
pub(crate) fn path_error(path: &std::path::Path, e: std::io::Error) -> crate::Error {
    crate::Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub use config::{
    format_config, load_config, load_preset, parse_config, preset_names, preset_text, resolve_config, MANIFEST_PREFIX,
};
pub use eventfile::{format_events, parse_events, read_events, write_events};
pub use histfile::{format_histogram, parse_histogram, read_histogram, write_histogram};
pub use manifest::{creation_timestamp, RunManifest, CODE_VERSION};
pub use report::{Report, Table, FLAT_SCAN_SIGMA};
