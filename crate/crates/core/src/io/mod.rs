//! File formats: case tables, surface fields, checkpoints, manifests and
//! inversion results.

mod cases;
mod checkpoint;
mod manifest;
mod results;
mod vtk;

pub use cases::{
    read_cases, read_cases_from, write_cases, write_cases_to, CaseRecord, CaseTable, ColumnMap, RowError,
    CASE_COLUMNS,
};
pub use checkpoint::{
    decode_checkpoint, decode_header, encode_checkpoint, load_checkpoint, reseal, save_checkpoint, BufferEntry,
    Checkpoint, CheckpointHeader, FORMAT_VERSION, MAGIC,
};
pub use manifest::{file_sha256, sha256_hex, RunManifest};
pub use results::{
    read_results, write_candidates_csv, write_condition_rows, write_results, write_summary_csv, CONDITION_COLUMNS,
    SUMMARY_COLUMNS,
};
pub use vtk::{format_vtk, parse_vtk, read_surface_fields, vertex_normals, write_surface_fields};

/// Canonical float text: 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Environment variable naming the directory that holds external datasets.
pub const DATA_ROOT_ENV: &str = "BWB_DATA_ROOT";

#[cfg(test)]
mod tests;
