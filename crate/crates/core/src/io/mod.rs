//! File formats: the tensor container, experiment configs and result tables.

pub mod config;
pub mod table;
pub mod tensor_file;

pub use config::{parse_config, parse_config_str, to_config_string, ExperimentConfig};
pub use table::{emit_grid_markdown, emit_table, ResultRow, TableFormat};
pub use tensor_file::{read_tensors, write_tensors, NamedTensors};
