//! Run configs, metrics tables, plotting, and the CLI.

pub mod cli;
pub mod config;
pub mod plot;
pub mod tables;

pub use config::{load_config, parse_config, DatasetChoice, RunConfig, SynthParams};
pub use tables::{
    compare_server_tables, emit_client_table, emit_client_table_wide, emit_compare_table,
    emit_server_table, format_sig6, parse_client_table, parse_server_table, ClientRow, CompareRow,
    ServerRow,
};
