//! Library surface of the `sde-infer` CLI: configuration, commands and
//! artifact handling, exposed so integration tests drive the same code paths
//! as the binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod validate;

pub use commands::{cmd_map, cmd_reproduce_paper, cmd_sample, cmd_simulate};
pub use config::RunConfig;
pub use error::CliError;
pub use validate::cmd_validate;

/// Cap the rayon pool from `SDE_INFER_THREADS` (ignored once a pool exists).
pub fn init_thread_pool() {
    if let Ok(value) = std::env::var("SDE_INFER_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}
