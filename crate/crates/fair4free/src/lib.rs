//! File formats, pipeline stages and the command line around
//! [`fair4free_core`].

pub mod config;
pub mod io;
pub mod models;
pub mod parallel;
pub mod pipeline;
pub mod plot;

/// Marks an error as a failure while running a stage, as opposed to invalid
/// input or configuration.
#[derive(Debug, thiserror::Error)]
#[error(transparent)]
pub struct RuntimeFailure(#[from] pub fair4free_core::Error);

impl RuntimeFailure {
    pub fn wrap(e: fair4free_core::Error) -> anyhow::Error {
        RuntimeFailure(e).into()
    }
}

/// Process exit code for an error: 2 for runtime and training failures, 1
/// for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let runtime = err.chain().any(|e| {
        e.is::<RuntimeFailure>()
            || matches!(
                e.downcast_ref::<fair4free_core::Error>(),
                Some(fair4free_core::Error::Diverged(_) | fair4free_core::Error::NonFinite(_))
            )
    });
    if runtime {
        2
    } else {
        1
    }
}
