//! Dense-network substrate: sequential layers with exact reverse-mode
//! gradients, Adam, finite-difference checking and snapshots.

mod dense;
mod gradcheck;
mod params;
mod snapshot;

pub use dense::{dense_forward, sigmoid, softplus, xavier_uniform, Activation, DenseLayer, Mlp};
pub use gradcheck::{grad_check, grad_check_mlp, relative_error, GradCheckOptions, Parameterized};
pub use params::{average_gradients, AdamConfig, ParamBlock, ParamVector};
pub use snapshot::{LayerManifest, NetKind, NetManifest, NetSnapshot, SnapshotBundle, SNAPSHOT_VERSION};
