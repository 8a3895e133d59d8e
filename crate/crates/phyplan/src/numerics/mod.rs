//! Dense-network evaluation, differentiation, and the L-BFGS minimizer.
//!
//! Everything the skill trainer needs from linear algebra lives here: the
//! feed-forward network with exact derivatives (with respect to inputs for
//! the physics residual, with respect to parameters for the optimizer), a
//! flat-vector objective abstraction, the minimizer, and a versioned binary
//! record for trained networks.

mod lbfgs;
mod network;
mod objective;
mod serialize;

pub use lbfgs::{lbfgs_minimize, LBFGSConfig, MinimizeResult, Termination};
pub use network::{
    xavier_init, Activation, DenseNetwork, ForwardCache, GradientResult, TangentCache,
};
pub use objective::{gradient, FnObjective, Objective};
pub use serialize::{read_network, write_network, FORMAT_VERSION, MAGIC};
