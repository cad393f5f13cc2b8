//! Shannon capacity of queue-length-dependent channels over continuous-time
//! FCFS single-server queues.
//!
//! Symbols arrive at a queue and are corrupted by a channel `W_q` selected by
//! the number of jobs `q` the arrival finds in the system. The crate computes
//! the resulting capacity analytically for GI/M/1 and M/GI/1 queues, and
//! empirically (discrete-event simulation) for GI/GI/1 queues fed by a
//! superposition of `K` renewal streams.
//!
//! Module map:
//!
//! - [`dist`]: inter-arrival and service laws with Laplace-Stieltjes transforms
//! - [`pointproc`]: renewal streams, superposition, sparsity diagnostics
//! - [`qsim`]: FCFS simulation and empirical stationary distributions
//! - [`analytic`]: GI/M/1, M/GI/1 and M/M/1 stationary distributions
//! - [`channel`]: queue-indexed channel families and Blahut-Arimoto
//! - [`capacity`]: single-user, multi-user and convergence experiments
//! - [`report`]: CSV/JSON emission for the experiment tables

pub mod analytic;
pub mod capacity;
pub mod channel;
pub mod dist;
pub mod error;
pub mod pointproc;
pub mod qsim;
pub mod report;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use rng::SimRng;
