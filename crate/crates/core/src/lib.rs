//! Analysis toolkit for generalized-CoMP (GCoMP) NOMA downlinks.
//!
//! `M` UEs are served by `K` cooperating BSs. Each UE joins the NOMA clusters
//! of its `n` strongest BSs; within a cluster, weaker UEs get larger power
//! fractions and stronger UEs peel them off by SIC.
//!
//! Index conventions: UEs and BSs are 0-based, cluster ranks are 1-based
//! with rank 1 the weakest member. Matrices are `M x K` (rows UE, columns BS).

pub mod channel;
pub mod clustering;
pub mod error;
pub mod experiments;
pub mod monte_carlo;
pub mod outage;
pub mod params;
pub mod power_alloc;
pub mod sinr;
pub mod validation;

pub use channel::{generate_channels, power_gains, ChannelMatrix};
pub use clustering::{
    constant_power_coefficients, full_order_norm_cluster, nth_order_clusters, ClusterAssignment,
    PowerCoefficients,
};
pub use error::{Error, Result};
pub use params::SystemParams;
