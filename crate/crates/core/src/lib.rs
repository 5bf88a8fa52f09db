//! Renyi differential privacy accounting for the subsampled shuffle model.
//!
//! Every round of a shuffled federated protocol samples `k` of `n` clients,
//! has each of them apply an `eps0`-LDP randomizer, and passes the messages
//! through a uniform shuffler. This crate bounds the Renyi DP of one such
//! round from above ([`bounds::rdp_upper`]) and below ([`bounds::rdp_lower`]),
//! composes rounds and converts to `(eps, delta)`-DP ([`accountant`]), and
//! compares the result against the standard approximate-DP pipeline
//! ([`baselines`]).
//!
//! The [`oracle`] module computes the same quantities exactly by enumeration
//! at desk scale; every bound is tested against it. [`mechanisms`] and
//! [`sgd`] provide the randomizers and a CLDP-SGD simulator that exercise the
//! accounting end to end.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod baselines;
pub mod bounds;
mod error;
pub mod mechanisms;
pub mod numeric;
pub mod oracle;
pub mod rng;
pub mod sgd;

pub use accountant::{AccountantConfig, DpGuarantee, Provenance};
pub use bounds::{CurveKind, RdpCurve, RdpEntry, SubsampledShuffleParams, ZetaBound};
pub use error::{Error, Result};
