//! Registration-free fiber streamline parcellation with spectral graph
//! convolutional networks.
//!
//! Every streamline is resampled to a fixed number of points and treated as a
//! signal (its xyz coordinates) on a path graph. A per-bundle binary network
//! of the form `GC32-P2-GC64-P2-FC512-softmax` classifies each streamline as
//! belonging to its bundle or not; spectral convolutions operate in the
//! eigenbasis of the normalized graph Laplacian and pooling runs over a
//! Graclus coarsening hierarchy.

pub mod cli;
pub mod error;
pub mod evaluation;
pub mod gcnn;
pub mod graph;
mod io_util;
pub mod slt;
pub mod streamline;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
