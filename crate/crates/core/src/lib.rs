//! Channel polarization over finite quasigroups.
//!
//! The crate is organised bottom-up: [`algebra`] supplies quasigroups and
//! stable partitions, [`dmc`] finite channels, [`polarize`] the transforms and
//! branch classification, [`polarcode`] code construction with successive
//! cancellation decoding, [`macpolar`] multiple access channels, and
//! [`linmac`] the closed forms for combinations of linear channels.

pub mod algebra;
pub mod dmc;
pub mod gf;
pub mod linmac;
pub mod macpolar;
pub mod polarcode;
pub mod polarize;
pub mod sc;
