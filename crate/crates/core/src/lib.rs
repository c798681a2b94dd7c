//! Simulation and power minimization for RIS-aided uplink multiuser
//! MIMO-OFDM with an iterative LMMSE receiver.
//!
//! The crate is organised bottom-up:
//!
//! * [`convex`]: dense complex helpers and barrier-method solvers.
//! * [`channel`]: geometry, fading draws and per-subcarrier responses.
//! * [`coding`]: LDPC encode/decode, QPSK, and decoder transfer tables.
//! * [`transceiver`]: transmitter and the iterative LMMSE/decoder receiver.
//! * [`state_evolution`]: the deterministic receiver performance recursion.
//! * [`sic`]: groupwise SIC power minimization (grouping, FP precoding, SCA phases).
//! * [`info`]: capacity-region baseline optimizer.
//! * [`harness`]: scenario files, baselines and experiment drivers.

pub mod convex;
pub mod channel;
pub mod coding;
pub mod transceiver;
pub mod state_evolution;
pub mod sic;
pub mod info;
pub mod harness;
