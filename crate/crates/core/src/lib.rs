//! Danger-theory anomaly detection.
//!
//! Two detectors share one runtime:
//!
//! - [`dca`]: the Dendritic Cell Algorithm, which fuses PAMP, danger, safe
//!   and inflammation signals per cell and scores each antigen type by the
//!   fraction of its presentations made in a mature context.
//! - [`tlr`]: the TLR algorithm, which trains complement sets of signal and
//!   antigen values on normal data and flags a session when a mature DC
//!   activates a T-cell.
//!
//! [`tissue`] holds the antigen store, signal matrix and tick loop.
//! [`trace`] and [`wire`] define the on-disk and on-the-wire formats, and
//! [`server`] accepts collector connections. [`scenario`] generates labelled
//! synthetic traces.

pub mod dca;
pub mod scenario;
pub mod server;
pub mod tissue;
pub mod tlr;
pub mod trace;
pub mod wire;

pub use dca::{compute_mcav, DcaConfig, DcaPopulation, McavReport, WeightMatrix};
pub use tissue::{
    run_ticks, AntigenEvent, CellPopulation, PopulationConfig, PresentationRecord, SignalSample,
    TissueCompartment, TissueConfig,
};
pub use tlr::{train, SessionVerdict, TlrConfig, TlrDetector, TlrModel};
