//! The entanglement-based BBM92 key distribution link: simulation, matching,
//! sifting, key metrics and detector synchronization.

pub mod coincidence;
pub mod correlation;
pub mod histogram;
pub mod io;
pub mod key;
pub mod protocol;
pub mod sync;

pub use coincidence::{match_coincidences, AlignedStreams, Coincidence};
pub use correlation::CorrelationMatrix;
pub use histogram::{pairing_histograms, CoincidenceHistogram, Peak, PeakCriteria};
pub use io::{read_timetags, write_timetags};
pub use key::{analyze, analyze_windows, compute_metrics, sift, EmpiricalKeyMetrics, SiftedKey};
pub use protocol::{run_protocol, run_protocol_multishot, ProtocolRun, TimeTagStream};
pub use sync::{synchronize, SyncConfig, SyncResult};
