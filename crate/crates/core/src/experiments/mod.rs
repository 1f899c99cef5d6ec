//! Data ingestion, the replicated permutation protocol on the air-quality
//! and simulated data, association reports and the theory-check suite.

pub mod checks;
pub mod data;
pub mod protocol;
pub mod report;

pub use checks::{run_theory_checks, CheckOutcome, CheckReport};
pub use data::{airquality, load_csv, read_csv, LoadedData, MissingPolicy};
pub use protocol::{
    run_airquality, run_airquality_with_replicates, run_simulation, run_simulation_with_replicates, ProtocolConfig,
    ProtocolRun, SimulationConfig,
};
pub use report::{emit_report, write_report, AssociationRow, AssociationTable, ReportFormat};
