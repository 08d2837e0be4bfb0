//! The measure family and driver-path generation.

mod driver;
mod family;
mod grid;
mod spec;
mod stream;

pub use driver::{generate_batch, sample_driver, sample_vol_path, write_driver_csv, Branch, DriverPath};
pub use family::{MeasureFamily, Member};
pub use grid::{make_grid, TimeGrid};
pub use spec::{average_measure, VarianceBounds, VolKind, VolatilitySpec};
pub use stream::{PathStream, Provenance};
