//! Linear one-shot estimators: SPI and TLI.

mod spi;
mod tli;

pub use spi::spi_infer;
pub(crate) use spi::spi_matrix;
pub use tli::{tli_compute_inverse, tli_infer, tli_threshold, TliConfig, TliInverse, TliSolver};
