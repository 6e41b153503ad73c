pub mod arena;
pub mod bitstring;
pub mod detectors;
pub mod distributions;
pub mod session;
pub mod universal;
