//! Discretisation of continuous measures and exact W1 distances between
//! discrete ones.

mod quantize;
mod w1;

pub use quantize::{grid_dims, jitter_planes, quantize_density, quantize_samples, QuantizeOptions};
pub use w1::{w1_along, w1_distance, w1_points, TransportCoupling, W1_MAX_SUPPORT};
