//! Configuration, scene ingestion, and result serialization.

pub mod config;
pub mod output;
pub mod scene;

pub use config::{parse_config, print_config, SimConfig};
pub use output::{write_frame, write_led, write_trace};
pub use scene::load_scene;
