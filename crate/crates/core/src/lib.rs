//! GOOSE traffic anomaly detection with dual-view autoencoders.

pub mod ae;
pub mod capture;
pub mod codec;
pub mod config;
pub mod detector;
pub mod evt;
pub mod features;
pub mod pipeline;
pub mod synth;
pub mod time;
pub mod window;
