pub mod cli;
pub mod error;
pub mod lineshapes;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod numerics;
pub mod optimize;
pub mod response;
