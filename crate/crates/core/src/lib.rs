//! Reliability sizing, redundancy pooling and survivable embedding of
//! virtual infrastructures on a shared physical substrate.

pub mod reliability;
pub mod cascade;
pub mod pooling;
pub mod topology;
pub mod embed;
pub mod sim;
