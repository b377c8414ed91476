pub mod adversary;
pub mod cli;
pub mod codec;
pub mod gf256;
pub mod routing_sim;
pub mod secret_sharing;
pub mod topology;
pub mod wire;
