pub mod counting;
pub mod graph;
pub mod harness;
pub mod nodeset;
pub mod oracle;
pub mod protocol;
pub mod rng;
pub mod sim;
