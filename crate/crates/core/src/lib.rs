pub mod consensus;
pub mod domain;
pub mod harness;
pub mod mobility;
pub mod radio;
pub mod simnet;
