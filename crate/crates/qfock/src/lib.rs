pub mod cap;
pub mod cli;
pub mod cocycle;
pub mod deformation;
pub mod derivations;
pub mod error;
pub mod fock;
pub mod linalg;
pub mod operators;
pub mod output;
pub mod symgroup;
pub mod verify;
pub mod wick;
pub mod word;
