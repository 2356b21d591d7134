pub mod ballot;
pub mod dsa;
pub mod election;
pub mod elgamal;
pub mod encoding;
pub mod group;
pub mod mixnet;
mod par;
pub mod proofs;
pub mod rng;
pub mod teller;
pub mod tracker;
pub mod transcript;
pub mod wbb;
