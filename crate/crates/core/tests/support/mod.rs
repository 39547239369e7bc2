pub mod naive;
pub mod oracles;
pub mod wire;
