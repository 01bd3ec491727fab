pub mod analysis;
pub mod config;
pub mod derivatives;
pub mod features;
pub mod hamiltonian;
pub mod linalg;
pub mod network;
pub mod optim;
pub mod sampler;
pub mod scalar;
pub mod system;
pub mod trainer;
pub mod wavefunction;
