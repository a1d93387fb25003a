pub mod analysis;
pub mod desk;
pub mod duality;
pub mod investment;
pub mod scenario;
pub mod system;
pub mod uc;
