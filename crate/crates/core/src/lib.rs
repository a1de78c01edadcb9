pub mod capacity;
pub mod discovery;
pub mod engine;
pub mod epc;
pub mod ids;
pub mod units;
pub mod controller;
pub mod mobility;
pub mod proto;
pub mod report;
pub mod scenario;
pub mod world;
