pub mod canonical;
pub mod marking;
pub mod world;
pub mod parser;
pub mod prompting;
pub mod backends;
pub mod skills;
pub mod orchestrator;
pub mod harness;
