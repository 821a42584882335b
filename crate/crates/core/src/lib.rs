pub mod clock;
pub mod content;
pub mod engine;
pub mod events;
pub mod harness;
pub mod lang;
pub mod store;
pub mod api;
