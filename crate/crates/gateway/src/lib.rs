//! Gateway between running simulations and steering clients.
//!
//! Simulations (their rank 0) connect to the simulation port, register once and
//! then stream `frame` lines. Clients connect to the client port, either with raw
//! newline-delimited JSON or through a WebSocket upgrade (one JSON message per
//! text frame). Clients `list` sessions, `observe` one, and `steer` it; steering
//! lines are relayed to the simulation byte for byte.
//!
//! Each client receives only the newest frame of the session it observes: a slow
//! client skips frames instead of holding up the simulation or other clients.

pub mod hub;
mod server;

pub use hub::{FrameSlot, Hub, HubError, Line};
pub use server::{Gateway, GatewayConfig, GatewayThread};
