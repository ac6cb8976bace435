//! Match service for the poac wargame: sessions with bot, external and
//! human controllers, the wire protocol over TCP and websocket, seeded
//! tournaments and the `poac` command line.

pub mod cli;
pub mod commands;
pub mod manager;
pub mod net;
pub mod protocol;
pub mod session;
pub mod tournament;
