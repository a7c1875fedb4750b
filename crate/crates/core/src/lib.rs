//! braillemux: share one braille display between many applications.
//!
//! Applications connect to the `brld` daemon over a local stream socket or
//! TCP, declare where they run with a nested [`focus::FocusPath`], and the
//! daemon decides whose output reaches the device and who receives its keys.
//! A client may also take the device over exclusively, either tunnelling
//! device packets through the daemon (raw mode) or having the daemon close
//! its driver entirely (suspended mode).
//!
//! Module map:
//!
//! * [`proto`]: every wire message and its binary encoding.
//! * [`braille`]: cells, display buffers and character tables.
//! * [`focus`]: focus paths and the rule selecting the focused client.
//! * [`driver`]: the device abstraction, key translation and the two
//!   simulated drivers.
//! * [`server`]: the daemon state machine and its network front end.
//! * [`client`]: the library applications embed.
//! * [`transfer`]: the raw-mode file transfer packets.
//! * [`tools`]: shared logic behind the command line clients.

pub mod braille;
pub mod client;
pub mod driver;
pub mod focus;
pub mod proto;
pub mod server;
pub mod tools;
pub mod transfer;
pub mod transport;
