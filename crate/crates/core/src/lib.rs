//! Deterministic discrete-event simulation of file transfers over an
//! impaired link, comparing a simplified TCP, a QUIC-like transport and
//! smUDP, plus the scenario catalog and benchmark harness around them.

pub mod acceptance;
pub mod cli;
pub mod linknet;
pub mod quic;
pub mod scenario;
pub mod simclock;
pub mod smudp;
pub mod tcp;
pub mod transport;
