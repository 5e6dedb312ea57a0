mod codec;
mod endpoint;

pub use codec::{decode, encode, CodecError, Frame, Packet, TYPE_PING, TYPE_PONG, TYPE_TIMESTAMP};
pub use endpoint::{Client, EndpointConfig, Server, CLOSE, CLOSE_PERIOD_MS};
