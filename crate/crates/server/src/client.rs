//! Minimal protocol client used by the live replay path and tests.

use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use spotlight_core::wire::WireMessage;
use spotlight_core::Role;

use crate::ServerError;

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub struct ClientSender {
    sink: SplitSink<Ws, Message>,
}

pub struct ClientReceiver {
    stream: SplitStream<Ws>,
}

impl ClientSender {
    pub async fn send(&mut self, msg: &WireMessage) -> Result<(), ServerError> {
        self.sink.send(Message::text(msg.encode())).await?;
        Ok(())
    }

    /// Starts the close handshake.
    pub async fn close(&mut self) -> Result<(), ServerError> {
        self.sink.close().await?;
        Ok(())
    }
}

impl ClientReceiver {
    /// Next protocol message; `None` once the connection is closed.
    pub async fn recv(&mut self) -> Result<Option<WireMessage>, ServerError> {
        while let Some(frame) = self.stream.next().await {
            match frame? {
                Message::Text(t) => return Ok(Some(WireMessage::decode(t.as_str())?)),
                Message::Close(_) => return Ok(None),
                _ => continue,
            }
        }
        Ok(None)
    }
}

pub struct Client {
    pub tx: ClientSender,
    pub rx: ClientReceiver,
}

impl Client {
    pub async fn connect(url: &str) -> Result<Self, ServerError> {
        let (ws, _) = tokio_tungstenite::connect_async(url).await?;
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            let _ = s.set_nodelay(true);
        }
        let (sink, stream) = ws.split();
        Ok(Self { tx: ClientSender { sink }, rx: ClientReceiver { stream } })
    }

    pub async fn send(&mut self, msg: &WireMessage) -> Result<(), ServerError> {
        self.tx.send(msg).await
    }

    pub async fn recv(&mut self) -> Result<Option<WireMessage>, ServerError> {
        self.rx.recv().await
    }

    /// Sends a join and waits for its acknowledgement; an error reply becomes [`ServerError::Rejected`].
    pub async fn join(&mut self, session: &str, participant: &str, role: Role) -> Result<(), ServerError> {
        self.send(&WireMessage::Join { session: session.into(), participant: participant.into(), role })
            .await?;
        match self.recv().await? {
            Some(WireMessage::Ack { of }) if of == "join" => Ok(()),
            Some(WireMessage::Error { code, detail }) => Err(ServerError::Rejected { code, detail }),
            Some(other) => Err(ServerError::Unexpected(other.type_name().to_string())),
            None => Err(ServerError::Closed),
        }
    }

    pub async fn connect_and_join(url: &str, session: &str, participant: &str, role: Role) -> Result<Self, ServerError> {
        let mut c = Self::connect(url).await?;
        c.join(session, participant, role).await?;
        Ok(c)
    }

    pub fn split(self) -> (ClientSender, ClientReceiver) {
        (self.tx, self.rx)
    }
}
