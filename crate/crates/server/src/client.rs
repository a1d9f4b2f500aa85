use std::collections::VecDeque;
use std::io;
use std::time::Duration;

use clicktionary_core::protocol::{encode_message, Body, FrameDecoder, Message, Outbox};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpStream, ToSocketAddrs};

/// A minimal protocol client, enough to script a player in tests and tools.
#[derive(Debug)]
pub struct Client {
    stream: TcpStream,
    frames: FrameDecoder,
    outbox: Outbox,
    pending: VecDeque<Message>,
}

impl Client {
    pub async fn connect<A: ToSocketAddrs>(addr: A) -> io::Result<Self> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        Ok(Self {
            stream,
            frames: FrameDecoder::new(),
            outbox: Outbox::default(),
            pending: VecDeque::new(),
        })
    }

    pub async fn send(&mut self, body: Body) -> io::Result<()> {
        let m = self.outbox.stamp(body, 0);
        self.stream.write_all(&encode_message(&m)).await
    }

    /// Sends a pre-built message as is, sequence number included.
    pub async fn send_raw(&mut self, m: &Message) -> io::Result<()> {
        self.stream.write_all(&encode_message(m)).await
    }

    /// The next message, or None once the server has closed the connection.
    pub async fn recv(&mut self) -> io::Result<Option<Message>> {
        let mut buf = [0u8; 16 * 1024];
        loop {
            if let Some(m) = self.pending.pop_front() {
                return Ok(Some(m));
            }
            if let Some(next) = self.frames.next_message() {
                let m = next.map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
                return Ok(Some(m));
            }
            let n = self.stream.read(&mut buf).await?;
            if n == 0 {
                return Ok(None);
            }
            self.frames.push(&buf[..n]);
        }
    }

    /// Like `recv`, but gives up after `limit`.
    pub async fn recv_timeout(&mut self, limit: Duration) -> io::Result<Option<Message>> {
        match tokio::time::timeout(limit, self.recv()).await {
            Ok(r) => r,
            Err(_) => Err(io::Error::new(io::ErrorKind::TimedOut, "no message in time")),
        }
    }

    /// Reads until a message of `kind` arrives; returns it together with
    /// everything skipped on the way.
    pub async fn recv_kind(&mut self, kind: &str, limit: Duration) -> io::Result<(Message, Vec<Message>)> {
        let deadline = tokio::time::Instant::now() + limit;
        let mut skipped = Vec::new();
        loop {
            let left = deadline.saturating_duration_since(tokio::time::Instant::now());
            match self.recv_timeout(left).await? {
                Some(m) if m.body.kind() == kind => return Ok((m, skipped)),
                Some(m) => skipped.push(m),
                None => {
                    return Err(io::Error::new(
                        io::ErrorKind::UnexpectedEof,
                        format!("closed while waiting for {kind}"),
                    ))
                }
            }
        }
    }
}
