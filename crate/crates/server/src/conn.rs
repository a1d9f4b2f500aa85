//! One TCP connection: a reader that frames and forwards client messages to
//! the hub, and a writer that stamps and sends whatever is queued for it.

use clicktionary_core::protocol::{encode_message, Body, ErrorCode, FrameDecoder, InboundSeq, Outbox, ReasonCode};
use clicktionary_core::PlayerId;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::mpsc;

use crate::clock::Clock;
use crate::hub::HubCmd;

#[derive(Debug)]
pub(crate) enum ConnCmd {
    Send(Body),
    Close,
}

pub(crate) type ConnTx = mpsc::UnboundedSender<ConnCmd>;

pub(crate) fn send(tx: &ConnTx, body: Body) {
    // a closed writer means the client is gone; the reader reports that
    let _ = tx.send(ConnCmd::Send(body));
}

pub(crate) async fn serve(stream: TcpStream, conn_id: u64, hub: mpsc::UnboundedSender<HubCmd>, clock: Clock) {
    let _ = stream.set_nodelay(true);
    let (mut rd, mut wr) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<ConnCmd>();
    let writer = tokio::spawn(async move {
        let mut outbox = Outbox::default();
        while let Some(cmd) = rx.recv().await {
            match cmd {
                ConnCmd::Send(body) => {
                    let m = outbox.stamp(body, clock.now());
                    if wr.write_all(&encode_message(&m)).await.is_err() {
                        break;
                    }
                }
                ConnCmd::Close => break,
            }
        }
        let _ = wr.shutdown().await;
    });

    let mut frames = FrameDecoder::new();
    let mut inbound = InboundSeq::default();
    let mut player: Option<PlayerId> = None;
    let mut buf = vec![0u8; 16 * 1024];
    'read: loop {
        let n = match rd.read(&mut buf).await {
            Ok(0) | Err(_) => break,
            Ok(n) => n,
        };
        frames.push(&buf[..n]);
        while let Some(next) = frames.next_message() {
            let m = match next {
                Ok(m) => m,
                Err(e) => {
                    send(&tx, Body::error(ErrorCode::MalformedMessage, e.to_string()));
                    if e.code == ReasonCode::FrameTooLarge {
                        break 'read;
                    }
                    continue;
                }
            };
            if !inbound.accept(m.seq) {
                send(
                    &tx,
                    Body::error(ErrorCode::SequenceViolation, format!("seq {} does not follow the previous one", m.seq)),
                );
                continue;
            }
            match (&player, m.body) {
                (None, Body::JoinLobby { player_id }) => {
                    let p = PlayerId::new(player_id);
                    player = Some(p.clone());
                    if hub.send(HubCmd::Join { player: p, conn_id, tx: tx.clone() }).is_err() {
                        break 'read;
                    }
                }
                (None, other) => send(
                    &tx,
                    Body::error(ErrorCode::UnexpectedMessage, format!("send join_lobby before {}", other.kind())),
                ),
                (Some(p), body) => {
                    if hub.send(HubCmd::Inbound { player: p.clone(), conn_id, body }).is_err() {
                        break 'read;
                    }
                }
            }
        }
    }
    if let Some(p) = player {
        let _ = hub.send(HubCmd::Closed { player: p, conn_id });
    }
    let _ = tx.send(ConnCmd::Close);
    let _ = writer.await;
}
