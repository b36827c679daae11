use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use futures_util::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, Notify};
use tokio_tungstenite::tungstenite::protocol::WebSocketConfig;
use tokio_tungstenite::tungstenite::Message;

use crate::engine::{process_frame, EngineSlot, ServiceError};
use crate::protocol::{decode_payload, split_frame, ErrorCode, ErrorReply, FrameHeader, ProtocolError};
use crate::window::EmotionWindow;

#[derive(Clone, Copy, Debug)]
pub struct ServeConfig {
    /// Largest accepted frame, in pixels.
    pub max_pixels: usize,
    /// Largest accepted WebSocket message, in bytes.
    pub max_message_bytes: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            max_pixels: 1920 * 1080,
            max_message_bytes: 16 << 20,
        }
    }
}

struct Pending {
    header: FrameHeader,
    payload: Vec<u8>,
}

/// Capacity-1 slot: a newer frame replaces an unprocessed one.
#[derive(Default)]
struct Mailbox {
    slot: Mutex<(Option<Pending>, u64)>,
    notify: Notify,
}

impl Mailbox {
    fn put(&self, p: Pending) {
        let mut g = self.slot.lock().unwrap();
        if g.0.replace(p).is_some() {
            g.1 += 1;
        }
        drop(g);
        self.notify.notify_one();
    }

    fn take(&self) -> Option<(Pending, u64)> {
        let mut g = self.slot.lock().unwrap();
        let p = g.0.take()?;
        Some((p, std::mem::take(&mut g.1)))
    }
}

fn error_json(e: &ProtocolError) -> Message {
    Message::text(serde_json::to_string(&e.reply()).unwrap())
}

/// Accept connections forever.
pub async fn serve(listener: TcpListener, engine: EngineSlot, cfg: ServeConfig) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let engine = engine.clone();
        tokio::spawn(async move {
            if let Err(e) = handle_connection(stream, peer, engine, cfg).await {
                log::debug!("connection {peer} ended: {e}");
            }
        });
    }
}

pub async fn bind(addr: &str) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

async fn handle_connection(
    stream: TcpStream,
    peer: SocketAddr,
    engine: EngineSlot,
    cfg: ServeConfig,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws_cfg = WebSocketConfig {
        max_message_size: Some(cfg.max_message_bytes * 2),
        max_frame_size: Some(cfg.max_message_bytes * 2),
        ..WebSocketConfig::default()
    };
    let ws = tokio_tungstenite::accept_async_with_config(stream, Some(ws_cfg)).await?;
    log::info!("client {peer} connected");
    let (mut sink, mut source) = ws.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Message>();
    let mailbox = Arc::new(Mailbox::default());
    let (done_tx, mut done_rx) = tokio::sync::watch::channel(false);

    let writer = tokio::spawn(async move {
        while let Some(m) = out_rx.recv().await {
            if sink.send(m).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    let worker = {
        let mailbox = mailbox.clone();
        let out = out_tx.clone();
        tokio::spawn(async move {
            let mut window = EmotionWindow::new();
            loop {
                tokio::select! {
                    _ = mailbox.notify.notified() => {}
                    _ = done_rx.changed() => return,
                }
                while let Some((p, dropped)) = mailbox.take() {
                    let engine = engine.clone();
                    let job = tokio::task::spawn_blocking(move || {
                        let reply = run_frame(&engine, &p, &mut window, dropped);
                        (reply, window)
                    });
                    let Ok((reply, w)) = job.await else {
                        return;
                    };
                    window = w;
                    if out.send(reply).is_err() {
                        return;
                    }
                }
            }
        })
    };

    while let Some(msg) = source.next().await {
        match msg? {
            Message::Binary(bytes) => {
                if bytes.len() > cfg.max_message_bytes {
                    let e = ProtocolError::new(
                        ErrorCode::FrameTooLarge,
                        None,
                        format!("message of {} bytes exceeds {}", bytes.len(), cfg.max_message_bytes),
                    );
                    let _ = out_tx.send(error_json(&e));
                    continue;
                }
                match split_frame(&bytes, cfg.max_pixels) {
                    Ok((header, payload)) => mailbox.put(Pending {
                        header,
                        payload: payload.to_vec(),
                    }),
                    Err(e) => {
                        let _ = out_tx.send(error_json(&e));
                    }
                }
            }
            Message::Text(_) => {
                let e = ProtocolError::new(ErrorCode::BadMessage, None, "frames must be binary messages");
                let _ = out_tx.send(error_json(&e));
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    let _ = done_tx.send(true);
    let _ = worker.await;
    drop(out_tx);
    let _ = writer.await;
    log::info!("client {peer} disconnected");
    Ok(())
}

fn run_frame(engine: &EngineSlot, p: &Pending, window: &mut EmotionWindow, dropped: u64) -> Message {
    let img = match decode_payload(&p.header, &p.payload) {
        Ok(img) => img,
        Err(e) => return error_json(&e),
    };
    match process_frame(engine, &img, window, p.header.id) {
        Ok(mut r) => {
            r.dropped = dropped;
            Message::text(serde_json::to_string(&r).unwrap())
        }
        Err(ServiceError::NotReady) => error_json(&ProtocolError::new(
            ErrorCode::NotReady,
            Some(p.header.id),
            "engine is still loading",
        )),
        Err(e) => Message::text(
            serde_json::to_string(&ErrorReply {
                id: Some(p.header.id),
                error: ErrorCode::Internal,
                message: e.to_string(),
            })
            .unwrap(),
        ),
    }
}
