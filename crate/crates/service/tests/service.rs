mod common;

use std::time::Duration;

use ferkit::ImagePlane;
use ferkit_service::protocol::{ErrorReply, PixelFormat};
use ferkit_service::{empty_slot, encode_frame, process_frame, ready_slot, serve, EmotionWindow, ErrorCode, FrameHeader, FrameResult, ServeConfig};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<tokio::net::TcpStream>>;

fn gray_message(id: u64, img: &ImagePlane) -> Message {
    let gray = img.to_gray();
    let header = FrameHeader {
        id,
        format: PixelFormat::Gray8,
        width: gray.width() as u32,
        height: gray.height() as u32,
    };
    Message::binary(encode_frame(&header, gray.data()))
}

async fn start(slot: ferkit_service::EngineSlot) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, slot, ServeConfig::default()));
    format!("ws://{addr}")
}

async fn connect(url: &str) -> Client {
    connect_async(url).await.unwrap().0
}

enum Reply {
    Frame(FrameResult),
    Error(ErrorReply),
}

async fn next_reply(ws: &mut Client) -> Reply {
    let msg = tokio::time::timeout(Duration::from_secs(120), ws.next())
        .await
        .expect("reply in time")
        .unwrap()
        .unwrap();
    let text = msg.into_text().unwrap();
    if let Ok(r) = serde_json::from_str::<FrameResult>(&text) {
        Reply::Frame(r)
    } else {
        Reply::Error(serde_json::from_str(&text).unwrap())
    }
}

async fn next_frame(ws: &mut Client) -> FrameResult {
    match next_reply(ws).await {
        Reply::Frame(r) => r,
        Reply::Error(e) => panic!("unexpected error reply {e:?}"),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn five_happy_frames() {
    let url = start(ready_slot(common::recognizer())).await;
    let mut ws = connect(&url).await;
    let frame = common::webcam_frame();
    let mut last = None;
    for id in 0..5 {
        ws.send(gray_message(id, &frame)).await.unwrap();
        last = Some(next_frame(&mut ws).await);
    }
    let last = last.unwrap();
    assert_eq!(last.id, 4);
    assert_eq!(last.raw_emotion.as_deref(), Some("happiness"));
    assert_eq!(last.current_emotion.as_deref(), Some("happiness"));
    assert!(last.face.is_some());
    assert_eq!(last.scores.len(), 7);
    assert!(last.latency_ms > 0.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn text_is_bad_message() {
    let url = start(ready_slot(common::recognizer())).await;
    let mut ws = connect(&url).await;
    ws.send(Message::text("hello")).await.unwrap();
    match next_reply(&mut ws).await {
        Reply::Error(e) => assert_eq!(e.error, ErrorCode::BadMessage),
        Reply::Frame(_) => panic!("expected error"),
    }
    ws.send(Message::binary(vec![9, 0, 0, 0, 1])).await.unwrap();
    match next_reply(&mut ws).await {
        Reply::Error(e) => assert_eq!(e.error, ErrorCode::BadMessage),
        Reply::Frame(_) => panic!("expected error"),
    }
    // the connection survives
    ws.send(gray_message(1, &ImagePlane::filled(320, 240, 127).unwrap())).await.unwrap();
    let r = next_frame(&mut ws).await;
    assert_eq!((r.id, r.face, r.current_emotion), (1, None, None));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn oversized_frame_is_rejected() {
    let url = start(ready_slot(common::recognizer())).await;
    let mut ws = connect(&url).await;
    let header = FrameHeader {
        id: 3,
        format: PixelFormat::Jpeg,
        width: 10_000,
        height: 10_000,
    };
    ws.send(Message::binary(encode_frame(&header, &[0; 16]))).await.unwrap();
    match next_reply(&mut ws).await {
        Reply::Error(e) => assert_eq!((e.error, e.id), (ErrorCode::FrameTooLarge, Some(3))),
        Reply::Frame(_) => panic!("expected error"),
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn not_ready_until_engine_loads() {
    let slot = empty_slot();
    let url = start(slot.clone()).await;
    let mut ws = connect(&url).await;
    let blank = ImagePlane::filled(64, 64, 0).unwrap();
    ws.send(gray_message(0, &blank)).await.unwrap();
    match next_reply(&mut ws).await {
        Reply::Error(e) => assert_eq!(e.error, ErrorCode::NotReady),
        Reply::Frame(_) => panic!("expected NOT_READY"),
    }
    let _ = slot.set(common::recognizer());
    ws.send(gray_message(1, &blank)).await.unwrap();
    assert_eq!(next_frame(&mut ws).await.id, 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn connections_keep_separate_windows() {
    let url = start(ready_slot(common::recognizer())).await;
    let mut a = connect(&url).await;
    let mut b = connect(&url).await;
    let happy = common::webcam_frame();
    let blank = ImagePlane::filled(320, 240, 90).unwrap();
    for id in 0..3 {
        a.send(gray_message(id, &happy)).await.unwrap();
        b.send(gray_message(id, &blank)).await.unwrap();
        let ra = next_frame(&mut a).await;
        let rb = next_frame(&mut b).await;
        assert_eq!(ra.current_emotion.as_deref(), Some("happiness"));
        assert_eq!(rb.current_emotion, None);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn burst_replies_are_monotonic() {
    let url = start(ready_slot(common::recognizer())).await;
    let mut ws = connect(&url).await;
    let frame = common::webcam_frame();
    for id in 0..50 {
        ws.send(gray_message(id, &frame)).await.unwrap();
    }
    let mut ids = Vec::new();
    let mut dropped = 0;
    while ids.last() != Some(&49) {
        let r = next_frame(&mut ws).await;
        dropped += r.dropped;
        ids.push(r.id);
    }
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
    assert_eq!(ids.len() as u64 + dropped, 50);
}

#[test]
fn offline_and_online_agree() {
    let rec = common::recognizer();
    let frame = common::webcam_frame();
    let offline = rec.classify(&frame, true).unwrap().unwrap();
    let slot = ready_slot(rec);
    let mut window = EmotionWindow::new();
    let online = process_frame(&slot, &frame, &mut window, 0).unwrap();
    assert_eq!(online.raw_emotion.as_deref(), Some(offline.emotion.name()));
    assert_eq!(online.face.unwrap().side, offline.face.unwrap().side);
    let again = slot.get().unwrap().classify(&frame, true).unwrap().unwrap();
    assert_eq!(again.features, offline.features);
}

#[test]
fn no_face_leaves_window_alone() {
    let slot = ready_slot(common::recognizer());
    let mut window = EmotionWindow::new();
    process_frame(&slot, &common::webcam_frame(), &mut window, 0).unwrap();
    let before = window.clone();
    let r = process_frame(&slot, &ImagePlane::filled(320, 240, 10).unwrap(), &mut window, 1).unwrap();
    assert_eq!(window, before);
    assert_eq!(r.face, None);
    assert_eq!(r.raw_emotion, None);
    assert_eq!(r.current_emotion.as_deref(), Some("happiness"));
}
