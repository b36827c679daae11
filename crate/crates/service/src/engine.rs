use std::sync::{Arc, OnceLock};
use std::time::Instant;

use ferkit::pipeline::Recognizer;
use ferkit::{Emotion, ImagePlane};

use crate::protocol::{emotion_name, FrameResult, LabelScore};
use crate::window::EmotionWindow;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("engine is not initialised yet")]
    NotReady,
    #[error(transparent)]
    Pipeline(#[from] ferkit::Error),
}

/// Recognizer that may still be loading; set once, then shared read-only.
pub type EngineSlot = Arc<OnceLock<Recognizer>>;

pub fn empty_slot() -> EngineSlot {
    Arc::new(OnceLock::new())
}

pub fn ready_slot(recognizer: Recognizer) -> EngineSlot {
    let slot = empty_slot();
    let _ = slot.set(recognizer);
    slot
}

/// Detect, crop, extract and classify one frame, then update `window`.
/// A frame without a face leaves the window untouched.
pub fn process_frame(
    slot: &OnceLock<Recognizer>,
    img: &ImagePlane,
    window: &mut EmotionWindow,
    id: u64,
) -> Result<FrameResult, ServiceError> {
    let engine = slot.get().ok_or(ServiceError::NotReady)?;
    let start = Instant::now();
    let classified = engine.classify(img, true)?;
    let (face, raw, scores) = match classified {
        Some(c) => {
            window.smooth(c.emotion);
            let scores = Emotion::ALL
                .iter()
                .map(|e| LabelScore {
                    emotion: e.name().to_string(),
                    score: c.scores[e.id()],
                })
                .collect();
            (c.face.map(Into::into), Some(c.emotion), scores)
        }
        None => (None, None, Vec::new()),
    };
    Ok(FrameResult {
        id,
        face,
        raw_emotion: emotion_name(raw),
        current_emotion: emotion_name(window.current()),
        scores,
        latency_ms: start.elapsed().as_secs_f64() * 1e3,
        dropped: 0,
    })
}
