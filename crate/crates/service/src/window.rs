use std::collections::VecDeque;

use ferkit::Emotion;

pub const WINDOW_LEN: usize = 5;

/// The most recent per-frame emotions and their mode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmotionWindow {
    ring: VecDeque<Emotion>,
    current: Option<Emotion>,
}

impl EmotionWindow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Push `e`, evicting the oldest entry past [`WINDOW_LEN`], and return the new mode.
    pub fn smooth(&mut self, e: Emotion) -> Emotion {
        if self.ring.len() == WINDOW_LEN {
            self.ring.pop_front();
        }
        self.ring.push_back(e);
        let current = mode(self.ring.iter().copied()).expect("ring is non-empty");
        self.current = Some(current);
        current
    }

    pub fn current(&self) -> Option<Emotion> {
        self.current
    }

    /// Oldest first.
    pub fn ring(&self) -> impl Iterator<Item = Emotion> + '_ {
        self.ring.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }
}

/// Most frequent label; among tied labels the one seen last wins.
pub fn mode(items: impl IntoIterator<Item = Emotion>) -> Option<Emotion> {
    let mut counts = [0usize; ferkit::NUM_EMOTIONS];
    let mut last_seen = [0usize; ferkit::NUM_EMOTIONS];
    let mut any = false;
    for (i, e) in items.into_iter().enumerate() {
        counts[e.id()] += 1;
        last_seen[e.id()] = i;
        any = true;
    }
    if !any {
        return None;
    }
    Emotion::ALL
        .into_iter()
        .filter(|e| counts[e.id()] > 0)
        .max_by_key(|e| (counts[e.id()], last_seen[e.id()]))
}
