//! The seven labelled emotions and their canonical order.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

pub const NUM_EMOTIONS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Emotion {
    Anger = 0,
    Contempt = 1,
    Disgust = 2,
    Fear = 3,
    Happiness = 4,
    Sadness = 5,
    Surprise = 6,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_EMOTIONS] = [
        Emotion::Anger,
        Emotion::Contempt,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Happiness,
        Emotion::Sadness,
        Emotion::Surprise,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Emotion> {
        Self::ALL.get(id).copied()
    }

    /// Maps a CK+ emotion code (1..=7) to an emotion. Code 0 (neutral) and
    /// anything out of range yield `None`.
    pub fn from_ck_code(code: u32) -> Option<Emotion> {
        match code {
            1..=7 => Self::from_id(code as usize - 1),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Contempt => "contempt",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Happiness => "happiness",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
        }
    }

    /// Two-letter code used in confusion matrix headers.
    pub fn short(self) -> &'static str {
        &self.name()[..2]
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Format(format!("unknown emotion {s:?}")))
    }
}
