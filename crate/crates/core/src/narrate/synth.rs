use serde::{Deserialize, Serialize};

use super::script::NarrationScript;
use crate::error::Result;

/// Text-to-speech engine behind a byte-stream contract.
pub trait TtsAdapter {
    /// Container format of the returned bytes, e.g. "audio/wav".
    fn format(&self) -> &str;
    fn speak(&mut self, text: &str) -> Result<Vec<u8>>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Synthesis {
    /// One line per utterance.
    Transcript { text: String },
    /// One audio segment per utterance, in script order.
    Audio { format: String, segments: Vec<Vec<u8>> },
}

pub fn transcript(script: &NarrationScript) -> String {
    script.utterances.iter().map(|u| u.text().replace('\n', " ") + "\n").collect()
}

/// Audio when an adapter is given and every call succeeds, otherwise the
/// plain transcript.
pub fn synthesize(script: &NarrationScript, tts: Option<&mut dyn TtsAdapter>) -> Synthesis {
    let Some(tts) = tts else {
        return Synthesis::Transcript {
            text: transcript(script),
        };
    };
    let mut segments = Vec::with_capacity(script.utterances.len());
    for u in &script.utterances {
        match tts.speak(&u.text()) {
            Ok(bytes) => segments.push(bytes),
            Err(e) => {
                log::warn!("speech synthesis failed on region {}: {e}; falling back to transcript", u.region_id);
                return Synthesis::Transcript {
                    text: transcript(script),
                };
            }
        }
    }
    Synthesis::Audio {
        format: tts.format().to_string(),
        segments,
    }
}
