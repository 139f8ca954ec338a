//! Reading order, tagged markup, narration scripts and speech output.

pub mod markup;
pub mod order;
pub mod script;
pub mod synth;

pub use markup::{document_entries, parse_markup, payload_text, to_markup, MarkupEntry, ParsedMarkup};
pub use order::{document_order, is_title_class, reading_order, OrderItem};
pub use script::{script_for, utterance_for, Mode, NarrationScript, Utterance};
pub use synth::{synthesize, transcript, Synthesis, TtsAdapter};
