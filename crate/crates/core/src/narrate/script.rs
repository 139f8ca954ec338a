use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::order::is_title_class;
use crate::error::{Error, Result};
use crate::extract::{DocRegion, Payload, SlideDocument};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One region, chosen by the listener.
    Interactive,
    /// The whole slide in reading order.
    NonInteractive,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Interactive => "interactive",
            Mode::NonInteractive => "non_interactive",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    /// Also accepts `read_all` and `region` as aliases.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interactive" | "region" => Ok(Mode::Interactive),
            "non_interactive" | "read_all" => Ok(Mode::NonInteractive),
            other => Err(Error::config(format!(
                "unknown narration mode `{other}` (interactive, non_interactive, read_all)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub region_id: u32,
    pub label_preamble: String,
    pub body: String,
}

impl Utterance {
    /// Spoken form: preamble, a space, then the body (when there is one).
    pub fn text(&self) -> String {
        if self.body.is_empty() {
            self.label_preamble.clone()
        } else {
            format!("{} {}", self.label_preamble, self.body)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NarrationScript {
    pub mode: Mode,
    pub utterances: Vec<Utterance>,
}

fn spoken_class(class: &str) -> String {
    let words = class.replace(['_', '-'], " ");
    let mut chars = words.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn utterance_for(region: &DocRegion) -> Utterance {
    let (label_preamble, body) = match &region.payload {
        Payload::Text(t) if is_title_class(&region.class) => ("Heading:".to_string(), t.clone()),
        Payload::Text(t) => (format!("{}:", spoken_class(&region.class)), t.clone()),
        Payload::FigureClass(c) => (format!("Figure, type {}:", c.replace('_', " ")), String::new()),
        Payload::EquationDescription(d) => ("Equation:".to_string(), d.clone()),
        Payload::Table(t) => (
            format!(
                "Table with {} {} and {} {}:",
                t.grid.rows,
                if t.grid.rows == 1 { "row" } else { "rows" },
                t.grid.cols,
                if t.grid.cols == 1 { "column" } else { "columns" }
            ),
            t.cell_texts.join(", "),
        ),
        Payload::Error(_) => (
            format!("{}:", spoken_class(&region.class)),
            "content could not be recognised".to_string(),
        ),
    };
    Utterance {
        region_id: region.id,
        label_preamble,
        body,
    }
}

/// Interactive mode narrates `region_id` alone; non-interactive narrates
/// every region in reading order and ignores `region_id`.
pub fn script_for(doc: &SlideDocument, mode: Mode, region_id: Option<u32>) -> Result<NarrationScript> {
    let utterances = match mode {
        Mode::Interactive => {
            let id = region_id.ok_or_else(|| Error::config("interactive narration needs a region id"))?;
            let region = doc
                .region(id)
                .ok_or_else(|| Error::NotFound(format!("region {id} is not in the document")))?;
            vec![utterance_for(region)]
        }
        Mode::NonInteractive => doc.ordered().map(utterance_for).collect(),
    };
    Ok(NarrationScript { mode, utterances })
}
