//! Stories: ordered pieces, keyframe bookkeeping for interpolation, and the
//! exported story document with its markdown renderings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caption::generate_caption;
use crate::data::{FactEngine, FactView};
use crate::fact::DataFact;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Keyframe,
    Interpolated,
    EmptySlot,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Keyframe => "keyframe",
            Provenance::Interpolated => "interpolated",
            Provenance::EmptySlot => "empty-slot",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoryPiece {
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact: Option<DataFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

impl StoryPiece {
    pub fn keyframe(fact: DataFact) -> Self {
        StoryPiece {
            provenance: Provenance::Keyframe,
            fact: Some(fact),
            caption: None,
        }
    }

    pub fn interpolated(fact: DataFact, caption: impl Into<String>) -> Self {
        StoryPiece {
            provenance: Provenance::Interpolated,
            fact: Some(fact),
            caption: Some(caption.into()),
        }
    }

    pub fn empty_slot() -> Self {
        StoryPiece {
            provenance: Provenance::EmptySlot,
            fact: None,
            caption: None,
        }
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn is_keyframe(&self) -> bool {
        self.provenance == Provenance::Keyframe
    }

    fn check_shape(&self, index: usize) -> Result<(), StoryError> {
        let bad = |reason: &str| {
            Err(StoryError::MalformedPiece {
                index,
                reason: reason.to_string(),
            })
        };
        match (self.provenance, &self.fact, &self.caption) {
            (Provenance::EmptySlot, None, None) => Ok(()),
            (Provenance::EmptySlot, _, _) => bad("empty slots carry no fact and no caption"),
            (_, None, _) => bad("keyframe and interpolated pieces need a fact"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoryError {
    #[error("piece {index}: {reason}")]
    MalformedPiece { index: usize, reason: String },
    #[error("piece index {index} is out of range (story has {len} pieces)")]
    OutOfRange { index: usize, len: usize },
    #[error("piece {0} is not a keyframe")]
    NotKeyframe(usize),
    #[error("no keyframe follows piece {0}")]
    NoNextKeyframe(usize),
    #[error("piece {0} needs a keyframe before and after it")]
    MissingNeighbors(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Story {
    pub id: String,
    pub title: String,
    pub dataset_id: String,
    #[serde(default)]
    pub pieces: Vec<StoryPiece>,
}

impl Story {
    pub fn new(id: impl Into<String>, title: impl Into<String>, dataset_id: impl Into<String>) -> Self {
        Story {
            id: id.into(),
            title: title.into(),
            dataset_id: dataset_id.into(),
            pieces: Vec::new(),
        }
    }

    pub fn check_shape(&self) -> Result<(), StoryError> {
        self.pieces
            .iter()
            .enumerate()
            .try_for_each(|(i, p)| p.check_shape(i))
    }

    pub fn keyframe_indices(&self) -> Vec<usize> {
        (0..self.pieces.len())
            .filter(|&i| self.pieces[i].is_keyframe())
            .collect()
    }

    /// Index of the first keyframe after the keyframe at `index`.
    pub fn next_keyframe(&self, index: usize) -> Result<usize, StoryError> {
        let piece = self.pieces.get(index).ok_or(StoryError::OutOfRange {
            index,
            len: self.pieces.len(),
        })?;
        if !piece.is_keyframe() {
            return Err(StoryError::NotKeyframe(index));
        }
        (index + 1..self.pieces.len())
            .find(|&i| self.pieces[i].is_keyframe())
            .ok_or(StoryError::NoNextKeyframe(index))
    }

    /// Nearest keyframes strictly before and after `index`.
    pub fn keyframe_neighbors(&self, index: usize) -> Result<(usize, usize), StoryError> {
        if index >= self.pieces.len() {
            return Err(StoryError::OutOfRange {
                index,
                len: self.pieces.len(),
            });
        }
        let prev = (0..index).rev().find(|&i| self.pieces[i].is_keyframe());
        let next = (index + 1..self.pieces.len()).find(|&i| self.pieces[i].is_keyframe());
        match (prev, next) {
            (Some(p), Some(n)) => Ok((p, n)),
            _ => Err(StoryError::MissingNeighbors(index)),
        }
    }

    /// Replace everything between the keyframe at `after` and the next
    /// keyframe with `pieces`. Returns the index range now holding them.
    pub fn splice_between(
        &mut self,
        after: usize,
        pieces: Vec<StoryPiece>,
    ) -> Result<std::ops::Range<usize>, StoryError> {
        let next = self.next_keyframe(after)?;
        let len = pieces.len();
        self.pieces.splice(after + 1..next, pieces);
        Ok(after + 1..after + 1 + len)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoryForm {
    #[default]
    Storyline,
    Factsheet,
    Scrollup,
}

impl StoryForm {
    pub fn as_str(self) -> &'static str {
        match self {
            StoryForm::Storyline => "storyline",
            StoryForm::Factsheet => "factsheet",
            StoryForm::Scrollup => "scrollup",
        }
    }
}

impl FromStr for StoryForm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "storyline" => Ok(StoryForm::Storyline),
            "factsheet" => Ok(StoryForm::Factsheet),
            "scrollup" => Ok(StoryForm::Scrollup),
            other => Err(format!(
                "unknown story form `{other}` (expected storyline, factsheet or scrollup)"
            )),
        }
    }
}

impl fmt::Display for StoryForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DocumentPiece {
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fact: Option<DataFact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<FactView>,
}

/// Self-contained export of a story, with the data behind every fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoryDocument {
    pub title: String,
    pub dataset_id: String,
    pub form: StoryForm,
    pub pieces: Vec<DocumentPiece>,
}

impl StoryDocument {
    /// Evaluate every fact of `story`. Missing captions are generated; a fact
    /// that no longer evaluates keeps its piece but gets no view.
    pub fn build(story: &Story, engine: &FactEngine<'_>, form: StoryForm) -> Self {
        let pieces = story
            .pieces
            .iter()
            .map(|p| {
                let view = p.fact.as_ref().and_then(|f| engine.evaluate(f).ok());
                let caption = match (&p.caption, &p.fact, &view) {
                    (Some(c), _, _) => Some(c.clone()),
                    (None, Some(f), Some(v)) => Some(generate_caption(f, v)),
                    _ => None,
                };
                DocumentPiece {
                    provenance: p.provenance,
                    fact: p.fact.clone(),
                    caption,
                    view,
                }
            })
            .collect();
        StoryDocument {
            title: story.title.clone(),
            dataset_id: story.dataset_id.clone(),
            form,
            pieces,
        }
    }

    pub fn with_form(mut self, form: StoryForm) -> Self {
        self.form = form;
        self
    }

    /// The story pieces the document was built from.
    pub fn story_pieces(&self) -> Vec<StoryPiece> {
        self.pieces
            .iter()
            .map(|p| StoryPiece {
                provenance: p.provenance,
                fact: p.fact.clone(),
                caption: p.caption.clone(),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("story documents serialize")
    }

    pub fn render_markdown(&self) -> String {
        let mut out = format!("# {}\n\n", md_escape(&self.title));
        out.push_str(&format!("_{} of dataset `{}`_\n\n", self.form, self.dataset_id));
        match self.form {
            StoryForm::Storyline => {
                for (i, p) in self.pieces.iter().enumerate() {
                    out.push_str(&format!("{}. **[{}]** {}\n", i + 1, p.provenance, piece_text(p)));
                }
            }
            StoryForm::Factsheet => {
                out.push_str("| # | provenance | type | caption |\n|---|---|---|---|\n");
                for (i, p) in self.pieces.iter().enumerate() {
                    let ty = p.fact.as_ref().map_or("", |f| f.fact_type.as_str());
                    out.push_str(&format!(
                        "| {} | {} | {} | {} |\n",
                        i + 1,
                        p.provenance,
                        ty,
                        piece_text(p).replace('|', "\\|")
                    ));
                }
            }
            StoryForm::Scrollup => {
                for (i, p) in self.pieces.iter().enumerate() {
                    out.push_str(&format!("## {} [{}]\n\n{}\n\n", i + 1, p.provenance, piece_text(p)));
                    if let Some(view) = &p.view {
                        for g in &view.groups {
                            let mark = if view.highlighted.contains(&g.label) { " *" } else { "" };
                            out.push_str(&format!("- {}: {}{}\n", md_escape(&g.label), g.value, mark));
                        }
                        out.push('\n');
                    }
                }
            }
        }
        out
    }
}

fn piece_text(p: &DocumentPiece) -> String {
    match (&p.caption, &p.fact) {
        (Some(c), _) => md_escape(c),
        (None, Some(f)) => format!("`{}`", f.canonical()),
        (None, None) => "_(empty slot)_".to_string(),
    }
}

fn md_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        if matches!(ch, '*' | '_' | '`' | '#' | '[' | ']') {
            out.push('\\');
        }
        out.push(ch);
    }
    out
}
