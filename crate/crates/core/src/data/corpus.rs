//! JSON-lines corpus reading and writing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Label, Task};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Fear,
    Disgust,
    Trust,
    Joy,
    Surprise,
    Anticipation,
    Sad,
    #[default]
    #[serde(rename = "None")]
    None,
}

/// One annotated comment. Only the three task labels feed the model; the
/// remaining annotation fields are carried for schema fidelity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledExample {
    #[serde(default)]
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_text: Option<String>,
    pub subtext: Label,
    pub sarcasm: Label,
    pub metaphor: Label,
    #[serde(default)]
    pub exaggeration: Label,
    #[serde(default)]
    pub homophonic: Label,
    #[serde(default)]
    pub other: Label,
    #[serde(default)]
    pub emotion: Emotion,
    #[serde(default)]
    pub attitude: i64,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, labels: [Label; 3]) -> Self {
        LabeledExample {
            id: id.into(),
            text: text.into(),
            parent_text: None,
            subtext: labels[0],
            sarcasm: labels[1],
            metaphor: labels[2],
            exaggeration: Label::Unsure,
            homophonic: Label::Unsure,
            other: Label::Unsure,
            emotion: Emotion::None,
            attitude: 0,
        }
    }

    pub fn label(&self, task: Task) -> Label {
        match task {
            Task::Subtext => self.subtext,
            Task::Sarcasm => self.sarcasm,
            Task::Metaphor => self.metaphor,
        }
    }

    pub fn task_labels(&self) -> [Label; 3] {
        [self.subtext, self.sarcasm, self.metaphor]
    }
}

/// Reads a JSON-lines corpus. Blank lines are skipped; records without an id
/// are given their 1-based line number.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<LabeledExample>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut ex: LabeledExample = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if ex.id.is_empty() {
            ex.id = (i + 1).to_string();
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, examples: &[LabeledExample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
