//! Task identifiers and ternary labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Classification task. Subtext is the primary task; sarcasm and metaphor
/// are auxiliary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Subtext,
    Sarcasm,
    Metaphor,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Subtext, Task::Sarcasm, Task::Metaphor];

    pub fn index(self) -> usize {
        match self {
            Task::Subtext => 0,
            Task::Sarcasm => 1,
            Task::Metaphor => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Subtext => "subtext",
            Task::Sarcasm => "sarcasm",
            Task::Metaphor => "metaphor",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "subtext" => Ok(Task::Subtext),
            "sarcasm" => Ok(Task::Sarcasm),
            "metaphor" => Ok(Task::Metaphor),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// Parses a comma-separated task list such as `subtext,sarcasm`.
pub fn parse_task_list(s: &str) -> Result<Vec<Task>, Error> {
    let mut tasks: Vec<Task> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    tasks.sort();
    tasks.dedup();
    Ok(tasks)
}

/// Ternary annotation: -1 absent, 0 unsure, 1 present.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Label {
    Negative,
    #[default]
    Unsure,
    Positive,
}

impl Label {
    /// Class order used by every probability vector: (-1, 0, 1).
    pub const ALL: [Label; 3] = [Label::Negative, Label::Unsure, Label::Positive];

    pub fn class_index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Unsure => 1,
            Label::Positive => 2,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn value(self) -> i64 {
        self.class_index() as i64 - 1
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.class_index()] = 1.0;
        v
    }
}

impl TryFrom<i64> for Label {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Label::Negative),
            0 => Ok(Label::Unsure),
            1 => Ok(Label::Positive),
            other => Err(format!("label {other} outside {{-1, 0, 1}}")),
        }
    }
}

impl From<Label> for i64 {
    fn from(l: Label) -> i64 {
        l.value()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}
