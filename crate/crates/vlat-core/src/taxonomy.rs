//! The violence label algebra: coarse classes, directedness, and the
//! seven valid labels, plus parsing/validation of annotator output strings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Coarse violence class of a post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolenceClass {
    NonViolent,
    Explicit,
    Implicit,
}

impl ViolenceClass {
    pub const ALL: [ViolenceClass; 3] = [
        ViolenceClass::NonViolent,
        ViolenceClass::Explicit,
        ViolenceClass::Implicit,
    ];

    /// Canonical lowercase name used in annotation files.
    pub fn name(self) -> &'static str {
        match self {
            ViolenceClass::NonViolent => "non-violent",
            ViolenceClass::Explicit => "explicit",
            ViolenceClass::Implicit => "implicit",
        }
    }

    /// Abbreviated header used in distribution tables.
    pub fn short_name(self) -> &'static str {
        match self {
            ViolenceClass::NonViolent => "Non.",
            ViolenceClass::Explicit => "Expl.",
            ViolenceClass::Implicit => "Impl.",
        }
    }
}

/// Who the violent language is aimed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Directedness {
    /// Only valid together with [`ViolenceClass::NonViolent`].
    NotApplicable,
    /// Targets a specific individual.
    Directed,
    /// Targets a group (undirected).
    General,
    /// Targets the author.
    SelfDirected,
}

impl Directedness {
    pub fn name(self) -> &'static str {
        match self {
            Directedness::NotApplicable => "not-applicable",
            Directedness::Directed => "directed",
            Directedness::General => "general",
            Directedness::SelfDirected => "self-directed",
        }
    }
}

/// A (violence class, directedness) pair.
///
/// Non-violent labels never carry a direction; the constructor rejects any
/// combination that violates this, so only seven values are representable
/// as validated labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Label {
    violence: ViolenceClass,
    direction: Directedness,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("non-violent labels cannot carry a direction (got {0:?})")]
    DirectionOnNonViolent(Directedness),
    #[error("violent labels require a direction")]
    MissingDirection,
    #[error("unrecognized violence class {0:?}")]
    UnknownViolence(String),
    #[error("unrecognized direction {0:?} for violence class {1:?}")]
    UnknownDirection(String, String),
    #[error("unrecognized label code {0:?}")]
    UnknownCode(String),
}

impl Label {
    /// All seven valid labels, in canonical code order.
    pub const ALL: [Label; 7] = [
        Label {
            violence: ViolenceClass::NonViolent,
            direction: Directedness::NotApplicable,
        },
        Label {
            violence: ViolenceClass::Explicit,
            direction: Directedness::Directed,
        },
        Label {
            violence: ViolenceClass::Explicit,
            direction: Directedness::General,
        },
        Label {
            violence: ViolenceClass::Explicit,
            direction: Directedness::SelfDirected,
        },
        Label {
            violence: ViolenceClass::Implicit,
            direction: Directedness::Directed,
        },
        Label {
            violence: ViolenceClass::Implicit,
            direction: Directedness::General,
        },
        Label {
            violence: ViolenceClass::Implicit,
            direction: Directedness::SelfDirected,
        },
    ];

    pub const NON_VIOLENT: Label = Label::ALL[0];

    pub fn new(violence: ViolenceClass, direction: Directedness) -> Result<Label, LabelError> {
        match (violence, direction) {
            (ViolenceClass::NonViolent, Directedness::NotApplicable) => {
                Ok(Label { violence, direction })
            }
            (ViolenceClass::NonViolent, d) => Err(LabelError::DirectionOnNonViolent(d)),
            (_, Directedness::NotApplicable) => Err(LabelError::MissingDirection),
            (violence, direction) => Ok(Label { violence, direction }),
        }
    }

    pub fn violence(self) -> ViolenceClass {
        self.violence
    }

    pub fn direction(self) -> Directedness {
        self.direction
    }

    pub fn is_violent(self) -> bool {
        self.violence != ViolenceClass::NonViolent
    }

    /// Canonical short code, one of `NV`, `EV-D`, `EV-G`, `EV-S`, `IV-D`,
    /// `IV-G`, `IV-S`. Bijective with the seven valid labels.
    pub fn code(self) -> &'static str {
        match (self.violence, self.direction) {
            (ViolenceClass::NonViolent, _) => "NV",
            (ViolenceClass::Explicit, Directedness::Directed) => "EV-D",
            (ViolenceClass::Explicit, Directedness::General) => "EV-G",
            (ViolenceClass::Explicit, Directedness::SelfDirected) => "EV-S",
            (ViolenceClass::Implicit, Directedness::Directed) => "IV-D",
            (ViolenceClass::Implicit, Directedness::General) => "IV-G",
            (ViolenceClass::Implicit, Directedness::SelfDirected) => "IV-S",
            (_, Directedness::NotApplicable) => unreachable!("validated on construction"),
        }
    }

    /// Inverse of [`Label::code`].
    pub fn parse_code(code: &str) -> Result<Label, LabelError> {
        let trimmed = code.trim();
        Label::ALL
            .iter()
            .copied()
            .find(|l| l.code().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| LabelError::UnknownCode(code.to_string()))
    }

    /// Projection onto the three-class view.
    pub fn coarse(self) -> ViolenceClass {
        self.violence
    }
}

/// Maps free-form annotator strings onto a [`Label`].
///
/// Matching is case-insensitive and whitespace-trimmed. Accepted violence
/// synonyms: `non-violent`/`none`, `explicit`, `implicit`. Accepted direction
/// synonyms: `directed`, `general`/`undirected`, `self-directed`/`self`.
/// A non-violent result forces [`Directedness::NotApplicable`] no matter what
/// the direction field says.
pub fn parse_label(violence_text: &str, direction_text: &str) -> Result<Label, LabelError> {
    let violence = match violence_text.trim().to_ascii_lowercase().as_str() {
        "non-violent" | "none" => ViolenceClass::NonViolent,
        "explicit" => ViolenceClass::Explicit,
        "implicit" => ViolenceClass::Implicit,
        _ => return Err(LabelError::UnknownViolence(violence_text.to_string())),
    };
    if violence == ViolenceClass::NonViolent {
        return Ok(Label::NON_VIOLENT);
    }
    let direction = match direction_text.trim().to_ascii_lowercase().as_str() {
        "directed" => Directedness::Directed,
        "general" | "undirected" => Directedness::General,
        "self-directed" | "self" => Directedness::SelfDirected,
        _ => {
            return Err(LabelError::UnknownDirection(
                direction_text.to_string(),
                violence.name().to_string(),
            ))
        }
    };
    Label::new(violence, direction)
}

/// Canonical short code for a label. See [`Label::code`].
pub fn label_code(label: Label) -> &'static str {
    label.code()
}

/// One label assigned to one post by one annotator (human coder or model run).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub post_id: String,
    pub annotator_id: String,
    pub label: Label,
    pub reason: Option<String>,
}
