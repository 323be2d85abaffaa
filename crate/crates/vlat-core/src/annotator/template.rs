//! Prompt templates: the system-message text, response-mode contract, and
//! the plain-text template file format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::taxonomy::Label;

/// How the backend is asked to format its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseMode {
    /// One `Post <n>: <violence>, <direction> — <reason>` line per post.
    Plain,
    /// A single JSON object keyed by post number.
    StructuredObject,
}

impl ResponseMode {
    fn parse(s: &str) -> Option<ResponseMode> {
        match s.trim() {
            "plain" => Some(ResponseMode::Plain),
            "structured-object" => Some(ResponseMode::StructuredObject),
            _ => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ResponseMode::Plain => "plain",
            ResponseMode::StructuredObject => "structured-object",
        }
    }
}

/// Instruction block appended to every structured-output template. Its
/// presence is what [`PromptTemplate::validate`] checks for.
pub const STRUCTURED_OUTPUT_INSTRUCTION: &str = "Respond with a single JSON object and nothing \
else. Use each post's number as a key mapping to an object with the fields \"reason\" (state \
the most important words first), \"violence\" (one of \"non-violent\", \"explicit\", \
\"implicit\") and \"direction\" (one of \"directed\", \"general\", \"self-directed\"; omit it \
for non-violent posts).";

const PLAIN_OUTPUT_INSTRUCTION: &str = "Answer with exactly one line per post in the form \
`Post <n>: <violence>, <direction> — <reason>`, where <violence> is one of non-violent, \
explicit, implicit and <direction> is one of directed, general, self-directed (leave it out \
for non-violent posts).";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("system text must not be empty")]
    EmptySystemText,
    #[error("structured-object templates must contain the output-format instruction block")]
    MissingOutputInstruction,
    #[error("cannot read template {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("template {path}: {message}")]
    BadFormat { path: String, message: String },
    #[error("unknown built-in template {0:?}")]
    UnknownBuiltin(String),
}

/// A named system prompt plus its response contract.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub template_id: String,
    pub system_text: String,
    pub response_mode: ResponseMode,
    pub requires_reason: bool,
    pub few_shot_examples: Vec<(String, Label)>,
}

impl PromptTemplate {
    pub fn new(
        template_id: impl Into<String>,
        system_text: impl Into<String>,
        response_mode: ResponseMode,
        requires_reason: bool,
    ) -> Result<PromptTemplate, TemplateError> {
        let template = PromptTemplate {
            template_id: template_id.into(),
            system_text: system_text.into(),
            response_mode,
            requires_reason,
            few_shot_examples: Vec::new(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        if self.system_text.trim().is_empty() {
            return Err(TemplateError::EmptySystemText);
        }
        if self.response_mode == ResponseMode::StructuredObject
            && !self.system_text.contains("JSON object")
        {
            return Err(TemplateError::MissingOutputInstruction);
        }
        Ok(())
    }

    /// Load from a plain-text file with a `---` fenced front-matter header
    /// carrying `template_id`, `response_mode` and `requires_reason`; the
    /// rest of the file is the system text.
    pub fn load(path: &Path) -> Result<PromptTemplate, TemplateError> {
        let raw = fs::read_to_string(path).map_err(|e| TemplateError::Unreadable {
            path: path.display().to_string(),
            source: e,
        })?;
        let bad = |message: &str| TemplateError::BadFormat {
            path: path.display().to_string(),
            message: message.to_string(),
        };
        let rest = raw
            .strip_prefix("---\n")
            .ok_or_else(|| bad("missing front-matter fence"))?;
        let (header, body) = rest
            .split_once("\n---\n")
            .ok_or_else(|| bad("unterminated front-matter fence"))?;
        let mut template_id = None;
        let mut response_mode = None;
        let mut requires_reason = false;
        for line in header.lines() {
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| bad(&format!("front-matter line without colon: {line:?}")))?;
            match key.trim() {
                "template_id" => template_id = Some(value.trim().to_string()),
                "response_mode" => {
                    response_mode = Some(
                        ResponseMode::parse(value)
                            .ok_or_else(|| bad(&format!("bad response_mode {value:?}")))?,
                    )
                }
                "requires_reason" => {
                    requires_reason = value
                        .trim()
                        .parse()
                        .map_err(|_| bad(&format!("bad requires_reason {value:?}")))?
                }
                other => return Err(bad(&format!("unknown front-matter key {other:?}"))),
            }
        }
        let template = PromptTemplate {
            template_id: template_id.ok_or_else(|| bad("missing template_id"))?,
            system_text: body.trim_end().to_string(),
            response_mode: response_mode.ok_or_else(|| bad("missing response_mode"))?,
            requires_reason,
            few_shot_examples: Vec::new(),
        };
        template.validate()?;
        Ok(template)
    }

    /// Inverse of [`PromptTemplate::load`].
    pub fn save(&self, path: &Path) -> Result<(), TemplateError> {
        let mut out = String::new();
        let _ = writeln!(out, "---");
        let _ = writeln!(out, "template_id: {}", self.template_id);
        let _ = writeln!(out, "response_mode: {}", self.response_mode.name());
        let _ = writeln!(out, "requires_reason: {}", self.requires_reason);
        let _ = writeln!(out, "---");
        out.push_str(&self.system_text);
        out.push('\n');
        fs::write(path, out).map_err(|e| TemplateError::Unreadable {
            path: path.display().to_string(),
            source: e,
        })
    }
}

/// Render the wire messages for one batch of post texts.
///
/// The system message is the template text followed by the `The posts are:`
/// lead-in; the user message lists one post per `Post <n>:` line in batch
/// order. Newlines remaining inside a post are replaced by single spaces so
/// the line framing stays unambiguous.
pub fn render_request(template: &PromptTemplate, batch: &[&str]) -> (String, String) {
    let system = format!("{}\nThe posts are:", template.system_text);
    let user = batch
        .iter()
        .enumerate()
        .map(|(i, text)| format!("Post {}: {}", i + 1, text.replace('\n', " ")))
        .collect::<Vec<_>>()
        .join("\n");
    (system, user)
}

const CATEGORY_GUIDE: &str = "You are annotating forum posts for violent language.\n\
Classify each post's violence as one of:\n\
- non-violent: no violent language.\n\
- explicit: openly recognizable violent language, such as direct threats, calls for harm, or \
endorsements of violence.\n\
- implicit: subtle or coded violent language, including sarcasm, euphemism, or in-group \
references that carry a violent meaning without overtly violent words.\n\
For violent posts also classify the direction as one of:\n\
- directed: aimed at a specific individual.\n\
- general: aimed at a group or at people in general.\n\
- self-directed: aimed at the author themselves.\n\
Non-violent posts carry no direction.";

const CONTEXT_HINT: &str = "The posts come from an online forum of self-described involuntary \
celibates (incels). Community slang, nicknames, and coded references common in that community \
may carry violent meaning even when the wording looks harmless.";

const REASON_INSTRUCTION: &str = "For every post, first give a short reason for your decision, \
quoting the most important words of the post, and only then state the classification. The \
reason must come before the labels.";

fn few_shot_examples() -> Vec<(String, Label)> {
    [
        (
            "Picked up the guitar again this weekend and honestly it made things feel lighter.",
            "NV",
        ),
        (
            "Someone should beat that smug mod until he can't type anymore.",
            "EV-D",
        ),
        ("Every last one of them deserves the rope.", "EV-G"),
        ("I should just end it tonight and be done.", "EV-S"),
        (
            "Guys like him tend to have nasty accidents sooner or later.",
            "IV-D",
        ),
        (
            "Society will get exactly what it has coming one of these days.",
            "IV-G",
        ),
        (
            "Nobody would even notice if I just stopped showing up.",
            "IV-S",
        ),
    ]
    .into_iter()
    .map(|(text, code)| (text.to_string(), Label::parse_code(code).unwrap()))
    .collect()
}

fn render_examples(examples: &[(String, Label)]) -> String {
    let mut out = String::from("Examples:");
    for (text, label) in examples {
        let _ = write!(out, "\nPost: {text}\nClassification: {}", label.violence().name());
        if label.is_violent() {
            let _ = write!(out, ", {}", label.direction().name());
        }
    }
    out
}

/// Identifiers accepted by [`builtin_template`].
pub const BUILTIN_TEMPLATE_IDS: [&str; 5] =
    ["baseline", "context-hint", "give-reason", "few-shot", "final"];

/// The shipped template family, from a bare category guide up to the full
/// template with context hint, reason-first instruction, few-shot examples,
/// and structured output. `final` is the default for annotation runs.
pub fn builtin_template(id: &str) -> Result<PromptTemplate, TemplateError> {
    let mut sections: Vec<String> = vec![CATEGORY_GUIDE.to_string()];
    let mut examples = Vec::new();
    let mut requires_reason = false;
    let mut mode = ResponseMode::Plain;
    match id {
        "baseline" => {}
        "context-hint" => sections.insert(0, CONTEXT_HINT.to_string()),
        "give-reason" => {
            sections.insert(0, CONTEXT_HINT.to_string());
            sections.push(REASON_INSTRUCTION.to_string());
            requires_reason = true;
        }
        "few-shot" => {
            sections.insert(0, CONTEXT_HINT.to_string());
            sections.push(REASON_INSTRUCTION.to_string());
            examples = few_shot_examples();
            sections.push(render_examples(&examples));
            requires_reason = true;
        }
        "final" => {
            sections.insert(0, CONTEXT_HINT.to_string());
            sections.push(REASON_INSTRUCTION.to_string());
            examples = few_shot_examples();
            sections.push(render_examples(&examples));
            requires_reason = true;
            mode = ResponseMode::StructuredObject;
        }
        other => return Err(TemplateError::UnknownBuiltin(other.to_string())),
    }
    sections.push(match mode {
        ResponseMode::Plain => PLAIN_OUTPUT_INSTRUCTION.to_string(),
        ResponseMode::StructuredObject => STRUCTURED_OUTPUT_INSTRUCTION.to_string(),
    });
    let mut template =
        PromptTemplate::new(id, sections.join("\n\n"), mode, requires_reason)?;
    template.few_shot_examples = examples;
    Ok(template)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_single_post() {
        let template = builtin_template("baseline").unwrap();
        let (_, user) = render_request(&template, &["hello"]);
        assert_eq!(user, "Post 1: hello");
    }

    #[test]
    fn render_two_posts_layout() {
        let template = builtin_template("baseline").unwrap();
        let (system, user) = render_request(&template, &["first post", "second post"]);
        assert!(system.ends_with("The posts are:"));
        assert_eq!(user, "Post 1: first post\nPost 2: second post");
    }

    #[test]
    fn render_keeps_posts_on_one_line() {
        let template = builtin_template("baseline").unwrap();
        let (_, user) = render_request(&template, &["line one\nline two"]);
        assert_eq!(user, "Post 1: line one line two");
        assert_eq!(user.lines().count(), 1);
    }

    #[test]
    fn builtin_final_has_all_features() {
        let template = builtin_template("final").unwrap();
        assert_eq!(template.response_mode, ResponseMode::StructuredObject);
        assert!(template.requires_reason);
        assert_eq!(template.few_shot_examples.len(), 7);
        assert!(template.system_text.contains("incel"));
        assert!(template.system_text.contains("JSON object"));
        assert!(template.system_text.contains("before the labels"));
    }

    #[test]
    fn structured_template_requires_instruction_block() {
        let err = PromptTemplate::new("t", "classify stuff", ResponseMode::StructuredObject, false);
        assert!(matches!(err, Err(TemplateError::MissingOutputInstruction)));
        assert!(PromptTemplate::new("t", " ", ResponseMode::Plain, false).is_err());
    }

    #[test]
    fn template_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("final.prompt");
        let template = builtin_template("final").unwrap();
        template.save(&path).unwrap();
        let loaded = PromptTemplate::load(&path).unwrap();
        assert_eq!(loaded.template_id, template.template_id);
        assert_eq!(loaded.system_text, template.system_text);
        assert_eq!(loaded.response_mode, template.response_mode);
        assert_eq!(loaded.requires_reason, template.requires_reason);
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(matches!(
            builtin_template("fancy"),
            Err(TemplateError::UnknownBuiltin(_))
        ));
    }
}
