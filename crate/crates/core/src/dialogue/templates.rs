use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::DialogueError;

const DEFAULT_SET: &str = include_str!("../../templates/default.toml");

/// Phrases that frame a statement as the answer. No template may contain them.
pub const BANNED_PHRASES: [&str; 5] = [
    "the answer is",
    "the correct answer",
    "the solution is",
    "answer:",
    "the result is",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Opening,
    OpeningGeneric,
    Citation,
    Question,
    QuestionGeneric,
    NoResults,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Opening,
        Family::OpeningGeneric,
        Family::Citation,
        Family::Question,
        Family::QuestionGeneric,
        Family::NoResults,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Opening => "opening",
            Family::OpeningGeneric => "opening_generic",
            Family::Citation => "citation",
            Family::Question => "question",
            Family::QuestionGeneric => "question_generic",
            Family::NoResults => "no_results",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Family::Opening | Family::Question => &["topic"],
            Family::Citation => &["resource_label", "excerpt"],
            _ => &[],
        }
    }
}

/// Fixed response strings for the built-in backend, with `{resource_label}`,
/// `{excerpt}` and `{topic}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    pub id: String,
    pub opening: Vec<String>,
    pub opening_generic: Vec<String>,
    pub citation: Vec<String>,
    pub question: Vec<String>,
    pub question_generic: Vec<String>,
    pub no_results: Vec<String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet::parse(DEFAULT_SET).expect("bundled template set is valid")
    }
}

impl TemplateSet {
    pub fn parse(src: &str) -> Result<Self, DialogueError> {
        let set: TemplateSet = toml::from_str(src).map_err(|e| DialogueError::Templates(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: &Path) -> Result<Self, DialogueError> {
        let src = std::fs::read_to_string(path).map_err(|e| DialogueError::Templates(format!("{}: {e}", path.display())))?;
        TemplateSet::parse(&src)
    }

    pub fn family(&self, family: Family) -> &[String] {
        match family {
            Family::Opening => &self.opening,
            Family::OpeningGeneric => &self.opening_generic,
            Family::Citation => &self.citation,
            Family::Question => &self.question,
            Family::QuestionGeneric => &self.question_generic,
            Family::NoResults => &self.no_results,
        }
    }

    /// Every template string of the set.
    pub fn all_strings(&self) -> impl Iterator<Item = (Family, &str)> {
        Family::ALL
            .into_iter()
            .flat_map(move |f| self.family(f).iter().map(move |s| (f, s.as_str())))
    }

    pub fn validate(&self) -> Result<(), DialogueError> {
        let bad = |why: String| Err(DialogueError::Templates(why));
        if self.id.trim().is_empty() {
            return bad("template set id is empty".into());
        }
        for family in Family::ALL {
            let strings = self.family(family);
            if strings.is_empty() {
                return bad(format!("family `{}` is empty", family.as_str()));
            }
            for (i, t) in strings.iter().enumerate() {
                let at = format!("{}[{i}]", family.as_str());
                let names = placeholders(t).map_err(|e| DialogueError::Templates(format!("{at}: {e}")))?;
                for name in &names {
                    if !family.required().contains(&name.as_str()) {
                        return bad(format!("{at}: placeholder {{{name}}} is not allowed here"));
                    }
                }
                for req in family.required() {
                    if !names.iter().any(|n| n == req) {
                        return bad(format!("{at}: missing placeholder {{{req}}}"));
                    }
                }
                if t.trim().is_empty() || t.trim() != t {
                    return bad(format!("{at}: empty or padded with whitespace"));
                }
                if t.contains('\n') {
                    return bad(format!("{at}: templates are single lines"));
                }
                if matches!(family, Family::Question | Family::QuestionGeneric) && !t.ends_with('?') {
                    return bad(format!("{at}: guiding questions must end with '?'"));
                }
                let lower = t.to_lowercase();
                if let Some(p) = BANNED_PHRASES.iter().find(|p| lower.contains(*p)) {
                    return bad(format!("{at}: contains answer framing `{p}`"));
                }
            }
        }
        Ok(())
    }

    /// Regexes matching any sentence of any template, with placeholders
    /// standing for arbitrary non-empty text.
    pub fn sentence_patterns(&self) -> Vec<Regex> {
        let mut out = Vec::new();
        for (_, t) in self.all_strings() {
            for r in crate::text::sentence_ranges(t) {
                let sentence = &t[r];
                let mut pattern = String::from("^");
                let mut rest = sentence;
                while let Some(open) = rest.find('{') {
                    let close = rest[open..].find('}').map(|c| open + c).unwrap_or(rest.len() - 1);
                    pattern.push_str(&regex::escape(&rest[..open]));
                    pattern.push_str("(?s:.+)");
                    rest = &rest[close + 1..];
                }
                pattern.push_str(&regex::escape(rest));
                pattern.push('$');
                out.push(Regex::new(&pattern).expect("escaped template sentence is a valid regex"));
            }
        }
        out
    }
}

/// Placeholder names in order of appearance.
fn placeholders(template: &str) -> Result<Vec<String>, String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find(['{', '}']) {
        if rest[open..].starts_with('}') {
            return Err("unmatched '}'".into());
        }
        let Some(len) = rest[open + 1..].find('}') else {
            return Err("unmatched '{'".into());
        };
        let name = &rest[open + 1..open + 1 + len];
        if !matches!(name, "resource_label" | "excerpt" | "topic") {
            return Err(format!("unknown placeholder {{{name}}}"));
        }
        names.push(name.to_string());
        rest = &rest[open + len + 2..];
    }
    Ok(names)
}

/// Substitute placeholders in one pass, so values are never re-expanded.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("validated template");
        let name = &rest[open + 1..close];
        let value = values.iter().find(|(n, _)| *n == name).map(|(_, v)| *v).unwrap_or("");
        out.push_str(value);
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}
