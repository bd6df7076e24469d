//! Prompt rendering with question/answer wrapping and circular tag rotation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::Category;

const TAGS: &str = "{tags}";
const QUESTION: &str = "{question}";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template must contain {{tags}} exactly once (found {0})")]
    TagsPlaceholder(usize),
    #[error("template may contain {{question}} at most once (found {0})")]
    QuestionPlaceholder(usize),
    #[error("cannot rotate an empty vocabulary")]
    EmptyVocabulary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub body: String,
    pub qa_wrap: bool,
    pub why_suffix: bool,
    pub tag_separator: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            body: "{question} Choose exactly one of: {tags}.".to_string(),
            qa_wrap: true,
            why_suffix: false,
            tag_separator: ", ".to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), PromptError> {
        let tags = self.body.matches(TAGS).count();
        if tags != 1 {
            return Err(PromptError::TagsPlaceholder(tags));
        }
        let questions = self.body.matches(QUESTION).count();
        if questions > 1 {
            return Err(PromptError::QuestionPlaceholder(questions));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub category_name: String,
    pub tag_order: Vec<String>,
    pub shift: usize,
}

/// Left-rotates `tags` by `k` positions (modulo the length).
pub fn rotate_tags<T: Clone>(tags: &[T], k: usize) -> Result<Vec<T>, PromptError> {
    if tags.is_empty() {
        return Err(PromptError::EmptyVocabulary);
    }
    let mut out = tags.to_vec();
    out.rotate_left(k % tags.len());
    Ok(out)
}

pub fn render_prompt(
    category: &Category,
    template: &PromptTemplate,
    shift: usize,
) -> Result<RenderedPrompt, PromptError> {
    template.validate()?;
    let tag_order = rotate_tags(&category.tags, shift)?;
    let joined = tag_order.join(&template.tag_separator);

    // Single pass so placeholder-like text inside the substituted values is
    // left alone.
    let mut body = String::with_capacity(template.body.len() + joined.len() + category.question.len());
    let mut rest = template.body.as_str();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix(TAGS) {
            body.push_str(&joined);
            rest = r;
        } else if let Some(r) = rest.strip_prefix(QUESTION) {
            body.push_str(&category.question);
            rest = r;
        } else {
            let ch = rest.chars().next().unwrap();
            body.push(ch);
            rest = &rest[ch.len_utf8()..];
        }
    }

    let mut body = body.trim().to_string();
    if template.why_suffix {
        if body.ends_with('.') {
            body.pop();
        }
        body.push_str(", why?");
    }
    let text = if template.qa_wrap {
        format!("Question: {body} Answer:")
    } else {
        body
    };
    Ok(RenderedPrompt {
        text,
        category_name: category.name.clone(),
        tag_order,
        shift: shift % category.tags.len(),
    })
}

/// Renders one prompt per distinct rotation of the category's vocabulary.
pub fn render_shift_suite(
    category: &Category,
    template: &PromptTemplate,
) -> Result<Vec<RenderedPrompt>, PromptError> {
    (0..category.tags.len())
        .map(|k| render_prompt(category, template, k))
        .collect()
}
