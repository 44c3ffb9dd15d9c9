use serde::{Deserialize, Serialize};

use crate::prompt::ChatPrompt;

/// Model-specific rendering of a `(system, user)` prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatTemplate {
    /// Leave wrapping to the endpoint's chat API.
    #[default]
    Native,
    /// Llama-3 header/eot markup.
    Llama3,
    /// No roles: system text prepended to the user text.
    Plain,
}

impl ChatTemplate {
    /// Single-string rendering, used when the endpoint scores raw text.
    pub fn render(self, prompt: &ChatPrompt) -> String {
        match self {
            ChatTemplate::Llama3 => format!(
                "<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n\n{}\n<|eot_id|>\n\
                 <|start_header_id|>user<|end_header_id|>\n\n{}\n<|eot_id|>\n\
                 <|start_header_id|>assistant<|end_header_id|>\n",
                prompt.system_text, prompt.user_text
            ),
            ChatTemplate::Native | ChatTemplate::Plain => prepend_system(prompt),
        }
    }
}

/// Merges the system text into the user text for models without a system
/// role.
pub fn prepend_system(prompt: &ChatPrompt) -> String {
    if prompt.system_text.is_empty() {
        prompt.user_text.clone()
    } else {
        format!("{}\n\n{}", prompt.system_text, prompt.user_text)
    }
}
