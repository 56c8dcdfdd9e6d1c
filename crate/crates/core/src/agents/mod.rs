//! Manager, Operator, Action Reflector and Notetaker, plus model providers.

mod prompt;
mod provider;
mod request;
mod roles;
mod usage;

pub use prompt::{
    perception_diff, prompt_gen_manager, prompt_gen_notetaker, prompt_gen_operator,
    prompt_gen_reflector, ManagerPrompt, NotePrompt, OperatorPrompt, ReflectPrompt,
    ACTION_LOG_HEADER, DEFAULT_K_ERR, DEFAULT_K_LOG, ERROR_HEADER, EXEMPLAR_HEADER, INITIAL_TIPS,
    OPERATOR_EXEMPLAR_HEADER, PERCEPTION_HEADER,
};
pub use provider::{
    HttpProvider, Provider, ProviderError, ScriptStep, ScriptedProvider, PROVIDER_KEY_ENV,
    PROVIDER_URL_ENV,
};
pub use request::{
    whitespace_tokens, ModelRequest, ModelResponse, Role, UserPart, DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
};
pub use roles::{
    manager_step, notetake_step, operator_step, parse_manager, parse_notes, parse_operator,
    parse_reflection, parse_sections, reflect_step, ManagerDecision, Reflection, DONE_SENTINEL,
    SECTION_LABELS, UNCHANGED_SENTINEL,
};
pub use usage::{ComponentUsage, UsageLedger};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("malformed {} response: {reason}", role.as_str())]
    ResponseFormat { role: Role, reason: String },
    #[error(transparent)]
    Parse(#[from] ModelError),
}
