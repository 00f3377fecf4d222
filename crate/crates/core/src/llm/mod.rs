//! Model-delegated stages and the providers that back them.

mod cache;
mod dist;
mod http;
mod mock;
mod parse;
mod provider;
mod stages;
mod template;

pub use cache::CachingProvider;
pub use dist::{
    check_distribution, normalize, one_hot, DistributionError, StanceDistribution,
    SupportDistribution, DISTRIBUTION_TOLERANCE,
};
pub use http::HttpProvider;
pub use mock::{split_sentences, FlakyMode, FlakyProvider, MockProvider};
pub use parse::parse_json_lenient;
pub use provider::{
    input_hash, LlmProvider, Prompt, ProviderError, RetryPolicy, SamplingConfig, StageKind,
};
pub use stages::{
    LlmError, LlmStages, QueryExpansion, RoleAssignment, TypeJudgement, CHECKWORTHY_LABELS,
    MAX_QUERIES_PER_SIDE, MAX_QUERY_CHARS, NO_TAKEAWAY_SENTINEL,
};
pub use template::{PromptTemplate, TemplateError, TEMPLATE_VERSION};
