//! Self-chat simulation and automatic dialog metrics.

pub mod metrics;
pub mod selfchat;

pub use metrics::{bleu, distinct_n, e_score, evaluate_run, peg_score, pege_score, DialogScores, MetricsReport, Spread};
pub use selfchat::{self_chat, SelfChatConfig};
