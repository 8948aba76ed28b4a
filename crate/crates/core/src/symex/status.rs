use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assertions::SymState;
use crate::lang::{Cmd, Label};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "lowercase")]
pub enum Status {
    Ok,
    Err(Label),
    Insec(Label),
}

impl Status {
    pub fn label(&self) -> Option<&Label> {
        match self {
            Status::Ok => None,
            Status::Err(l) | Status::Insec(l) => Some(l),
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, Status::Ok)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Err(_) => "err",
            Status::Insec(_) => "insec",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::Err(l) => write!(f, "err({l})"),
            Status::Insec(l) => write!(f, "insec({l})"),
        }
    }
}

/// Status together with the symbolic state reached.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct PostAssertion {
    pub status: Status,
    pub state: SymState,
}

impl PostAssertion {
    pub fn ok(state: SymState) -> PostAssertion {
        PostAssertion {
            status: Status::Ok,
            state,
        }
    }
}

impl fmt::Display for PostAssertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}: {}]", self.status, self.state)
    }
}

/// A derived triple `[presumption] command [status: result]`.
#[derive(Clone, Debug)]
pub struct Judgement {
    pub function: String,
    pub presumption: SymState,
    pub command: Cmd,
    pub post: PostAssertion,
    /// The error depends on an invalid-pointer fact assumed about the
    /// function's inputs rather than established by the function itself.
    pub latent: bool,
}

impl fmt::Display for Judgement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {} {}", self.presumption, self.function, self.post)
    }
}
