use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Categorical summary of what happened after an action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeLabel {
    NoContact,
    AgentHitsGreen,
    GreenReachesTarget,
    BallFallsAbyss,
    Blocked,
    Other,
}

impl OutcomeLabel {
    pub const ALL: [OutcomeLabel; 6] = [
        OutcomeLabel::NoContact,
        OutcomeLabel::AgentHitsGreen,
        OutcomeLabel::GreenReachesTarget,
        OutcomeLabel::BallFallsAbyss,
        OutcomeLabel::Blocked,
        OutcomeLabel::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeLabel::NoContact => "no-contact",
            OutcomeLabel::AgentHitsGreen => "agent-hits-green",
            OutcomeLabel::GreenReachesTarget => "green-reaches-target",
            OutcomeLabel::BallFallsAbyss => "ball-falls-abyss",
            OutcomeLabel::Blocked => "blocked",
            OutcomeLabel::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown outcome label {s:?}")))
    }

    /// Labels a successful outcome may carry.
    pub fn is_success_label(self) -> bool {
        matches!(
            self,
            OutcomeLabel::GreenReachesTarget | OutcomeLabel::BallFallsAbyss
        )
    }
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
