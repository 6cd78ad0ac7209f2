//! Query language.
//!
//! Zero-sum:
//! ```text
//! <<p1>> Pmax=? [ F "goal" ]        <<p1>> Pmin=? [ F<=5 "goal" ]
//! <<p1>> Rmin=? {"time"} [ F "goal" ]   <<p2>> Rmax=? {"r"} [ C<=10 ]
//! ```
//! `R{"r"}min=? [...]` is accepted as well.
//!
//! Nonzero-sum (the coalition players maximise the sum of their objectives):
//! ```text
//! <<p1:p2>>max=? ( P[ F<=4 "g1" ] + R{"r2"}[ C<=4 ] )
//! ```
//! Both objectives must be bounded or both unbounded.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{IcsgError, Result};
use crate::uncertainty::Direction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Objective {
    BoundedReach { target: String, k: usize },
    BoundedCumulative { reward: String, k: usize },
    Reach { target: String },
    ReachReward { reward: String, target: String },
}

impl Objective {
    /// Horizon of bounded objectives.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Objective::BoundedReach { k, .. } | Objective::BoundedCumulative { k, .. } => Some(*k),
            _ => None,
        }
    }

    pub fn is_probabilistic(&self) -> bool {
        matches!(
            self,
            Objective::BoundedReach { .. } | Objective::Reach { .. }
        )
    }

    pub fn target(&self) -> Option<&str> {
        match self {
            Objective::BoundedReach { target, .. }
            | Objective::Reach { target }
            | Objective::ReachReward { target, .. } => Some(target),
            Objective::BoundedCumulative { .. } => None,
        }
    }

    pub fn reward(&self) -> Option<&str> {
        match self {
            Objective::BoundedCumulative { reward, .. } | Objective::ReachReward { reward, .. } => {
                Some(reward)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::BoundedReach { target, k } => write!(f, "P[ F<={k} \"{target}\" ]"),
            Objective::BoundedCumulative { reward, k } => write!(f, "R{{\"{reward}\"}}[ C<={k} ]"),
            Objective::Reach { target } => write!(f, "P[ F \"{target}\" ]"),
            Objective::ReachReward { reward, target } => {
                write!(f, "R{{\"{reward}\"}}[ F \"{target}\" ]")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Query {
    ZeroSum {
        coalition: String,
        direction: Dir,
        objective: Objective,
    },
    NonzeroSum {
        players: [String; 2],
        objectives: [Objective; 2],
    },
}

/// Serializable optimisation direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dir {
    Max,
    Min,
}

impl From<Dir> for Direction {
    fn from(d: Dir) -> Direction {
        match d {
            Dir::Max => Direction::Maximize,
            Dir::Min => Direction::Minimize,
        }
    }
}

/// How nature resolves the intervals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Semantics {
    /// Nature works against the coalition (or against social welfare).
    #[default]
    Adversarial,
    /// Nature helps.
    Controlled,
}

pub fn parse_property(text: &str) -> Result<Query> {
    let mut p = Parser { src: text, pos: 0 };
    let q = p.query()?;
    p.ws();
    if p.pos < text.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(q)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> IcsgError {
        IcsgError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, tok: &str) -> bool {
        self.ws();
        if self.rest().starts_with(tok) {
            self.pos += tok.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &str) -> Result<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{tok}`")))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.ws();
        let len = self
            .rest()
            .char_indices()
            .find(|(_, c)| !(c.is_alphanumeric() || *c == '_'))
            .map_or(self.rest().len(), |(i, _)| i);
        if len == 0 || self.rest().starts_with(|c: char| c.is_ascii_digit()) {
            return Err(self.err("expected an identifier"));
        }
        let id = self.rest()[..len].to_string();
        self.pos += len;
        Ok(id)
    }

    fn string(&mut self) -> Result<String> {
        self.ws();
        if !self.rest().starts_with('"') {
            return Err(self.err("expected a quoted name"));
        }
        let body = &self.rest()[1..];
        let Some(end) = body.find('"') else {
            return Err(self.err("unterminated string"));
        };
        let s = body[..end].to_string();
        self.pos += end + 2;
        Ok(s)
    }

    fn number(&mut self) -> Result<usize> {
        self.ws();
        let len = self
            .rest()
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(self.rest().len());
        if len == 0 {
            return Err(self.err("expected a step bound"));
        }
        let n = self.rest()[..len]
            .parse()
            .map_err(|_| self.err("step bound out of range"))?;
        self.pos += len;
        Ok(n)
    }

    fn query(&mut self) -> Result<Query> {
        self.expect("<<")?;
        let first = self.ident()?;
        if self.eat(":") {
            let second = self.ident()?;
            self.expect(">>")?;
            self.expect("max")?;
            self.expect("=?")?;
            self.expect("(")?;
            let o1 = self.nz_objective()?;
            self.expect("+")?;
            let o2 = self.nz_objective()?;
            self.expect(")")?;
            if o1.horizon().is_some() != o2.horizon().is_some() {
                return Err(IcsgError::MixedHorizon);
            }
            return Ok(Query::NonzeroSum {
                players: [first, second],
                objectives: [o1, o2],
            });
        }
        self.expect(">>")?;
        let (is_reward, mut reward) = if self.eat("P") {
            (false, None)
        } else if self.eat("R") {
            // the reward name may come before the direction
            let r = if self.eat("{") {
                let r = self.string()?;
                self.expect("}")?;
                Some(r)
            } else {
                None
            };
            (true, r)
        } else {
            return Err(self.err("expected `P` or `R` operator"));
        };
        let direction = if self.eat("max") {
            Dir::Max
        } else if self.eat("min") {
            Dir::Min
        } else {
            return Err(self.err("expected `max` or `min`"));
        };
        self.expect("=?")?;
        if is_reward && reward.is_none() {
            self.expect("{")?;
            reward = Some(self.string()?);
            self.expect("}")?;
        }
        let objective = self.path(reward)?;
        Ok(Query::ZeroSum {
            coalition: first,
            direction,
            objective,
        })
    }

    fn nz_objective(&mut self) -> Result<Objective> {
        if self.eat("P") {
            self.path(None)
        } else if self.eat("R") {
            self.expect("{")?;
            let r = self.string()?;
            self.expect("}")?;
            self.path(Some(r))
        } else {
            Err(self.err("expected `P[...]` or `R{...}[...]`"))
        }
    }

    /// `[ F "l" ]`, `[ F<=k "l" ]` or, for rewards, `[ C<=k ]`.
    fn path(&mut self, reward: Option<String>) -> Result<Objective> {
        self.expect("[")?;
        let obj = if self.eat("F") {
            let k = if self.eat("<=") {
                Some(self.number()?)
            } else {
                None
            };
            let target = self.string()?;
            match (reward, k) {
                (None, None) => Objective::Reach { target },
                (None, Some(k)) => Objective::BoundedReach { target, k },
                (Some(reward), None) => Objective::ReachReward { reward, target },
                (Some(_), Some(_)) => {
                    return Err(
                        self.err("bounded reachability rewards are not supported; use `C<=k`")
                    )
                }
            }
        } else if self.eat("C") {
            self.expect("<=")?;
            let k = self.number()?;
            match reward {
                Some(reward) => Objective::BoundedCumulative { reward, k },
                None => return Err(self.err("cumulative objective needs a reward structure")),
            }
        } else {
            return Err(self.err("expected `F` or `C`"));
        };
        self.expect("]")?;
        Ok(obj)
    }
}
