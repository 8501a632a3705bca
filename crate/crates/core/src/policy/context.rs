//! Incremental reader that turns a token sequence into network inputs.
//!
//! The reader consumes `BOS obs.. OBS_END (GEN action.. OUTCOME)* GEN ..`
//! one token at a time. While a turn is open it can report the sparse
//! feature vector, the grammar-legal next tokens and, per token, whether
//! choosing it would repeat the prefix of an attempt that already failed.

use crate::agent::action::{GRID_CELLS, MAX_BODY_INDEX, MAX_TICK};
use crate::agent::tokens::{Token, TokenKind, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::sim::{EnvKind, Role};

const ROLES: usize = Role::ALL.len();
const CELLS: usize = GRID_CELLS as usize;
const INDICES: usize = MAX_BODY_INDEX as usize;

pub(crate) const F_ROLE_CELL: usize = 0;
pub(crate) const F_IDX_CELL: usize = F_ROLE_CELL + ROLES * CELLS;
pub(crate) const F_IDX_ROLE: usize = F_IDX_CELL + INDICES * CELLS;
pub(crate) const F_HIST_FAIL: usize = F_IDX_ROLE + INDICES * ROLES;
pub(crate) const F_HIST_SUCCESS: usize = F_HIST_FAIL + VOCAB_SIZE;
pub(crate) const F_GENERATED: usize = F_HIST_SUCCESS + VOCAB_SIZE;
pub(crate) const F_STATE: usize = F_GENERATED + VOCAB_SIZE;
pub(crate) const GRAMMAR_STATES: usize = 5;
pub(crate) const F_HISTORY_LEN: usize = F_STATE + GRAMMAR_STATES;
/// Width of the policy input vector.
pub const FEATURE_DIM: usize = F_HISTORY_LEN + 1;

/// Generation is cut off after this many tokens in one turn.
pub const MAX_TURN_TOKENS: usize = 2 * INDICES + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Start,
    Observation,
    Between,
    Generating,
    Outcome,
}

/// Where the open turn is in the action grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrammarState {
    Cell,
    Radius,
    GridEnd,
    EventOrEnd,
    Time { index: u32 },
}

impl GrammarState {
    fn slot(self) -> usize {
        match self {
            GrammarState::Cell => 0,
            GrammarState::Radius => 1,
            GrammarState::GridEnd => 2,
            GrammarState::EventOrEnd => 3,
            GrammarState::Time { .. } => 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ContextReader {
    phase: Phase,
    env: Option<EnvKind>,
    group: Vec<Token>,
    obs_features: Vec<(usize, f64)>,
    removable: Vec<u32>,
    past: Vec<(Vec<Token>, bool)>,
    turn: Vec<Token>,
    position: usize,
}

impl Default for ContextReader {
    fn default() -> Self {
        Self::new()
    }
}

impl ContextReader {
    pub fn new() -> Self {
        Self {
            phase: Phase::Start,
            env: None,
            group: Vec::new(),
            obs_features: Vec::new(),
            removable: Vec::new(),
            past: Vec::new(),
            turn: Vec::new(),
            position: 0,
        }
    }

    /// Reads a whole prefix.
    pub fn from_tokens(tokens: &[Token]) -> Result<Self> {
        let mut r = Self::new();
        for &t in tokens {
            r.push(t)?;
        }
        Ok(r)
    }

    pub fn env(&self) -> Option<EnvKind> {
        self.env
    }

    /// True while the reader is inside an open turn.
    pub fn generating(&self) -> bool {
        self.phase == Phase::Generating
    }

    /// Tokens generated so far in the open turn.
    pub fn turn(&self) -> &[Token] {
        &self.turn
    }

    pub fn attempts(&self) -> usize {
        self.past.len()
    }

    fn bad(&self, t: Token, why: &str) -> Error {
        Error::Format(format!(
            "token {} at position {}: {why}",
            t.name(),
            self.position
        ))
    }

    fn flush_group(&mut self) -> Result<()> {
        let g = std::mem::take(&mut self.group);
        let (role, idx, cell) = match g.iter().map(|t| t.kind()).collect::<Vec<_>>().as_slice() {
            [Some(TokenKind::Role(r)), Some(TokenKind::Cell(c))] => (*r, None, *c),
            [Some(TokenKind::Role(r)), Some(TokenKind::Idx(i)), Some(TokenKind::Cell(c))] => {
                (*r, Some(*i), *c)
            }
            [] => return Ok(()),
            _ => return Err(Error::Format("malformed observation group".into())),
        };
        let cell0 = cell as usize - 1;
        self.obs_features
            .push((F_ROLE_CELL + role.index() * CELLS + cell0, 1.0));
        if let Some(i) = idx {
            self.env = Some(EnvKind::TimedRemove);
            self.obs_features
                .push((F_IDX_CELL + i as usize * CELLS + cell0, 1.0));
            self.obs_features
                .push((F_IDX_ROLE + i as usize * ROLES + role.index(), 1.0));
            if role == Role::Removable && !self.removable.contains(&i) {
                self.removable.push(i);
            }
        } else if self.env.is_none() {
            self.env = Some(EnvKind::GridDrop);
        }
        Ok(())
    }

    pub fn push(&mut self, t: Token) -> Result<()> {
        let kind = t
            .kind()
            .ok_or_else(|| self.bad(t, "outside the vocabulary"))?;
        match self.phase {
            Phase::Start => {
                if kind != TokenKind::Bos {
                    return Err(self.bad(t, "expected BOS"));
                }
                self.phase = Phase::Observation;
            }
            Phase::Observation => match kind {
                TokenKind::ObsEnd => {
                    self.flush_group()?;
                    self.removable.sort_unstable();
                    self.phase = Phase::Between;
                }
                TokenKind::Role(_) => {
                    self.flush_group()?;
                    self.group.push(t);
                }
                TokenKind::Idx(_) | TokenKind::Cell(_) if !self.group.is_empty() => {
                    self.group.push(t)
                }
                _ => return Err(self.bad(t, "not an observation token")),
            },
            Phase::Between => {
                if kind != TokenKind::Gen {
                    return Err(self.bad(t, "expected GEN"));
                }
                if self.env.is_none() {
                    return Err(self.bad(t, "observation names no elements"));
                }
                self.turn.clear();
                self.phase = Phase::Generating;
            }
            Phase::Generating => {
                if !self.legal_mask()[t.index()] {
                    return Err(Error::IllegalToken {
                        position: self.position,
                        token: t.0 as u32,
                    });
                }
                self.turn.push(t);
                if t == Token::END {
                    self.phase = Phase::Outcome;
                }
            }
            Phase::Outcome => {
                let failed = match kind {
                    TokenKind::Fail => true,
                    TokenKind::Success => false,
                    _ => return Err(self.bad(t, "expected FAIL or SUCCESS")),
                };
                self.past.push((std::mem::take(&mut self.turn), failed));
                self.phase = Phase::Between;
            }
        }
        self.position += 1;
        Ok(())
    }

    /// Grammar state of the open turn.
    pub fn state(&self) -> Option<GrammarState> {
        if self.phase != Phase::Generating {
            return None;
        }
        Some(match self.env? {
            EnvKind::GridDrop => match self.turn.len() {
                0 => GrammarState::Cell,
                1 => GrammarState::Radius,
                _ => GrammarState::GridEnd,
            },
            EnvKind::TimedRemove => match self.turn.last().and_then(|t| t.kind()) {
                Some(TokenKind::Idx(i)) => GrammarState::Time { index: i },
                _ => GrammarState::EventOrEnd,
            },
        })
    }

    fn last_event(&self) -> Option<(u32, u32)> {
        let n = self.turn.len();
        if n < 2 {
            return None;
        }
        match (self.turn[n - 2].kind(), self.turn[n - 1].kind()) {
            (Some(TokenKind::Idx(i)), Some(TokenKind::Time(t))) => Some((t, i)),
            _ => None,
        }
    }

    fn used(&self, index: u32) -> bool {
        self.turn
            .iter()
            .any(|t| t.kind() == Some(TokenKind::Idx(index)))
    }

    /// Which tokens may come next. Events must be in canonical
    /// `(time, index)` order and each removable body is used at most once.
    pub fn legal_mask(&self) -> Vec<bool> {
        let mut m = vec![false; VOCAB_SIZE];
        let Some(state) = self.state() else { return m };
        match state {
            GrammarState::Cell => m[Token::cell_range()].iter_mut().for_each(|x| *x = true),
            GrammarState::Radius => m[Token::rad_range()].iter_mut().for_each(|x| *x = true),
            GrammarState::GridEnd => m[Token::END.index()] = true,
            GrammarState::EventOrEnd => {
                m[Token::END.index()] = true;
                if self.turn.len() + 3 <= MAX_TURN_TOKENS {
                    let last = self.last_event();
                    for &i in &self.removable {
                        let fits = match last {
                            None => true,
                            Some((t, j)) => i > j || t < MAX_TICK,
                        };
                        if fits && !self.used(i) {
                            m[Token::idx(i).index()] = true;
                        }
                    }
                }
            }
            GrammarState::Time { index } => {
                let last = self.turn.len().checked_sub(3).map(|_| {
                    let n = self.turn.len();
                    match (self.turn[n - 3].kind(), self.turn[n - 2].kind()) {
                        (Some(TokenKind::Idx(i)), Some(TokenKind::Time(t))) => (t, i),
                        _ => (0, 0),
                    }
                });
                for tick in 0..=MAX_TICK {
                    let ok = match last {
                        None => true,
                        Some((t, j)) => (tick, index) > (t, j),
                    };
                    if ok {
                        m[Token::time(tick).index()] = true;
                    }
                }
            }
        }
        m
    }

    /// 1 for each token that would extend the open turn into a prefix of
    /// an attempt that already failed, else 0.
    pub fn repeat_indicator(&self) -> Vec<f64> {
        let mut s = vec![0.0; VOCAB_SIZE];
        if self.phase != Phase::Generating {
            return s;
        }
        let n = self.turn.len();
        for (tokens, failed) in &self.past {
            if *failed && tokens.len() > n && tokens[..n] == self.turn[..] {
                s[tokens[n].index()] = 1.0;
            }
        }
        s
    }

    /// Sparse input features `(index, value)` for the next-token prediction.
    pub fn features(&self) -> Vec<(usize, f64)> {
        let mut x = self.obs_features.clone();
        let n = self.past.len();
        if n > 0 {
            let w = 1.0 / n as f64;
            let mut bag: Vec<(usize, f64)> = Vec::new();
            for (tokens, failed) in &self.past {
                let base = if *failed { F_HIST_FAIL } else { F_HIST_SUCCESS };
                for t in tokens {
                    let k = base + t.index();
                    match bag.iter_mut().find(|(j, _)| *j == k) {
                        Some(e) => e.1 += w,
                        None => bag.push((k, w)),
                    }
                }
            }
            x.extend(bag);
        }
        for t in &self.turn {
            x.push((F_GENERATED + t.index(), 1.0));
        }
        if let Some(s) = self.state() {
            x.push((F_STATE + s.slot(), 1.0));
        }
        x.push((
            F_HISTORY_LEN,
            n as f64 / crate::agent::history::DEFAULT_MAX_CONTEXT as f64,
        ));
        x
    }
}
