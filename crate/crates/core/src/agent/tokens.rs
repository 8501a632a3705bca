//! Token vocabulary, the action grammar codec, and masked token sequences.

use serde::{Deserialize, Serialize};

use super::action::{EnvAction, TimedEvent, GRID_CELLS, MAX_BODY_INDEX, MAX_TICK, RADIUS_LEVELS};
use crate::error::{Error, Result};
use crate::sim::Role;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenKind {
    Bos,
    ObsEnd,
    Gen,
    End,
    Fail,
    Success,
    Role(Role),
    Cell(u8),
    Rad(u8),
    Idx(u32),
    Time(u32),
}

const ROLE_BASE: u16 = 6;
const CELL_BASE: u16 = ROLE_BASE + Role::ALL.len() as u16;
const RAD_BASE: u16 = CELL_BASE + GRID_CELLS as u16;
const IDX_BASE: u16 = RAD_BASE + RADIUS_LEVELS as u16;
const TIME_BASE: u16 = IDX_BASE + MAX_BODY_INDEX as u16;
pub const VOCAB_SIZE: usize = (TIME_BASE as u32 + MAX_TICK + 1) as usize;

impl Token {
    pub const BOS: Token = Token(0);
    pub const OBS_END: Token = Token(1);
    pub const GEN: Token = Token(2);
    pub const END: Token = Token(3);
    pub const FAIL: Token = Token(4);
    pub const SUCCESS: Token = Token(5);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn role(r: Role) -> Token {
        Token(ROLE_BASE + r.index() as u16)
    }

    /// `cell` in 1..=64.
    pub fn cell(cell: u8) -> Token {
        debug_assert!((1..=GRID_CELLS).contains(&cell));
        Token(CELL_BASE + cell as u16 - 1)
    }

    /// `radius` in 1..=8.
    pub fn rad(radius: u8) -> Token {
        debug_assert!((1..=RADIUS_LEVELS).contains(&radius));
        Token(RAD_BASE + radius as u16 - 1)
    }

    pub fn idx(index: u32) -> Token {
        debug_assert!(index < MAX_BODY_INDEX);
        Token(IDX_BASE + index as u16)
    }

    pub fn time(tick: u32) -> Token {
        debug_assert!(tick <= MAX_TICK);
        Token(TIME_BASE + tick as u16)
    }

    pub fn kind(self) -> Option<TokenKind> {
        let t = self.0;
        Some(match t {
            0 => TokenKind::Bos,
            1 => TokenKind::ObsEnd,
            2 => TokenKind::Gen,
            3 => TokenKind::End,
            4 => TokenKind::Fail,
            5 => TokenKind::Success,
            _ if t < CELL_BASE => TokenKind::Role(Role::ALL[(t - ROLE_BASE) as usize]),
            _ if t < RAD_BASE => TokenKind::Cell((t - CELL_BASE + 1) as u8),
            _ if t < IDX_BASE => TokenKind::Rad((t - RAD_BASE + 1) as u8),
            _ if t < TIME_BASE => TokenKind::Idx((t - IDX_BASE) as u32),
            _ if (t as usize) < VOCAB_SIZE => TokenKind::Time((t - TIME_BASE) as u32),
            _ => return None,
        })
    }

    pub fn cell_range() -> std::ops::Range<usize> {
        CELL_BASE as usize..RAD_BASE as usize
    }

    pub fn rad_range() -> std::ops::Range<usize> {
        RAD_BASE as usize..IDX_BASE as usize
    }

    pub fn idx_range() -> std::ops::Range<usize> {
        IDX_BASE as usize..TIME_BASE as usize
    }

    pub fn time_range() -> std::ops::Range<usize> {
        TIME_BASE as usize..VOCAB_SIZE
    }

    pub fn name(self) -> String {
        match self.kind() {
            Some(TokenKind::Bos) => "BOS".into(),
            Some(TokenKind::ObsEnd) => "OBS_END".into(),
            Some(TokenKind::Gen) => "GEN".into(),
            Some(TokenKind::End) => "END".into(),
            Some(TokenKind::Fail) => "FAIL".into(),
            Some(TokenKind::Success) => "SUCCESS".into(),
            Some(TokenKind::Role(r)) => format!("ROLE_{}", r.name()),
            Some(TokenKind::Cell(c)) => format!("CELL_{c}"),
            Some(TokenKind::Rad(r)) => format!("RAD_{r}"),
            Some(TokenKind::Idx(i)) => format!("IDX_{i}"),
            Some(TokenKind::Time(t)) => format!("TIME_{t}"),
            None => format!("?{}", self.0),
        }
    }
}

/// Stable hash of the vocabulary layout, embedded in checkpoints.
pub fn vocab_hash() -> u64 {
    // FNV-1a over the token names.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in 0..VOCAB_SIZE {
        for b in Token(t as u16).name().bytes().chain(std::iter::once(b'|')) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// `GridPlace -> [CELL, RAD, END]`, `EventSeq -> [IDX, TIME]* END`.
pub fn encode_action(a: &EnvAction) -> Vec<Token> {
    match a {
        &EnvAction::GridPlace { cell, radius } => {
            vec![Token::cell(cell), Token::rad(radius), Token::END]
        }
        EnvAction::EventSeq(events) => {
            let mut out = Vec::with_capacity(2 * events.len() + 1);
            for e in events {
                out.push(Token::idx(e.index));
                out.push(Token::time(e.tick));
            }
            out.push(Token::END);
            out
        }
    }
}

/// Strict inverse of [`encode_action`].
pub fn decode_action(tokens: &[Token]) -> Result<EnvAction> {
    let kinds: Vec<Option<TokenKind>> = tokens.iter().map(|t| t.kind()).collect();
    match kinds.as_slice() {
        [Some(TokenKind::Cell(c)), Some(TokenKind::Rad(r)), Some(TokenKind::End)] => {
            EnvAction::grid(*c, *r).map_err(|e| Error::Decode(e.to_string()))
        }
        [.., Some(TokenKind::End)] => {
            let body = &kinds[..kinds.len() - 1];
            if body.len() % 2 != 0 {
                return Err(Error::Decode("dangling event token".into()));
            }
            let mut events = Vec::with_capacity(body.len() / 2);
            for pair in body.chunks(2) {
                match pair {
                    [Some(TokenKind::Idx(i)), Some(TokenKind::Time(t))] => {
                        events.push(TimedEvent {
                            index: *i,
                            tick: *t,
                        })
                    }
                    _ => return Err(Error::Decode("expected IDX TIME pair".into())),
                }
            }
            let canonical = events
                .windows(2)
                .all(|w| (w[0].tick, w[0].index) < (w[1].tick, w[1].index));
            if !canonical {
                return Err(Error::Decode("events out of canonical order".into()));
            }
            EnvAction::events(events).map_err(|e| Error::Decode(e.to_string()))
        }
        [] => Err(Error::Decode("empty token sequence".into())),
        _ => Err(Error::Decode(format!(
            "malformed action: {}",
            tokens
                .iter()
                .map(|t| t.name())
                .collect::<Vec<_>>()
                .join(" ")
        ))),
    }
}

/// Token sequence with a loss mask and per-turn spans of generated tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
    pub loss_mask: Vec<u8>,
    /// Half-open `(start, end)` spans, one per turn.
    pub turns: Vec<(usize, usize)>,
}

impl TokenSeq {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Appends an observation or prompt token (mask 0).
    pub fn push_context(&mut self, t: Token) {
        self.tokens.push(t);
        self.loss_mask.push(0);
    }

    /// Opens a new (empty) turn at the current end.
    pub fn begin_turn(&mut self) {
        let n = self.tokens.len();
        self.turns.push((n, n));
    }

    /// Appends an agent-generated token (mask 1) to the open turn.
    pub fn push_generated(&mut self, t: Token) {
        let n = self.tokens.len();
        match self.turns.last_mut() {
            Some(turn) if turn.1 == n => turn.1 = n + 1,
            _ => self.turns.push((n, n + 1)),
        }
        self.tokens.push(t);
        self.loss_mask.push(1);
    }

    /// Concatenates another sequence, shifting its turn spans.
    pub fn append(&mut self, other: &TokenSeq) {
        let off = self.tokens.len();
        self.tokens.extend_from_slice(&other.tokens);
        self.loss_mask.extend_from_slice(&other.loss_mask);
        self.turns
            .extend(other.turns.iter().map(|&(s, e)| (s + off, e + off)));
    }

    pub fn generated_count(&self) -> usize {
        self.loss_mask.iter().map(|&m| m as usize).sum()
    }

    /// Generated tokens of turn `k`.
    pub fn turn_tokens(&self, k: usize) -> &[Token] {
        let (s, e) = self.turns[k];
        &self.tokens[s..e]
    }

    /// Checks mask/length agreement and that turns partition the masked region.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() != self.loss_mask.len() {
            return Err(Error::Consistency(
                "mask length differs from token count".into(),
            ));
        }
        if self.loss_mask.iter().any(|&m| m > 1) {
            return Err(Error::Consistency("mask entries must be 0 or 1".into()));
        }
        let mut covered = vec![false; self.tokens.len()];
        let mut last_end = 0;
        for &(s, e) in &self.turns {
            if s > e || e > self.tokens.len() || s < last_end {
                return Err(Error::Consistency(format!("bad turn span ({s}, {e})")));
            }
            last_end = e;
            for (i, c) in covered.iter_mut().enumerate().take(e).skip(s) {
                if self.loss_mask[i] != 1 {
                    return Err(Error::Consistency(format!(
                        "turn covers unmasked token {i}"
                    )));
                }
                *c = true;
            }
        }
        if let Some(i) = (0..self.tokens.len()).find(|&i| self.loss_mask[i] == 1 && !covered[i]) {
            return Err(Error::Consistency(format!(
                "masked token {i} outside every turn"
            )));
        }
        Ok(())
    }
}
