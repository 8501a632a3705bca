use std::collections::HashMap;

use super::env::execute;
use super::generator::Task;
use crate::agent::EnvAction;
use crate::error::{Error, Result};

/// Memoized action outcomes per task. Simulation is deterministic, so a
/// cached answer is exactly what re-running would give.
#[derive(Clone, Debug, Default)]
pub struct OutcomeCache {
    map: HashMap<(String, EnvAction), std::result::Result<bool, Error>>,
    simulated: usize,
}

impl OutcomeCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Success of `action` on `task`; invalid actions are returned as errors.
    pub fn outcome(&mut self, task: &Task, action: &EnvAction) -> Result<bool> {
        let key = (task.id.clone(), action.clone());
        if let Some(r) = self.map.get(&key) {
            return r.clone();
        }
        let r = match execute(&task.scene, action, false) {
            Ok((ok, _)) => Ok(ok),
            Err(e) => Err(e),
        };
        self.simulated += 1;
        self.map.insert(key, r.clone());
        r
    }

    /// Fills the cache with a known outcome table.
    pub fn insert(&mut self, task_id: &str, action: EnvAction, success: bool) {
        self.map.insert((task_id.to_string(), action), Ok(success));
    }

    /// Number of simulations actually run.
    pub fn simulated(&self) -> usize {
        self.simulated
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
