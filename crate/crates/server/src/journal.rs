//! Append-only JSON-lines log of session events, replayed on startup.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use prefdens_api::Policy;
use prefdens_core::elicitation::{ElicitationModel, Session, SessionConfig};
use serde::{Deserialize, Serialize};

use crate::{core_policy, ApiSession};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum JournalEvent {
    Create {
        session_id: String,
        model_id: String,
        created_at: u64,
        policy: Policy,
    },
    Answer {
        session_id: String,
        outcome_id: usize,
        value: f64,
    },
}

pub struct Journal {
    file: File,
}

impl Journal {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file })
    }

    pub fn append(&mut self, event: &JournalEvent) -> io::Result<()> {
        let mut line = serde_json::to_vec(event)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()
    }
}

/// Rebuild sessions from the journal. Sessions created against another model
/// and lines that fail to parse or apply are skipped with a warning.
pub(crate) fn replay(
    path: &Path,
    model: &Arc<ElicitationModel>,
    model_id: &str,
    config: SessionConfig,
) -> io::Result<Vec<(String, ApiSession)>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(vec![]),
        Err(e) => return Err(e),
    };
    let mut order = vec![];
    let mut sessions: HashMap<String, ApiSession> = HashMap::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: JournalEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("journal line {}: {e}", n + 1);
                continue;
            }
        };
        match event {
            JournalEvent::Create {
                session_id,
                model_id: mid,
                created_at,
                policy,
            } => {
                if mid != model_id {
                    log::warn!("journal line {}: session {session_id} belongs to model {mid}", n + 1);
                    continue;
                }
                let session = Session::new(
                    model.clone(),
                    SessionConfig {
                        policy: core_policy(policy),
                        ..config
                    },
                );
                order.push(session_id.clone());
                sessions.insert(
                    session_id.clone(),
                    ApiSession {
                        id: session_id,
                        created_at,
                        session,
                    },
                );
            }
            JournalEvent::Answer {
                session_id,
                outcome_id,
                value,
            } => {
                let Some(s) = sessions.get_mut(&session_id) else {
                    continue;
                };
                if let Err(e) = s.session.update_posterior(outcome_id, value) {
                    log::warn!("journal line {}: {e}", n + 1);
                }
            }
        }
    }
    Ok(order
        .into_iter()
        .filter_map(|id| sessions.remove(&id).map(|s| (id, s)))
        .collect())
}
