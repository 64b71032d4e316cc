//! Append-only transition log: one JSON document per line.
//!
//! Every line carries a schema version so third parties can regenerate
//! replay buffers. Field order follows the struct declaration:
//! `v, item, day, obs, action, reward, next_obs, terminal`.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::types::{Episode, ItemId, Transition};

pub const EPISODE_LOG_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    v: u32,
    #[serde(flatten)]
    tr: Transition,
}

pub struct EpisodeLogWriter {
    out: BufWriter<std::fs::File>,
}

impl EpisodeLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(EpisodeLogWriter {
            out: BufWriter::new(std::fs::File::create(path)?),
        })
    }

    pub fn append(&mut self, tr: &Transition) -> Result<()> {
        let line = Line {
            v: EPISODE_LOG_VERSION,
            tr: tr.clone(),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::format(format!("transition serialization: {e}")))?;
        self.out.write_all(json.as_bytes())?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn append_episode(&mut self, ep: &Episode) -> Result<()> {
        for tr in &ep.transitions {
            self.append(tr)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_transitions(path: &Path) -> Result<Vec<Transition>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("episode log line {}: {e}", i + 1)))?;
        if parsed.v != EPISODE_LOG_VERSION {
            return Err(Error::format(format!(
                "episode log line {}: version {} unsupported",
                i + 1,
                parsed.v
            )));
        }
        out.push(parsed.tr);
    }
    Ok(out)
}

/// Group a flat transition stream into per-item chronological episodes,
/// splitting where the day sequence or observation chain breaks.
pub fn group_episodes(transitions: &[Transition]) -> Vec<Episode> {
    use std::collections::BTreeMap;
    let mut by_item: BTreeMap<ItemId, Vec<&Transition>> = BTreeMap::new();
    for tr in transitions {
        by_item.entry(tr.item).or_default().push(tr);
    }
    let mut episodes = Vec::new();
    for (item, mut trs) in by_item {
        trs.sort_by_key(|t| t.day);
        let mut current: Vec<Transition> = Vec::new();
        for tr in trs {
            let chains = current
                .last()
                .map(|prev: &Transition| prev.day + 1 == tr.day && prev.next_obs == tr.obs && !prev.terminal)
                .unwrap_or(true);
            if !chains {
                episodes.push(Episode {
                    item,
                    transitions: std::mem::take(&mut current),
                });
            }
            current.push(tr.clone());
        }
        if !current.is_empty() {
            episodes.push(Episode {
                item,
                transitions: current,
            });
        }
    }
    episodes
}
