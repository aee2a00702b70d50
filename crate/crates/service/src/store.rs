//! Durable campaign storage: one append-only JSON-lines event log per
//! campaign. Every event is flushed to disk before the request that caused
//! it is acknowledged, so a restart rebuilds exactly the acknowledged state.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{SecondsFormat, Utc};
use yn_crowd::model::LabelerId;

use crate::error::{Error, Result};
use crate::state::{check_response, Ack, CampaignSpec, CampaignState, Event, Mode, Phase, Question};

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

struct Campaign {
    state: RwLock<CampaignState>,
    /// Held while an event is appended and applied; serializes all writers.
    log: Mutex<File>,
}

/// All campaigns of one data directory.
pub struct Store {
    dir: PathBuf,
    campaigns: RwLock<HashMap<String, Arc<Campaign>>>,
}

/// Answer to a `next` request.
#[derive(Debug, Clone, PartialEq)]
pub enum Next {
    Question(Question),
    Done,
}

impl Store {
    /// Opens `dir`, rebuilding every campaign from its log. A partially
    /// written last line (crash during append) is dropped.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let mut campaigns = HashMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let (state, file) = load_log(&path)?;
            campaigns.insert(
                state.spec.id.clone(),
                Arc::new(Campaign {
                    state: RwLock::new(state),
                    log: Mutex::new(file),
                }),
            );
        }
        Ok(Self {
            dir,
            campaigns: RwLock::new(campaigns),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn campaign(&self, id: &str) -> Result<Arc<Campaign>> {
        self.campaigns
            .read()
            .expect("campaign map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("no campaign {id}")))
    }

    pub fn campaign_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.campaigns.read().expect("campaign map lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn create(&self, spec: CampaignSpec) -> Result<String> {
        let mut map = self.campaigns.write().expect("campaign map lock");
        if map.contains_key(&spec.id) {
            return Err(Error::Conflict(format!("campaign {} already exists", spec.id)));
        }
        let event = Event::Created {
            spec: spec.clone(),
            at: now(),
        };
        let Event::Created { at, .. } = &event else { unreachable!() };
        let state = CampaignState::new(spec, at.clone())?;
        let path = self.dir.join(format!("{}.jsonl", state.spec.id));
        if path.exists() {
            return Err(Error::Conflict(format!("log for campaign {} already exists", state.spec.id)));
        }
        let mut file = OpenOptions::new().create_new(true).append(true).open(&path)?;
        append(&mut file, &event)?;
        let id = state.spec.id.clone();
        map.insert(
            id.clone(),
            Arc::new(Campaign {
                state: RwLock::new(state),
                log: Mutex::new(file),
            }),
        );
        Ok(id)
    }

    /// Read-only access to a campaign's current state.
    pub fn read<T>(&self, id: &str, f: impl FnOnce(&CampaignState) -> T) -> Result<T> {
        let c = self.campaign(id)?;
        let state = c.state.read().expect("state lock");
        Ok(f(&state))
    }

    /// Computes an event from the current state, logs it, then applies it.
    fn commit<T>(&self, id: &str, plan: impl FnOnce(&CampaignState) -> Result<(Option<Event>, T)>) -> Result<T> {
        let c = self.campaign(id)?;
        let mut log = c.log.lock().expect("log lock");
        let (event, out) = plan(&c.state.read().expect("state lock"))?;
        if let Some(event) = event {
            append(&mut log, &event)?;
            c.state
                .write()
                .expect("state lock")
                .apply(&event)
                .expect("planned events apply cleanly");
        }
        Ok(out)
    }

    /// Registers a labeler and returns their bearer token.
    pub fn register(&self, campaign: &str, labeler_id: &str) -> Result<String> {
        let token = uuid::Uuid::new_v4().simple().to_string();
        self.commit(campaign, |state| {
            if state.phase == Phase::Closed {
                return Err(Error::Closed);
            }
            if !yn_crowd::io::is_valid_id(labeler_id) {
                return Err(Error::Validation(format!("invalid labeler id {labeler_id:?}")));
            }
            if state.labelers.contains_key(labeler_id) {
                return Err(Error::Conflict(format!("labeler {labeler_id} already registered")));
            }
            Ok((
                Some(Event::LabelerRegistered {
                    labeler_id: labeler_id.to_string(),
                    token: token.clone(),
                    at: now(),
                }),
                token.clone(),
            ))
        })
    }

    /// Checks that `token` is the bearer token of `labeler`.
    pub fn authenticate(&self, campaign: &str, labeler: &str, token: &str) -> Result<()> {
        self.read(campaign, |s| match s.labelers.get(labeler) {
            Some(l) if l.token == token => Ok(()),
            _ => Err(Error::Unauthorized("unknown labeler or wrong token".into())),
        })?
    }

    /// The labeler's pending question, a new one, or `Done`.
    pub fn next_question(&self, campaign: &str, labeler: &str) -> Result<Next> {
        let labeler = LabelerId::from(labeler);
        let question_token = uuid::Uuid::new_v4().simple().to_string();
        let issued = self.commit(campaign, |state| {
            let ls = state
                .labelers
                .get(&labeler)
                .ok_or_else(|| Error::Unauthorized(format!("unknown labeler {labeler}")))?;
            if let Some(q) = &ls.pending {
                return Ok((None, Some(q.clone())));
            }
            if state.phase == Phase::Closed {
                return Ok((None, None));
            }
            let Some(slot) = state.draw_slot(&labeler) else {
                return Ok((None, None));
            };
            let object = state.spec.objects[slot.object].id.clone();
            let at = now();
            let event = Event::QuestionIssued {
                labeler_id: labeler.to_string(),
                question_token: question_token.clone(),
                object_id: object.to_string(),
                mode: if slot.class.is_some() { Mode::Yn } else { Mode::Full },
                class_id: slot.class.map(|c| state.classes.id(c).to_string()),
                at: at.clone(),
            };
            let q = Question {
                question_token: question_token.clone(),
                object_id: object,
                mode: if slot.class.is_some() { Mode::Yn } else { Mode::Full },
                class: slot.class,
                issued_at: at,
            };
            Ok((Some(event), Some(q)))
        })?;
        Ok(issued.map_or(Next::Done, Next::Question))
    }

    pub fn record_response(
        &self,
        campaign: &str,
        labeler: &str,
        question_token: &str,
        answer: &str,
        client_latency_ms: Option<u64>,
    ) -> Result<Ack> {
        let labeler = LabelerId::from(labeler);
        self.commit(campaign, |state| {
            if let Some(ack) = check_response(state, &labeler, question_token, answer)? {
                return Ok((None, ack));
            }
            Ok((
                Some(Event::ResponseRecorded {
                    labeler_id: labeler.to_string(),
                    question_token: question_token.to_string(),
                    answer: answer.to_string(),
                    at: now(),
                    client_latency_ms,
                }),
                Ack::Recorded,
            ))
        })
    }

    pub fn close(&self, campaign: &str) -> Result<()> {
        self.commit(campaign, |state| {
            let event = (state.phase == Phase::Open).then(|| Event::Closed { at: now() });
            Ok((event, ()))
        })
    }
}

fn append(file: &mut File, event: &Event) -> Result<()> {
    let mut line = serde_json::to_vec(event).map_err(std::io::Error::from)?;
    line.push(b'\n');
    file.write_all(&line)?;
    file.sync_data()?;
    Ok(())
}

/// Complete events of a log plus the byte length they occupy. A trailing
/// line without a newline is a torn write and is ignored.
fn read_events(path: &Path, reader: impl BufRead) -> Result<(Vec<Event>, u64)> {
    let mut reader = reader;
    let mut events = Vec::new();
    let mut good_len = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 || buf.last() != Some(&b'\n') {
            break;
        }
        let event: Event = serde_json::from_slice(&buf)
            .map_err(|e| Error::Corrupt(format!("{}: line {}: {e}", path.display(), events.len() + 1)))?;
        events.push(event);
        good_len += n as u64;
    }
    Ok((events, good_len))
}

fn replay(path: &Path, events: Vec<Event>) -> Result<CampaignState> {
    CampaignState::replay(events).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
}

/// Replays a log file and returns the state plus the file opened for
/// appending, truncated after the last complete event.
pub fn load_log(path: &Path) -> Result<(CampaignState, File)> {
    let mut file = OpenOptions::new().read(true).append(true).open(path)?;
    let (events, good_len) = read_events(path, BufReader::new(&mut file))?;
    if file.metadata()?.len() != good_len {
        file.set_len(good_len)?;
        file.seek(SeekFrom::End(0))?;
    }
    Ok((replay(path, events)?, file))
}

/// Replays a log without modifying it; safe while a server is appending.
pub fn read_log(path: &Path) -> Result<CampaignState> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(format!("no campaign log {}", path.display())),
        _ => Error::Io(e),
    })?;
    let (events, _) = read_events(path, BufReader::new(file))?;
    replay(path, events)
}
