//! Campaign state as a fold over its event log, and the question scheduler.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use yn_crowd::io::{is_valid_id, ObjectRecord, Payload};
use yn_crowd::model::{ClassInfo, ClassSpace, LabelAssignment, LabelerId, ObjectId, ResponsePair, VoteTable};
use yn_crowd::rng::{id_index, stream};

use crate::error::{Error, Result};

const BUDGET_STREAM: u64 = 0x6275_6467;
const SCHEDULE_STREAM: u64 = 0x7363_6864;

/// Number of distinct yes/no questions per (labeler, object), drawn
/// uniformly from `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub min: usize,
    pub max: usize,
}

impl Default for BudgetSpec {
    fn default() -> Self {
        Self { min: 1, max: 4 }
    }
}

/// Which eligible questions the scheduler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Uniform over every eligible question, known and unknown objects mixed.
    #[default]
    Uniform,
    /// Uniform over questions about known objects until none remain.
    KnownFirst,
}

/// Everything needed to create a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub id: String,
    pub classes: Vec<ClassInfo>,
    pub objects: Vec<ObjectRecord>,
    /// Known labels, object id to class id.
    #[serde(default)]
    pub known: BTreeMap<String, String>,
    /// Unknown objects that also receive one full question per labeler.
    #[serde(default)]
    pub full_unknown: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub budget: BudgetSpec,
    #[serde(default)]
    pub ordering: Ordering,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Yn,
    Full,
}

/// One line of a campaign's event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created {
        spec: CampaignSpec,
        at: String,
    },
    LabelerRegistered {
        labeler_id: String,
        token: String,
        at: String,
    },
    QuestionIssued {
        labeler_id: String,
        question_token: String,
        object_id: String,
        mode: Mode,
        class_id: Option<String>,
        at: String,
    },
    ResponseRecorded {
        labeler_id: String,
        question_token: String,
        answer: String,
        at: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_latency_ms: Option<u64>,
    },
    Closed {
        at: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Question {
    pub question_token: String,
    pub object_id: ObjectId,
    pub mode: Mode,
    /// Asked class for yes/no questions.
    pub class: Option<usize>,
    pub issued_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Answer {
    Yes,
    No,
    Class(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordedVote {
    pub labeler: LabelerId,
    pub question: Question,
    pub answer: Answer,
    pub answered_at: String,
    pub client_latency_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelerState {
    pub token: String,
    pub asked: BTreeMap<ObjectId, BTreeSet<usize>>,
    pub full_done: BTreeSet<ObjectId>,
    pub pending: Option<Question>,
    pub answered_tokens: BTreeSet<String>,
    pub issued: u64,
    pub answered: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Open,
    Closed,
}

/// Outcome of submitting an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    Recorded,
    /// The token was already answered; nothing new was stored.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignState {
    pub spec: CampaignSpec,
    pub classes: ClassSpace,
    pub created_at: String,
    pub phase: Phase,
    pub labelers: BTreeMap<LabelerId, LabelerState>,
    pub votes: Vec<RecordedVote>,
    known: LabelAssignment,
    full_objects: BTreeSet<ObjectId>,
    tokens: HashMap<String, LabelerId>,
}

/// A scheduler candidate: an object and either a class or the full question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Slot {
    pub object: usize,
    pub class: Option<usize>,
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<(ClassSpace, LabelAssignment, BTreeSet<ObjectId>)> {
        if !is_valid_id(&self.id) {
            return Err(Error::Validation(format!("invalid campaign id {:?}", self.id)));
        }
        let classes = ClassSpace::new(self.classes.clone()).map_err(|e| Error::Validation(e.to_string()))?;
        if self.objects.is_empty() {
            return Err(Error::Validation("a campaign needs at least one object".into()));
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !is_valid_id(o.id.as_str()) {
                return Err(Error::Validation(format!("invalid object id {:?}", o.id.as_str())));
            }
            if !ids.insert(o.id.clone()) {
                return Err(Error::Validation(format!("duplicate object {}", o.id)));
            }
            if let Payload::Image(url) = &o.payload {
                if url.contains([',', '\n', '\r']) {
                    return Err(Error::Validation(format!("image payload of {} contains a delimiter", o.id)));
                }
            }
        }
        let mut known = LabelAssignment::new();
        for (o, c) in &self.known {
            let object = ObjectId::from(o.as_str());
            if !ids.contains(&object) {
                return Err(Error::Validation(format!("known label for unlisted object {o}")));
            }
            let class = classes
                .index_of(c)
                .ok_or_else(|| Error::Validation(format!("unknown class {c:?} for object {o}")))?;
            known.insert(object, class);
        }
        let mut full: BTreeSet<ObjectId> = known.objects().cloned().collect();
        for o in &self.full_unknown {
            let object = ObjectId::from(o.as_str());
            if !ids.contains(&object) {
                return Err(Error::Validation(format!("full question for unlisted object {o}")));
            }
            if known.contains(&object) {
                return Err(Error::Validation(format!("object {o} in full_unknown is known")));
            }
            full.insert(object);
        }
        let BudgetSpec { min, max } = self.budget;
        if !(1 <= min && min <= max && max <= classes.len()) {
            return Err(Error::Validation(format!(
                "budget ({min},{max}) must satisfy 1 <= min <= max <= {}",
                classes.len()
            )));
        }
        Ok((classes, known, full))
    }
}

impl CampaignState {
    pub fn new(spec: CampaignSpec, created_at: String) -> Result<Self> {
        let (classes, known, full_objects) = spec.validate()?;
        Ok(Self {
            spec,
            classes,
            created_at,
            phase: Phase::Open,
            labelers: BTreeMap::new(),
            votes: Vec::new(),
            known,
            full_objects,
            tokens: HashMap::new(),
        })
    }

    /// Rebuilds a campaign from its complete event log.
    pub fn replay(events: impl IntoIterator<Item = Event>) -> Result<Self> {
        let mut events = events.into_iter();
        let mut state = match events.next() {
            Some(Event::Created { spec, at }) => Self::new(spec, at)?,
            _ => return Err(Error::Corrupt("event log does not start with a creation event".into())),
        };
        for e in events {
            state.apply(&e)?;
        }
        Ok(state)
    }

    pub fn known_labels(&self) -> &LabelAssignment {
        &self.known
    }

    pub fn is_full_object(&self, object: &ObjectId) -> bool {
        self.full_objects.contains(object)
    }

    pub fn labeler_for_token(&self, token: &str) -> Option<&LabelerId> {
        self.tokens.get(token)
    }

    /// Yes/no budget of a (labeler, object) pair, fixed by the campaign seed.
    pub fn budget(&self, labeler: &LabelerId, object: &ObjectId) -> usize {
        let BudgetSpec { min, max } = self.spec.budget;
        stream(
            self.spec.seed,
            &[BUDGET_STREAM, id_index(labeler.as_str()), id_index(object.as_str())],
        )
        .random_range(min..=max)
    }

    /// Every question the labeler may still be asked.
    pub fn eligible(&self, labeler: &LabelerId) -> Vec<Slot> {
        let Some(ls) = self.labelers.get(labeler) else {
            return Vec::new();
        };
        let k = self.classes.len();
        let mut slots = Vec::new();
        for (n, o) in self.spec.objects.iter().enumerate() {
            let asked = ls.asked.get(&o.id);
            let count = asked.map_or(0, BTreeSet::len);
            if count < self.budget(labeler, &o.id) {
                for c in 0..k {
                    if !asked.is_some_and(|a| a.contains(&c)) {
                        slots.push(Slot {
                            object: n,
                            class: Some(c),
                        });
                    }
                }
            }
            if self.full_objects.contains(&o.id) && !ls.full_done.contains(&o.id) {
                slots.push(Slot { object: n, class: None });
            }
        }
        if self.spec.ordering == Ordering::KnownFirst {
            let known: Vec<Slot> = slots
                .iter()
                .copied()
                .filter(|s| self.known.contains(&self.spec.objects[s.object].id))
                .collect();
            if !known.is_empty() {
                return known;
            }
        }
        slots
    }

    /// Draws the labeler's next slot; `None` when nothing is left.
    pub fn draw_slot(&self, labeler: &LabelerId) -> Option<Slot> {
        let slots = self.eligible(labeler);
        if slots.is_empty() {
            return None;
        }
        let issued = self.labelers.get(labeler).map_or(0, |l| l.issued);
        let mut rng = stream(self.spec.seed, &[SCHEDULE_STREAM, id_index(labeler.as_str()), issued]);
        Some(slots[rng.random_range(0..slots.len())])
    }

    /// `(answered, budgeted)` for a labeler.
    pub fn progress(&self, labeler: &LabelerId) -> (usize, usize) {
        let answered = self.labelers.get(labeler).map_or(0, |l| l.answered);
        let budgeted = self
            .spec
            .objects
            .iter()
            .map(|o| self.budget(labeler, &o.id))
            .sum::<usize>()
            + self.full_objects.len();
        (answered, budgeted)
    }

    /// Checks an event against the current state and applies it.
    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::Created { .. } => Err(Error::Corrupt("second creation event".into())),
            Event::Closed { .. } => {
                self.phase = Phase::Closed;
                Ok(())
            }
            Event::LabelerRegistered { labeler_id, token, .. } => {
                if !is_valid_id(labeler_id) {
                    return Err(Error::Validation(format!("invalid labeler id {labeler_id:?}")));
                }
                let id = LabelerId::from(labeler_id.as_str());
                if self.labelers.contains_key(&id) {
                    return Err(Error::Conflict(format!("labeler {labeler_id} already registered")));
                }
                self.tokens.insert(token.clone(), id.clone());
                self.labelers.insert(
                    id,
                    LabelerState {
                        token: token.clone(),
                        ..LabelerState::default()
                    },
                );
                Ok(())
            }
            Event::QuestionIssued {
                labeler_id,
                question_token,
                object_id,
                mode,
                class_id,
                at,
            } => {
                let object = ObjectId::from(object_id.as_str());
                let class = match (mode, class_id) {
                    (Mode::Yn, Some(c)) => Some(
                        self.classes
                            .index_of(c)
                            .ok_or_else(|| Error::Corrupt(format!("unknown class {c}")))?,
                    ),
                    (Mode::Full, None) => None,
                    _ => return Err(Error::Corrupt("question mode and class disagree".into())),
                };
                let ls = self.labeler_mut(labeler_id)?;
                if ls.pending.is_some() {
                    return Err(Error::Corrupt(format!("labeler {labeler_id} already has a pending question")));
                }
                ls.pending = Some(Question {
                    question_token: question_token.clone(),
                    object_id: object,
                    mode: *mode,
                    class,
                    issued_at: at.clone(),
                });
                ls.issued += 1;
                Ok(())
            }
            Event::ResponseRecorded {
                labeler_id,
                question_token,
                answer,
                at,
                client_latency_ms,
            } => {
                let k = self.classes.len();
                let classes = self.classes.clone();
                let ls = self.labeler_mut(labeler_id)?;
                let q = match &ls.pending {
                    Some(q) if q.question_token == *question_token => q.clone(),
                    _ => return Err(Error::Rejected(format!("token {question_token} is not pending"))),
                };
                let answer = parse_answer(q.mode, answer, &classes)?;
                match q.class {
                    Some(c) => {
                        debug_assert!(c < k);
                        let asked = ls.asked.entry(q.object_id.clone()).or_default();
                        if !asked.insert(c) {
                            return Err(Error::Corrupt("class asked twice".into()));
                        }
                    }
                    None => {
                        ls.full_done.insert(q.object_id.clone());
                    }
                }
                ls.pending = None;
                ls.answered_tokens.insert(question_token.clone());
                ls.answered += 1;
                self.votes.push(RecordedVote {
                    labeler: LabelerId::from(labeler_id.as_str()),
                    question: q,
                    answer,
                    answered_at: at.clone(),
                    client_latency_ms: *client_latency_ms,
                });
                Ok(())
            }
        }
    }

    fn labeler_mut(&mut self, labeler_id: &str) -> Result<&mut LabelerState> {
        self.labelers
            .get_mut(labeler_id)
            .ok_or_else(|| Error::Unauthorized(format!("unknown labeler {labeler_id}")))
    }

    /// All recorded answers as a vote table.
    pub fn vote_table(&self) -> VoteTable {
        let mut t = VoteTable::new(self.classes.len());
        for v in &self.votes {
            let (j, i) = (v.labeler.clone(), v.question.object_id.clone());
            let inserted = match (v.question.class, v.answer) {
                (Some(c), Answer::Yes) => t.insert_yn(j, i, c, ResponsePair::YES),
                (Some(c), Answer::No) => t.insert_yn(j, i, c, ResponsePair::NO),
                (None, Answer::Class(c)) => t.insert_full(j, i, c),
                _ => unreachable!("answers are validated against their mode"),
            };
            inserted.expect("state never holds repeated questions");
        }
        t
    }
}

fn parse_answer(mode: Mode, answer: &str, classes: &ClassSpace) -> Result<Answer> {
    match (mode, answer) {
        (Mode::Yn, "yes") => Ok(Answer::Yes),
        (Mode::Yn, "no") => Ok(Answer::No),
        (Mode::Yn, other) => Err(Error::Validation(format!("yes/no answer must be yes or no, got {other:?}"))),
        (Mode::Full, c) => classes
            .index_of(c)
            .map(Answer::Class)
            .ok_or_else(|| Error::Validation(format!("unknown class {c:?}"))),
    }
}

/// Validates an answer for the pending question of `labeler` before it is
/// logged. Returns `Ok(None)` for an already answered token.
pub fn check_response(state: &CampaignState, labeler: &LabelerId, token: &str, answer: &str) -> Result<Option<Ack>> {
    let ls = state
        .labelers
        .get(labeler)
        .ok_or_else(|| Error::Unauthorized(format!("unknown labeler {labeler}")))?;
    if ls.answered_tokens.contains(token) {
        return Ok(Some(Ack::Duplicate));
    }
    match &ls.pending {
        Some(q) if q.question_token == token => {
            parse_answer(q.mode, answer, &state.classes)?;
            Ok(None)
        }
        _ => Err(Error::Rejected(format!("question token {token} is stale or foreign"))),
    }
}
