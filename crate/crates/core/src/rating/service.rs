use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, PoisonError, RwLock};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::journal::{Journal, JournalEvent};
use super::{
    rating_options, validate_scores, CasePayload, Clock, NextSample, PendingCase, RaterSession, RatingAck,
    RatingError, RatingRecord, RatingSubmission, SessionState, SessionView, BREAK_MS, MIN_DWELL_MS,
    WORK_BLOCK_MS,
};
use crate::dataset::{CaseSet, EditCase};
use crate::model::fnv1a;
use crate::subjective::{write_score_rows, ScoreRow};

#[derive(Default)]
struct Registry {
    sessions: BTreeMap<String, Arc<Mutex<RaterSession>>>,
    by_rater: BTreeMap<String, String>,
}

/// Session store. Each session has its own mutex; journal writes share one.
/// Lock order is registry, then session, then journal.
pub struct RatingService {
    cases: BTreeMap<String, EditCase>,
    case_ids: Vec<String>,
    raters: BTreeSet<String>,
    clock: Arc<dyn Clock>,
    image_root: Option<PathBuf>,
    registry: RwLock<Registry>,
    journal: Mutex<Option<Journal>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(PoisonError::into_inner)
}

/// Presentation order for one rater: the case ids shuffled by a generator seeded
/// with `seed` mixed with a hash of the rater id.
pub(crate) fn case_permutation(case_ids: &[String], rater_id: &str, seed: u64) -> Vec<String> {
    let mut order = case_ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ fnv1a(rater_id.as_bytes())));
    order
}

/// Checks that `ev` is a legal transition from the current session state.
fn check(s: &RaterSession, ev: &JournalEvent) -> Result<(), String> {
    match ev {
        JournalEvent::SessionCreated { .. } => Err("session already exists".into()),
        JournalEvent::Served { case_id, .. } => {
            if s.state != SessionState::Rating || s.pending.is_some() {
                return Err(format!("cannot serve in state {:?} with a pending case", s.state));
            }
            match s.order.get(s.cursor) {
                Some(expected) if expected == case_id => Ok(()),
                _ => Err(format!("served {case_id} out of order")),
            }
        }
        JournalEvent::BreakStarted { at, until, .. } => {
            if s.state != SessionState::Rating || s.pending.is_some() || until < at {
                return Err("break cannot start here".into());
            }
            Ok(())
        }
        JournalEvent::BreakEnded { at, .. } => match (s.state, s.break_until) {
            (SessionState::OnBreak, Some(until)) if *at >= until => Ok(()),
            _ => Err("break ended early or not on break".into()),
        },
        JournalEvent::Rated { record, .. } => {
            let pending = s.pending.as_ref().ok_or("rating without a served case")?;
            if pending.case_id != record.case_id || pending.served_at != record.served_at {
                return Err(format!("rating for {} does not match served case", record.case_id));
            }
            if record.rater_id != s.rater_id {
                return Err("rating from another rater".into());
            }
            if record.submitted_at < record.served_at
                || record.dwell_ms != record.submitted_at - record.served_at
                || record.dwell_ms < MIN_DWELL_MS
            {
                return Err(format!("bad dwell for {}", record.case_id));
            }
            if s.records.iter().any(|r| r.case_id == record.case_id) {
                return Err(format!("duplicate rating for {}", record.case_id));
            }
            let as_i64 = record.scores.iter().map(|(k, v)| (k.clone(), *v as i64)).collect();
            validate_scores(&as_i64).map(|_| ()).map_err(|e| e.to_string())
        }
        JournalEvent::Completed { .. } => {
            if s.state != SessionState::Rating || s.pending.is_some() || s.cursor != s.total() {
                return Err("session is not complete".into());
            }
            Ok(())
        }
    }
}

fn mutate(s: &mut RaterSession, ev: JournalEvent) {
    match ev {
        JournalEvent::SessionCreated { .. } => {}
        JournalEvent::Served { case_id, at, .. } => s.pending = Some(PendingCase { case_id, served_at: at }),
        JournalEvent::BreakStarted { until, .. } => {
            s.state = SessionState::OnBreak;
            s.break_until = Some(until);
            s.breaks_taken += 1;
        }
        JournalEvent::BreakEnded { .. } => {
            s.state = SessionState::Rating;
            s.break_until = None;
            s.active_since_break_ms = 0;
        }
        JournalEvent::Rated { record, .. } => {
            s.cursor += 1;
            s.active_ms += record.dwell_ms;
            s.active_since_break_ms += record.dwell_ms;
            s.pending = None;
            s.records.push(record);
        }
        JournalEvent::Completed { .. } => s.state = SessionState::Done,
    }
}

impl RatingService {
    /// In-memory service over every case in `cases`. Only `raters` may open sessions.
    pub fn new<I, S>(cases: &CaseSet, raters: I, clock: Arc<dyn Clock>) -> Result<Self, RatingError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if cases.is_empty() {
            return Err(RatingError::Config("case set is empty".into()));
        }
        Ok(RatingService {
            cases: cases.cases().iter().map(|c| (c.case_id.clone(), c.clone())).collect(),
            case_ids: cases.case_ids().map(str::to_string).collect(),
            raters: raters.into_iter().map(Into::into).collect(),
            clock,
            image_root: cases.root.clone(),
            registry: RwLock::new(Registry::default()),
            journal: Mutex::new(None),
        })
    }

    /// Replays an existing journal at `path` (if any) and appends to it from now on.
    pub fn with_journal(self, path: impl AsRef<Path>) -> Result<Self, RatingError> {
        let (journal, events) = Journal::open(&path)?;
        for (line, ev) in events {
            self.replay(ev).map_err(|message| RatingError::JournalCorrupt { line, message })?;
        }
        *lock(&self.journal) = Some(journal);
        Ok(self)
    }

    fn replay(&self, ev: JournalEvent) -> Result<(), String> {
        let mut reg = self.registry.write().unwrap_or_else(PoisonError::into_inner);
        if let JournalEvent::SessionCreated { session_id, rater_id, seed, order, .. } = ev {
            if !self.raters.contains(&rater_id) {
                return Err(format!("rater {rater_id} is not registered"));
            }
            if reg.by_rater.contains_key(&rater_id) || reg.sessions.contains_key(&session_id) {
                return Err(format!("duplicate session {session_id} for {rater_id}"));
            }
            let mut sorted = order.clone();
            sorted.sort();
            let mut expected = self.case_ids.clone();
            expected.sort();
            if sorted != expected {
                return Err("session order is not a permutation of the case set".into());
            }
            reg.by_rater.insert(rater_id.clone(), session_id.clone());
            let s = new_session(session_id.clone(), rater_id, seed, order);
            reg.sessions.insert(session_id, Arc::new(Mutex::new(s)));
            return Ok(());
        }
        let arc = reg.sessions.get(ev.session_id()).ok_or_else(|| format!("unknown session {}", ev.session_id()))?;
        let mut s = lock(arc);
        check(&s, &ev)?;
        mutate(&mut s, ev);
        Ok(())
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    /// Directory image references resolve against, when the case set has one.
    pub fn image_root(&self) -> Option<&Path> {
        self.image_root.as_deref()
    }

    pub fn case_count(&self) -> usize {
        self.case_ids.len()
    }

    /// True when `reference` is an image of some case; only those are served.
    pub fn is_case_image(&self, reference: &str) -> bool {
        self.cases.values().any(|c| c.source_image == reference || c.edited_image == reference)
    }

    fn write_event(&self, ev: &JournalEvent) -> Result<(), RatingError> {
        if let Some(j) = lock(&self.journal).as_mut() {
            j.append(ev)?;
        }
        Ok(())
    }

    fn commit(&self, s: &mut RaterSession, ev: JournalEvent) -> Result<(), RatingError> {
        check(s, &ev).map_err(|m| RatingError::Config(format!("internal transition error: {m}")))?;
        self.write_event(&ev)?;
        mutate(s, ev);
        Ok(())
    }

    fn session_arc(&self, session_id: &str) -> Result<Arc<Mutex<RaterSession>>, RatingError> {
        let reg = self.registry.read().unwrap_or_else(PoisonError::into_inner);
        reg.sessions.get(session_id).cloned().ok_or_else(|| RatingError::UnknownSession(session_id.to_string()))
    }

    pub fn create_session(&self, rater_id: &str, seed: u64) -> Result<SessionView, RatingError> {
        if !self.raters.contains(rater_id) {
            return Err(RatingError::UnknownRater(rater_id.to_string()));
        }
        let mut reg = self.registry.write().unwrap_or_else(PoisonError::into_inner);
        if reg.by_rater.contains_key(rater_id) {
            return Err(RatingError::DuplicateSession(rater_id.to_string()));
        }
        let session_id = format!("s{:04}", reg.sessions.len() + 1);
        let order = case_permutation(&self.case_ids, rater_id, seed);
        self.write_event(&JournalEvent::SessionCreated {
            session_id: session_id.clone(),
            rater_id: rater_id.to_string(),
            seed,
            order: order.clone(),
            at: self.clock.now_ms(),
        })?;
        let s = new_session(session_id.clone(), rater_id.to_string(), seed, order);
        let view = SessionView::from(&s);
        reg.by_rater.insert(rater_id.to_string(), session_id.clone());
        reg.sessions.insert(session_id, Arc::new(Mutex::new(s)));
        log::info!("session {} opened for {rater_id}", view.session_id);
        Ok(view)
    }

    pub fn session(&self, session_id: &str) -> Result<RaterSession, RatingError> {
        let arc = self.session_arc(session_id)?;
        let s = lock(&arc).clone();
        Ok(s)
    }

    pub fn sessions(&self) -> Vec<SessionView> {
        let reg = self.registry.read().unwrap_or_else(PoisonError::into_inner);
        reg.sessions.values().map(|s| SessionView::from(&*lock(s))).collect()
    }

    fn payload(&self, s: &RaterSession, p: &PendingCase) -> CasePayload {
        let case = &self.cases[&p.case_id];
        CasePayload {
            session_id: s.session_id.clone(),
            case_id: p.case_id.clone(),
            position: s.cursor + 1,
            total: s.total(),
            source_image_url: format!("/images/{}", case.source_image),
            edited_image_url: format!("/images/{}", case.edited_image),
            instruction: case.prompt.clone(),
            options: rating_options(),
            served_at: p.served_at,
            submit_not_before: p.served_at + MIN_DWELL_MS,
        }
    }

    /// The current case (re-sent unchanged while unrated), a break, or done.
    pub fn next_sample(&self, session_id: &str) -> Result<NextSample, RatingError> {
        let arc = self.session_arc(session_id)?;
        let mut s = lock(&arc);
        let now = self.clock.now_ms();
        match s.state {
            SessionState::Done => return Ok(NextSample::Done { completed: s.cursor, total: s.total() }),
            SessionState::OnBreak => {
                let until = s.break_until.unwrap_or(now);
                if now < until {
                    return Ok(NextSample::Break { break_until: until, remaining_ms: until - now });
                }
                self.commit(&mut s, JournalEvent::BreakEnded { session_id: session_id.to_string(), at: now })?;
            }
            SessionState::Rating => {}
        }
        if let Some(p) = s.pending.clone() {
            return Ok(NextSample::Case(self.payload(&s, &p)));
        }
        if s.cursor == s.total() {
            self.commit(&mut s, JournalEvent::Completed { session_id: session_id.to_string(), at: now })?;
            log::info!("session {session_id} completed");
            return Ok(NextSample::Done { completed: s.cursor, total: s.total() });
        }
        if s.active_since_break_ms >= WORK_BLOCK_MS {
            let until = now + BREAK_MS;
            self.commit(&mut s, JournalEvent::BreakStarted { session_id: session_id.to_string(), at: now, until })?;
            return Ok(NextSample::Break { break_until: until, remaining_ms: BREAK_MS });
        }
        let case_id = s.order[s.cursor].clone();
        self.commit(&mut s, JournalEvent::Served { session_id: session_id.to_string(), case_id, at: now })?;
        let p = s.pending.clone().expect("just served");
        Ok(NextSample::Case(self.payload(&s, &p)))
    }

    pub fn submit_rating(&self, session_id: &str, sub: RatingSubmission) -> Result<RatingAck, RatingError> {
        let arc = self.session_arc(session_id)?;
        let mut s = lock(&arc);
        let now = self.clock.now_ms();
        if s.records.iter().any(|r| r.case_id == sub.case_id) {
            return Err(RatingError::DuplicateRating { rater_id: s.rater_id.clone(), case_id: sub.case_id });
        }
        match s.state {
            SessionState::Done => return Err(RatingError::SessionDone(session_id.to_string())),
            SessionState::OnBreak => {
                return Err(RatingError::OnBreak { break_until: s.break_until.unwrap_or(now) })
            }
            SessionState::Rating => {}
        }
        let pending = s.pending.clone().ok_or(RatingError::NothingServed)?;
        if pending.case_id != sub.case_id {
            return Err(RatingError::CaseMismatch { expected: pending.case_id, got: sub.case_id });
        }
        let elapsed = now.saturating_sub(pending.served_at);
        if elapsed < MIN_DWELL_MS {
            return Err(RatingError::TooEarly { elapsed_ms: elapsed, retry_after_ms: MIN_DWELL_MS - elapsed });
        }
        let scores = validate_scores(&sub.scores)?;
        let record = RatingRecord {
            rater_id: s.rater_id.clone(),
            case_id: sub.case_id.clone(),
            scores,
            dwell_ms: elapsed,
            client_dwell_ms: sub.client_dwell_ms,
            served_at: pending.served_at,
            submitted_at: now,
        };
        self.commit(&mut s, JournalEvent::Rated { session_id: session_id.to_string(), record })?;
        Ok(RatingAck { case_id: sub.case_id, cursor: s.cursor, total: s.total(), dwell_ms: elapsed })
    }

    /// Every accepted rating, ordered by (rater, case).
    pub fn records(&self) -> Vec<RatingRecord> {
        let arcs: Vec<_> = {
            let reg = self.registry.read().unwrap_or_else(PoisonError::into_inner);
            reg.sessions.values().cloned().collect()
        };
        let mut out: Vec<RatingRecord> = arcs.iter().flat_map(|a| lock(a).records.clone()).collect();
        out.sort_by(|a, b| (&a.rater_id, &a.case_id).cmp(&(&b.rater_id, &b.case_id)));
        out
    }

    /// One row per rated (rater, case, dim), sorted by those keys.
    pub fn export_rows(&self) -> Result<Vec<ScoreRow>, RatingError> {
        let mut rows: Vec<ScoreRow> = self
            .records()
            .into_iter()
            .flat_map(|r| {
                r.scores.iter().map(move |(dim, &score)| ScoreRow {
                    rater_id: r.rater_id.clone(),
                    case_id: r.case_id.clone(),
                    dim: dim.clone(),
                    score: score as i64,
                    timestamp: r.submitted_at,
                }).collect::<Vec<_>>()
            })
            .collect();
        if rows.is_empty() {
            return Err(RatingError::NoRatings);
        }
        rows.sort_by(|a, b| (&a.rater_id, &a.case_id, &a.dim).cmp(&(&b.rater_id, &b.case_id, &b.dim)));
        Ok(rows)
    }

    pub fn export_csv(&self) -> Result<Vec<u8>, RatingError> {
        let rows = self.export_rows()?;
        let mut buf = Vec::new();
        write_score_rows(&rows, &mut buf).map_err(|e| RatingError::Config(e.to_string()))?;
        Ok(buf)
    }
}

fn new_session(session_id: String, rater_id: String, seed: u64, order: Vec<String>) -> RaterSession {
    RaterSession {
        session_id,
        rater_id,
        seed,
        order,
        cursor: 0,
        active_ms: 0,
        active_since_break_ms: 0,
        state: SessionState::Rating,
        break_until: None,
        breaks_taken: 0,
        pending: None,
        records: Vec::new(),
    }
}
