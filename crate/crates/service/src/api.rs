use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gesteval::alignment::ScoreConfig;
use gesteval::analysis::{self, report_to_csv};
use gesteval::juice::{profiles_to_csv, JuiceNormalization};
use gesteval::model::{
    parse_log, ComparisonTask, LogEntry, Registry, ResampleUnit, SessionId, SessionProgress, SessionState,
    SessionStatus, Side, StudyId, StudyKind, TakerId,
};
use gesteval::rating::EloConfig;
use gesteval::study::{
    build_plan, record_response, update_adaptive_state, AdaptiveState, PageSubmission, PlanRequest, SessionConfig,
    StudyPlan,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::store::{active_pool, StoreError, StudyState, PLAN_FILE};

type Shared = Arc<Mutex<StudyState>>;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    config: ServiceConfig,
    default_registry: Option<Registry>,
    studies: RwLock<BTreeMap<StudyId, Shared>>,
    sessions: RwLock<HashMap<SessionId, StudyId>>,
}

impl AppState {
    /// Load the default registry and replay every study under the data directory.
    pub fn open(config: ServiceConfig) -> Result<Self, StoreError> {
        let default_registry = match &config.registry {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
                let reg: Registry = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                reg.validate().map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                Some(reg)
            }
            None => None,
        };
        std::fs::create_dir_all(&config.data_dir).map_err(|source| StoreError::Io {
            path: config.data_dir.clone(),
            source,
        })?;
        let mut studies = BTreeMap::new();
        let mut sessions = HashMap::new();
        let mut dirs: Vec<_> = std::fs::read_dir(&config.data_dir)
            .map_err(|source| StoreError::Io {
                path: config.data_dir.clone(),
                source,
            })?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join(PLAN_FILE).is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let st = StudyState::open(dir)?;
            let id = st.plan.study_id.clone();
            for s in st.scheduler.sessions() {
                sessions.insert(s.session_id.clone(), id.clone());
            }
            tracing::info!(study = %id, sessions = st.scheduler.sessions().count(), votes = st.log.votes().len(), "study restored");
            studies.insert(id, Arc::new(Mutex::new(st)));
        }
        Ok(Self {
            inner: Arc::new(Inner {
                config,
                default_registry,
                studies: RwLock::new(studies),
                sessions: RwLock::new(sessions),
            }),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.config
    }

    fn study(&self, id: &str) -> Result<Shared, ApiError> {
        self.inner
            .studies
            .read()
            .expect("study map lock")
            .get(&StudyId::new(id))
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown study {id}")))
    }

    fn study_of_session(&self, id: &SessionId) -> Result<Shared, ApiError> {
        let study = self
            .inner
            .sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {id}")))?;
        self.study(study.as_str())
    }

    fn register_sessions(&self, study: &StudyId, ids: impl IntoIterator<Item = SessionId>) {
        let mut map = self.inner.sessions.write().expect("session map lock");
        for id in ids {
            map.insert(id, study.clone());
        }
    }
}

/// Run `f` on a blocking thread with the study locked.
async fn locked<T, F>(study: Shared, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut StudyState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || {
        let mut guard = study.lock().map_err(|_| ApiError::internal("study state is poisoned"))?;
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn writable(st: &StudyState) -> Result<(), ApiError> {
    if st.is_poisoned() {
        Err(ApiError::unavailable("study storage failed; restart the service to recover"))
    } else {
        Ok(())
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApiError::invalid(if path == "." { "body".to_string() } else { path }, e.into_inner().to_string())
    })
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::invalid("query", e.body_text()))
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/studies", post(create_study).get(list_studies))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/leaderboard", get(leaderboard))
        .route("/studies/{id}/appropriateness", get(appropriateness))
        .route("/studies/{id}/juice", get(juice))
        .route("/studies/{id}/votes/bulk", post(bulk_votes))
        .route("/studies/{id}/adaptive", get(get_adaptive).post(update_adaptive))
        .route("/sessions/next", get(next_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/pages/{page}", get(get_page).post(submit_page))
        .with_state(state)
}

// ---- studies ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study_id: StudyId,
    pub kind: StudyKind,
    pub seed: u64,
    pub n_conditions: usize,
    pub n_segments: usize,
    pub pool_size: usize,
    pub active_pool_size: usize,
    pub session: SessionConfig,
    pub sessions: usize,
    pub votes: usize,
    pub stopped_pairs: usize,
}

fn summary(st: &StudyState) -> StudySummary {
    StudySummary {
        study_id: st.plan.study_id.clone(),
        kind: st.plan.kind,
        seed: st.plan.seed,
        n_conditions: st.plan.conditions.len(),
        n_segments: st.plan.segments.len(),
        pool_size: st.plan.pool.len(),
        active_pool_size: st.scheduler.pool().len(),
        session: st.plan.session.clone(),
        sessions: st.scheduler.sessions().count(),
        votes: st.log.votes().len(),
        stopped_pairs: st.adaptive.stopped_pairs.len(),
    }
}

fn valid_study_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Reject stimulus locators that would reveal the condition or whether the
/// audio is matched.
fn check_blinding(plan: &StudyPlan) -> Result<(), ApiError> {
    let mut needles: Vec<String> = vec!["match".into()];
    for c in &plan.registry.conditions {
        if c.id.as_str().len() >= 3 {
            needles.push(c.id.as_str().to_lowercase());
        }
        if c.display_name.len() >= 3 {
            needles.push(c.display_name.to_lowercase());
        }
    }
    for (i, t) in plan.pool.iter().enumerate() {
        for (side, s) in [("left", &t.left), ("right", &t.right)] {
            let uri = s.video_uri.to_lowercase();
            if let Some(n) = needles.iter().find(|n| uri.contains(n.as_str())) {
                return Err(ApiError::invalid(
                    format!("pool[{i}].{side}.video_uri"),
                    format!("locator {} contains {n:?} and would unblind raters", s.video_uri),
                ));
            }
        }
    }
    Ok(())
}

async fn create_study(State(app): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let mut doc: serde_json::Value = parse_body(&body)?;
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| ApiError::invalid("body", "expected a JSON object"))?;
    let plan = if obj.contains_key("pool") {
        let plan: StudyPlan = parse_body(&body)?;
        plan.validate()?;
        plan
    } else {
        let cfg = app.config();
        if !obj.contains_key("registry") {
            let reg = app
                .inner
                .default_registry
                .as_ref()
                .ok_or_else(|| ApiError::invalid("registry", "missing and no default registry is configured"))?;
            obj.insert("registry".into(), serde_json::to_value(reg).expect("registry serializes"));
        }
        obj.entry("seed").or_insert(cfg.rng_seed.into());
        obj.entry("session")
            .or_insert(serde_json::json!({ "length": cfg.session_length }));
        let text = serde_json::to_vec(&doc).expect("json re-encodes");
        let req: PlanRequest = parse_body(&text)?;
        blocking(move || build_plan(req).map_err(ApiError::from)).await?
    };
    if !valid_study_id(plan.study_id.as_str()) {
        return Err(ApiError::invalid("study_id", "use 1-64 characters from [A-Za-z0-9._-]"));
    }
    check_blinding(&plan)?;

    let app2 = app.clone();
    let summary = blocking(move || {
        let mut studies = app2.inner.studies.write().expect("study map lock");
        if studies.contains_key(&plan.study_id) {
            return Err(ApiError::conflict(format!("study {} already exists", plan.study_id)));
        }
        let dir = app2.config().data_dir.join(plan.study_id.as_str());
        if dir.exists() {
            return Err(ApiError::conflict(format!("study {} already exists on disk", plan.study_id)));
        }
        let id = plan.study_id.clone();
        let st = StudyState::create(dir, plan).map_err(store_error)?;
        let s = summary(&st);
        studies.insert(id, Arc::new(Mutex::new(st)));
        Ok(s)
    })
    .await?;
    tracing::info!(study = %summary.study_id, pool = summary.pool_size, "study created");
    Ok((StatusCode::CREATED, Json(summary)))
}

fn store_error(e: StoreError) -> ApiError {
    match e {
        StoreError::Study(e) => e.into(),
        other => ApiError::internal(other.to_string()),
    }
}

async fn list_studies(State(app): State<AppState>) -> Json<Vec<StudyId>> {
    Json(app.inner.studies.read().expect("study map lock").keys().cloned().collect())
}

async fn get_study(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<StudySummary>, ApiError> {
    let study = app.study(&id)?;
    Ok(Json(locked(study, |st| Ok(summary(st))).await?))
}

// ---- reports ----

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Default, Deserialize)]
pub struct ReportQuery {
    pub seed: Option<u64>,
    pub n_bootstrap: Option<usize>,
    pub alpha: Option<f64>,
    pub resample: Option<ResampleUnit>,
    #[serde(default)]
    pub format: Format,
}

fn csv_response(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], body).into_response()
}

/// Snapshot the log under the lock; analysis runs without it.
async fn snapshot(app: &AppState, id: &str, kind: Option<StudyKind>) -> Result<(gesteval::model::StudyLog, StudyPlan), ApiError> {
    let study = app.study(id)?;
    locked(study, move |st| {
        if let Some(k) = kind {
            if st.plan.kind != k {
                return Err(ApiError::invalid("kind", format!("study is a {} study", st.plan.kind)));
            }
        }
        Ok((st.log.clone(), st.plan.clone()))
    })
    .await
}

pub fn elo_config(q: &ReportQuery, default_seed: u64) -> EloConfig {
    let d = EloConfig::default();
    EloConfig {
        rng_seed: q.seed.unwrap_or(default_seed),
        n_bootstrap: q.n_bootstrap.unwrap_or(d.n_bootstrap),
        alpha: q.alpha.unwrap_or(d.alpha),
        resample: q.resample.unwrap_or(d.resample),
        ..d
    }
}

async fn leaderboard(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    let cfg = elo_config(&q, app.config().rng_seed);
    let (log, _) = snapshot(&app, &id, Some(StudyKind::Realism)).await?;
    let report = blocking(move || Ok(analysis::leaderboard_from_log(&log, &cfg)?)).await?;
    Ok(match q.format {
        Format::Json => Json(report).into_response(),
        Format::Csv => csv_response(report_to_csv(&report)),
    })
}

async fn appropriateness(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    let d = ScoreConfig::default();
    let cfg = ScoreConfig {
        rng_seed: q.seed.unwrap_or(app.config().rng_seed),
        n_bootstrap: q.n_bootstrap.unwrap_or(d.n_bootstrap),
        alpha: q.alpha.unwrap_or(d.alpha),
        resample: q.resample.unwrap_or(d.resample),
    };
    let (log, _) = snapshot(&app, &id, Some(StudyKind::Alignment)).await?;
    let report = blocking(move || Ok(analysis::appropriateness_from_log(&log, &cfg)?)).await?;
    Ok(match q.format {
        Format::Json => Json(report).into_response(),
        Format::Csv => csv_response(report_to_csv(&report)),
    })
}

#[derive(Debug, Default, Deserialize)]
pub struct JuiceQuery {
    #[serde(default)]
    pub normalization: JuiceNormalization,
    #[serde(default)]
    pub format: Format,
}

async fn juice(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<JuiceQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    let (log, plan) = snapshot(&app, &id, None).await?;
    let norm = q.normalization;
    let profiles =
        blocking(move || Ok(analysis::juice_from_log(&log, plan.kind, &plan.registry, norm)?)).await?;
    Ok(match q.format {
        Format::Json => Json(profiles).into_response(),
        Format::Csv => csv_response(
            profiles_to_csv(&profiles).map_err(|e| ApiError::from(gesteval::analysis::AnalysisError::from(e)))?,
        ),
    })
}

// ---- ingest and adaptive stopping ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BulkResult {
    pub entries: usize,
    pub votes_added: usize,
    pub total_votes: usize,
}

async fn bulk_votes(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<BulkResult>, ApiError> {
    let study = app.study(&id)?;
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::invalid("body", "not UTF-8"))?;
    let (result, sessions, study_id) = locked(study, move |st| {
        writable(st)?;
        let entries = parse_log(&text)?;
        let kind = st.plan.kind;
        for (i, e) in entries.iter().enumerate() {
            let k = match e {
                LogEntry::Task(t) => Some(t.study_kind),
                LogEntry::Session(s) => Some(s.study_kind),
                _ => None,
            };
            if k.is_some_and(|k| k != kind) {
                return Err(ApiError::invalid(format!("entries[{i}].study_kind"), format!("expected a {kind} record")));
            }
        }
        let mut next = st.log.clone();
        for (i, e) in entries.iter().enumerate() {
            next.push(e.clone()).map_err(|e| {
                let mut err = ApiError::from(e);
                err.body.field = Some(format!("entries[{i}]"));
                err
            })?;
        }
        st.append(&entries)?;
        let votes_added = next.votes().len() - st.log.votes().len();
        st.log = next;
        let mut sessions = Vec::new();
        for e in &entries {
            if let LogEntry::Session(s) = e {
                sessions.push(s.session_id.clone());
            }
        }
        for sid in &sessions {
            if let Some(s) = st.log.session(sid) {
                st.scheduler.restore(s.clone());
            }
        }
        Ok((
            BulkResult {
                entries: entries.len(),
                votes_added,
                total_votes: st.log.votes().len(),
            },
            sessions,
            st.plan.study_id.clone(),
        ))
    })
    .await?;
    app.register_sessions(&study_id, sessions);
    Ok(Json(result))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveView {
    pub state: AdaptiveState,
    pub active_pool_size: usize,
}

async fn get_adaptive(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<AdaptiveView>, ApiError> {
    let study = app.study(&id)?;
    locked(study, |st| {
        Ok(Json(AdaptiveView {
            state: st.adaptive.clone(),
            active_pool_size: st.scheduler.pool().len(),
        }))
    })
    .await
}

/// Refit the leaderboard and drop pairs that the stopping rule has settled.
async fn update_adaptive(
    State(app): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ReportQuery>, QueryRejection>,
) -> Result<Json<AdaptiveView>, ApiError> {
    let q = query(q)?;
    let cfg = elo_config(&q, app.config().rng_seed);
    let (log, plan) = snapshot(&app, &id, Some(StudyKind::Realism)).await?;
    let report = blocking(move || Ok(analysis::leaderboard_from_log(&log, &cfg)?)).await?;
    let rule = plan.early_stopping.clone().unwrap_or_default();
    let study = app.study(&id)?;
    locked(study, move |st| {
        writable(st)?;
        let next = update_adaptive_state(&st.adaptive, &report, &rule);
        let pool = active_pool(&st.plan, &next)?;
        st.save_adaptive(next).map_err(store_error)?;
        st.scheduler.set_pool(pool)?;
        Ok(Json(AdaptiveView {
            state: st.adaptive.clone(),
            active_pool_size: st.scheduler.pool().len(),
        }))
    })
    .await
}

// ---- taker-facing ----

/// Session status as shown to the taker; exclusion is not disclosed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PublicStatus {
    Active,
    Completed,
    Terminated,
}

fn public_status(s: &SessionState) -> PublicStatus {
    match s.status {
        SessionStatus::Terminated => PublicStatus::Terminated,
        _ if s.is_finished() => PublicStatus::Completed,
        _ => PublicStatus::Active,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub value: String,
    pub label: String,
}

fn enum_value<T: Serialize>(v: T) -> String {
    match serde_json::to_value(v).expect("enum serializes") {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

fn response_choices() -> Vec<Choice> {
    gesteval::model::Response::ALL
        .iter()
        .map(|&r| Choice {
            value: enum_value(r),
            label: r.label().into(),
        })
        .collect()
}

fn juice_choices(kind: StudyKind) -> Vec<Choice> {
    kind.juice_options()
        .iter()
        .map(|&o| Choice {
            value: enum_value(o),
            label: o.label().into(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: SessionId,
    pub question: String,
    pub preamble: String,
    pub response_options: Vec<Choice>,
    /// Offered after a non-tie answer.
    pub juice_options: Vec<Choice>,
    pub total_pages: u32,
    pub answered_pages: u32,
    pub next_page: Option<u32>,
    pub max_skips: u32,
    pub skips_used: u32,
    pub status: PublicStatus,
}

fn session_view(s: &SessionState, max_skips: u32) -> SessionView {
    SessionView {
        session_id: s.session_id.clone(),
        question: s.study_kind.question().into(),
        preamble: s.study_kind.preamble().into(),
        response_options: response_choices(),
        juice_options: juice_choices(s.study_kind),
        total_pages: s.len() as u32,
        answered_pages: s.outcomes.iter().filter(|o| o.is_some()).count() as u32,
        next_page: s.next_pending(),
        max_skips,
        skips_used: s.skips_used,
        status: public_status(s),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoView {
    pub video_uri: String,
    pub muted: bool,
    /// Replacement audio for an audio attention check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_uri: Option<String>,
    /// Text drawn over the video for a visual attention check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageView {
    pub session_id: SessionId,
    pub page: u32,
    pub total_pages: u32,
    pub answered: bool,
    pub question: String,
    pub left: VideoView,
    pub right: VideoView,
    pub response_options: Vec<Choice>,
    pub juice_options: Vec<Choice>,
    pub status: PublicStatus,
}

fn video(task: &ComparisonTask, side: Side) -> VideoView {
    let s = task.stimulus(side);
    let check = task.attention_check.as_ref().filter(|c| c.side == side);
    let (audio_uri, overlay_text) = match check {
        Some(c) if c.audio_uri.is_some() => (c.audio_uri.clone(), None),
        Some(c) => (None, Some(c.message.clone())),
        None => (None, None),
    };
    VideoView {
        video_uri: s.video_uri.clone(),
        muted: s.muted,
        audio_uri,
        overlay_text,
    }
}

fn page_view(s: &SessionState, page: u32) -> Option<PageView> {
    let task = s.page(page)?;
    Some(PageView {
        session_id: s.session_id.clone(),
        page,
        total_pages: s.len() as u32,
        answered: s.outcomes[page as usize - 1].is_some(),
        question: s.study_kind.question().into(),
        left: video(task, Side::Left),
        right: video(task, Side::Right),
        response_options: response_choices(),
        juice_options: juice_choices(s.study_kind),
        status: public_status(s),
    })
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub taker: String,
    pub study: Option<String>,
}

/// Start a session for a taker, or resume their unfinished one.
async fn next_session(
    State(app): State<AppState>,
    q: Result<Query<NextQuery>, QueryRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let q = query(q)?;
    let taker = q.taker.trim().to_string();
    if taker.is_empty() {
        return Err(ApiError::invalid("taker", "must not be empty"));
    }
    let study_id = match q.study {
        Some(s) => s,
        None => {
            let studies = app.inner.studies.read().expect("study map lock");
            match studies.len() {
                1 => studies.keys().next().expect("one study").to_string(),
                _ => return Err(ApiError::invalid("study", "required when more than one study exists")),
            }
        }
    };
    let study = app.study(&study_id)?;
    let taker = TakerId::new(taker);
    let (view, sid, study_id) = locked(study, move |st| {
        let max_skips = st.scheduler.config().max_skips;
        if let Some(s) = st.scheduler.sessions().find(|s| s.taker_id == taker) {
            if s.is_finished() {
                return Err(gesteval::study::StudyError::RepeatTaker(taker).into());
            }
            return Ok((session_view(s, max_skips), s.session_id.clone(), st.plan.study_id.clone()));
        }
        writable(st)?;
        let s = st.scheduler.schedule_session(&taker)?.clone();
        st.append(&[LogEntry::Session(s.clone())])?;
        st.log
            .push(LogEntry::Session(s.clone()))
            .map_err(|e| ApiError::internal(e.to_string()))?;
        Ok((session_view(&s, max_skips), s.session_id.clone(), st.plan.study_id.clone()))
    })
    .await?;
    app.register_sessions(&study_id, [sid]);
    Ok(Json(view))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let sid = SessionId::new(id);
    let study = app.study_of_session(&sid)?;
    locked(study, move |st| {
        let s = st
            .scheduler
            .session(&sid)
            .ok_or_else(|| ApiError::not_found(format!("unknown session {sid}")))?;
        Ok(Json(session_view(s, st.scheduler.config().max_skips)))
    })
    .await
}

async fn get_page(
    State(app): State<AppState>,
    Path((id, page)): Path<(String, u32)>,
) -> Result<Json<PageView>, ApiError> {
    let sid = SessionId::new(id);
    let study = app.study_of_session(&sid)?;
    locked(study, move |st| {
        let s = st
            .scheduler
            .session(&sid)
            .ok_or_else(|| ApiError::not_found(format!("unknown session {sid}")))?;
        page_view(s, page)
            .map(Json)
            .ok_or_else(|| ApiError::not_found(format!("session {sid} has no page {page}")))
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub session_id: SessionId,
    pub page: u32,
    pub status: PublicStatus,
    pub next_page: Option<u32>,
    pub skips_remaining: u32,
}

async fn submit_page(
    State(app): State<AppState>,
    Path((id, page)): Path<(String, u32)>,
    body: Bytes,
) -> Result<Json<SubmitResult>, ApiError> {
    let mut sub: PageSubmission = parse_body(&body)?;
    if sub.timestamp_ms == 0 {
        sub.timestamp_ms = now_ms();
    }
    let sid = SessionId::new(id);
    let study = app.study_of_session(&sid)?;
    locked(study, move |st| {
        writable(st)?;
        let max_skips = st.scheduler.config().max_skips;
        let mut next = st
            .scheduler
            .session(&sid)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session {sid}")))?;
        let ts = sub.timestamp_ms;
        // Applied to a copy; the live state changes only after the log write.
        let outcome = record_response(&mut next, page, sub, max_skips)?;
        if st.log.has_vote(&sid, page) {
            return Err(ApiError::conflict(format!("page {page} of session {sid} was already answered")));
        }
        let progress = SessionProgress::of(&next, page, ts).expect("recorded page has an outcome");
        let mut entries = Vec::with_capacity(2);
        if let Some(v) = outcome.vote {
            entries.push(LogEntry::Vote(v));
        }
        entries.push(LogEntry::Progress(progress));
        st.append(&entries)?;
        for e in entries {
            st.log.push(e).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let result = SubmitResult {
            session_id: sid.clone(),
            page,
            status: public_status(&next),
            next_page: next.next_pending(),
            skips_remaining: max_skips.saturating_sub(next.skips_used),
        };
        st.scheduler.restore(next);
        Ok(Json(result))
    })
    .await
}
