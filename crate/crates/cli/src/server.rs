//! Local HTTP+JSON service over one composed scene.
//!
//! Every accepted write bumps the scene revision. Writes name the revision
//! they were based on and are refused with 409 when it is stale. Every
//! response reports the current revision in its body and in the
//! [`REVISION_HEADER`] header.

use std::sync::{Arc, Mutex, MutexGuard};

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::Router;
use impactfit_core::composer::{export_keyframes, predict_secondary, AutoTiming, BodyRef, PredictedEvent};
use impactfit_core::io::{to_json, KeyframeFile, SceneFile};
use impactfit_core::{Error, Vec3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::edit::PairEdit;

pub const REVISION_HEADER: &str = "x-scene-revision";

type Shared = Arc<Mutex<SceneFile>>;

pub fn router(scene: SceneFile) -> Router {
    Router::new()
        .route("/scene", get(get_scene))
        .route("/pairs/{index}", patch(patch_pair))
        .route("/auto-time", post(post_auto_time))
        .route("/predict", post(post_predict))
        .route("/keyframes", get(get_keyframes))
        .with_state(Arc::new(Mutex::new(scene)))
}

/// Serves `scene` until the process ends.
pub async fn serve(scene: SceneFile, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    serve_on(listener, scene).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, scene: SceneFile) -> std::io::Result<()> {
    axum::serve(listener, router(scene)).await
}

fn lock(s: &Shared) -> MutexGuard<'_, SceneFile> {
    s.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
    revision: u64,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>, revision: u64) -> Self {
        Self { status, body: ErrorBody { error, message: message.into(), revision } }
    }

    fn stale(base: u64, revision: u64) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "stale-revision",
            format!("request is based on revision {base}, scene is at {revision}"),
            revision,
        )
    }

    fn core(e: Error, revision: u64) -> Self {
        let (status, kind) = match e {
            Error::InvalidTransform(_) => (StatusCode::BAD_REQUEST, "invalid-transform"),
            Error::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid-argument"),
            Error::Schema { .. } => (StatusCode::BAD_REQUEST, "schema"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "unprocessable"),
        };
        Self::new(status, kind, e.to_string(), revision)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let text = serde_json::to_string(&self.body).unwrap_or_default();
        json_response(self.status, self.body.revision, text)
    }
}

fn json_response(status: StatusCode, revision: u64, text: String) -> Response {
    let mut r = (status, text).into_response();
    let h = r.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    h.insert(REVISION_HEADER, HeaderValue::from(revision));
    r
}

fn ok<T: Serialize>(revision: u64, body: &T) -> Result<Response, ApiError> {
    let text = serde_json::to_string(body)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), revision))?;
    Ok(json_response(StatusCode::OK, revision, text))
}

/// Parses a request body; an empty body is the default value when allowed.
fn parse<T: DeserializeOwned + Default>(body: &[u8], allow_empty: bool, revision: u64) -> Result<T, ApiError> {
    if allow_empty && body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad-request", e.to_string(), revision))
}

async fn get_scene(State(s): State<Shared>) -> Result<Response, ApiError> {
    let f = lock(&s);
    let text = to_json(&*f).map_err(|e| ApiError::core(e, f.revision))?;
    Ok(json_response(StatusCode::OK, f.revision, text))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PatchRequest {
    base_revision: Option<u64>,
    translation: Option<Vec3>,
    rotation: Option<impactfit_core::composer::AxisAngle>,
    rotation_about_gravity: Option<f64>,
    time_offset: Option<f64>,
    reference_mass: Option<f64>,
}

/// Placement of one pair after an accepted edit.
#[derive(Debug, Serialize, Deserialize)]
pub struct PairPlacement {
    pub revision: u64,
    pub pair: usize,
    pub translation: Vec3,
    pub rotation_about_gravity: f64,
    pub time_offset: f64,
    pub reference_mass: f64,
}

async fn patch_pair(State(s): State<Shared>, Path(index): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let mut f = lock(&s);
    let rev = f.revision;
    let req: PatchRequest = parse(&body, false, rev)?;
    let Some(base) = req.base_revision else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad-request", "base_revision is required", rev));
    };
    let index: usize = index
        .parse()
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no pair '{index}'"), rev))?;
    if index >= f.scene.pairs.len() {
        return Err(ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no pair {index}"), rev));
    }
    if base != rev {
        return Err(ApiError::stale(base, rev));
    }
    let edit = PairEdit {
        translation: req.translation,
        rotation: req.rotation,
        rotation_about_gravity: req.rotation_about_gravity,
        time_offset: req.time_offset,
        reference_mass: req.reference_mass,
    };
    edit.apply(&mut f.scene, index).map_err(|e| ApiError::core(e, rev))?;
    f.revision += 1;
    let p = &f.scene.pairs[index];
    let out = PairPlacement {
        revision: f.revision,
        pair: index,
        translation: p.translation,
        rotation_about_gravity: p.rotation_about_gravity,
        time_offset: p.time_offset,
        reference_mass: p.reference_mass,
    };
    ok(f.revision, &out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AutoTimeRequest {
    early: Option<BodyRef>,
    late: Option<BodyRef>,
    /// Adds the shift to the late pair's time offset.
    #[serde(default)]
    apply: bool,
    base_revision: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AutoTimeResponse {
    pub revision: u64,
    pub timing: AutoTiming,
    pub applied: bool,
    /// Time offset of the late pair after the request.
    pub time_offset: f64,
}

async fn post_auto_time(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let mut f = lock(&s);
    let rev = f.revision;
    let req: AutoTimeRequest = parse(&body, false, rev)?;
    let bad = |m: &str| ApiError::new(StatusCode::BAD_REQUEST, "bad-request", m, rev);
    let (Some(early), Some(late)) = (req.early, req.late) else {
        return Err(bad("early and late bodies are required"));
    };
    if req.apply {
        match req.base_revision {
            None => return Err(bad("base_revision is required to apply")),
            Some(b) if b != rev => return Err(ApiError::stale(b, rev)),
            Some(_) => {}
        }
    }
    let pair = |r: BodyRef| {
        f.scene.pairs.get(r.pair).ok_or_else(|| bad(&format!("pair {} does not exist", r.pair)))
    };
    let timing = impactfit_core::composer::auto_time(pair(early)?, early.body, pair(late)?, late.body)
        .map_err(|e| ApiError::core(e, rev))?;
    if req.apply {
        let edit = PairEdit { time_offset: Some(f.scene.pairs[late.pair].time_offset + timing.shift), ..PairEdit::default() };
        edit.apply(&mut f.scene, late.pair).map_err(|e| ApiError::core(e, rev))?;
        f.revision += 1;
    }
    let out = AutoTimeResponse {
        revision: f.revision,
        timing,
        applied: req.apply,
        time_offset: f.scene.pairs[late.pair].time_offset,
    };
    ok(f.revision, &out)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    base_revision: Option<u64>,
    /// Keyframe rate; the scene rate by default.
    fps: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub revision: u64,
    pub events: Vec<PredictedEvent>,
    pub warnings: Vec<String>,
    pub keyframes: KeyframeFile,
}

/// Runs the prediction on a snapshot off the async workers. The result is
/// stored only if no edit landed meanwhile.
async fn post_predict(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let (rev, scene) = {
        let f = lock(&s);
        (f.revision, f.scene.clone())
    };
    let req: PredictRequest = parse(&body, true, rev)?;
    if let Some(b) = req.base_revision.filter(|&b| b != rev) {
        return Err(ApiError::stale(b, rev));
    }
    let fps = keyframe_fps(req.fps, scene.fps(), rev)?;
    let done = tokio::task::spawn_blocking(move || {
        let p = predict_secondary(&scene)?;
        let k = export_keyframes(&p, fps)?;
        Ok::<_, Error>((p, k))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), rev))?;
    let mut f = lock(&s);
    let (predicted, keyframes) = done.map_err(|e| ApiError::core(e, f.revision))?;
    if f.revision != rev {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "stale-revision",
            format!("scene changed from revision {rev} to {} during prediction", f.revision),
            f.revision,
        ));
    }
    f.revision += 1;
    let out = PredictResponse {
        revision: f.revision,
        events: predicted.predicted_events.clone(),
        warnings: predicted.warnings.clone(),
        keyframes: KeyframeFile::new(keyframes, f.revision),
    };
    f.scene = predicted;
    ok(f.revision, &out)
}

fn keyframe_fps(requested: Option<f64>, scene: Option<f64>, rev: u64) -> Result<f64, ApiError> {
    requested.or(scene).ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "bad-request", "an empty scene needs an explicit fps", rev)
    })
}

async fn get_keyframes(State(s): State<Shared>, RawQuery(query): RawQuery) -> Result<Response, ApiError> {
    let (rev, scene) = {
        let f = lock(&s);
        (f.revision, f.scene.clone())
    };
    let mut fps = None;
    for kv in query.iter().flat_map(|q| q.split('&')).filter(|kv| !kv.is_empty()) {
        match kv.split_once('=') {
            Some(("fps", v)) => {
                fps = Some(v.parse::<f64>().map_err(|_| {
                    ApiError::new(StatusCode::BAD_REQUEST, "bad-request", format!("invalid fps '{v}'"), rev)
                })?)
            }
            _ => return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad-request", format!("unknown query '{kv}'"), rev)),
        }
    }
    let fps = keyframe_fps(fps, scene.fps(), rev)?;
    let doc = tokio::task::spawn_blocking(move || export_keyframes(&scene, fps))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string(), rev))?
        .map_err(|e| ApiError::core(e, rev))?;
    let text = to_json(&KeyframeFile::new(doc, rev)).map_err(|e| ApiError::core(e, rev))?;
    Ok(json_response(StatusCode::OK, rev, text))
}
