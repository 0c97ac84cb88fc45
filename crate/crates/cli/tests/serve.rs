mod common;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use impactfit_cli::server::{router, AutoTimeResponse, PairPlacement, PredictResponse, REVISION_HEADER};
use impactfit_core::composer::{export_keyframes, predict_secondary};
use impactfit_core::io::{from_json, to_json, KeyframeFile, SceneFile};
use impactfit_core::Vec3;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    revision: u64,
    text: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap()
    }
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let revision = res.headers()[REVISION_HEADER].to_str().unwrap().parse().unwrap();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    Reply { status, revision, text: String::from_utf8(bytes.to_vec()).unwrap() }
}

fn scene_file(revision: u64) -> SceneFile {
    SceneFile { revision, ..SceneFile::new(common::crossing_scene(12)) }
}

#[tokio::test]
async fn get_scene_is_byte_equal_to_the_loaded_file() {
    let file = scene_file(5);
    let text = to_json(&file).unwrap();
    let app = router(from_json(&text).unwrap());
    let r = call(&app, Method::GET, "/scene", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.revision, 5);
    assert_eq!(r.text, text);
}

#[tokio::test]
async fn patch_translation_changes_only_that_field() {
    let app = router(scene_file(0));
    let before: SceneFile = from_json(&call(&app, Method::GET, "/scene", None).await.text).unwrap();
    let r = call(&app, Method::PATCH, "/pairs/1", Some(json!({"base_revision": 0, "translation": [1.0, 0.0, -2.0]}))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.revision, 1);
    let placed: PairPlacement = serde_json::from_str(&r.text).unwrap();
    assert_eq!(placed.revision, 1);
    assert_eq!(placed.translation, Vec3::new(1.0, 0.0, -2.0));

    let g = call(&app, Method::GET, "/scene", None).await;
    let after: SceneFile = from_json(&g.text).unwrap();
    assert_eq!(after.revision, 1);
    let mut expected = before.clone();
    expected.revision = 1;
    expected.scene.pairs[1].translation = Vec3::new(1.0, 0.0, -2.0);
    assert_eq!(after, expected);
}

#[tokio::test]
async fn stale_and_invalid_writes_are_refused() {
    let app = router(scene_file(3));
    let r = call(&app, Method::PATCH, "/pairs/0", Some(json!({"base_revision": 2, "time_offset": 4.0}))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!((r.revision, r.json()["revision"].as_u64()), (3, Some(3)));
    assert_eq!(r.json()["error"], "stale-revision");

    let tilt = json!({"base_revision": 3, "rotation": {"axis": [1.0, 0.0, 0.0], "angle": 0.2}});
    let r = call(&app, Method::PATCH, "/pairs/0", Some(tilt)).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "invalid-transform");

    let physics = json!({"base_revision": 3, "mass_ratio": 2.0});
    assert_eq!(call(&app, Method::PATCH, "/pairs/0", Some(physics)).await.status, StatusCode::BAD_REQUEST);
    let no_base = json!({"time_offset": 1.0});
    assert_eq!(call(&app, Method::PATCH, "/pairs/0", Some(no_base)).await.status, StatusCode::BAD_REQUEST);
    let bad_mass = json!({"base_revision": 3, "reference_mass": -1.0});
    assert_eq!(call(&app, Method::PATCH, "/pairs/0", Some(bad_mass)).await.status, StatusCode::BAD_REQUEST);
    let missing = json!({"base_revision": 3, "time_offset": 1.0});
    assert_eq!(call(&app, Method::PATCH, "/pairs/7", Some(missing)).await.status, StatusCode::NOT_FOUND);

    // None of the refused writes advanced the revision or touched the scene.
    let g = call(&app, Method::GET, "/scene", None).await;
    assert_eq!(g.revision, 3);
    assert_eq!(from_json::<SceneFile>(&g.text).unwrap(), scene_file(3));

    // A gravity-axis rotation given as an axis is accepted.
    let turn = json!({"base_revision": 3, "rotation": {"axis": [0.0, -1.0, 0.0], "angle": 0.2}});
    let r = call(&app, Method::PATCH, "/pairs/0", Some(turn)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.json()["rotation_about_gravity"], -0.2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_patches_on_one_revision() {
    for round in 0..8 {
        let app = router(scene_file(0));
        let send = |x: f64| {
            let app = app.clone();
            tokio::spawn(async move {
                call(&app, Method::PATCH, "/pairs/0", Some(json!({"base_revision": 0, "translation": [x, 0.0, 0.0]}))).await
            })
        };
        let (a, b) = (send(1.0), send(2.0));
        let (a, b) = (a.await.unwrap(), b.await.unwrap());
        let mut codes = [a.status, b.status];
        codes.sort();
        assert_eq!(codes, [StatusCode::OK, StatusCode::CONFLICT], "round {round}");
        let winner = if a.status == StatusCode::OK { 1.0 } else { 2.0 };
        let g: SceneFile = from_json(&call(&app, Method::GET, "/scene", None).await.text).unwrap();
        assert_eq!(g.revision, 1);
        assert_eq!(g.scene.pairs[0].translation.x, winner);
    }
}

#[tokio::test]
async fn predict_then_keyframes() {
    let file = scene_file(0);
    let app = router(file.clone());
    let r = call(&app, Method::POST, "/predict", Some(json!({"base_revision": 0}))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    let p: PredictResponse = serde_json::from_str(&r.text).unwrap();
    assert_eq!((p.revision, r.revision), (1, 1));

    let expected = predict_secondary(&file.scene).unwrap();
    assert!(!expected.predicted_events.is_empty());
    assert_eq!(p.events, expected.predicted_events);
    assert_eq!(p.keyframes, KeyframeFile::new(export_keyframes(&expected, 60.0).unwrap(), 1));

    let k = call(&app, Method::GET, "/keyframes", None).await;
    assert_eq!(k.status, StatusCode::OK);
    assert_eq!(from_json::<KeyframeFile>(&k.text).unwrap(), p.keyframes);
    let k30 = call(&app, Method::GET, "/keyframes?fps=30", None).await;
    let doc: KeyframeFile = from_json(&k30.text).unwrap();
    assert_eq!(doc.keyframes.fps, 30.0);
    assert_eq!(call(&app, Method::GET, "/keyframes?fps=abc", None).await.status, StatusCode::BAD_REQUEST);

    // The stored scene carries the prediction; a stale predict is refused.
    let g: SceneFile = from_json(&call(&app, Method::GET, "/scene", None).await.text).unwrap();
    assert_eq!(g.scene.predicted_events, expected.predicted_events);
    let r = call(&app, Method::POST, "/predict", Some(json!({"base_revision": 0}))).await;
    assert_eq!(r.status, StatusCode::CONFLICT);

    // An edit drops the prediction.
    let r = call(&app, Method::PATCH, "/pairs/1", Some(json!({"base_revision": 1, "time_offset": 30.0}))).await;
    assert_eq!(r.status, StatusCode::OK);
    let g: SceneFile = from_json(&call(&app, Method::GET, "/scene", None).await.text).unwrap();
    assert!(g.scene.predicted_events.is_empty());
    assert_eq!(g.revision, 2);
}

#[tokio::test]
async fn predict_with_an_empty_body() {
    let app = router(scene_file(4));
    let r = call(&app, Method::POST, "/predict", None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.revision, 5);
}

#[tokio::test]
async fn auto_time_reports_and_applies() {
    let early = common::placed(6, Vec3::zero(), 0.0, 0.0);
    let late0 = common::placed(7, Vec3::zero(), 0.4, 0.0);
    let shift = early.tracks()[0].position(65.0) - late0.tracks()[1].position(25.0);
    let late = impactfit_core::composer::place_pair(
        late0.record.clone(),
        shift,
        impactfit_core::composer::AxisAngle::about_gravity(0.4),
        0.0,
        1.0,
    )
    .unwrap();
    let oracle = impactfit_core::composer::auto_time(&early, 0, &late, 1).unwrap();
    let scene = impactfit_core::composer::SceneComposition::new(vec![early, late]).unwrap();
    let app = router(SceneFile::new(scene));

    let req = json!({"early": {"pair": 0, "body": 0}, "late": {"pair": 1, "body": 1}});
    let r = call(&app, Method::POST, "/auto-time", Some(req.clone())).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    let t: AutoTimeResponse = serde_json::from_str(&r.text).unwrap();
    assert_eq!(t.timing, oracle);
    assert!(!t.applied);
    assert_eq!((t.revision, t.time_offset), (0, 0.0));

    let mut apply = req.clone();
    apply["apply"] = json!(true);
    assert_eq!(call(&app, Method::POST, "/auto-time", Some(apply.clone())).await.status, StatusCode::BAD_REQUEST);
    apply["base_revision"] = json!(0);
    let r = call(&app, Method::POST, "/auto-time", Some(apply.clone())).await;
    let t: AutoTimeResponse = serde_json::from_str(&r.text).unwrap();
    assert!(t.applied);
    assert_eq!((t.revision, t.time_offset), (1, oracle.shift));
    assert_eq!(call(&app, Method::POST, "/auto-time", Some(apply)).await.status, StatusCode::CONFLICT);

    let bad = json!({"early": {"pair": 0, "body": 0}, "late": {"pair": 9, "body": 0}});
    assert_eq!(call(&app, Method::POST, "/auto-time", Some(bad)).await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn empty_scene_keyframes_need_a_rate() {
    let app = router(SceneFile::new(impactfit_core::composer::SceneComposition::new(Vec::new()).unwrap()));
    assert_eq!(call(&app, Method::GET, "/keyframes", None).await.status, StatusCode::BAD_REQUEST);
    let r = call(&app, Method::GET, "/keyframes?fps=24", None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert!(from_json::<KeyframeFile>(&r.text).unwrap().keyframes.tracks.is_empty());
}
