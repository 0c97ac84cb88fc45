mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use impactfit_core::composer::{auto_time, place_pair, AxisAngle};
use impactfit_core::io::{read, write, AnnotationFile, KeyframeFile, SceneFile, SolutionFile};
use impactfit_core::residuals::{BodyObservations, ObservationSet};
use impactfit_core::simulator::{sample_observations, simulate, two_box_scene, TwoBoxOptions};
use impactfit_core::Vec3;
use tempfile::TempDir;

fn impactfit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impactfit")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn line<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}\t"))).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    for p in [&a, &b] {
        let o = impactfit(&["simulate", "--preset", "two-box", "--seed", "7", "--noise", "0.05", "--output", s(p)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn reconstruct_synthetic_annotation() {
    let dir = TempDir::new().unwrap();
    let (ann, truth, sol) = (path(&dir, "ann.json"), path(&dir, "truth.json"), path(&dir, "sol.json"));
    let o = impactfit(&["simulate", "--seed", "3", "--interval", "5", "--output", s(&ann), "--truth", s(&truth)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m_true: f64 = line(&stdout(&o), "m_ba").parse().unwrap();
    let c_true: f64 = line(&stdout(&o), "c").parse().unwrap();

    let o = impactfit(&["reconstruct", "--input", s(&ann), "--output", s(&sol), "--seed", "0"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    let m: f64 = line(&out, "m_ba").parse().unwrap();
    let c: f64 = line(&out, "c").parse().unwrap();
    assert!((m - m_true).abs() / m_true < 0.05 && (c - c_true).abs() < 0.05, "{out}");
    assert_eq!(line(&out, "flags"), "none");
    let file: SolutionFile = read(&sol).unwrap();
    assert_eq!(file.solution.mass_ratio, Some(m));
    line(&out, "t_c").parse::<f64>().unwrap();
}

#[test]
fn reconstruct_output_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let ann = path(&dir, "ann.json");
    assert_eq!(code(&impactfit(&["simulate", "--seed", "4", "--noise", "0.05", "--output", s(&ann)])), 0);
    let mut files = Vec::new();
    for name in ["s1.json", "s2.json"] {
        let p = path(&dir, name);
        impactfit(&["reconstruct", "--input", s(&ann), "--output", s(&p), "--seed", "9"]);
        files.push(std::fs::read(&p).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn one_observation_per_side_is_insufficient_data() {
    let dir = TempDir::new().unwrap();
    let gt = simulate(&two_box_scene(5, &TwoBoxOptions::default()).unwrap()).unwrap();
    let full = sample_observations(&gt, 5.0, 10.0).unwrap();
    let bodies = full
        .bodies
        .iter()
        .map(|b| {
            let first = *b.observations.first().unwrap();
            let last = *b.observations.last().unwrap();
            BodyObservations { observations: vec![first, last], ..b.clone() }
        })
        .collect();
    let ann = path(&dir, "ann.json");
    write(&ann, &AnnotationFile::new(&ObservationSet { fps: full.fps, bodies })).unwrap();
    let o = impactfit(&["reconstruct", "--input", s(&ann), "--output", s(&path(&dir, "sol.json"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("insufficient-data"), "{}", stderr(&o));
    assert!(!path(&dir, "sol.json").exists());
}

#[test]
fn mass_at_bound_exits_two() {
    let dir = TempDir::new().unwrap();
    let opts = TwoBoxOptions { mass_ratio: (40.0, 40.0), ..TwoBoxOptions::default() };
    let gt = simulate(&two_box_scene(1, &opts).unwrap()).unwrap();
    let ann = path(&dir, "ann.json");
    write(&ann, &AnnotationFile::new(&sample_observations(&gt, 5.0, 10.0).unwrap())).unwrap();
    let sol = path(&dir, "sol.json");
    let o = impactfit(&["reconstruct", "--input", s(&ann), "--output", s(&sol)]);
    assert_eq!(code(&o), 2, "{}{}", stdout(&o), stderr(&o));
    assert!(line(&stdout(&o), "flags").contains("mass_at_bound"));
    assert!(read::<SolutionFile>(&sol).unwrap().solution.flags.mass_at_bound);
}

#[test]
fn schema_errors_name_the_path() {
    let dir = TempDir::new().unwrap();
    let ann = path(&dir, "ann.json");
    std::fs::write(&ann, r#"{"version": 1, "fps": 60.0, "bodies": [{"name": "a", "dims": [1, 1]}]}"#).unwrap();
    let o = impactfit(&["reconstruct", "--input", s(&ann), "--output", s(&path(&dir, "sol.json"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("annotation:bodies[0].dims"), "{}", stderr(&o));
    let o = impactfit(&["reconstruct", "--input", s(&path(&dir, "missing.json")), "--output", "x"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn single_body_drop() {
    let dir = TempDir::new().unwrap();
    let (ann, sol) = (path(&dir, "drop.json"), path(&dir, "sol.json"));
    let o = impactfit(&["simulate", "--preset", "drop", "--restitution", "0.3", "--interval", "3", "--output", s(&ann)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = impactfit(&[
        "reconstruct",
        "--input",
        s(&ann),
        "--output",
        s(&sol),
        "--single-body",
        "--plane-point",
        "0,0,0",
        "--plane-normal",
        "0,1,0",
    ]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert_eq!(line(&stdout(&o), "m_ba"), "-");
    let c: f64 = line(&stdout(&o), "c").parse().unwrap();
    assert!((c - 0.3).abs() < 0.02, "{c}");
}

#[test]
fn evaluate_prints_a_deterministic_table() {
    let args = ["evaluate", "--trials", "2", "--interval-range", "9..10", "--noise", "0,0.05,0.1", "--seed", "3"];
    let a = impactfit(&args);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    let table = stdout(&a);
    let rows: Vec<&str> = table.lines().collect();
    assert!(rows[0].starts_with("interval\tnoise\truns"));
    assert_eq!(rows.len(), 1 + 2 * 3);
    for noise in ["0.05", "0.1"] {
        assert!(rows.iter().any(|r| r.split('\t').nth(1) == Some(noise)), "{table}");
    }
    let zero = rows[1].split('\t').collect::<Vec<_>>();
    assert_eq!(zero[..3], ["9", "0", "2"]);
    assert!(zero[4].parse::<f64>().unwrap() < 1e-3, "{table}");
    assert_eq!(stdout(&impactfit(&args)), table);
}

#[test]
fn compose_new_place_predict_keyframes() {
    let dir = TempDir::new().unwrap();
    let scene = common::crossing_scene(12);
    let mut sols = Vec::new();
    for (i, p) in scene.pairs.iter().enumerate() {
        let f = path(&dir, &format!("sol{i}.json"));
        write(&f, &SolutionFile::new(p.placed_record())).unwrap();
        sols.push(f);
    }
    let sc = path(&dir, "scene.json");
    let o = impactfit(&["compose", "new", "--solution", s(&sols[0]), "--output", s(&sc)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let one: SceneFile = read(&sc).unwrap();
    assert_eq!(one.scene.pairs.len(), 1);
    assert_eq!(one.revision, 0);

    let o = impactfit(&[
        "compose", "new", "--solution", s(&sols[0]), "--solution", s(&sols[1]), "--reference-mass", "1,2", "--output", s(&sc),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let moved = path(&dir, "moved.json");
    let o = impactfit(&[
        "compose", "place", "--scene", s(&sc), "--pair", "1", "--translation", "-0.5,0,0.25", "--output", s(&moved),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: SceneFile = read(&moved).unwrap();
    assert_eq!(m.revision, 1);
    assert_eq!(m.scene.pairs[1].translation, Vec3::new(-0.5, 0.0, 0.25));

    let pred = path(&dir, "pred.json");
    let o = impactfit(&["compose", "predict", "--scene", s(&sc), "--output", s(&pred)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let p: SceneFile = read(&pred).unwrap();
    assert!(!p.scene.predicted_events.is_empty());
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("event")).count(), p.scene.predicted_events.len());

    let (k1, k2) = (path(&dir, "k1.json"), path(&dir, "k2.json"));
    for k in [&k1, &k2] {
        let o = impactfit(&["compose", "keyframes", "--scene", s(&pred), "--fps", "30", "--output", s(k)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&k1).unwrap(), std::fs::read(&k2).unwrap());
    let kf: KeyframeFile = read(&k1).unwrap();
    assert_eq!(kf.keyframes.tracks.len(), 4);
    assert_eq!(kf.revision, p.revision);
}

#[test]
fn compose_auto_time_matches_the_composer() {
    let dir = TempDir::new().unwrap();
    let early = common::placed(6, Vec3::zero(), 0.0, 0.0);
    let late0 = common::placed(7, Vec3::zero(), 0.4, 0.0);
    let meet = early.tracks()[0].position(65.0);
    let there = late0.tracks()[1].position(25.0);
    // Late body 1 reaches early body 0 after a 40-frame shift.
    let late = place_pair(late0.record.clone(), meet - there, AxisAngle::about_gravity(0.4), 0.0, 1.0).unwrap();
    let oracle = auto_time(&early, 0, &late, 1).unwrap();
    assert!((oracle.shift - 40.0).abs() <= 0.25, "{oracle:?}");

    let (a, b, sc) = (path(&dir, "a.json"), path(&dir, "b.json"), path(&dir, "scene.json"));
    write(&a, &SolutionFile::new(early.placed_record())).unwrap();
    write(&b, &SolutionFile::new(late.placed_record())).unwrap();
    let o = impactfit(&["compose", "new", "--solution", s(&a), "--solution", s(&b), "--auto-time", "--output", s(&sc)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let scene: SceneFile = read(&sc).unwrap();
    assert_eq!(scene.scene.pairs[1].time_offset, oracle.shift);
    assert!(stdout(&o).contains("body 1 after pair 0 body 0"), "{}", stdout(&o));
}

#[test]
fn compose_rejects_mismatched_reference_masses() {
    let dir = TempDir::new().unwrap();
    let a = path(&dir, "a.json");
    write(&a, &SolutionFile::new(common::truth_record(2))).unwrap();
    let o = impactfit(&["compose", "new", "--solution", s(&a), "--reference-mass", "1,2", "--output", s(&path(&dir, "x.json"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("reference masses"));
}
