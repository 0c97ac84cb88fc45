//! Versioned JSON documents: annotations, solutions, composed scenes,
//! keyframes and simulator ground truth.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::composer::{KeyframeDocument, SceneComposition};
use crate::error::{Error, Result};
use crate::residuals::{BodyObservations, ObservationSet};
use crate::simulator::{GroundTruth, SimScene};
use crate::solver::SolutionRecord;

pub const FORMAT_VERSION: u32 = 1;

/// A file format with a mandatory version field.
pub trait Document: Serialize + DeserializeOwned {
    const KIND: &'static str;

    fn version(&self) -> u32;

    /// Semantic checks beyond the shape enforced by deserialization.
    fn check(&self) -> Result<()> {
        Ok(())
    }
}

/// Sparse pose annotations of one collision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub version: u32,
    pub fps: f64,
    pub bodies: Vec<BodyObservations>,
}

impl AnnotationFile {
    pub fn new(obs: &ObservationSet) -> Self {
        Self { version: FORMAT_VERSION, fps: obs.fps, bodies: obs.bodies.clone() }
    }

    pub fn observations(&self) -> ObservationSet {
        ObservationSet { fps: self.fps, bodies: self.bodies.clone() }
    }
}

impl Document for AnnotationFile {
    const KIND: &'static str = "annotation";

    fn version(&self) -> u32 {
        self.version
    }

    fn check(&self) -> Result<()> {
        self.observations().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub version: u32,
    pub solution: SolutionRecord,
}

impl SolutionFile {
    pub fn new(solution: SolutionRecord) -> Self {
        Self { version: FORMAT_VERSION, solution }
    }
}

impl Document for SolutionFile {
    const KIND: &'static str = "solution";

    fn version(&self) -> u32 {
        self.version
    }

    fn check(&self) -> Result<()> {
        self.solution.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub version: u32,
    /// Incremented by every accepted edit.
    pub revision: u64,
    pub scene: SceneComposition,
}

impl SceneFile {
    pub fn new(scene: SceneComposition) -> Self {
        Self { version: FORMAT_VERSION, revision: 0, scene }
    }
}

impl Document for SceneFile {
    const KIND: &'static str = "scene";

    fn version(&self) -> u32 {
        self.version
    }

    fn check(&self) -> Result<()> {
        self.scene.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyframeFile {
    pub version: u32,
    /// Revision of the scene the keyframes were exported from.
    pub revision: u64,
    pub keyframes: KeyframeDocument,
}

impl KeyframeFile {
    pub fn new(keyframes: KeyframeDocument, revision: u64) -> Self {
        Self { version: FORMAT_VERSION, revision, keyframes }
    }
}

impl Document for KeyframeFile {
    const KIND: &'static str = "keyframes";

    fn version(&self) -> u32 {
        self.version
    }
}

/// A simulated scene with its full ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub version: u32,
    pub scene: SimScene,
    pub truth: GroundTruth,
}

impl TruthFile {
    pub fn new(scene: SimScene, truth: GroundTruth) -> Self {
        Self { version: FORMAT_VERSION, scene, truth }
    }
}

impl Document for TruthFile {
    const KIND: &'static str = "truth";

    fn version(&self) -> u32 {
        self.version
    }

    fn check(&self) -> Result<()> {
        self.scene.validate()
    }
}

/// Parses a document, reporting the path of the first offending field.
pub fn from_json<D: Document>(text: &str) -> Result<D> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: D = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema { path: format!("{}:{path}", D::KIND), message: e.inner().to_string() }
    })?;
    if doc.version() != FORMAT_VERSION {
        return Err(Error::Schema {
            path: format!("{}:version", D::KIND),
            message: format!("unsupported version {} (expected {FORMAT_VERSION})", doc.version()),
        });
    }
    doc.check()?;
    Ok(doc)
}

pub fn to_json<D: Document>(doc: &D) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc).map_err(|e| Error::Schema {
        path: D::KIND.into(),
        message: e.to_string(),
    })?;
    s.push('\n');
    Ok(s)
}

pub fn read<D: Document>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    from_json(&text)
}

pub fn write<D: Document>(path: impl AsRef<Path>, doc: &D) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(doc)?).map_err(|e| io_error(path, e))
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}
