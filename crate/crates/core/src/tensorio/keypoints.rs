//! Keypoint JSON:
//!
//! ```json
//! { "image_width": 512, "image_height": 768,
//!   "keypoints": { "Neck": [256.0, 120.0, 0.98], "RHip": [230.0, 400.0, 0.9] } }
//! ```
//!
//! Names follow BODY-25. Keypoints the estimator did not find are left out of
//! the map rather than written as zeros.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anatomy::is_body25;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSet {
    image_width: u32,
    image_height: u32,
    entries: BTreeMap<String, Keypoint>,
}

impl KeypointSet {
    pub fn new(image_width: u32, image_height: u32) -> Self {
        Self {
            image_width,
            image_height,
            entries: BTreeMap::new(),
        }
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    /// Adds or replaces a keypoint after checking name, bounds and confidence.
    pub fn insert(&mut self, name: &str, kp: Keypoint) -> Result<()> {
        if !is_body25(name) {
            return Err(Error::Value(format!("{name:?} is not a BODY-25 keypoint name")));
        }
        if !(kp.x.is_finite() && kp.y.is_finite())
            || kp.x < 0.0
            || kp.y < 0.0
            || kp.x >= f64::from(self.image_width)
            || kp.y >= f64::from(self.image_height)
        {
            return Err(Error::Value(format!(
                "{name} at ({}, {}) lies outside the {}x{} image",
                kp.x, kp.y, self.image_width, self.image_height
            )));
        }
        if !(0.0..=1.0).contains(&kp.confidence) {
            return Err(Error::Value(format!("{name} confidence {} outside [0, 1]", kp.confidence)));
        }
        self.entries.insert(name.to_string(), kp);
        Ok(())
    }

    pub fn remove(&mut self, name: &str) -> Option<Keypoint> {
        self.entries.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Keypoint> {
        self.entries.get(name)
    }

    /// The keypoint when present with at least `floor` confidence.
    pub fn confident(&self, name: &str, floor: f64) -> Option<&Keypoint> {
        self.entries.get(name).filter(|k| k.confidence >= floor)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Keypoint)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct KeypointFile {
    image_width: Option<u32>,
    image_height: Option<u32>,
    #[serde(default)]
    keypoints: BTreeMap<String, [f64; 3]>,
}

pub fn parse_keypoints(text: &str) -> Result<KeypointSet> {
    let file: KeypointFile =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("bad keypoint JSON: {e}")))?;
    let (Some(w), Some(h)) = (file.image_width, file.image_height) else {
        return Err(Error::Format("keypoint file must give image_width and image_height".into()));
    };
    let mut set = KeypointSet::new(w, h);
    for (name, [x, y, c]) in file.keypoints {
        set.insert(&name, Keypoint::new(x, y, c))?;
    }
    Ok(set)
}

pub fn keypoints_to_json(set: &KeypointSet) -> Result<String> {
    let file = KeypointFile {
        image_width: Some(set.image_width),
        image_height: Some(set.image_height),
        keypoints: set
            .entries
            .iter()
            .map(|(k, v)| (k.clone(), [v.x, v.y, v.confidence]))
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn read_keypoints(path: impl AsRef<Path>) -> Result<KeypointSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoints(&text)
}

pub fn write_keypoints(set: &KeypointSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, keypoints_to_json(set)?).map_err(|e| Error::io(path, e))
}
