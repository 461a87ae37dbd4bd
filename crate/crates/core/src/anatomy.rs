//! Body vocabulary: BODY-25 keypoint names, the skeleton edge list, token
//! categories and the head-to-toe ordering used to resolve coverage ranges.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// BODY-25 keypoint names in estimator index order.
pub const BODY25: [&str; 25] = [
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow", "LWrist", "MidHip",
    "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle", "REye", "LEye", "REar", "LEar",
    "LBigToe", "LSmallToe", "LHeel", "RBigToe", "RSmallToe", "RHeel",
];

/// BODY-25 limb pairs.
pub const SKELETON: [(&str, &str); 24] = [
    ("Neck", "MidHip"),
    ("Neck", "RShoulder"),
    ("Neck", "LShoulder"),
    ("RShoulder", "RElbow"),
    ("RElbow", "RWrist"),
    ("LShoulder", "LElbow"),
    ("LElbow", "LWrist"),
    ("MidHip", "RHip"),
    ("RHip", "RKnee"),
    ("RKnee", "RAnkle"),
    ("MidHip", "LHip"),
    ("LHip", "LKnee"),
    ("LKnee", "LAnkle"),
    ("Neck", "Nose"),
    ("Nose", "REye"),
    ("REye", "REar"),
    ("Nose", "LEye"),
    ("LEye", "LEar"),
    ("LAnkle", "LBigToe"),
    ("LBigToe", "LSmallToe"),
    ("LAnkle", "LHeel"),
    ("RAnkle", "RBigToe"),
    ("RBigToe", "RSmallToe"),
    ("RAnkle", "RHeel"),
];

pub fn is_body25(name: &str) -> bool {
    BODY25.contains(&name)
}

/// Keypoints joined to `name` by a skeleton edge.
pub fn skeleton_neighbors(name: &str) -> impl Iterator<Item = &'static str> + '_ {
    SKELETON.iter().filter_map(move |&(a, b)| {
        if a == name {
            Some(b)
        } else if b == name {
            Some(a)
        } else {
            None
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Star,
    Fleshy,
    Clothes,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenKind::Star => "star",
            TokenKind::Fleshy => "fleshy",
            TokenKind::Clothes => "clothes",
        })
    }
}

impl FromStr for TokenKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "star" => Ok(TokenKind::Star),
            "fleshy" => Ok(TokenKind::Fleshy),
            "clothes" => Ok(TokenKind::Clothes),
            other => Err(Error::Format(format!("unknown token kind {other:?}"))),
        }
    }
}

pub const STAR_TOKENS: [&str; 7] = ["Neck", "Shoulder", "Elbow", "Wrist", "Hip", "Knee", "Ankle"];

pub const FLESHY_TOKENS: [&str; 10] = [
    "Forehead", "Chest", "Waist", "Belly", "Arms", "Hip", "Hand", "Thigh", "Shank", "Torso",
];

/// Tokens that belong to the arms. They only enter a coverage set when the
/// garment includes arms, whatever the length anchor.
pub const ARM_TOKENS: [&str; 4] = ["Elbow", "Wrist", "Arms", "Hand"];

pub fn is_star_token(name: &str) -> bool {
    STAR_TOKENS.contains(&name)
}

pub fn is_fleshy_token(name: &str) -> bool {
    FLESHY_TOKENS.contains(&name)
}

/// Head-to-toe rank. Wrist and Hip share a rank; Arms and Torso span several
/// levels and have no rank.
pub fn anatomical_rank(name: &str) -> Option<u8> {
    Some(match name {
        "Forehead" => 0,
        "Neck" => 1,
        "Shoulder" => 2,
        "Chest" => 3,
        "Elbow" => 4,
        "Waist" => 5,
        "Belly" => 6,
        "Wrist" | "Hip" => 7,
        "Hand" => 8,
        "Thigh" => 9,
        "Knee" => 10,
        "Shank" => 11,
        "Ankle" => 12,
        _ => return None,
    })
}

/// The keypoints a star token stands for, right side first.
pub fn star_keypoints(token: &str) -> &'static [&'static str] {
    match token {
        "Neck" => &["Neck"],
        "Shoulder" => &["RShoulder", "LShoulder"],
        "Elbow" => &["RElbow", "LElbow"],
        "Wrist" => &["RWrist", "LWrist"],
        "Hip" => &["RHip", "LHip"],
        "Knee" => &["RKnee", "LKnee"],
        "Ankle" => &["RAnkle", "LAnkle"],
        _ => &[],
    }
}
