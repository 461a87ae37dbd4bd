//! ASTD v1: a self-describing little-endian attention dump.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ASTD"
//! 4       4     u32 LE format version (1)
//! 8       4     u32 LE header length L
//! 12      L     UTF-8 JSON header {T, N, H, W, token_names, token_kinds[, role]}
//! 12+L    4·T·N·H·W  f32 LE payload, row-major over (t, n, i, j)
//! ```
//!
//! Cross-attention stacks carry one name and one kind per token. Self-attention
//! stacks are stored with `role: "self"`, `T = 1` and `N = K` maps; their
//! `token_kinds` list is empty.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anatomy::TokenKind;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"ASTD";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Role {
    #[default]
    Cross,
    #[serde(rename = "self")]
    SelfAttn,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "T")]
    steps: usize,
    #[serde(rename = "N")]
    tokens: usize,
    #[serde(rename = "H")]
    height: usize,
    #[serde(rename = "W")]
    width: usize,
    #[serde(default)]
    token_names: Vec<String>,
    #[serde(default)]
    token_kinds: Vec<TokenKind>,
    #[serde(default)]
    role: Role,
}

/// Per-step, per-token cross-attention maps, `T × N × H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionStack {
    steps: usize,
    tokens: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
    token_names: Vec<String>,
    token_kinds: Vec<TokenKind>,
}

fn check_values(data: &[f32]) -> Result<()> {
    if let Some((k, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(Error::Value(format!("payload value {v} at index {k} is not finite and non-negative")));
    }
    Ok(())
}

impl AttentionStack {
    pub fn new(
        steps: usize,
        height: usize,
        width: usize,
        token_names: Vec<String>,
        token_kinds: Vec<TokenKind>,
        data: Vec<f32>,
    ) -> Result<Self> {
        let tokens = token_names.len();
        if steps == 0 || tokens == 0 || height == 0 || width == 0 {
            return Err(Error::Value(format!(
                "dimensions must be positive (T={steps}, N={tokens}, H={height}, W={width})"
            )));
        }
        if token_kinds.len() != tokens {
            return Err(Error::Value(format!(
                "{} token kinds for {tokens} token names",
                token_kinds.len()
            )));
        }
        for (k, name) in token_names.iter().enumerate() {
            if token_names[..k].contains(name) {
                return Err(Error::Value(format!("duplicate token name {name:?}")));
            }
        }
        let expected = steps * tokens * height * width;
        if data.len() != expected {
            return Err(Error::Corrupt(format!(
                "payload has {} values, dimensions need {expected}",
                data.len()
            )));
        }
        check_values(&data)?;
        Ok(Self {
            steps,
            tokens,
            height,
            width,
            data,
            token_names,
            token_kinds,
        })
    }

    /// Builds a stack from per-step, per-token grids (`maps[t][n]`).
    pub fn from_maps<S: Scalar>(
        token_names: Vec<String>,
        token_kinds: Vec<TokenKind>,
        maps: &[Vec<Grid<S>>],
    ) -> Result<Self> {
        let first = maps
            .first()
            .and_then(|m| m.first())
            .ok_or_else(|| Error::Value("empty map list".into()))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(maps.len() * token_names.len() * h * w);
        for step in maps {
            if step.len() != token_names.len() {
                return Err(Error::Shape(format!(
                    "step holds {} maps for {} tokens",
                    step.len(),
                    token_names.len()
                )));
            }
            for g in step {
                if g.dims() != (h, w) {
                    return Err(Error::Shape("token maps differ in size".into()));
                }
                data.extend(g.as_slice().iter().map(|v| v.as_f32()));
            }
        }
        Self::new(maps.len(), h, w, token_names, token_kinds, data)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn token_names(&self) -> &[String] {
        &self.token_names
    }

    pub fn token_kinds(&self) -> &[TokenKind] {
        &self.token_kinds
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Case-insensitive token lookup.
    pub fn token_index(&self, name: &str) -> Option<usize> {
        self.token_names.iter().position(|n| n.eq_ignore_ascii_case(name))
    }

    pub fn kind_of(&self, name: &str) -> Option<TokenKind> {
        self.token_index(name).map(|k| self.token_kinds[k])
    }

    /// Raw slice for step `t` (0-based) and token `n`.
    pub fn map_slice(&self, t: usize, n: usize) -> &[f32] {
        let plane = self.height * self.width;
        let start = (t * self.tokens + n) * plane;
        &self.data[start..start + plane]
    }

    pub fn map<S: Scalar>(&self, t: usize, n: usize) -> Grid<S> {
        let values = self.map_slice(t, n).iter().map(|v| S::of(f64::from(*v))).collect();
        Grid::from_vec(self.height, self.width, values).expect("plane size matches header")
    }

    /// A copy restricted to the given token indices, in the given order.
    pub fn select_tokens(&self, indices: &[usize]) -> Result<Self> {
        let plane = self.height * self.width;
        let mut data = Vec::with_capacity(self.steps * indices.len() * plane);
        for t in 0..self.steps {
            for &n in indices {
                data.extend_from_slice(self.map_slice(t, n));
            }
        }
        Self::new(
            self.steps,
            self.height,
            self.width,
            indices.iter().map(|&n| self.token_names[n].clone()).collect(),
            indices.iter().map(|&n| self.token_kinds[n]).collect(),
            data,
        )
    }
}

/// Final-step self-attention reduced to `K` region maps, `K × H × W`.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfAttentionStack {
    maps: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl SelfAttentionStack {
    pub fn new(maps: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if maps == 0 || height == 0 || width == 0 {
            return Err(Error::Value(format!(
                "dimensions must be positive (K={maps}, H={height}, W={width})"
            )));
        }
        let expected = maps * height * width;
        if data.len() != expected {
            return Err(Error::Corrupt(format!(
                "payload has {} values, dimensions need {expected}",
                data.len()
            )));
        }
        check_values(&data)?;
        Ok(Self {
            maps,
            height,
            width,
            data,
        })
    }

    pub fn from_maps<S: Scalar>(maps: &[Grid<S>]) -> Result<Self> {
        let (h, w) = maps
            .first()
            .map(|g| g.dims())
            .ok_or_else(|| Error::Value("empty map list".into()))?;
        if maps.iter().any(|g| g.dims() != (h, w)) {
            return Err(Error::Shape("self-attention maps differ in size".into()));
        }
        let data = maps.iter().flat_map(|g| g.as_slice().iter().map(|v| v.as_f32())).collect();
        Self::new(maps.len(), h, w, data)
    }

    pub fn maps(&self) -> usize {
        self.maps
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn map<S: Scalar>(&self, k: usize) -> Grid<S> {
        let plane = self.height * self.width;
        let values = self.data[k * plane..(k + 1) * plane]
            .iter()
            .map(|v| S::of(f64::from(*v)))
            .collect();
        Grid::from_vec(self.height, self.width, values).expect("plane size matches header")
    }
}

fn encode(header: &Header, data: &[f32]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Corrupt(format!("file ends inside the preamble at byte {at}")))
}

fn decode(bytes: &[u8]) -> Result<(Header, Vec<f32>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing ASTD magic".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported ASTD version {version}")));
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_bytes = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| Error::Corrupt("file ends inside the JSON header".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::Format(format!("bad ASTD header: {e}")))?;
    let count = header
        .steps
        .checked_mul(header.tokens)
        .and_then(|v| v.checked_mul(header.height))
        .and_then(|v| v.checked_mul(header.width))
        .ok_or_else(|| Error::Corrupt("header dimensions overflow".into()))?;
    let payload = &bytes[12 + header_len..];
    if payload.len() != 4 * count {
        return Err(Error::Corrupt(format!(
            "payload holds {} bytes, header declares {count} float32 values",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, data))
}

pub fn encode_attention_stack(stack: &AttentionStack) -> Result<Vec<u8>> {
    check_values(&stack.data)?;
    let header = Header {
        steps: stack.steps,
        tokens: stack.tokens,
        height: stack.height,
        width: stack.width,
        token_names: stack.token_names.clone(),
        token_kinds: stack.token_kinds.clone(),
        role: Role::Cross,
    };
    encode(&header, &stack.data)
}

pub fn decode_attention_stack(bytes: &[u8]) -> Result<AttentionStack> {
    let (header, data) = decode(bytes)?;
    if header.role != Role::Cross {
        return Err(Error::Format("expected a cross-attention dump, found a self-attention dump".into()));
    }
    if header.token_names.len() != header.tokens {
        return Err(Error::Corrupt(format!(
            "header lists {} token names for N={}",
            header.token_names.len(),
            header.tokens
        )));
    }
    AttentionStack::new(
        header.steps,
        header.height,
        header.width,
        header.token_names,
        header.token_kinds,
        data,
    )
}

pub fn encode_self_attention_stack(stack: &SelfAttentionStack) -> Result<Vec<u8>> {
    check_values(&stack.data)?;
    let header = Header {
        steps: 1,
        tokens: stack.maps,
        height: stack.height,
        width: stack.width,
        token_names: (0..stack.maps).map(|k| format!("S{k}")).collect(),
        token_kinds: Vec::new(),
        role: Role::SelfAttn,
    };
    encode(&header, &stack.data)
}

pub fn decode_self_attention_stack(bytes: &[u8]) -> Result<SelfAttentionStack> {
    let (header, data) = decode(bytes)?;
    if header.role != Role::SelfAttn || header.steps != 1 {
        return Err(Error::Format("expected a self-attention dump (role \"self\", T = 1)".into()));
    }
    SelfAttentionStack::new(header.tokens, header.height, header.width, data)
}

pub fn read_attention_stack(path: impl AsRef<Path>) -> Result<AttentionStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_attention_stack(&bytes)
}

pub fn write_attention_stack(stack: &AttentionStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_attention_stack(stack)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_self_attention_stack(path: impl AsRef<Path>) -> Result<SelfAttentionStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_self_attention_stack(&bytes)
}

pub fn write_self_attention_stack(stack: &SelfAttentionStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_self_attention_stack(stack)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        ["Neck", "Shoulder", "Chest", "Waist", "Belly", "blouse"]
            .iter()
            .take(n)
            .map(|s| s.to_string())
            .collect()
    }

    fn kinds(n: usize) -> Vec<TokenKind> {
        [
            TokenKind::Star,
            TokenKind::Star,
            TokenKind::Fleshy,
            TokenKind::Fleshy,
            TokenKind::Fleshy,
            TokenKind::Clothes,
        ][..n]
            .to_vec()
    }

    fn sample(steps: usize, n: usize) -> AttentionStack {
        let len = steps * n * 16 * 16;
        let data = (0..len).map(|k| (k % 97) as f32 / 96.0).collect();
        AttentionStack::new(steps, 16, 16, names(n), kinds(n), data).unwrap()
    }

    #[test]
    fn full_size_stack_round_trips() {
        let stack = sample(100, 6);
        assert_eq!(stack.data().len(), 153_600);
        let bytes = encode_attention_stack(&stack).unwrap();
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(bytes.len() - 12 - header_len, 614_400);
        let back = decode_attention_stack(&bytes).unwrap();
        assert_eq!(back, stack);
        assert_eq!(back.kind_of("Neck"), Some(TokenKind::Star));
        assert_eq!(back.token_index("blouse"), Some(5));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let bytes = encode_attention_stack(&sample(100, 6)).unwrap();
        let err = decode_attention_stack(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(matches!(err, Error::Corrupt(_)), "{err}");
    }

    #[test]
    fn bad_magic_and_version_are_format_errors() {
        let mut bytes = encode_attention_stack(&sample(1, 1)).unwrap();
        bytes[4] = 2;
        assert!(matches!(decode_attention_stack(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(decode_attention_stack(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_attention_stack(b"AS"), Err(Error::Format(_))));
    }

    #[test]
    fn non_finite_payload_is_value_error() {
        let stack = sample(1, 1);
        let mut bytes = encode_attention_stack(&stack).unwrap();
        let last = bytes.len() - 4;
        bytes[last..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_attention_stack(&bytes), Err(Error::Value(_))));
    }

    #[test]
    fn invalid_stacks_are_rejected() {
        let mut data = vec![0.5f32; 256];
        data[3] = f32::NAN;
        assert!(matches!(
            AttentionStack::new(1, 16, 16, names(1), kinds(1), data),
            Err(Error::Value(_))
        ));
        assert!(AttentionStack::new(1, 16, 16, vec![], vec![], vec![]).is_err());
        assert!(AttentionStack::new(0, 16, 16, names(1), kinds(1), vec![]).is_err());
        let dup = vec!["Neck".to_string(), "Neck".to_string()];
        assert!(AttentionStack::new(1, 1, 1, dup, kinds(2), vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn golden_bytes_are_little_endian() {
        let stack =
            AttentionStack::new(1, 1, 2, vec!["Neck".into()], vec![TokenKind::Star], vec![1.0, 0.5]).unwrap();
        let bytes = encode_attention_stack(&stack).unwrap();
        let header = br#"{"T":1,"N":1,"H":1,"W":2,"token_names":["Neck"],"token_kinds":["star"],"role":"cross"}"#;
        let mut golden = Vec::new();
        golden.extend_from_slice(b"ASTD");
        golden.extend_from_slice(&[1, 0, 0, 0]);
        golden.extend_from_slice(&(header.len() as u32).to_le_bytes());
        golden.extend_from_slice(header);
        golden.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0x3f]);
        assert_eq!(bytes, golden);
        assert_eq!(decode_attention_stack(&golden).unwrap(), stack);
    }

    #[test]
    fn self_stack_round_trips_and_is_not_a_cross_stack() {
        let data = (0..8 * 32 * 32).map(|k| (k % 13) as f32 / 12.0).collect();
        let s = SelfAttentionStack::new(8, 32, 32, data).unwrap();
        let bytes = encode_self_attention_stack(&s).unwrap();
        assert_eq!(decode_self_attention_stack(&bytes).unwrap(), s);
        assert!(matches!(decode_attention_stack(&bytes), Err(Error::Format(_))));
    }
}
