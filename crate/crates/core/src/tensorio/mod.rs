//! On-disk formats and the in-memory tensors the rest of the crate consumes.
//!
//! * ASTD v1 attention dumps ([`astd`])
//! * BODY-25 keypoint JSON ([`keypoints`])
//! * PNG images and PNG/PGM masks ([`image`])

pub mod astd;
pub mod image;
pub mod keypoints;

pub use self::astd::{
    decode_attention_stack, decode_self_attention_stack, encode_attention_stack,
    encode_self_attention_stack, read_attention_stack, read_self_attention_stack,
    write_attention_stack, write_self_attention_stack, AttentionStack, SelfAttentionStack,
};
pub use self::image::{read_mask_png, read_png, write_mask_pgm, write_mask_png, write_png, ImageBuffer};
pub use self::keypoints::{read_keypoints, write_keypoints, Keypoint, KeypointSet};
