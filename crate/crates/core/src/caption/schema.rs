use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Structural label of a section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SectionRole {
    Intro,
    #[default]
    Verse,
    Chorus,
    Bridge,
    Outro,
}

impl SectionRole {
    pub const ALL: [SectionRole; 5] = [
        SectionRole::Intro,
        SectionRole::Verse,
        SectionRole::Chorus,
        SectionRole::Bridge,
        SectionRole::Outro,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionRole::Intro => "intro",
            SectionRole::Verse => "verse",
            SectionRole::Chorus => "chorus",
            SectionRole::Bridge => "bridge",
            SectionRole::Outro => "outro",
        }
    }
}

impl fmt::Display for SectionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown section role {0:?}")]
pub struct UnknownRole(pub String);

impl FromStr for SectionRole {
    type Err = UnknownRole;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        SectionRole::ALL
            .into_iter()
            .find(|r| r.as_str() == t)
            .ok_or_else(|| UnknownRole(s.to_string()))
    }
}

/// Accepted tempo range in BPM.
pub const BPM_MIN: f64 = 40.0;
pub const BPM_MAX: f64 = 240.0;

/// Structured description of one captured frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCaption {
    pub description: String,
    pub objects: Vec<String>,
    pub mood: Vec<String>,
    pub section_role: SectionRole,
    pub genre: String,
    pub bpm: Option<f64>,
}

impl SceneCaption {
    /// Checks the caption invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.description.trim().is_empty() && self.objects.iter().all(|o| o.trim().is_empty()) {
            return Err("caption has neither a description nor objects".into());
        }
        if let Some(bpm) = self.bpm {
            if !(BPM_MIN..=BPM_MAX).contains(&bpm) {
                return Err(format!("bpm {bpm} outside [{BPM_MIN}, {BPM_MAX}]"));
            }
        }
        Ok(())
    }
}

/// One still frame from the camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureFrame {
    pub image_bytes: Vec<u8>,
    pub width: u32,
    pub height: u32,
    /// Capture time on the session clock, microseconds.
    pub captured_at_us: u64,
    sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("not a JPEG image")]
    NotJpeg,
    #[error("JPEG has no frame header with positive dimensions")]
    NoDimensions,
}

impl CaptureFrame {
    /// Validates JPEG magic and reads the dimensions from the frame header.
    pub fn from_jpeg(bytes: Vec<u8>, captured_at_us: u64) -> Result<Self, FrameError> {
        if bytes.len() < 4 || bytes[..3] != [0xFF, 0xD8, 0xFF] {
            return Err(FrameError::NotJpeg);
        }
        let (width, height) = jpeg_dimensions(&bytes).ok_or(FrameError::NoDimensions)?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        Ok(Self {
            image_bytes: bytes,
            width,
            height,
            captured_at_us,
            sha256,
        })
    }

    /// A frame known only by its digest and size, as recovered from a
    /// session log. Carries no pixels.
    pub fn recorded(sha256: String, width: u32, height: u32, captured_at_us: u64) -> Self {
        Self {
            image_bytes: Vec::new(),
            width,
            height,
            captured_at_us,
            sha256,
        }
    }

    /// Lowercase hex SHA-256 of the image bytes.
    pub fn sha256(&self) -> &str {
        &self.sha256
    }
}

/// Scans JPEG markers for a start-of-frame segment.
fn jpeg_dimensions(b: &[u8]) -> Option<(u32, u32)> {
    let mut i = 2;
    while i + 4 <= b.len() {
        if b[i] != 0xFF {
            return None;
        }
        let marker = b[i + 1];
        if marker == 0xFF {
            i += 1;
            continue;
        }
        if marker == 0xD8 || (0xD0..=0xD7).contains(&marker) || marker == 0x01 {
            i += 2;
            continue;
        }
        let len = usize::from(u16::from_be_bytes([b[i + 2], b[i + 3]]));
        let is_sof = matches!(marker, 0xC0..=0xCF) && !matches!(marker, 0xC4 | 0xC8 | 0xCC);
        if is_sof {
            if i + 9 > b.len() {
                return None;
            }
            let h = u32::from(u16::from_be_bytes([b[i + 5], b[i + 6]]));
            let w = u32::from(u16::from_be_bytes([b[i + 7], b[i + 8]]));
            return (w > 0 && h > 0).then_some((w, h));
        }
        if marker == 0xD9 || marker == 0xDA {
            return None;
        }
        i += 2 + len;
    }
    None
}
