//! Generation prompt assembly.
//!
//! A prompt is a single comma-joined sentence built from labeled parts in a
//! fixed order: instruments with the role phrase, scene, mood, genre, section
//! modifier and, after the first section, a variation tag and a continuity
//! tag. Phrases come from a versioned table file so that prompt text is
//! reproducible.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::caption::{SceneCaption, SectionRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Keys,
    Guitar,
    Bass,
    Percussion,
}

impl Instrument {
    pub const ALL: [Instrument; 4] = [
        Instrument::Keys,
        Instrument::Guitar,
        Instrument::Bass,
        Instrument::Percussion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Keys => "keys",
            Instrument::Guitar => "guitar",
            Instrument::Bass => "bass",
            Instrument::Percussion => "percussion",
        }
    }

    /// Position on the controller, 0..=3.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Instrument {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "keys" | "synth" | "keys/synth" => Ok(Instrument::Keys),
            "guitar" => Ok(Instrument::Guitar),
            "bass" => Ok(Instrument::Bass),
            "percussion" | "drums" => Ok(Instrument::Percussion),
            other => Err(PromptError::UnknownInstrument(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("select between 1 and 3 instruments, got {0}")]
    InstrumentCapViolation(usize),
    #[error("unknown instrument {0:?}")]
    UnknownInstrument(String),
    #[error("section {0} needs the session genre and tempo lock")]
    MissingLock(usize),
    #[error("variation tags start at section 1")]
    NoVariationForFirstSection,
    #[error("prompt tables: {0}")]
    Tables(String),
}

/// One to three distinct instruments, kept in controller order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Instrument>", into = "Vec<Instrument>")]
pub struct InstrumentSelection(Vec<Instrument>);

impl InstrumentSelection {
    pub const MAX: usize = 3;

    pub fn new(instruments: impl IntoIterator<Item = Instrument>) -> Result<Self, PromptError> {
        let mut v: Vec<Instrument> = instruments.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() || v.len() > Self::MAX {
            return Err(PromptError::InstrumentCapViolation(v.len()));
        }
        Ok(Self(v))
    }

    /// Parses a comma-separated list such as `"keys,guitar"`.
    pub fn parse_list(s: &str) -> Result<Self, PromptError> {
        let items = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(Instrument::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }

    pub fn instruments(&self) -> &[Instrument] {
        &self.0
    }

    pub fn contains(&self, i: Instrument) -> bool {
        self.0.contains(&i)
    }

    /// Bit `i` set for each selected instrument index `i`.
    pub fn mask(&self) -> u8 {
        self.0.iter().fold(0, |m, i| m | (1 << i.index()))
    }
}

impl TryFrom<Vec<Instrument>> for InstrumentSelection {
    type Error = PromptError;

    fn try_from(v: Vec<Instrument>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<InstrumentSelection> for Vec<Instrument> {
    fn from(s: InstrumentSelection) -> Self {
        s.0
    }
}

impl fmt::Display for InstrumentSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|i| i.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

/// Session-wide genre and tempo fixed by the first caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLock {
    pub genre: String,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTables {
    pub version: u32,
    pub continuity: String,
    pub variation_tags: Vec<String>,
    pub max_tokens: usize,
    pub max_mood: usize,
    pub fallback_genre: String,
    pub role_phrases: HashMap<SectionRole, String>,
    pub modifiers: HashMap<SectionRole, String>,
}

impl PromptTables {
    pub fn builtin() -> Self {
        Self::from_toml(include_str!("../../assets/prompt_tables.v1.toml"))
            .expect("bundled prompt tables are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        let t: Self = toml::from_str(text).map_err(|e| PromptError::Tables(e.to_string()))?;
        for role in SectionRole::ALL {
            if !t.modifiers.contains_key(&role) || !t.role_phrases.contains_key(&role) {
                return Err(PromptError::Tables(format!("missing entries for role {role}")));
            }
        }
        if t.variation_tags.is_empty() {
            return Err(PromptError::Tables("variation_tags is empty".into()));
        }
        Ok(t)
    }

    pub fn section_modifier(&self, role: SectionRole) -> &str {
        &self.modifiers[&role]
    }

    pub fn variation_tag(&self, k: usize) -> Result<&str, PromptError> {
        if k == 0 {
            return Err(PromptError::NoVariationForFirstSection);
        }
        Ok(&self.variation_tags[(k - 1) % self.variation_tags.len()])
    }
}

/// Arrangement hint for a section role, from the bundled table.
pub fn section_modifier(role: SectionRole) -> String {
    PromptTables::builtin().section_modifier(role).to_string()
}

/// Variation phrase for section `k >= 1`, from the bundled table.
pub fn variation_tag(k: usize) -> Result<String, PromptError> {
    PromptTables::builtin().variation_tag(k).map(str::to_string)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartLabel {
    /// Instrument list followed by the role phrase.
    Instrumentation,
    Scene,
    Mood,
    Genre,
    Modifier,
    Variation,
    Continuity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPart {
    pub label: PartLabel,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub text: String,
    pub parts: Vec<PromptPart>,
    pub section_index: usize,
}

impl PromptRecord {
    fn from_parts(parts: Vec<PromptPart>, section_index: usize) -> Self {
        let text = parts
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join(", ");
        Self {
            text,
            parts,
            section_index,
        }
    }

    pub fn part(&self, label: PartLabel) -> Option<&str> {
        self.parts.iter().find(|p| p.label == label).map(|p| p.text.as_str())
    }

    pub fn token_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

fn clean(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds the prompt for section `k`.
///
/// The scene part is the caption description, or its first object when the
/// description is empty; further objects are never listed. Section 0 may
/// run before the session lock exists and then uses the caption's own genre.
pub fn build_prompt(
    caption: &SceneCaption,
    selection: &InstrumentSelection,
    k: usize,
    lock: Option<&SessionLock>,
    tables: &PromptTables,
) -> Result<PromptRecord, PromptError> {
    let n = selection.instruments().len();
    if n == 0 || n > InstrumentSelection::MAX {
        return Err(PromptError::InstrumentCapViolation(n));
    }
    let genre = match lock {
        Some(l) => clean(&l.genre),
        None if k > 0 => return Err(PromptError::MissingLock(k)),
        None => clean(&caption.genre),
    };
    let genre = if genre.is_empty() {
        tables.fallback_genre.clone()
    } else {
        genre
    };

    let role = caption.section_role;
    let names: Vec<&str> = selection.instruments().iter().map(|i| i.as_str()).collect();
    let instrumentation = format!("{} {}", names.join(", "), tables.role_phrases[&role]);

    let mut scene = clean(&caption.description);
    if scene.is_empty() {
        scene = caption.objects.first().map(|o| clean(o)).unwrap_or_default();
    }
    let mut mood: Vec<String> = caption
        .mood
        .iter()
        .map(|m| clean(m))
        .filter(|m| !m.is_empty())
        .take(tables.max_mood)
        .collect();

    let mut tail = vec![
        PromptPart {
            label: PartLabel::Genre,
            text: genre,
        },
        PromptPart {
            label: PartLabel::Modifier,
            text: tables.section_modifier(role).to_string(),
        },
    ];
    if k > 0 {
        tail.push(PromptPart {
            label: PartLabel::Variation,
            text: tables.variation_tag(k)?.to_string(),
        });
        tail.push(PromptPart {
            label: PartLabel::Continuity,
            text: tables.continuity.clone(),
        });
    }

    let assemble = |scene: &str, mood: &[String]| {
        let mut parts = vec![PromptPart {
            label: PartLabel::Instrumentation,
            text: instrumentation.clone(),
        }];
        if !scene.is_empty() {
            parts.push(PromptPart {
                label: PartLabel::Scene,
                text: scene.to_string(),
            });
        }
        if !mood.is_empty() {
            parts.push(PromptPart {
                label: PartLabel::Mood,
                text: mood.join(", "),
            });
        }
        parts.extend(tail.iter().cloned());
        PromptRecord::from_parts(parts, k)
    };

    let mut record = assemble(&scene, &mood);
    // over budget: shorten the scene first, then drop mood words
    while record.token_count() > tables.max_tokens {
        let mut words: Vec<&str> = scene.split_whitespace().collect();
        if words.len() > 1 {
            words.pop();
            scene = words.join(" ");
        } else if !mood.is_empty() {
            mood.pop();
        } else {
            break;
        }
        record = assemble(&scene, &mood);
    }
    Ok(record)
}
