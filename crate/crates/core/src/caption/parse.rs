use serde_json::{Map, Value};

use super::schema::{SceneCaption, SectionRole, BPM_MAX, BPM_MIN};

/// A caption plus the corrections applied while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCaption {
    pub caption: SceneCaption,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed caption: {0}")]
pub struct MalformedCaption(pub String);

/// Removes a surrounding Markdown code fence, if any.
fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    // drop the info string ("json") up to the first newline
    let body = rest.split_once('\n').map_or("", |(_, b)| b);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn lookup<'a>(obj: &'a Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| {
        obj.iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(n))
            .map(|(_, v)| v)
    })
}

fn text_field(v: Option<&Value>) -> String {
    match v {
        Some(Value::String(s)) => s.trim().to_string(),
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    }
}

fn list_field(v: Option<&Value>) -> Vec<String> {
    let items: Vec<String> = match v {
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|x| match x {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .collect(),
        Some(Value::String(s)) => s.split(',').map(str::to_string).collect(),
        _ => Vec::new(),
    };
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Leading decimal number of a string such as `"92 BPM"`.
fn leading_number(s: &str) -> Option<f64> {
    let t = s.trim();
    let end = t
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || (i == 0 && (c == '-' || c == '+'))))
        .map_or(t.len(), |(i, _)| i);
    t[..end].parse().ok()
}

/// Tolerant reader for a backend's caption output.
///
/// Accepts the six caption fields by name (case-insensitive, a few common
/// aliases), ignores extra fields, strips code fences, coerces numeric
/// strings, defaults a missing or unknown role to verse and clamps the tempo.
pub fn parse_caption_json(text: &str) -> Result<ParsedCaption, MalformedCaption> {
    let body = strip_fences(text);
    let value: Value = serde_json::from_str(body).or_else(|first| {
        // tolerate prose around a single JSON object
        match (body.find('{'), body.rfind('}')) {
            (Some(a), Some(b)) if a < b => serde_json::from_str(&body[a..=b])
                .map_err(|_| MalformedCaption(first.to_string())),
            _ => Err(MalformedCaption(first.to_string())),
        }
    })?;
    let Value::Object(obj) = value else {
        return Err(MalformedCaption("top-level value is not an object".into()));
    };

    let mut warnings = Vec::new();
    let description = text_field(lookup(&obj, &["description", "scene_description", "scene"]));
    let objects = list_field(lookup(&obj, &["objects", "salient_objects"]));
    let mood = list_field(lookup(&obj, &["mood", "moods"]));
    let genre = text_field(lookup(&obj, &["genre", "music_genre"]));

    let section_role = match lookup(&obj, &["section_role", "role", "section"]) {
        Some(Value::String(s)) => s.parse().unwrap_or_else(|_| {
            warnings.push(format!("unknown section role {s:?}, defaulting to verse"));
            SectionRole::Verse
        }),
        Some(other) => {
            warnings.push(format!("unreadable section role {other}, defaulting to verse"));
            SectionRole::Verse
        }
        None => {
            warnings.push("missing section role, defaulting to verse".into());
            SectionRole::Verse
        }
    };

    let raw_bpm = match lookup(&obj, &["bpm", "tempo", "suggested_bpm"]) {
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) => {
            let n = leading_number(s);
            if n.is_none() {
                warnings.push(format!("ignoring unreadable bpm {s:?}"));
            }
            n
        }
        _ => None,
    };
    let bpm = raw_bpm.filter(|b| b.is_finite()).map(|b| {
        let clamped = b.clamp(BPM_MIN, BPM_MAX);
        if clamped != b {
            warnings.push(format!("bpm {b} clamped to {clamped}"));
        }
        clamped
    });

    let caption = SceneCaption {
        description,
        objects,
        mood,
        section_role,
        genre,
        bpm,
    };
    caption.validate().map_err(MalformedCaption)?;
    Ok(ParsedCaption { caption, warnings })
}
