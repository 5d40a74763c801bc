use std::fmt;

use serde::{Deserialize, Serialize};

use crate::caption::SectionRole;
use crate::prompt::Instrument;

/// Longest genre text the display shows.
pub const GENRE_MAX_CHARS: usize = 16;
pub const LEVEL_MAX: u8 = 15;
/// Capture LED bit in the LED mask; bits 0..=3 follow [`Button`] order.
pub const CAPTURE_LED: u8 = 1 << 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Button {
    Keys,
    Guitar,
    Bass,
    Percussion,
    Capture,
}

impl Button {
    pub const ALL: [Button; 5] = [
        Button::Keys,
        Button::Guitar,
        Button::Bass,
        Button::Percussion,
        Button::Capture,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(usize::from(i)).copied()
    }

    pub fn instrument(self) -> Option<Instrument> {
        match self {
            Button::Keys => Some(Instrument::Keys),
            Button::Guitar => Some(Instrument::Guitar),
            Button::Bass => Some(Instrument::Bass),
            Button::Percussion => Some(Instrument::Percussion),
            Button::Capture => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    ButtonDown,
    ButtonUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceEvent {
    pub kind: Edge,
    pub button: Button,
    /// Device ticks, milliseconds.
    pub at: u64,
}

/// What the controller's display and LEDs show.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DisplayState {
    pub tempo: u16,
    pub genre: String,
    pub section_role: SectionRole,
    /// 0..=15.
    pub audio_level: u8,
    /// Five bits: instruments in button order, then capture.
    pub led_mask: u8,
}

impl DisplayState {
    /// Clamps fields into their wire ranges and makes the genre printable ASCII.
    pub fn normalized(mut self) -> Self {
        self.genre = self
            .genre
            .chars()
            .map(|c| if c.is_ascii_graphic() || c == ' ' { c } else { '?' })
            .take(GENRE_MAX_CHARS)
            .collect();
        self.audio_level = self.audio_level.min(LEVEL_MAX);
        self.led_mask &= 0x1F;
        self
    }
}

/// One protocol line in either direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Line {
    /// Device to host.
    Button(DeviceEvent),
    /// Host to device.
    Display(DisplayState),
    /// Device acknowledges a display line.
    Ack,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("unknown opcode {0:?}")]
    UnknownOpcode(String),
    #[error("{opcode} line needs {expected} fields, got {got}")]
    BadArity {
        opcode: char,
        expected: usize,
        got: usize,
    },
    #[error("bad {field}: {value:?}")]
    BadField { field: &'static str, value: String },
    #[error("line is not newline-terminated ASCII")]
    NotALine,
}

/// `D <bpm> <role> <level> <LED hex> <genre>\n`. The genre is truncated to 16
/// characters; everything else is written as given after normalization.
pub fn encode_display(state: &DisplayState) -> String {
    let s = state.clone().normalized();
    format!(
        "D {} {} {} {:02X} {}\n",
        s.tempo,
        s.section_role.as_str(),
        s.audio_level,
        s.led_mask,
        s.genre
    )
}

/// `B <idx> <d|u> <ms>\n`.
pub fn encode_event(ev: &DeviceEvent) -> String {
    let edge = match ev.kind {
        Edge::ButtonDown => 'd',
        Edge::ButtonUp => 'u',
    };
    format!("B {} {} {}\n", ev.button.index(), edge, ev.at)
}

pub fn encode_line(line: &Line) -> String {
    match line {
        Line::Button(ev) => encode_event(ev),
        Line::Display(s) => encode_display(s),
        Line::Ack => "A\n".into(),
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(encode_line(self).trim_end_matches('\n'))
    }
}

fn bad(field: &'static str, value: &str) -> ProtocolError {
    ProtocolError::BadField {
        field,
        value: value.to_string(),
    }
}

/// Canonical unsigned decimal: no sign, no leading zeros.
fn decimal<T: std::str::FromStr>(field: &'static str, s: &str) -> Result<T, ProtocolError> {
    let canonical = !s.is_empty()
        && s.bytes().all(|b| b.is_ascii_digit())
        && (s == "0" || !s.starts_with('0'));
    if !canonical {
        return Err(bad(field, s));
    }
    s.parse().map_err(|_| bad(field, s))
}

/// Parses one line. A trailing `\n` is accepted and not required; only the
/// canonical spelling produced by the encoders is accepted, so that
/// parse followed by encode reproduces the input.
pub fn parse_line(line: &str) -> Result<Line, ProtocolError> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    if !body.is_ascii() || body.contains(['\n', '\r']) {
        return Err(ProtocolError::NotALine);
    }
    let opcode = body.split(' ').next().unwrap_or("");
    match opcode {
        "A" => {
            if body != "A" {
                return Err(ProtocolError::BadArity {
                    opcode: 'A',
                    expected: 1,
                    got: body.split(' ').count(),
                });
            }
            Ok(Line::Ack)
        }
        "B" => {
            let f: Vec<&str> = body.split(' ').collect();
            if f.len() != 4 {
                return Err(ProtocolError::BadArity {
                    opcode: 'B',
                    expected: 4,
                    got: f.len(),
                });
            }
            let idx: u8 = decimal("button", f[1])?;
            let button = Button::from_index(idx).ok_or_else(|| bad("button", f[1]))?;
            let kind = match f[2] {
                "d" => Edge::ButtonDown,
                "u" => Edge::ButtonUp,
                other => return Err(bad("edge", other)),
            };
            let at = decimal("ticks", f[3])?;
            Ok(Line::Button(DeviceEvent { kind, button, at }))
        }
        "D" => {
            let f: Vec<&str> = body.splitn(6, ' ').collect();
            if f.len() != 6 {
                return Err(ProtocolError::BadArity {
                    opcode: 'D',
                    expected: 6,
                    got: f.len(),
                });
            }
            let tempo = decimal("tempo", f[1])?;
            let section_role = SectionRole::ALL
                .into_iter()
                .find(|r| r.as_str() == f[2])
                .ok_or_else(|| bad("role", f[2]))?;
            let audio_level: u8 = decimal("level", f[3])?;
            if audio_level > LEVEL_MAX {
                return Err(bad("level", f[3]));
            }
            let led = f[4];
            let led_ok = led.len() == 2 && led.bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b));
            let led_mask = u8::from_str_radix(led, 16)
                .ok()
                .filter(|m| led_ok && *m <= 0x1F)
                .ok_or_else(|| bad("led mask", led))?;
            let genre = f[5];
            if genre.chars().count() > GENRE_MAX_CHARS || !genre.bytes().all(|b| b == b' ' || b.is_ascii_graphic()) {
                return Err(bad("genre", genre));
            }
            Ok(Line::Display(DisplayState {
                tempo,
                genre: genre.to_string(),
                section_role,
                audio_level,
                led_mask,
            }))
        }
        other => Err(ProtocolError::UnknownOpcode(other.to_string())),
    }
}
