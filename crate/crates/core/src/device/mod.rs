//! Serial line protocol for the five-button controller and a software model
//! of its firmware.
//!
//! Device to host: `B <idx> <d|u> <ms>` button edges and `A` acknowledgements.
//! Host to device: `D <bpm> <role> <level> <LED hex> <genre>` display updates.
//! Lines are ASCII and end in `\n`. Button indices: keys 0, guitar 1, bass 2,
//! percussion 3, capture 4.

mod firmware;
mod protocol;

use std::io::{BufRead, Write};

pub use firmware::{capture_lit, echo_line, simulate_firmware, Firmware, FirmwareRun, RawEdge, SimInput, DEBOUNCE_MS};
pub use protocol::{
    encode_display, encode_event, encode_line, parse_line, Button, DeviceEvent, DisplayState, Edge, Line,
    ProtocolError, CAPTURE_LED, GENRE_MAX_CHARS, LEVEL_MAX,
};

use crate::prompt::{Instrument, InstrumentSelection};

/// What a debounced button press asks of the session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HostAction {
    SelectInstruments(InstrumentSelection),
    Capture,
}

/// Host-side interpretation of button events. The host owns the instrument
/// selection; presses that would leave it empty or above the cap are ignored
/// and the next display line puts the device LEDs back.
#[derive(Debug, Clone)]
pub struct HostController {
    selection: InstrumentSelection,
}

impl HostController {
    pub fn new(selection: InstrumentSelection) -> Self {
        Self { selection }
    }

    pub fn selection(&self) -> &InstrumentSelection {
        &self.selection
    }

    pub fn set_selection(&mut self, selection: InstrumentSelection) {
        self.selection = selection;
    }

    pub fn on_event(&mut self, ev: &DeviceEvent) -> Option<HostAction> {
        if ev.kind != Edge::ButtonDown {
            return None;
        }
        match ev.button.instrument() {
            None => Some(HostAction::Capture),
            Some(inst) => {
                let toggled: Vec<Instrument> = if self.selection.contains(inst) {
                    self.selection.instruments().iter().copied().filter(|&i| i != inst).collect()
                } else {
                    self.selection.instruments().iter().copied().chain([inst]).collect()
                };
                let next = InstrumentSelection::new(toggled).ok()?;
                self.selection = next.clone();
                Some(HostAction::SelectInstruments(next))
            }
        }
    }
}

/// Reads protocol lines until end of input, handing each to `f`.
pub fn read_lines<R: BufRead>(r: R, mut f: impl FnMut(Result<Line, ProtocolError>)) -> std::io::Result<()> {
    for line in r.lines() {
        let line = line?;
        f(parse_line(&line));
    }
    Ok(())
}

pub fn write_line<W: Write>(w: &mut W, line: &Line) -> std::io::Result<()> {
    w.write_all(encode_line(line).as_bytes())?;
    w.flush()
}
