use serde::{Deserialize, Serialize};

use super::protocol::{encode_display, encode_event, Button, DeviceEvent, DisplayState, Edge, CAPTURE_LED};

pub const DEBOUNCE_MS: u64 = 30;

/// A raw contact transition as seen by the firmware's input pin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEdge {
    pub button: Button,
    pub pressed: bool,
    pub at: u64,
}

/// Input to [`simulate_firmware`], in time order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SimInput {
    Raw(RawEdge),
    Host { at: u64, state: DisplayState },
}

impl SimInput {
    pub fn at(&self) -> u64 {
        match self {
            SimInput::Raw(e) => e.at,
            SimInput::Host { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Pin {
    stable: bool,
    /// Level seen since the given time, not yet stable for a full window.
    candidate: Option<(bool, u64)>,
}

/// The controller's finite-state loop: stable-state debounce on five inputs,
/// optimistic LED toggles for instrument buttons, and a display mirroring
/// the host's last `D` line.
///
/// A level change is reported once the contact has held the new level for a
/// full debounce window; the event carries the time the level was first seen.
#[derive(Debug, Clone, Default)]
pub struct Firmware {
    pins: [Pin; 5],
    display: DisplayState,
    /// LED bits flipped locally since the last host display line.
    toggles: u8,
}

impl Firmware {
    pub fn new() -> Self {
        Self::default()
    }

    /// Host-commanded state with local toggles applied.
    pub fn display(&self) -> DisplayState {
        DisplayState {
            led_mask: self.display.led_mask ^ self.toggles,
            ..self.display.clone()
        }
    }

    pub fn leds(&self) -> u8 {
        self.display().led_mask
    }

    /// Accepts a host display line; LED state is reconciled to it.
    pub fn host_display(&mut self, state: DisplayState) {
        self.display = state.normalized();
        self.toggles = 0;
    }

    /// Emits every transition whose window has elapsed by `now`.
    pub fn advance(&mut self, now: u64) -> Vec<DeviceEvent> {
        let mut due: Vec<(u64, Button)> = Button::ALL
            .into_iter()
            .filter_map(|b| {
                let (_, since) = self.pins[b.index() as usize].candidate?;
                (since + DEBOUNCE_MS <= now).then_some((since, b))
            })
            .collect();
        due.sort();
        due.into_iter().map(|(_, b)| self.confirm(b)).collect()
    }

    fn confirm(&mut self, button: Button) -> DeviceEvent {
        let pin = &mut self.pins[button.index() as usize];
        let (level, since) = pin.candidate.take().expect("confirming a candidate");
        pin.stable = level;
        if level && button != Button::Capture {
            self.toggles ^= 1 << button.index();
        }
        DeviceEvent {
            kind: if level { Edge::ButtonDown } else { Edge::ButtonUp },
            button,
            at: since,
        }
    }

    /// Feeds one raw edge; returns events confirmed up to its time.
    pub fn edge(&mut self, e: RawEdge) -> Vec<DeviceEvent> {
        let out = self.advance(e.at);
        let pin = &mut self.pins[e.button.index() as usize];
        let current = pin.candidate.map_or(pin.stable, |(l, _)| l);
        if e.pressed != current {
            pin.candidate = if e.pressed == pin.stable {
                None
            } else {
                Some((e.pressed, e.at))
            };
        }
        out
    }

    /// Confirms every outstanding candidate, as if the inputs then held still.
    pub fn settle(&mut self) -> Vec<DeviceEvent> {
        self.advance(u64::MAX - DEBOUNCE_MS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareRun {
    pub events: Vec<DeviceEvent>,
    /// Wire output in order: `B` lines for events, `A` for each display line.
    pub wire: Vec<String>,
    /// What the display showed after each host line, with local toggles.
    pub echoes: Vec<DisplayState>,
    pub final_display: DisplayState,
}

/// Runs the firmware over a time-ordered input script.
pub fn simulate_firmware(inputs: &[SimInput]) -> FirmwareRun {
    let mut fw = Firmware::new();
    let mut events = Vec::new();
    let mut wire = Vec::new();
    let mut echoes = Vec::new();
    let mut emit = |evs: Vec<DeviceEvent>, wire: &mut Vec<String>| {
        for ev in evs {
            wire.push(encode_event(&ev));
            events.push(ev);
        }
    };
    for input in inputs {
        match input {
            SimInput::Raw(e) => {
                let evs = fw.edge(*e);
                emit(evs, &mut wire);
            }
            SimInput::Host { at, state } => {
                let evs = fw.advance(*at);
                emit(evs, &mut wire);
                fw.host_display(state.clone());
                wire.push("A\n".into());
                echoes.push(fw.display());
            }
        }
    }
    let evs = fw.settle();
    emit(evs, &mut wire);
    FirmwareRun {
        events,
        wire,
        echoes,
        final_display: fw.display(),
    }
}

/// Lines a display echo would produce, for logs.
pub fn echo_line(state: &DisplayState) -> String {
    encode_display(state)
}

/// Whether the capture LED is lit.
pub fn capture_lit(state: &DisplayState) -> bool {
    state.led_mask & CAPTURE_LED != 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(button: Button, pressed: bool, at: u64) -> SimInput {
        SimInput::Raw(RawEdge { button, pressed, at })
    }

    #[test]
    fn bounces_within_ten_ms_give_one_event() {
        let run = simulate_firmware(&[
            raw(Button::Keys, true, 100),
            raw(Button::Keys, false, 103),
            raw(Button::Keys, true, 107),
        ]);
        assert_eq!(
            run.events,
            vec![DeviceEvent {
                kind: Edge::ButtonDown,
                button: Button::Keys,
                at: 107
            }]
        );
    }

    #[test]
    fn keys_twice_toggles_led_on_then_off() {
        let mut fw = Firmware::new();
        fw.edge(RawEdge { button: Button::Keys, pressed: true, at: 0 });
        fw.edge(RawEdge { button: Button::Keys, pressed: false, at: 100 });
        assert_eq!(fw.leds() & 1, 1);
        fw.edge(RawEdge { button: Button::Keys, pressed: true, at: 200 });
        fw.edge(RawEdge { button: Button::Keys, pressed: false, at: 300 });
        fw.settle();
        assert_eq!(fw.leds() & 1, 0);
    }

    #[test]
    fn capture_press_changes_nothing_locally() {
        let mut fw = Firmware::new();
        let before = fw.display();
        let mut evs = fw.edge(RawEdge { button: Button::Capture, pressed: true, at: 5 });
        evs.extend(fw.settle());
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].button, Button::Capture);
        assert_eq!(fw.display(), before);
    }

    #[test]
    fn host_line_reconciles_leds() {
        let state = DisplayState {
            tempo: 90,
            led_mask: 0b0110,
            ..Default::default()
        };
        let run = simulate_firmware(&[
            raw(Button::Keys, true, 0),
            raw(Button::Keys, false, 50),
            SimInput::Host { at: 200, state: state.clone() },
        ]);
        assert_eq!(run.final_display, state);
        assert_eq!(run.wire.last().unwrap(), "A\n");
    }

    /// Independent model: an edge is accepted when the raw level differs from
    /// the last accepted level and stays unchanged for the full window.
    fn oracle(edges: &[RawEdge], button: Button) -> Vec<(bool, u64)> {
        let mine: Vec<&RawEdge> = edges.iter().filter(|e| e.button == button).collect();
        let mut level = false;
        let mut out = Vec::new();
        for (i, e) in mine.iter().enumerate() {
            let next_change = mine[i + 1..].iter().find(|n| n.pressed != e.pressed).map(|n| n.at);
            let prev_level = if i == 0 { false } else { mine[i - 1].pressed };
            let is_change = i == 0 && e.pressed || i > 0 && e.pressed != prev_level;
            if !is_change {
                continue;
            }
            let held = next_change.map_or(true, |t| t >= e.at + DEBOUNCE_MS);
            if held && e.pressed != level {
                level = e.pressed;
                out.push((level, e.at));
            }
        }
        out
    }

    fn arb_edges() -> impl Strategy<Value = Vec<RawEdge>> {
        prop::collection::vec((0u8..5, any::<bool>(), 0u64..40), 0..80).prop_map(|steps| {
            let mut t = 0;
            steps
                .into_iter()
                .map(|(b, pressed, dt)| {
                    t += dt;
                    RawEdge {
                        button: Button::from_index(b).unwrap(),
                        pressed,
                        at: t,
                    }
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn debounce_density_and_alternation(edges in arb_edges()) {
            let script: Vec<SimInput> = edges.iter().copied().map(SimInput::Raw).collect();
            let run = simulate_firmware(&script);
            for b in Button::ALL {
                let mine: Vec<&DeviceEvent> = run.events.iter().filter(|e| e.button == b).collect();
                for w in mine.windows(2) {
                    prop_assert!(w[1].at >= w[0].at + DEBOUNCE_MS);
                    prop_assert_ne!(w[0].kind, w[1].kind);
                }
                if let Some(first) = mine.first() {
                    prop_assert_eq!(first.kind, Edge::ButtonDown);
                }
            }
        }

        #[test]
        fn debounce_matches_oracle(edges in arb_edges()) {
            let script: Vec<SimInput> = edges.iter().copied().map(SimInput::Raw).collect();
            let run = simulate_firmware(&script);
            for b in Button::ALL {
                let got: Vec<(bool, u64)> = run
                    .events
                    .iter()
                    .filter(|e| e.button == b)
                    .map(|e| (e.kind == Edge::ButtonDown, e.at))
                    .collect();
                prop_assert_eq!(got, oracle(&edges, b));
            }
        }

        #[test]
        fn leds_are_host_state_xor_local_toggles(edges in arb_edges(), mask in 0u8..32) {
            let mut script = vec![SimInput::Host { at: 0, state: DisplayState { led_mask: mask, ..Default::default() } }];
            script.extend(edges.iter().copied().map(SimInput::Raw));
            let run = simulate_firmware(&script);
            let downs = run
                .events
                .iter()
                .filter(|e| e.kind == Edge::ButtonDown && e.button != Button::Capture)
                .fold(0u8, |m, e| m ^ (1 << e.button.index()));
            prop_assert_eq!(run.final_display.led_mask, mask ^ downs);
        }
    }
}
