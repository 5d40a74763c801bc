use scenetone::device::{
    encode_line, parse_line, simulate_firmware, Button, DeviceEvent, Edge, Firmware, Line, RawEdge, SimInput, CAPTURE_LED,
};

fn golden() -> String {
    std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/device_golden.txt")).unwrap()
}

#[test]
fn golden_stream_round_trips_byte_for_byte() {
    let text = golden();
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    assert_eq!(lines.len(), 50);
    let mut out = String::new();
    for l in &lines {
        let parsed = parse_line(l).unwrap_or_else(|e| panic!("{l:?}: {e}"));
        out.push_str(&encode_line(&parsed));
    }
    assert_eq!(out.as_bytes(), text.as_bytes());
}

#[test]
fn golden_stream_is_a_coherent_session() {
    let parsed: Vec<Line> = golden().lines().map(|l| parse_line(l).unwrap()).collect();
    // every display line is acknowledged by the next line
    for (i, l) in parsed.iter().enumerate() {
        if matches!(l, Line::Display(_)) {
            assert_eq!(parsed[i + 1], Line::Ack, "line {}", i + 2);
        }
    }
    // per button, edges alternate down/up and device time never goes back
    let mut last_at = 0;
    let mut down = [false; 5];
    for l in &parsed {
        if let Line::Button(ev) = l {
            assert!(ev.at >= last_at);
            last_at = ev.at;
            let slot = &mut down[ev.button.index() as usize];
            assert_eq!(*slot, ev.kind == Edge::ButtonUp);
            *slot = !*slot;
        }
    }
    assert_eq!(down, [false; 5]);
    let tempos: Vec<u16> = parsed
        .iter()
        .filter_map(|l| match l {
            Line::Display(d) if d.tempo != 0 => Some(d.tempo),
            _ => None,
        })
        .collect();
    assert!(tempos.iter().all(|&t| t == 90));
}

#[test]
fn firmware_replays_the_golden_presses() {
    // Each golden press is preceded by contact bounce settling at its
    // timestamp; the debounced output must be exactly the golden B lines.
    let text = golden();
    let parsed: Vec<Line> = text.lines().map(|l| parse_line(l).unwrap()).collect();
    let expected: Vec<String> = parsed
        .iter()
        .filter(|l| matches!(l, Line::Button(_)))
        .map(encode_line)
        .collect();
    let mut inputs = Vec::new();
    for l in &parsed {
        if let Line::Button(DeviceEvent { kind, button, at }) = *l {
            let pressed = kind == Edge::ButtonDown;
            for (dt, level) in [(12, pressed), (9, !pressed), (7, pressed), (3, !pressed), (0, pressed)] {
                inputs.push(SimInput::Raw(RawEdge {
                    button,
                    pressed: level,
                    at: at - dt,
                }));
            }
        }
    }
    inputs.sort_by_key(|i| i.at());
    let run = simulate_firmware(&inputs);
    assert_eq!(run.wire, expected);
    assert!(run.echoes.is_empty());
}

#[test]
fn capture_press_changes_no_local_state() {
    let mut fw = Firmware::new();
    let before = fw.display();
    fw.edge(RawEdge {
        button: Button::Capture,
        pressed: true,
        at: 0,
    });
    let evs = fw.settle();
    assert_eq!(evs.len(), 1);
    assert_eq!(fw.display(), before);
    assert_eq!(fw.leds() & CAPTURE_LED, 0);
}
