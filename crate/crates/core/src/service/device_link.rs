use std::time::Duration;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::oneshot;

use crate::device::{encode_display, parse_line, Line};

use super::engine::Command;
use super::ServiceHandle;

/// How often the display line is refreshed when the state changed.
pub const DISPLAY_INTERVAL: Duration = Duration::from_millis(100);

/// Accepts controller connections speaking the line protocol: button lines
/// in, display lines out. A serial bridge can forward a port to this socket.
pub async fn serve_device(listener: TcpListener, handle: ServiceHandle) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        log::info!("device connected from {peer}");
        let h = handle.clone();
        tokio::spawn(async move {
            if let Err(e) = link(stream, h).await {
                log::warn!("device link {peer}: {e}");
            }
        });
    }
}

async fn link(stream: TcpStream, handle: ServiceHandle) -> std::io::Result<()> {
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    let mut ticker = tokio::time::interval(DISPLAY_INTERVAL);
    let mut shown = None;
    loop {
        tokio::select! {
            line = lines.next_line() => {
                let Some(line) = line? else { return Ok(()) };
                match parse_line(&line) {
                    Ok(Line::Button(ev)) => {
                        if handle.send(Command::Device(ev)).is_err() {
                            return Ok(());
                        }
                    }
                    Ok(Line::Ack) => {}
                    Ok(Line::Display(_)) => log::warn!("device sent a display line"),
                    Err(e) => log::warn!("bad device line {line:?}: {e}"),
                }
            }
            _ = ticker.tick() => {
                let (reply, rx) = oneshot::channel();
                if handle.send(Command::Display(reply)).is_err() {
                    return Ok(());
                }
                let Ok(state) = rx.await else { return Ok(()) };
                let state = state.normalized();
                if shown.as_ref() != Some(&state) {
                    write.write_all(encode_display(&state).as_bytes()).await?;
                    shown = Some(state);
                }
            }
        }
    }
}
