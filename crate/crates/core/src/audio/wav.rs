//! Minimal RIFF/WAVE codec.
//!
//! Output is always 16-bit PCM little-endian stereo. Input may be 16-bit PCM
//! or 32-bit IEEE float, mono or stereo, at any rate; it is normalized to a
//! stereo buffer at the engine rate.

use super::buffer::{sanitize, AudioBuffer, Frame};
use super::SAMPLE_RATE;

const FORMAT_PCM: u16 = 0x0001;
const FORMAT_IEEE_FLOAT: u16 = 0x0003;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WavError {
    #[error("malformed RIFF/WAVE container: {0}")]
    MalformedContainer(String),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
}

fn malformed(msg: impl Into<String>) -> WavError {
    WavError::MalformedContainer(msg.into())
}

#[derive(Debug, Clone, Copy)]
enum SampleFormat {
    Pcm16,
    Float32,
}

#[derive(Debug, Clone, Copy)]
struct Fmt {
    format: SampleFormat,
    channels: u16,
    sample_rate: u32,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<Fmt, WavError> {
    if body.len() < 16 {
        return Err(malformed(format!("fmt chunk too short ({} bytes)", body.len())));
    }
    let mut tag = read_u16(body, 0);
    let channels = read_u16(body, 2);
    let sample_rate = read_u32(body, 4);
    let block_align = read_u16(body, 12);
    let bits = read_u16(body, 14);

    if tag == FORMAT_EXTENSIBLE {
        // cbSize(2) validBits(2) channelMask(4) subformat GUID(16)
        if body.len() < 40 {
            return Err(malformed("extensible fmt chunk too short"));
        }
        tag = read_u16(body, 24);
    }
    let format = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_IEEE_FLOAT, 32) => SampleFormat::Float32,
        (FORMAT_PCM, b) => {
            return Err(WavError::UnsupportedEncoding(format!("{b}-bit PCM")));
        }
        (FORMAT_IEEE_FLOAT, b) => {
            return Err(WavError::UnsupportedEncoding(format!("{b}-bit float")));
        }
        (t, _) => {
            return Err(WavError::UnsupportedEncoding(format!("format tag {t:#06x}")));
        }
    };
    if !(1..=2).contains(&channels) {
        return Err(WavError::UnsupportedEncoding(format!("{channels} channels")));
    }
    if sample_rate == 0 {
        return Err(malformed("zero sample rate"));
    }
    if u32::from(block_align) != u32::from(channels) * u32::from(bits) / 8 {
        return Err(malformed(format!("block align {block_align} inconsistent with format")));
    }
    Ok(Fmt {
        format,
        channels,
        sample_rate,
    })
}

/// Decodes a RIFF/WAVE byte stream into a stereo buffer at 44.1 kHz.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioBuffer, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE magic"));
    }
    let riff_len = read_u32(bytes, 4) as usize;
    if riff_len + 8 > bytes.len() || riff_len < 4 {
        return Err(malformed(format!(
            "RIFF size {riff_len} does not match {} available bytes",
            bytes.len()
        )));
    }
    let body_end = riff_len + 8;

    let mut fmt = None;
    let mut data = None;
    let mut at = 12;
    while at + 8 <= body_end {
        let id = &bytes[at..at + 4];
        let size = read_u32(bytes, at + 4) as usize;
        let start = at + 8;
        let end = start
            .checked_add(size)
            .filter(|&e| e <= body_end)
            .ok_or_else(|| malformed(format!("chunk {:?} overruns container", String::from_utf8_lossy(id))))?;
        match id {
            b"fmt " => fmt = Some(parse_fmt(&bytes[start..end])?),
            b"data" => data = Some(&bytes[start..end]),
            _ => {}
        }
        // chunks are word aligned
        at = end + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;

    let sample_bytes = match fmt.format {
        SampleFormat::Pcm16 => 2,
        SampleFormat::Float32 => 4,
    };
    let block = sample_bytes * fmt.channels as usize;
    if data.len() % block != 0 {
        return Err(malformed(format!(
            "data size {} is not a multiple of block size {block}",
            data.len()
        )));
    }

    let read_sample = |off: usize| -> f32 {
        match fmt.format {
            SampleFormat::Pcm16 => f32::from(i16::from_le_bytes([data[off], data[off + 1]])) / 32768.0,
            SampleFormat::Float32 => sanitize(f32::from_le_bytes([
                data[off],
                data[off + 1],
                data[off + 2],
                data[off + 3],
            ])),
        }
    };
    let frames: Vec<Frame> = data
        .chunks_exact(block)
        .enumerate()
        .map(|(i, _)| {
            let off = i * block;
            let l = read_sample(off);
            let r = if fmt.channels == 2 {
                read_sample(off + sample_bytes)
            } else {
                l
            };
            [l, r]
        })
        .collect();

    let buf = AudioBuffer::new(fmt.sample_rate, frames);
    Ok(if fmt.sample_rate == SAMPLE_RATE {
        buf
    } else {
        resample_linear(&buf, SAMPLE_RATE)
    })
}

#[inline]
fn quantize(s: f32) -> i16 {
    (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes a buffer as 16-bit PCM stereo RIFF/WAVE at the buffer's rate.
pub fn encode_wav(buf: &AudioBuffer) -> Vec<u8> {
    let data_len = (buf.len() * 4) as u32;
    let rate = buf.sample_rate();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for f in buf.frames() {
        out.extend_from_slice(&quantize(f[0]).to_le_bytes());
        out.extend_from_slice(&quantize(f[1]).to_le_bytes());
    }
    out
}

/// Linear-interpolation resampler.
pub fn resample_linear(buf: &AudioBuffer, target_rate: u32) -> AudioBuffer {
    let src_rate = buf.sample_rate();
    if src_rate == target_rate || buf.is_empty() {
        return AudioBuffer::new(target_rate, buf.frames().to_vec());
    }
    let src = buf.frames();
    let out_len = ((src.len() as u64 * u64::from(target_rate) + u64::from(src_rate) / 2)
        / u64::from(src_rate)) as usize;
    let step = f64::from(src_rate) / f64::from(target_rate);
    let last = src.len() - 1;
    let frames = (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let idx = (pos.floor() as usize).min(last);
            let frac = pos - idx as f64;
            let a = src[idx];
            let b = src[(idx + 1).min(last)];
            [
                (f64::from(a[0]) + (f64::from(b[0]) - f64::from(a[0])) * frac) as f32,
                (f64::from(a[1]) + (f64::from(b[1]) - f64::from(a[1])) * frac) as f32,
            ]
        })
        .collect();
    AudioBuffer::new(target_rate, frames)
}
