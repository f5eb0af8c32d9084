use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::AudioClip;

const PCM: u16 = 1;
const IEEE_FLOAT: u16 = 3;
const EXTENSIBLE: u16 = 0xFFFE;

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes RIFF/WAVE PCM 16-bit or IEEE float 32-bit, mono or stereo.
/// Stereo is averaged to mono; 16-bit samples are scaled by 1/32768.
pub fn parse_wav(bytes: &[u8]) -> Result<AudioClip> {
    let fail = |msg: &str| Error::Format(format!("WAV: {msg}"));
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail("missing RIFF/WAVE header"));
    }
    let mut fmt = None;
    let mut data = None;
    let mut at = 12;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = le_u32(bytes, at + 4) as usize;
        let body = at + 8;
        let end = body.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end = end.ok_or_else(|| fail("truncated fmt chunk"))?;
                if size < 16 {
                    return Err(fail("fmt chunk too short"));
                }
                let mut tag = le_u16(bytes, body);
                if tag == EXTENSIBLE {
                    if size < 40 || end < body + 26 {
                        return Err(fail("truncated extensible fmt chunk"));
                    }
                    tag = le_u16(bytes, body + 24);
                }
                fmt = Some(Format {
                    tag,
                    channels: le_u16(bytes, body + 2),
                    sample_rate: le_u32(bytes, body + 4),
                    bits: le_u16(bytes, body + 14),
                });
            }
            b"data" => {
                // tolerate a data size that overruns the file by clipping it
                data = Some(&bytes[body..end.unwrap_or(bytes.len())]);
            }
            _ => {}
        }
        at = body + size + (size & 1);
    }
    let fmt = fmt.ok_or_else(|| fail("no fmt chunk"))?;
    let data = data.ok_or_else(|| fail("no data chunk"))?;
    let channels = match fmt.channels {
        1 | 2 => fmt.channels as usize,
        n => return Err(fail(&format!("{n} channels unsupported; expected mono or stereo"))),
    };
    let decode: fn(&[u8]) -> f64 = match (fmt.tag, fmt.bits) {
        (PCM, 16) => |c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0,
        (IEEE_FLOAT, 32) => |c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64,
        (tag, bits) => {
            return Err(fail(&format!(
                "unsupported codec tag 0x{tag:04X} with {bits} bits per sample"
            )))
        }
    };
    let width = fmt.bits as usize / 8;
    let frame = width * channels;
    let samples = data
        .chunks_exact(frame)
        .map(|f| f.chunks_exact(width).map(decode).sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(samples, fmt.sample_rate)
}

pub fn read_wav(path: &Path) -> Result<AudioClip> {
    parse_wav(&super::read_bytes(path)?).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Mono 16-bit PCM encoding; samples are clamped to the representable range.
pub fn encode_wav_pcm16(clip: &AudioClip) -> Vec<u8> {
    let n = clip.samples().len();
    let mut out = Vec::with_capacity(44 + 2 * n);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + 2 * n as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(2 * clip.sample_rate()).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(2 * n as u32).to_le_bytes());
    for s in clip.samples() {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}

pub fn write_wav_pcm16(path: &Path, clip: &AudioClip) -> Result<()> {
    super::write_atomic(path, &encode_wav_pcm16(clip))
}
