//! Netpbm graymaps and pixmaps (P2, P3, P5, P6).

use std::path::Path;

use crate::error::{contract, Error, Result};
use crate::tensor::{Element, Tensor};

/// Decoded image samples, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub width: usize,
    pub height: usize,
    /// 1 for graymaps, 3 for pixmaps.
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl PnmImage {
    /// Samples scaled into `[0, 1]`.
    pub fn to_tensor<T: Element>(&self) -> Tensor<T> {
        let scale = f64::from(self.maxval);
        let data = self
            .samples
            .iter()
            .map(|&s| T::from_f64(f64::from(s) / scale).unwrap())
            .collect();
        Tensor::from_parts(self.height, self.width, self.channels, data)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            self.pos = start;
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| Error::Parse {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

pub fn parse_pnm(bytes: &[u8]) -> Result<PnmImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    let (channels, binary) = match bytes.get(..2) {
        Some(b"P2") => (1, false),
        Some(b"P3") => (3, false),
        Some(b"P5") => (1, true),
        Some(b"P6") => (3, true),
        _ => return Err(cur.err("unsupported magic, expected P2, P3, P5 or P6")),
    };
    cur.pos = 2;
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Parse {
            offset: maxval_at,
            msg: "image dimensions must be positive".into(),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse {
            offset: maxval_at,
            msg: format!("maxval {maxval} outside 1..=65535"),
        });
    }
    let count = width * height * channels;
    let samples = if binary {
        if !cur.bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(cur.err("expected whitespace after maxval"));
        }
        cur.pos += 1;
        let wide = maxval > 255;
        let expected = count * if wide { 2 } else { 1 };
        let payload = &bytes[cur.pos..];
        if payload.len() < expected {
            return Err(Error::Parse {
                offset: bytes.len(),
                msg: format!(
                    "pixel data truncated: expected {expected} bytes, found {}",
                    payload.len()
                ),
            });
        }
        if wide {
            payload[..expected]
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]))
                .collect()
        } else {
            payload[..expected].iter().map(|&b| u16::from(b)).collect()
        }
    } else {
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let at = cur.pos;
            let v = cur.number("sample").map_err(|_| Error::Parse {
                offset: at,
                msg: format!("expected {count} samples, found {i}"),
            })?;
            if v > maxval {
                return Err(Error::Parse {
                    offset: at,
                    msg: format!("sample {i} exceeds maxval {maxval}"),
                });
            }
            samples.push(v as u16);
        }
        samples
    };
    if let Some(pos) = samples.iter().position(|&s| u32::from(s) > maxval) {
        return Err(Error::Parse {
            offset: cur.pos,
            msg: format!("sample {pos} exceeds maxval {maxval}"),
        });
    }
    Ok(PnmImage {
        width,
        height,
        channels,
        maxval: maxval as u16,
        samples,
    })
}

pub fn read_pnm_file(path: impl AsRef<Path>) -> Result<PnmImage> {
    parse_pnm(&std::fs::read(path)?)
}

/// Encodes a 1- or 3-channel tensor as 8-bit binary PGM/PPM, clamping values
/// to `[0, 1]` first.
pub fn encode_pnm_8bit<T: Element>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let magic = match t.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(contract(format!(
                "only 1- or 3-channel tensors can be written as images, got {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", t.width(), t.height()).into_bytes();
    out.extend(t.data().iter().map(|v| {
        let x = v.to_f64().unwrap().clamp(0.0, 1.0);
        (x * 255.0).round() as u8
    }));
    Ok(out)
}
