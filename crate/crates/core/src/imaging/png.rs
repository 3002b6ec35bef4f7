//! Minimal PNG codec: 8-bit truecolor (type 2) and truecolor+alpha (type 6),
//! non-interlaced. Alpha is dropped on decode; encode always writes type 2
//! with filter type 0 on every scanline.

use super::Image;
use crate::error::{Error, Result};

pub(super) const SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

fn err(offset: usize, message: impl Into<String>) -> Error {
    Error::Decode { offset, message: message.into() }
}

fn be32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

struct Chunk<'a> {
    kind: [u8; 4],
    data: &'a [u8],
    offset: usize,
}

fn chunks(bytes: &[u8]) -> Result<Vec<Chunk<'_>>> {
    let mut pos = SIGNATURE.len();
    let mut out = Vec::new();
    loop {
        if pos + 8 > bytes.len() {
            return Err(err(pos, "truncated chunk header (missing IEND)"));
        }
        let len = be32(&bytes[pos..]) as usize;
        let kind: [u8; 4] = bytes[pos + 4..pos + 8].try_into().unwrap();
        let end = pos
            .checked_add(12)
            .and_then(|p| p.checked_add(len))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| err(pos, format!("chunk {} truncated", String::from_utf8_lossy(&kind))))?;
        let data = &bytes[pos + 8..pos + 8 + len];
        let stored = be32(&bytes[pos + 8 + len..]);
        let mut h = crc32fast::Hasher::new();
        h.update(&kind);
        h.update(data);
        if h.finalize() != stored {
            return Err(err(pos + 8 + len, format!("CRC mismatch in {} chunk", String::from_utf8_lossy(&kind))));
        }
        out.push(Chunk { kind, data, offset: pos });
        pos = end;
        if &kind == b"IEND" {
            return Ok(out);
        }
    }
}

fn paeth(a: u8, b: u8, c: u8) -> u8 {
    let p = a as i16 + b as i16 - c as i16;
    let (pa, pb, pc) = ((p - a as i16).abs(), (p - b as i16).abs(), (p - c as i16).abs());
    if pa <= pb && pa <= pc {
        a
    } else if pb <= pc {
        b
    } else {
        c
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<Image> {
    if !bytes.starts_with(&SIGNATURE) {
        return Err(err(0, "bad PNG signature"));
    }
    let chunks = chunks(bytes)?;
    let ihdr = chunks.first().filter(|c| &c.kind == b"IHDR").ok_or_else(|| err(8, "first chunk is not IHDR"))?;
    if ihdr.data.len() != 13 {
        return Err(err(ihdr.offset, "IHDR must be 13 bytes"));
    }
    let d = ihdr.data;
    let (width, height) = (be32(d) as usize, be32(&d[4..]) as usize);
    let (depth, color, compression, filter, interlace) = (d[8], d[9], d[10], d[11], d[12]);
    if width == 0 || height == 0 {
        return Err(err(ihdr.offset + 8, "zero image dimension"));
    }
    if depth != 8 {
        return Err(Error::UnsupportedFormat(format!("PNG bit depth {depth}")));
    }
    let channels = match color {
        2 => 3,
        6 => 4,
        other => return Err(Error::UnsupportedFormat(format!("PNG color type {other}"))),
    };
    if compression != 0 || filter != 0 {
        return Err(err(ihdr.offset + 18, "unknown compression or filter method"));
    }
    if interlace != 0 {
        return Err(Error::UnsupportedFormat("interlaced PNG".into()));
    }

    let mut zdata = Vec::new();
    let mut first_idat = None;
    for c in &chunks {
        if &c.kind == b"IDAT" {
            first_idat.get_or_insert(c.offset);
            zdata.extend_from_slice(c.data);
        }
    }
    let idat_at = first_idat.ok_or_else(|| err(bytes.len(), "no IDAT chunk"))?;
    let raw = miniz_oxide::inflate::decompress_to_vec_zlib(&zdata)
        .map_err(|e| err(idat_at, format!("zlib stream: {:?}", e.status)))?;

    let stride = width * channels;
    if raw.len() < height * (stride + 1) {
        return Err(err(idat_at, format!("image data holds {} bytes, need {}", raw.len(), height * (stride + 1))));
    }
    let mut pixels = vec![0u8; height * stride];
    for y in 0..height {
        let line = &raw[y * (stride + 1)..(y + 1) * (stride + 1)];
        let (ftype, src) = (line[0], &line[1..]);
        let (before, rest) = pixels.split_at_mut(y * stride);
        let prev = (y > 0).then(|| &before[(y - 1) * stride..]);
        let cur = &mut rest[..stride];
        for i in 0..stride {
            let a = if i >= channels { cur[i - channels] } else { 0 };
            let b = prev.map_or(0, |p| p[i]);
            let c = if i >= channels { prev.map_or(0, |p| p[i - channels]) } else { 0 };
            let pred = match ftype {
                0 => 0,
                1 => a,
                2 => b,
                3 => ((a as u16 + b as u16) / 2) as u8,
                4 => paeth(a, b, c),
                other => return Err(err(idat_at, format!("unknown filter type {other} on row {y}"))),
            };
            cur[i] = src[i].wrapping_add(pred);
        }
    }
    let rgb: Vec<u8> = if channels == 3 {
        pixels
    } else {
        pixels.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect()
    };
    Image::from_rgb8(height, width, &rgb)
}

fn write_chunk(out: &mut Vec<u8>, kind: &[u8; 4], data: &[u8]) {
    out.extend((data.len() as u32).to_be_bytes());
    out.extend(kind);
    out.extend(data);
    let mut h = crc32fast::Hasher::new();
    h.update(kind);
    h.update(data);
    out.extend(h.finalize().to_be_bytes());
}

pub(super) fn encode(img: &Image) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let mut out = SIGNATURE.to_vec();
    let mut ihdr = Vec::with_capacity(13);
    ihdr.extend((w as u32).to_be_bytes());
    ihdr.extend((h as u32).to_be_bytes());
    ihdr.extend([8, 2, 0, 0, 0]);
    write_chunk(&mut out, b"IHDR", &ihdr);
    let rgb = img.to_rgb8();
    let mut raw = Vec::with_capacity(h * (3 * w + 1));
    for row in rgb.chunks_exact(3 * w) {
        raw.push(0);
        raw.extend_from_slice(row);
    }
    write_chunk(&mut out, b"IDAT", &miniz_oxide::deflate::compress_to_vec_zlib(&raw, 6));
    write_chunk(&mut out, b"IEND", &[]);
    out
}
