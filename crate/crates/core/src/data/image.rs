//! PNG and binary PGM/PPM decoding into 8-bit rasters.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved 8-bit samples, row-major, `channels` per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidArgument(format!("bad raster {height}x{width}x{channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidArgument(format!(
                "raster {height}x{width}x{channels} needs {} samples, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn sample(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

pub fn decode_image(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bytes(&bytes).map_err(|detail| Error::Decode { path: path.to_path_buf(), detail })
}

pub fn decode_bytes(bytes: &[u8]) -> std::result::Result<Raster, String> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err("unsupported image format (expected PNG or binary PGM/PPM)".into())
    }
}

fn decode_png(bytes: &[u8]) -> std::result::Result<Raster, String> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| format!("png: {e}"))?;
    let size = reader.output_buffer_size().ok_or("png: image too large")?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| format!("png: {e}"))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src_channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err("png: palette was not expanded".into()),
    };
    let keep = if src_channels >= 3 { 3 } else { 1 };
    let mut data = Vec::with_capacity(w * h * keep);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * src_channels].chunks(src_channels) {
            data.extend_from_slice(&px[..keep]);
        }
    }
    Raster::new(h, w, keep, data).map_err(|e| e.to_string())
}

fn decode_pnm(bytes: &[u8]) -> std::result::Result<Raster, String> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("pnm: truncated header".into()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err("pnm: malformed header".into());
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|e| format!("pnm: {e}"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(format!("pnm: maxval {maxval} unsupported (need 255)"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("pnm: malformed header".into());
    }
    pos += 1;
    let need = w * h * channels;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(format!("pnm: truncated pixel data ({} of {need} bytes)", body.len()));
    }
    Raster::new(h, w, channels, body[..need].to_vec()).map_err(|e| e.to_string())
}

/// Binary PGM (P5) or PPM (P6) with a `P5\n<w> <h>\n255\n` header.
pub fn encode_pnm(raster: &Raster) -> Vec<u8> {
    let magic = if raster.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", raster.width, raster.height).into_bytes();
    out.extend_from_slice(&raster.data);
    out
}

pub fn encode_png(raster: &Raster) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, raster.width as u32, raster.height as u32);
        enc.set_color(if raster.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writer.write_image_data(&raster.data).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(out)
}
