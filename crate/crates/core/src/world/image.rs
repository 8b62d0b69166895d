use std::io::Write;

use thiserror::Error;

use crate::canonical::sha256_hex;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BadLength { expected: usize, actual: usize },
    #[error("malformed PPM: {0}")]
    MalformedPpm(String),
    #[error("PNG encoding failed: {0}")]
    Png(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width_px: u32,
    height_px: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RasterImage({}x{}, sha256={})", self.width_px, self.height_px, &self.content_hash()[..12])
    }
}

impl RasterImage {
    pub fn filled(width_px: u32, height_px: u32, color: Rgb) -> Self {
        let n = width_px as usize * height_px as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&color);
        }
        RasterImage { width_px, height_px, pixels }
    }

    pub fn from_raw(width_px: u32, height_px: u32, pixels: Vec<u8>) -> Result<Self, ImageError> {
        let expected = width_px as usize * height_px as usize * 3;
        if pixels.len() != expected {
            return Err(ImageError::BadLength { expected, actual: pixels.len() });
        }
        Ok(RasterImage { width_px, height_px, pixels })
    }

    pub fn width(&self) -> u32 {
        self.width_px
    }

    pub fn height(&self) -> u32 {
        self.height_px
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && x < self.width_px as i64 && y < self.height_px as i64
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let i = (y as usize * self.width_px as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let i = (y as usize * self.width_px as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&c);
    }

    /// Binary PPM (P6, maxval 255).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width_px, self.height_px).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::MalformedPpm("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P6" {
            return Err(ImageError::MalformedPpm(format!("magic {:?}", fields[0])));
        }
        let parse = |s: &str| s.parse::<u32>().map_err(|_| ImageError::MalformedPpm(format!("bad number {s:?}")));
        let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(ImageError::MalformedPpm(format!("maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        let data = bytes.get(pos + 1..).unwrap_or(&[]);
        RasterImage::from_raw(w, h, data.to_vec())
    }

    pub fn to_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width_px, self.height_px);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| ImageError::Png(e.to_string()))?;
            writer.write_image_data(&self.pixels).map_err(|e| ImageError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn write_ppm(&self, path: &std::path::Path) -> Result<(), ImageError> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_ppm())?;
        Ok(())
    }

    /// SHA-256 over the PPM encoding.
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.to_ppm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_length() {
        let img = RasterImage::filled(4, 2, [1, 2, 3]);
        let ppm = img.to_ppm();
        assert!(ppm.starts_with(b"P6\n4 2\n255\n"));
        assert_eq!(ppm.len(), b"P6\n4 2\n255\n".len() + 24);
        assert_eq!(RasterImage::from_ppm(&ppm).unwrap(), img);
    }

    #[test]
    fn rejects_wrong_buffer_length() {
        assert!(matches!(RasterImage::from_raw(2, 2, vec![0; 11]), Err(ImageError::BadLength { expected: 12, actual: 11 })));
    }

    #[test]
    fn png_has_signature() {
        let png = RasterImage::filled(3, 3, [9, 9, 9]).to_png().unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }
}
