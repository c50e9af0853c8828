//! Grayscale image file I/O: PGM (P2/P5) and 8-bit PNG.
//!
//! Images are kept as real numbers internally; quantization happens only
//! here. Saving clamps to [0, 255] when the data already fits and otherwise
//! rescales min..max to the full range. The applied affine map is returned
//! and recorded (PGM header comment; `<path>.meta.json` sidecar for PNG) so
//! the original range can be recovered.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Affine map `stored = scale * value + offset` applied when saving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub scale: f64,
    pub offset: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn apply(&self, v: f64) -> f64 {
        self.scale * v + self.offset
    }

    pub fn invert(&self, stored: f64) -> f64 {
        (stored - self.offset) / self.scale
    }
}

fn format_err(path: &Path, message: String) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message,
    }
}

/// Load a PGM (P2/P5) or grayscale PNG image.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    match bytes.first() {
        Some(b'P') => load_pgm(path, &bytes),
        Some(0x89) => load_png(path, &bytes),
        _ => Err(format_err(
            path,
            "unsupported format: expected PGM (P2/P5) or PNG".into(),
        )),
    }
}

/// Save an image as PGM (`.pgm`) or PNG (anything else).
///
/// Returns the affine map that was applied before quantization.
pub fn save_image(img: &ImageGrid, path: impl AsRef<Path>) -> Result<AffineMap> {
    let path = path.as_ref();
    let map = choose_map(img);
    let quantized: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| map.apply(v).clamp(0.0, 255.0).round() as u8)
        .collect();
    let is_pgm = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("pgm"))
        .unwrap_or(false);
    if is_pgm {
        save_pgm(img, &quantized, map, path)?;
    } else {
        save_png(img, &quantized, map, path)?;
    }
    Ok(map)
}

fn choose_map(img: &ImageGrid) -> AffineMap {
    let (min, max) = (img.min(), img.max());
    if min >= 0.0 && max <= 255.0 {
        AffineMap::IDENTITY
    } else if max > min {
        let scale = 255.0 / (max - min);
        AffineMap {
            scale,
            offset: -min * scale,
        }
    } else {
        // constant out-of-range image: map it to mid-gray
        AffineMap {
            scale: 0.0,
            offset: 127.0,
        }
    }
}

fn save_pgm(img: &ImageGrid, quantized: &[u8], map: AffineMap, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(quantized.len() + 64);
    writeln!(out, "P5")?;
    writeln!(out, "# affine {} {}", map.scale, map.offset)?;
    writeln!(out, "{} {}", img.width(), img.height())?;
    writeln!(out, "255")?;
    out.extend_from_slice(quantized);
    fs::write(path, out)?;
    Ok(())
}

fn save_png(img: &ImageGrid, quantized: &[u8], map: AffineMap, path: &Path) -> Result<()> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, quantized.to_vec())
        .expect("dimensions match buffer");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    if map != AffineMap::IDENTITY {
        let sidecar = sidecar_path(path);
        fs::write(sidecar, serde_json::to_string_pretty(&map).unwrap())?;
    }
    Ok(())
}

/// Sidecar file documenting the affine map of a PNG save.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}

fn load_png(path: &Path, bytes: &[u8]) -> Result<ImageGrid> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            // only true grayscale is supported; reject color inputs
            if other.color().has_color() {
                return Err(format_err(path, "unsupported format: PNG is not grayscale".into()));
            }
            other.to_luma8()
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray.into_raw().into_iter().map(f64::from).collect();
    ImageGrid::from_vec(w, h, data)
}

/// Tokenizer over a PGM header that tracks line/column for diagnostics.
struct PgmScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    col: usize,
}

impl<'a> PgmScanner<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        PgmScanner {
            bytes,
            pos: 0,
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<u8> {
        let b = *self.bytes.get(self.pos)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn skip_ws_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.bump();
            } else if b == b'#' {
                while let Some(b) = self.bump() {
                    if b == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn at(&self) -> String {
        format!("line {}, column {}", self.line, self.col)
    }

    fn next_uint(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_ws_and_comments();
        let start_at = self.at();
        let mut value: usize = 0;
        let mut digits = 0;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_digit() {
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add((b - b'0') as usize))
                    .ok_or_else(|| format!("{what} overflows at {start_at}"))?;
                digits += 1;
                self.bump();
            } else {
                break;
            }
        }
        if digits == 0 {
            return Err(if self.pos >= self.bytes.len() {
                format!("truncated header: missing {what} at {start_at}")
            } else {
                format!("expected {what} at {start_at}")
            });
        }
        Ok(value)
    }
}

fn load_pgm(path: &Path, bytes: &[u8]) -> Result<ImageGrid> {
    let magic = bytes.get(..2).ok_or_else(|| {
        format_err(path, "truncated header: missing magic number at line 1, column 1".into())
    })?;
    let binary = match magic {
        b"P5" => true,
        b"P2" => false,
        _ => {
            return Err(format_err(
                path,
                format!(
                    "unsupported format: magic {:?} (expected P2 or P5) at line 1, column 1",
                    String::from_utf8_lossy(magic)
                ),
            ))
        }
    };
    let mut sc = PgmScanner::new(bytes);
    sc.bump();
    sc.bump();
    let width = sc.next_uint("width").map_err(|m| format_err(path, m))?;
    let height = sc.next_uint("height").map_err(|m| format_err(path, m))?;
    let maxval = sc.next_uint("maxval").map_err(|m| format_err(path, m))?;
    if width == 0 || height == 0 {
        return Err(format_err(path, format!("invalid dimensions {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(format_err(
            path,
            format!("unsupported maxval {maxval} (only 1..=255) at {}", sc.at()),
        ));
    }
    let n = width * height;
    let data = if binary {
        // exactly one whitespace byte separates the header from raster data
        match sc.bump() {
            Some(b) if b.is_ascii_whitespace() => {}
            _ => {
                return Err(format_err(
                    path,
                    format!("expected whitespace before raster data at {}", sc.at()),
                ))
            }
        }
        let raster = &bytes[sc.pos..];
        if raster.len() < n {
            return Err(format_err(
                path,
                format!(
                    "truncated raster: expected {n} bytes, found {} (offset {})",
                    raster.len(),
                    sc.pos
                ),
            ));
        }
        raster[..n].iter().map(|&b| f64::from(b)).collect()
    } else {
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let v = sc
                .next_uint(&format!("sample {i}"))
                .map_err(|m| format_err(path, m))?;
            if v > maxval {
                return Err(format_err(
                    path,
                    format!("sample {i} = {v} exceeds maxval {maxval} at {}", sc.at()),
                ));
            }
            data.push(v as f64);
        }
        data
    };
    ImageGrid::from_vec(width, height, data)
}
