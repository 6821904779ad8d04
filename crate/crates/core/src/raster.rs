//! 8-bit RGB rasters and the netpbm formats used for image input (P6) and
//! mask output (P4).

use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid raster: {0}")]
    Invalid(String),
    #[error("malformed netpbm data: {0}")]
    Format(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, RasterError>;

/// Row-major RGB image, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(RasterError::Invalid(format!("empty raster {width}x{height}")));
        }
        if pixels.len() != 3 * width * height {
            return Err(RasterError::Invalid(format!(
                "{} bytes for a {width}x{height} RGB raster",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, rgb.repeat(width * height))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// Parses binary PPM (P6) with maxval 255.
    pub fn from_ppm(data: &[u8]) -> Result<Self> {
        let mut header = HeaderReader { data, pos: 0 };
        if header.token()? != "P6" {
            return Err(RasterError::Format("not a binary PPM (P6)".into()));
        }
        let width = header.number()?;
        let height = header.number()?;
        let maxval = header.number()?;
        if maxval != 255 {
            return Err(RasterError::Format(format!("unsupported maxval {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = header.pos + 1;
        let len = 3 * width * height;
        let body = data
            .get(start..start + len)
            .ok_or_else(|| RasterError::Format("truncated pixel data".into()))?;
        Self::new(width, height, body.to_vec())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = fs::read(path).map_err(|source| RasterError::Io { path: path.display().to_string(), source })?;
        Self::from_ppm(&data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ppm()).map_err(|source| RasterError::Io { path: path.display().to_string(), source })
    }
}

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn token(&mut self) -> Result<String> {
        loop {
            match self.data.get(self.pos) {
                Some(b'#') => {
                    while self.data.get(self.pos).is_some_and(|&c| c != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(RasterError::Format("truncated header".into())),
            }
        }
        let start = self.pos;
        while self.data.get(self.pos).is_some_and(|c| !c.is_ascii_whitespace()) {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.data[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| RasterError::Format(format!("bad header number `{t}`")))
    }
}

/// Encodes a binary mask as PBM (P4); set pixels are written as black (1).
pub fn to_pbm(width: usize, height: usize, bits: &[bool]) -> Vec<u8> {
    let mut out = format!("P4\n{width} {height}\n").into_bytes();
    let row_bytes = width.div_ceil(8);
    for y in 0..height {
        let mut row = vec![0u8; row_bytes];
        for x in 0..width {
            if bits[y * width + x] {
                row[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&row);
    }
    out
}
