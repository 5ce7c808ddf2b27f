use std::path::Path;

use crate::error::{Error, Result};

/// RGB raster with channel values in `[0, 1]`, stored row-major and
/// channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Screenshot {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Screenshot {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero-area raster {width}x{height}")));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} channel values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        let data = (0..width * height).flat_map(|_| rgb).collect();
        Self::new(width, height, data)
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Reads a PNG or binary PPM file.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))?;
        let rgb = img.to_rgb8();
        Self::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    /// Writes a PNG (or PPM, by extension).
    pub fn save(&self, path: &Path) -> Result<()> {
        let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .ok_or_else(|| Error::InvalidImage("raster buffer size mismatch".into()))?;
        buf.save(path)
            .map_err(|e| Error::InvalidImage(format!("{}: {e}", path.display())))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the intersection of the rectangle with the raster.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, w: i64, h: i64, rgb: [f64; 3]) {
        let xa = x0.clamp(0, self.width as i64) as usize;
        let xb = (x0 + w).clamp(0, self.width as i64) as usize;
        let ya = y0.clamp(0, self.height as i64) as usize;
        let yb = (y0 + h).clamp(0, self.height as i64) as usize;
        for y in ya..yb {
            for x in xa..xb {
                self.set_pixel(x, y, rgb);
            }
        }
    }

    /// Sub-raster clipped to the image; errors when the clip is empty.
    pub fn crop(&self, x0: i64, y0: i64, w: i64, h: i64) -> Result<Self> {
        let xa = x0.clamp(0, self.width as i64) as usize;
        let xb = (x0 + w).clamp(0, self.width as i64) as usize;
        let ya = y0.clamp(0, self.height as i64) as usize;
        let yb = (y0 + h).clamp(0, self.height as i64) as usize;
        if xb <= xa || yb <= ya {
            return Err(Error::InvalidImage(format!("empty crop ({x0},{y0},{w},{h})")));
        }
        let mut data = Vec::with_capacity((xb - xa) * (yb - ya) * 3);
        for y in ya..yb {
            let row = (y * self.width + xa) * 3;
            data.extend_from_slice(&self.data[row..row + (xb - xa) * 3]);
        }
        Self::new(xb - xa, yb - ya, data)
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Bilinear resize to `side`×`side` with half-pixel centers and edge clamping.
pub fn resize_image(img: &Screenshot, side: usize) -> Result<Screenshot> {
    if side == 0 {
        return Err(Error::InvalidImage("target side must be positive".into()));
    }
    if img.width == side && img.height == side {
        return Ok(img.clone());
    }
    let sample = |dst: usize, src_len: usize| -> (usize, usize, f64) {
        let s = ((dst as f64 + 0.5) * src_len as f64 / side as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(src_len - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..side).map(|x| sample(x, img.width)).collect();
    let mut data = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        let (y0, y1, ty) = sample(y, img.height);
        for &(x0, x1, tx) in &cols {
            let p00 = img.pixel(x0, y0);
            let p01 = img.pixel(x1, y0);
            let p10 = img.pixel(x0, y1);
            let p11 = img.pixel(x1, y1);
            for c in 0..3 {
                data.push(lerp(lerp(p00[c], p01[c], tx), lerp(p10[c], p11[c], tx), ty));
            }
        }
    }
    Screenshot::new(side, side, data)
}
