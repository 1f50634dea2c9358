//! Grayscale pixel grids and the preprocessing applied to dataset images.

use std::path::Path;

use crate::error::{Result, SnnError};

/// Row-major grayscale image with intensities in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct PixelGrid {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl PixelGrid {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), width * height);
        Self { width, height, pixels }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }

    pub fn validate(&self) -> Result<()> {
        match self.pixels.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            Some((index, &value)) => Err(SnnError::PixelRange { index, value }),
            None => Ok(()),
        }
    }

    /// Quarter turn counter-clockwise.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut out = Self::zeros(h, w);
        for y in 0..h {
            for x in 0..w {
                out.set(y, w - 1 - x, self.get(x, y));
            }
        }
        out
    }

    pub fn rotate(&self, quarter_turns: usize) -> Self {
        (0..quarter_turns % 4).fold(self.clone(), |img, _| img.rotate90())
    }

    pub fn invert(&self) -> Self {
        Self::new(self.width, self.height, self.pixels.iter().map(|v| 1.0 - v).collect())
    }

    /// Bilinear resampling with pixel-centre alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let mut out = Self::zeros(width, height);
        for y in 0..height {
            let fy = ((y as f32 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f32;
            for x in 0..width {
                let fx = ((x as f32 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f32;
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bot = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                out.set(x, y, (top * (1.0 - ty) + bot * ty).clamp(0.0, 1.0));
            }
        }
        out
    }

    /// Decodes any supported raster file as 8-bit luminance scaled to [0, 1].
    pub fn load(path: &Path) -> Result<Self> {
        let img = ::image::open(path).map_err(|e| SnnError::Ingest {
            path: path.to_path_buf(),
            reason: format!("cannot decode image: {e}"),
        })?;
        let gray = img.to_luma8();
        let (w, h) = gray.dimensions();
        let pixels = gray.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
        Ok(Self::new(w as usize, h as usize, pixels))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let buf = ::image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer matches dimensions");
        buf.save(path).map_err(|e| SnnError::Ingest {
            path: path.to_path_buf(),
            reason: format!("cannot encode image: {e}"),
        })
    }
}
