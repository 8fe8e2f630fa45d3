//! Single-channel raster types shared across the pipeline: binary masks,
//! metric depth maps, and semantic label maps. All are row-major with
//! `(x, y)` indexing and carry their own dimensions.

use image::{GrayImage, ImageBuffer, Luma};

/// Binary pixel raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; (width * height) as usize],
        }
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[(y * self.width + x) as usize] = value;
    }

    /// Number of set pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&v| v)
    }

    pub fn same_size(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Coordinates of set pixels in raster order.
    pub fn set_pixels(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }

    pub fn union(&self, other: &Mask) -> Mask {
        assert!(self.same_size(other));
        Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a | b)
                .collect(),
        }
    }

    pub fn intersection(&self, other: &Mask) -> Mask {
        assert!(self.same_size(other));
        Mask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a & b)
                .collect(),
        }
    }

    pub fn complement(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&a| !a).collect(),
        }
    }

    pub fn intersects(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).any(|(&a, &b)| a && b)
    }

    /// True when every set pixel of `self` is also set in `other`.
    pub fn subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Erosion by a `(2r+1)×(2r+1)` square structuring element. Pixels
    /// outside the image count as background, so masks shrink at borders.
    pub fn erode(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let h = self.run_min_horizontal(radius);
        h.run_min_vertical(radius)
    }

    /// Dilation by a `(2r+1)×(2r+1)` square structuring element.
    pub fn dilate(&self, radius: u32) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        self.complement().erode(radius).complement()
    }

    fn run_min_horizontal(&self, radius: u32) -> Mask {
        let r = radius as i64;
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut all = true;
                for dx in -r..=r {
                    let nx = x as i64 + dx;
                    if nx < 0 || nx >= self.width as i64 || !self.get(nx as u32, y) {
                        all = false;
                        break;
                    }
                }
                out.set(x, y, all);
            }
        }
        out
    }

    fn run_min_vertical(&self, radius: u32) -> Mask {
        let r = radius as i64;
        let mut out = Mask::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut all = true;
                for dy in -r..=r {
                    let ny = y as i64 + dy;
                    if ny < 0 || ny >= self.height as i64 || !self.get(x, ny as u32) {
                        all = false;
                        break;
                    }
                }
                out.set(x, y, all);
            }
        }
        out
    }

    /// 4-connected component labeling of set pixels. Returns per-pixel
    /// labels (0 = background, components numbered from 1 in raster order
    /// of their first pixel) and the component count.
    pub fn connected_components(&self) -> (Vec<u32>, usize) {
        let mut labels = vec![0u32; self.data.len()];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let idx = (y * self.width + x) as usize;
                if !self.data[idx] || labels[idx] != 0 {
                    continue;
                }
                next += 1;
                labels[idx] = next;
                stack.push((x, y));
                while let Some((cx, cy)) = stack.pop() {
                    for (nx, ny) in neighbors4(cx, cy, self.width, self.height) {
                        let nidx = (ny * self.width + nx) as usize;
                        if self.data[nidx] && labels[nidx] == 0 {
                            labels[nidx] = next;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
        }
        (labels, next as usize)
    }

    /// Encode as an 8-bit grayscale image (255 = set).
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Decode from an 8-bit grayscale image (any non-zero pixel is set).
    pub fn from_gray(img: &GrayImage) -> Mask {
        Mask::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] != 0)
    }
}

/// 4-neighborhood of `(x, y)` clipped to the image bounds.
pub fn neighbors4(x: u32, y: u32, width: u32, height: u32) -> impl Iterator<Item = (u32, u32)> {
    const OFFS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    OFFS.iter().filter_map(move |&(dx, dy)| {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx >= 0 && ny >= 0 && nx < width as i64 && ny < height as i64 {
            Some((nx as u32, ny as u32))
        } else {
            None
        }
    })
}

/// Metric depth raster in meters; 0 encodes missing depth.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f32) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: f32) {
        self.data[(y * self.width + x) as usize] = value;
    }

    /// True when the pixel carries a measured depth.
    #[inline]
    pub fn is_valid(&self, x: u32, y: u32) -> bool {
        self.get(x, y) > 0.0
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    /// Encode to 16-bit millimeters.
    pub fn to_gray16(&self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        ImageBuffer::from_fn(self.width, self.height, |x, y| {
            let mm = (self.get(x, y) as f64 * 1000.0).round();
            Luma([mm.clamp(0.0, u16::MAX as f64) as u16])
        })
    }

    /// Decode from 16-bit millimeters.
    pub fn from_gray16(img: &ImageBuffer<Luma<u16>, Vec<u16>>) -> DepthMap {
        DepthMap::from_fn(img.width(), img.height(), |x, y| {
            img.get_pixel(x, y)[0] as f32 / 1000.0
        })
    }
}

/// Semantic class-id raster (0 = unlabeled).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    data: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u16) -> Self {
        let mut data = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.data[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u16) {
        self.data[(y * self.width + x) as usize] = value;
    }

    pub fn to_gray16(&self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        ImageBuffer::from_fn(self.width, self.height, |x, y| Luma([self.get(x, y)]))
    }

    pub fn from_gray16(img: &ImageBuffer<Luma<u16>, Vec<u16>>) -> LabelMap {
        LabelMap::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0])
    }
}
