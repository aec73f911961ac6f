use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    /// All-black image.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    /// Image filled with a single value in every channel.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!("{channels} channels (need 1 or 3)")));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::InvalidImage(format!(
                "value {} at index {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Sets every channel of pixel `(x, y)`; values are clamped into `[0, 1]`.
    pub fn set_pixel(&mut self, x: usize, y: usize, values: &[f64]) {
        let px = self.pixel_mut(x, y);
        for (dst, v) in px.iter_mut().zip(values) {
            *dst = v.clamp(0.0, 1.0);
        }
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_dims(&self, what: &'static str, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                what,
                got_w: self.width,
                got_h: self.height,
                want_w: width,
                want_h: height,
            });
        }
        Ok(())
    }

    /// Copy with every pixel under `mask` set to black.
    pub fn painted_black(&self, mask: &Mask) -> ImageBuffer {
        let mut out = self.clone();
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                let c = self.channels;
                out.data[i * c..(i + 1) * c].fill(0.0);
            }
        }
        out
    }
}

/// Per-pixel metric depth with a validity flag.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Depth map with every pixel invalid.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidDepth { depth });
        }
        Ok(Self {
            width,
            height,
            depth: vec![depth; width * height],
            valid: vec![true; width * height],
        })
    }

    /// Builds a map from raw values; pixels with non-finite or non-positive
    /// depth are marked invalid.
    pub fn from_depths(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if depth.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "depth length {} does not match {width}x{height}",
                depth.len()
            )));
        }
        let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Ok(Self {
            width,
            height,
            depth,
            valid,
        })
    }

    pub fn from_parts(width: usize, height: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        if depth.len() != width * height || valid.len() != width * height {
            return Err(Error::InvalidParameter("depth/valid length mismatch".into()));
        }
        for (i, (&d, &v)) in depth.iter().zip(&valid).enumerate() {
            if v && !(d.is_finite() && d > 0.0) {
                return Err(Error::NonPositiveDepth { index: i, value: d });
            }
        }
        Ok(Self {
            width,
            height,
            depth,
            valid,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn valid_flags(&self) -> &[bool] {
        &self.valid
    }

    /// Depth at `(x, y)` if valid.
    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        self.get(y * self.width + x)
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        if self.valid[index] {
            Some(self.depth[index])
        } else {
            None
        }
    }

    pub fn set(&mut self, index: usize, depth: Option<f64>) {
        match depth {
            Some(d) if d.is_finite() && d > 0.0 => {
                self.depth[index] = d;
                self.valid[index] = true;
            }
            _ => {
                self.depth[index] = 0.0;
                self.valid[index] = false;
            }
        }
    }

    pub fn valid_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.valid.clone(),
        }
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    /// Every valid depth multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Result<DepthMap> {
        let depth = self.depth.iter().map(|d| d * k).collect();
        DepthMap::from_parts(self.width, self.height, depth, self.valid.clone())
    }

    pub(crate) fn check_dims(&self, what: &'static str, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                what,
                got_w: self.width,
                got_h: self.height,
                want_w: width,
                want_h: height,
            });
        }
        Ok(())
    }
}

/// Boolean per-pixel map (dynamic-object masks, occlusion masks, regions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "mask length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn at(&self, index: usize) -> bool {
        self.data[index]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn set_index(&mut self, index: usize, value: bool) {
        self.data[index] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|v| *v)
    }

    pub fn not(&self) -> Mask {
        self.map(|a| !a)
    }

    pub fn and(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        self.zip(other, |a, b| a && !b)
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| !a || *b)
    }

    fn map(&self, f: impl Fn(bool) -> bool) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| f(*v)).collect(),
        }
    }

    fn zip(&self, other: &Mask, f: impl Fn(bool, bool) -> bool) -> Mask {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "mask shape mismatch"
        );
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// 3x3 dilation; pixels outside the frame count as unset.
    pub fn dilate3(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        Mask::from_fn(w, h, |x, y| neighborhood(x, y, w, h).any(|(nx, ny)| self.get(nx, ny)))
    }

    /// 3x3 erosion; pixels outside the frame count as set so that regions
    /// touching the border do not shrink.
    pub fn erode3(&self) -> Mask {
        let (w, h) = (self.width, self.height);
        Mask::from_fn(w, h, |x, y| neighborhood(x, y, w, h).all(|(nx, ny)| self.get(nx, ny)))
    }

    /// Morphological closing with a 3x3 structuring element, evaluated on a
    /// domain padded by one unset pixel so that it stays extensive and
    /// idempotent at the border.
    pub fn close3(&self) -> Mask {
        let (w, h) = (self.width as i64, self.height as i64);
        let dilated = |qx: i64, qy: i64| {
            (qy - 1..=qy + 1).any(|y| {
                (qx - 1..=qx + 1).any(|x| x >= 0 && y >= 0 && x < w && y < h && self.get(x as usize, y as usize))
            })
        };
        Mask::from_fn(self.width, self.height, |x, y| {
            let (x, y) = (x as i64, y as i64);
            (y - 1..=y + 1).all(|qy| (x - 1..=x + 1).all(|qx| dilated(qx, qy)))
        })
    }

    pub(crate) fn check_dims(&self, what: &'static str, width: usize, height: usize) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                what,
                got_w: self.width,
                got_h: self.height,
                want_w: width,
                want_h: height,
            });
        }
        Ok(())
    }
}

/// In-frame 3x3 neighborhood of `(x, y)`, including the pixel itself.
pub(crate) fn neighborhood(x: usize, y: usize, w: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    let x0 = x.saturating_sub(1);
    let y0 = y.saturating_sub(1);
    let x1 = (x + 1).min(w - 1);
    let y1 = (y + 1).min(h - 1);
    (y0..=y1).flat_map(move |ny| (x0..=x1).map(move |nx| (nx, ny)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_intensity() {
        assert!(ImageBuffer::from_vec(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ImageBuffer::from_vec(1, 1, 2, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn depth_from_depths_flags_non_positive() {
        let d = DepthMap::from_depths(3, 1, vec![1.0, 0.0, f64::INFINITY]).unwrap();
        assert_eq!(d.valid_flags(), &[true, false, false]);
        assert!(DepthMap::from_parts(1, 1, vec![-1.0], vec![true]).is_err());
    }

    #[test]
    fn closing_fills_single_pinhole() {
        let mut m = Mask::from_fn(7, 7, |x, y| (1..6).contains(&x) && (1..6).contains(&y));
        m.set(3, 3, false);
        let closed = m.close3();
        assert!(closed.get(3, 3));
        // Closing a convex block leaves it unchanged.
        m.set(3, 3, true);
        assert_eq!(m.close3(), m);
    }

    #[test]
    fn closing_keeps_border_regions() {
        let m = Mask::from_fn(5, 5, |x, _| x < 2);
        assert_eq!(m.close3(), m);
    }
}
