//! In-memory images and the spatial primitives shared by the filters.

use crate::par;

/// Channel weights of the luminance used by the contrast filter.
pub const LUMA_WEIGHTS: [f64; 3] = [0.27, 0.67, 0.06];

/// An RGB image with `f64` channels, stored row-major as pixel triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    height: usize,
    width: usize,
    data: Vec<[f64; 3]>,
}

/// A single-channel `f64` map with the dimensions of the image it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayF {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageF {
    /// Wraps a pixel buffer. Panics if the dimensions are zero or do not
    /// match the buffer length.
    pub fn new(height: usize, width: usize, data: Vec<[f64; 3]>) -> Self {
        assert!(height >= 1 && width >= 1, "image dimensions must be positive");
        assert_eq!(data.len(), height * width, "pixel buffer length mismatch");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, px: [f64; 3]) -> Self {
        Self::new(height, width, vec![px; height * width])
    }

    pub fn from_fn<F>(height: usize, width: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> [f64; 3] + Sync + Send,
    {
        assert!(height >= 1 && width >= 1, "image dimensions must be positive");
        let mut data = vec![[0.0; 3]; height * width];
        par::for_each_row_mut(&mut data, width, |y, row| {
            for (x, px) in row.iter_mut().enumerate() {
                *px = f(y, x);
            }
        });
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<[f64; 3]> {
        self.data
    }

    pub fn get(&self, y: usize, x: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, px: [f64; 3]) {
        self.data[y * self.width + x] = px;
    }

    pub fn row(&self, y: usize) -> &[[f64; 3]] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Applies `f` to every pixel.
    pub fn map<F>(&self, f: F) -> ImageF
    where
        F: Fn([f64; 3]) -> [f64; 3] + Sync + Send,
    {
        let mut data = self.data.clone();
        par::for_each_row_mut(&mut data, self.width, |_, row| {
            for px in row.iter_mut() {
                *px = f(*px);
            }
        });
        Self::new(self.height, self.width, data)
    }

    /// Combines two images of equal size pixel by pixel.
    pub fn zip_map<F>(&self, other: &ImageF, f: F) -> ImageF
    where
        F: Fn([f64; 3], [f64; 3]) -> [f64; 3] + Sync + Send,
    {
        assert_eq!(self.dims(), other.dims(), "image dimensions differ");
        let mut data = self.data.clone();
        par::for_each_row_mut(&mut data, self.width, |y, row| {
            for (px, q) in row.iter_mut().zip(other.row(y)) {
                *px = f(*px, *q);
            }
        });
        Self::new(self.height, self.width, data)
    }

    pub fn clamp01(&self) -> ImageF {
        self.map(|p| p.map(|v| v.clamp(0.0, 1.0)))
    }

    pub fn channel(&self, c: usize) -> GrayF {
        GrayF::new(
            self.height,
            self.width,
            self.data.iter().map(|p| p[c]).collect(),
        )
    }

    pub fn from_channels(r: &GrayF, g: &GrayF, b: &GrayF) -> ImageF {
        assert!(r.dims() == g.dims() && g.dims() == b.dims());
        let data = r
            .data
            .iter()
            .zip(&g.data)
            .zip(&b.data)
            .map(|((&r, &g), &b)| [r, g, b])
            .collect();
        ImageF::new(r.height, r.width, data)
    }

    /// Mean squared error over all channel values.
    pub fn mse(&self, other: &ImageF) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image dimensions differ");
        let total = par::sum_rows(self.height, |y| {
            self.row(y)
                .iter()
                .zip(other.row(y))
                .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
                .sum()
        });
        total / (3 * self.len()) as f64
    }

    pub fn max_abs_diff(&self, other: &ImageF) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image dimensions differ");
        self.data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }

    /// Inner product of all channel values.
    pub fn dot(&self, other: &ImageF) -> f64 {
        assert_eq!(self.dims(), other.dims(), "image dimensions differ");
        par::sum_rows(self.height, |y| {
            self.row(y)
                .iter()
                .zip(other.row(y))
                .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
                .sum()
        })
    }
}

impl GrayF {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert!(height >= 1 && width >= 1, "image dimensions must be positive");
        assert_eq!(data.len(), height * width, "buffer length mismatch");
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, v: f64) -> Self {
        Self::new(height, width, vec![v; height * width])
    }

    pub fn from_fn<F>(height: usize, width: usize, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        assert!(height >= 1 && width >= 1, "image dimensions must be positive");
        let mut data = vec![0.0; height * width];
        par::for_each_row_mut(&mut data, width, |y, row| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = f(y, x);
            }
        });
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map<F>(&self, f: F) -> GrayF
    where
        F: Fn(f64) -> f64 + Sync + Send,
    {
        let mut data = self.data.clone();
        par::for_each_row_mut(&mut data, self.width, |_, row| {
            for v in row.iter_mut() {
                *v = f(*v);
            }
        });
        Self::new(self.height, self.width, data)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-pixel luminance `0.27 r + 0.67 g + 0.06 b`.
pub fn luminance(img: &ImageF) -> GrayF {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    GrayF::from_fn(img.height, img.width, |y, x| {
        let [r, g, b] = img.get(y, x);
        wr * r + wg * g + wb * b
    })
}

/// Per-pixel minimum over the three channels.
pub fn channel_min(img: &ImageF) -> GrayF {
    GrayF::new(
        img.height,
        img.width,
        img.data.iter().map(|p| p[0].min(p[1]).min(p[2])).collect(),
    )
}

/// Minimum over the `(2r+1)²` window centred on each pixel. Windows are
/// clipped at the image border; no padding value is introduced.
pub fn patch_min(gray: &GrayF, radius: usize) -> GrayF {
    if radius == 0 {
        return gray.clone();
    }
    let (h, w) = gray.dims();
    // The window is a rectangle, so the 2-D minimum separates into rows then columns.
    let mut rows = vec![0.0; h * w];
    par::for_each_row_mut(&mut rows, w, |y, out| {
        let src = gray.row(y);
        for (x, o) in out.iter_mut().enumerate() {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            *o = src[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
        }
    });
    let mut out = vec![0.0; h * w];
    par::for_each_row_mut(&mut out, w, |y, out_row| {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        out_row.copy_from_slice(&rows[lo * w..(lo + 1) * w]);
        for yy in lo + 1..=hi {
            for (o, &v) in out_row.iter_mut().zip(&rows[yy * w..(yy + 1) * w]) {
                *o = o.min(v);
            }
        }
    });
    GrayF::new(h, w, out)
}

/// Bilinear resampling with half-pixel centres and edge clamping.
/// Resizing to the input dimensions returns the input unchanged.
pub fn bilinear_resize(img: &ImageF, out_h: usize, out_w: usize) -> ImageF {
    assert!(out_h >= 1 && out_w >= 1, "output dimensions must be positive");
    if img.dims() == (out_h, out_w) {
        return img.clone();
    }
    let ys = sample_positions(img.height, out_h);
    let xs = sample_positions(img.width, out_w);
    ImageF::from_fn(out_h, out_w, |y, x| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let p00 = img.get(y0, x0);
        let p01 = img.get(y0, x1);
        let p10 = img.get(y1, x0);
        let p11 = img.get(y1, x1);
        std::array::from_fn(|c| {
            let top = p00[c] + (p01[c] - p00[c]) * fx;
            let bottom = p10[c] + (p11[c] - p10[c]) * fx;
            top + (bottom - top) * fy
        })
    })
}

fn sample_positions(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Normalized 1-D Gaussian taps for offsets `-R..=R`, `R = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Half-sample symmetric reflection (`-1 -> 0`, `n -> n-1`), periodic with
/// period `2n` so any offset maps inside `0..n`.
pub fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with reflected borders.
///
/// With a symmetric kernel and half-sample reflection the blur operator is
/// a symmetric matrix, so this function is also its own adjoint.
pub fn gaussian_blur(img: &ImageF, sigma: f64) -> ImageF {
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as isize;
    let (h, w) = img.dims();
    // Source index of every (position, tap) pair along one axis.
    let offsets = |n: usize| -> Vec<usize> {
        (0..n as isize)
            .flat_map(|i| (-radius..=radius).map(move |k| reflect_index(i + k, n)))
            .collect()
    };
    let cols = offsets(w);
    let rows = offsets(h);
    let nt = taps.len();

    let mut horiz = vec![[0.0; 3]; h * w];
    par::for_each_row_mut(&mut horiz, w, |y, out| {
        let src = img.row(y);
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = [0.0; 3];
            for (&wt, &xx) in taps.iter().zip(&cols[x * nt..(x + 1) * nt]) {
                let p = src[xx];
                acc[0] += wt * p[0];
                acc[1] += wt * p[1];
                acc[2] += wt * p[2];
            }
            *o = acc;
        }
    });

    let mut out = vec![[0.0; 3]; h * w];
    par::for_each_row_mut(&mut out, w, |y, out_row| {
        for (&wt, &yy) in taps.iter().zip(&rows[y * nt..(y + 1) * nt]) {
            for (o, p) in out_row.iter_mut().zip(&horiz[yy * w..(yy + 1) * w]) {
                o[0] += wt * p[0];
                o[1] += wt * p[1];
                o[2] += wt * p[2];
            }
        }
    });
    ImageF::new(h, w, out)
}
