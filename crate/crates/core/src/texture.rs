//! Texel grids and bilinear footprints.
//!
//! Texel `(i, j)` has its center at `((i + 0.5) / W, (j + 0.5) / H)` and
//! linear index `j * W + i`.

use crate::math::Rgb;
use crate::reflectance::{BrdfParams, ALPHA_MIN};

/// Dense row-major grid of `channels` values per texel.
#[derive(Clone, Debug, PartialEq)]
pub struct TexelGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl TexelGrid {
    pub fn new(width: usize, height: usize, channels: usize) -> TexelGrid {
        TexelGrid::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> TexelGrid {
        TexelGrid {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_fn(width: usize, height: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> TexelGrid {
        let mut g = TexelGrid::new(width, height, channels);
        for j in 0..height {
            for i in 0..width {
                for c in 0..channels {
                    g.data[(j * width + i) * channels + c] = f(i, j, c);
                }
            }
        }
        g
    }

    pub fn num_texels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, texel: usize, channel: usize) -> f64 {
        self.data[texel * self.channels + channel]
    }

    #[inline]
    pub fn get_mut(&mut self, texel: usize, channel: usize) -> &mut f64 {
        &mut self.data[texel * self.channels + channel]
    }

    pub fn texel(&self, texel: usize) -> &[f64] {
        &self.data[texel * self.channels..(texel + 1) * self.channels]
    }

    /// Bilinear sample of one channel.
    pub fn sample(&self, fp: &Footprint, channel: usize) -> f64 {
        (0..4).map(|k| fp.weights[k] * self.get(fp.texels[k], channel)).sum()
    }

    /// Bilinear RGB sample (requires three channels).
    pub fn sample_rgb(&self, fp: &Footprint) -> Rgb {
        let mut out = Rgb::zeros();
        for k in 0..4 {
            let w = fp.weights[k];
            if w != 0.0 {
                let t = self.texel(fp.texels[k]);
                out += Rgb::new(t[0], t[1], t[2]) * w;
            }
        }
        out
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Rounds every value to `f32` precision so that storage in 32-bit
    /// image files is lossless.
    pub fn quantize_f32(&mut self) {
        self.map_inplace(|v| v as f32 as f64);
    }

    pub fn same_shape(&self, other: &TexelGrid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }
}

/// Four texels and their bilinear weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub texels: [usize; 4],
    pub weights: [f64; 4],
}

/// Bilinear footprint of `uv` on a `width x height` grid. Columns wrap when
/// `wrap_x` is set and clamp otherwise; rows always clamp. The second value
/// reports whether `uv` lay outside `[0,1]^2` and was clamped.
pub fn footprint(width: usize, height: usize, uv: [f64; 2], wrap_x: bool) -> (Footprint, bool) {
    let mut u = uv[0];
    let mut v = uv[1];
    let mut clamped = false;
    if !wrap_x && !(0.0..=1.0).contains(&u) {
        u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        clamped = true;
    }
    if !(0.0..=1.0).contains(&v) {
        v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        clamped = true;
    }
    let x = u * width as f64 - 0.5;
    let y = v * height as f64 - 0.5;
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as i64, y0 as i64);
    let w = width as i64;
    let h = height as i64;
    let col = |i: i64| -> usize {
        if wrap_x {
            i.rem_euclid(w) as usize
        } else {
            i.clamp(0, w - 1) as usize
        }
    };
    let row = |j: i64| -> usize { j.clamp(0, h - 1) as usize };
    let (c0, c1) = (col(x0), col(x0 + 1));
    let (r0, r1) = (row(y0), row(y0 + 1));
    let width = width as usize;
    (
        Footprint {
            texels: [r0 * width + c0, r0 * width + c1, r1 * width + c0, r1 * width + c1],
            weights: [
                (1.0 - fx) * (1.0 - fy),
                fx * (1.0 - fy),
                (1.0 - fx) * fy,
                fx * fy,
            ],
        },
        clamped,
    )
}

/// The three optimizable reflectance maps: diffuse albedo (RGB), specular
/// F0 (RGB) and roughness (scalar), all at the same resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectanceMaps {
    pub diffuse: TexelGrid,
    pub specular: TexelGrid,
    pub roughness: TexelGrid,
}

/// Reflectance looked up at a surface point.
#[derive(Clone, Copy, Debug)]
pub struct ShadingParams {
    pub brdf: BrdfParams,
    /// True when the interpolated roughness was raised to `ALPHA_MIN` or
    /// lowered to 1, so it has no derivative with respect to texels.
    pub roughness_clamped: bool,
}

impl ReflectanceMaps {
    pub fn uniform(resolution: usize, diffuse: Rgb, specular: Rgb, roughness: f64) -> ReflectanceMaps {
        let rgb = |c: Rgb| TexelGrid::from_fn(resolution, resolution, 3, |_, _, k| c[k]);
        ReflectanceMaps {
            diffuse: rgb(diffuse),
            specular: rgb(specular),
            roughness: TexelGrid::filled(resolution, resolution, 1, roughness),
        }
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.diffuse.width, self.diffuse.height)
    }

    pub fn footprint(&self, uv: [f64; 2]) -> (Footprint, bool) {
        footprint(self.diffuse.width, self.diffuse.height, uv, false)
    }

    pub fn lookup(&self, fp: &Footprint) -> ShadingParams {
        let raw = self.roughness.sample(fp, 0);
        let roughness = raw.clamp(ALPHA_MIN, 1.0);
        ShadingParams {
            brdf: BrdfParams {
                diffuse: self.diffuse.sample_rgb(fp),
                specular: self.specular.sample_rgb(fp),
                roughness,
            },
            roughness_clamped: roughness != raw,
        }
    }

    pub fn quantize_f32(&mut self) {
        self.diffuse.quantize_f32();
        self.specular.quantize_f32();
        self.roughness.quantize_f32();
    }
}
