//! Equirectangular environment map.
//!
//! Direction `d` maps to `u = (atan2(d.z, d.x) + pi) / (2 pi)` and
//! `v = acos(d.y) / pi`: +Y is up, `v = 0` is the top row and the seam at
//! `phi = -pi` is `u = 0`. Lookups are bilinear with horizontal wrap and
//! vertical clamp. Importance sampling draws texels proportionally to
//! luminance times texel solid angle, then a point uniform in solid angle
//! inside the texel.

use std::f64::consts::PI;

use crate::math::{luminance, Rgb, Vec3};
use crate::texture::{footprint, Footprint, TexelGrid};

#[derive(Clone, Debug, PartialEq)]
struct SamplingTable {
    /// Row marginal CDF, `height + 1` entries.
    marginal: Vec<f64>,
    /// Per-row conditional CDFs, `height * (width + 1)` entries.
    conditional: Vec<f64>,
    /// Probability of each texel.
    texel_prob: Vec<f64>,
    black: bool,
}

/// Radiance grid (`height` rows by `width` columns, RGB) plus the cached
/// sampling table. Editing `radiance` does not touch the table until
/// [`EnvironmentMap::rebuild_table`] runs, so sampling keeps following the
/// map the table was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvironmentMap {
    pub radiance: TexelGrid,
    table: SamplingTable,
}

#[derive(Clone, Copy, Debug)]
pub struct EnvSample {
    pub dir: Vec3,
    pub pdf: f64,
    pub radiance: Rgb,
}

pub fn direction_to_uv(dir: &Vec3) -> [f64; 2] {
    let u = (dir.z.atan2(dir.x) + PI) / (2.0 * PI);
    let v = dir.y.clamp(-1.0, 1.0).acos() / PI;
    [u, v]
}

pub fn uv_to_direction(uv: [f64; 2]) -> Vec3 {
    let phi = 2.0 * PI * uv[0] - PI;
    let theta = PI * uv[1];
    let s = theta.sin();
    Vec3::new(s * phi.cos(), theta.cos(), s * phi.sin())
}

fn texel_solid_angle(width: usize, height: usize, row: usize) -> f64 {
    let c0 = (PI * row as f64 / height as f64).cos();
    let c1 = (PI * (row + 1) as f64 / height as f64).cos();
    2.0 * PI / width as f64 * (c0 - c1)
}

fn sample_cdf(cdf: &[f64], u: f64) -> (usize, f64) {
    // Largest index with cdf[i] <= u, skipping zero-probability bins.
    let n = cdf.len() - 1;
    let mut i = cdf.partition_point(|&c| c <= u).saturating_sub(1).min(n - 1);
    while i + 1 < n && cdf[i + 1] - cdf[i] == 0.0 {
        i += 1;
    }
    while i > 0 && cdf[i + 1] - cdf[i] == 0.0 {
        i -= 1;
    }
    let span = cdf[i + 1] - cdf[i];
    let t = if span > 0.0 { ((u - cdf[i]) / span).clamp(0.0, 1.0) } else { 0.5 };
    (i, t)
}

impl EnvironmentMap {
    pub fn new(radiance: TexelGrid) -> EnvironmentMap {
        assert_eq!(radiance.channels, 3, "environment maps are RGB");
        let table = SamplingTable::build(&radiance);
        EnvironmentMap { radiance, table }
    }

    pub fn constant(width: usize, height: usize, value: Rgb) -> EnvironmentMap {
        EnvironmentMap::new(TexelGrid::from_fn(width, height, 3, |_, _, c| value[c]))
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(Vec3) -> Rgb) -> EnvironmentMap {
        let mut grid = TexelGrid::new(width, height, 3);
        for j in 0..height {
            for i in 0..width {
                let dir = uv_to_direction([(i as f64 + 0.5) / width as f64, (j as f64 + 0.5) / height as f64]);
                let c = f(dir);
                for k in 0..3 {
                    *grid.get_mut(j * width + i, k) = c[k];
                }
            }
        }
        EnvironmentMap::new(grid)
    }

    pub fn width(&self) -> usize {
        self.radiance.width
    }

    pub fn height(&self) -> usize {
        self.radiance.height
    }

    pub fn rebuild_table(&mut self) {
        self.table = SamplingTable::build(&self.radiance);
    }

    pub fn footprint(&self, dir: &Vec3) -> Footprint {
        footprint(self.width(), self.height(), direction_to_uv(dir), true).0
    }

    pub fn eval(&self, dir: &Vec3) -> Rgb {
        self.radiance.sample_rgb(&self.footprint(dir))
    }

    pub fn pdf(&self, dir: &Vec3) -> f64 {
        if self.table.black {
            return 1.0 / (4.0 * PI);
        }
        let (w, h) = (self.width(), self.height());
        let [u, v] = direction_to_uv(dir);
        let i = ((u * w as f64) as usize).min(w - 1);
        let j = ((v * h as f64) as usize).min(h - 1);
        let p = self.table.texel_prob[j * w + i];
        if p == 0.0 {
            0.0
        } else {
            p / texel_solid_angle(w, h, j)
        }
    }

    pub fn sample(&self, u: [f64; 2]) -> EnvSample {
        let dir = if self.table.black {
            let z = 1.0 - 2.0 * u[0];
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = 2.0 * PI * u[1];
            Vec3::new(r * phi.cos(), z, r * phi.sin())
        } else {
            let (w, h) = (self.width(), self.height());
            let (row, tv) = sample_cdf(&self.table.marginal, u[0]);
            let cond = &self.table.conditional[row * (w + 1)..(row + 1) * (w + 1)];
            let (col, tu) = sample_cdf(cond, u[1]);
            let phi = 2.0 * PI * (col as f64 + tu) / w as f64 - PI;
            let c0 = (PI * row as f64 / h as f64).cos();
            let c1 = (PI * (row + 1) as f64 / h as f64).cos();
            let cos_t = c0 + (c1 - c0) * tv;
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            Vec3::new(sin_t * phi.cos(), cos_t, sin_t * phi.sin())
        };
        EnvSample {
            dir,
            pdf: self.pdf(&dir),
            radiance: self.eval(&dir),
        }
    }

    /// Row marginal CDF; exposed for table checks.
    pub fn marginal_cdf(&self) -> &[f64] {
        &self.table.marginal
    }

    pub fn is_black(&self) -> bool {
        self.table.black
    }

    /// Resamples to a new resolution by bilinear lookup at the new texel
    /// centers. Same-size requests return an exact copy.
    pub fn resample(&self, width: usize, height: usize) -> EnvironmentMap {
        if (width, height) == (self.width(), self.height()) {
            return self.clone();
        }
        EnvironmentMap::from_fn(width, height, |d| self.eval(&d))
    }

    /// Integral of the (bilinear) radiance over the sphere, by midpoint
    /// quadrature on a `k`-times refined grid.
    pub fn integral(&self, refine: usize) -> Rgb {
        let (w, h) = (self.width() * refine, self.height() * refine);
        let mut acc = Rgb::zeros();
        for j in 0..h {
            let dw = texel_solid_angle(w, h, j);
            for i in 0..w {
                let d = uv_to_direction([(i as f64 + 0.5) / w as f64, (j as f64 + 0.5) / h as f64]);
                acc += self.eval(&d) * dw;
            }
        }
        acc
    }
}

impl SamplingTable {
    fn build(radiance: &TexelGrid) -> SamplingTable {
        let (w, h) = (radiance.width, radiance.height);
        let mut weights = vec![0.0; w * h];
        for j in 0..h {
            let dw = texel_solid_angle(w, h, j);
            for i in 0..w {
                let t = radiance.texel(j * w + i);
                let lum = luminance(&Rgb::new(t[0], t[1], t[2]));
                weights[j * w + i] = if lum.is_finite() && lum > 0.0 { lum * dw } else { 0.0 };
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return SamplingTable {
                marginal: (0..=h).map(|j| j as f64 / h as f64).collect(),
                conditional: (0..h).flat_map(|_| (0..=w).map(move |i| i as f64 / w as f64)).collect(),
                texel_prob: vec![0.0; w * h],
                black: true,
            };
        }
        let mut marginal = Vec::with_capacity(h + 1);
        let mut conditional = Vec::with_capacity(h * (w + 1));
        let mut texel_prob = vec![0.0; w * h];
        marginal.push(0.0);
        let mut acc_rows = 0.0;
        for j in 0..h {
            let row = &weights[j * w..(j + 1) * w];
            let row_sum: f64 = row.iter().sum();
            conditional.push(0.0);
            let mut acc = 0.0;
            for (i, &x) in row.iter().enumerate() {
                acc += x;
                conditional.push(if row_sum > 0.0 { acc / row_sum } else { (i + 1) as f64 / w as f64 });
                texel_prob[j * w + i] = x / total;
            }
            *conditional.last_mut().unwrap() = 1.0;
            acc_rows += row_sum;
            marginal.push(acc_rows / total);
        }
        *marginal.last_mut().unwrap() = 1.0;
        SamplingTable {
            marginal,
            conditional,
            texel_prob,
            black: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_dir(rng: &mut impl Rng) -> Vec3 {
        uv_to_direction([rng.gen(), rng.gen()])
    }

    fn random_env(rng: &mut impl Rng, w: usize, h: usize) -> EnvironmentMap {
        EnvironmentMap::new(TexelGrid::from_fn(w, h, 3, |_, _, _| rng.gen::<f64>() * 2.0))
    }

    #[test]
    fn constant_map_is_constant_with_uniform_pdf() {
        let env = EnvironmentMap::constant(64, 32, Rgb::new(0.3, 0.5, 0.7));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..2000 {
            let d = random_dir(&mut rng);
            assert!((env.eval(&d) - Rgb::new(0.3, 0.5, 0.7)).amax() < 1e-12);
            let s = env.sample([rng.gen(), rng.gen()]);
            assert!((s.pdf - 1.0 / (4.0 * PI)).abs() < 1e-6);
        }
    }

    #[test]
    fn up_maps_to_top_row() {
        let env = EnvironmentMap::new(TexelGrid::from_fn(8, 4, 3, |_, j, _| j as f64));
        assert_eq!(direction_to_uv(&Vec3::y())[1], 0.0);
        assert_eq!(env.eval(&Vec3::y()), Rgb::zeros());
        assert_eq!(env.eval(&-Vec3::y()), Rgb::repeat(3.0));
    }

    #[test]
    fn eval_matches_direct_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, h) = (16usize, 8usize);
        let env = random_env(&mut rng, w, h);
        for _ in 0..2000 {
            let d = random_dir(&mut rng);
            let phi = d.z.atan2(d.x);
            let theta = d.y.clamp(-1.0, 1.0).acos();
            let x = (phi + PI) / (2.0 * PI) * w as f64 - 0.5;
            let y = (theta / PI * h as f64 - 0.5).clamp(0.0, (h - 1) as f64);
            let i0 = x.floor();
            let tx = x - i0;
            let i0 = (i0 as i64).rem_euclid(w as i64) as usize;
            let i1 = (i0 + 1) % w;
            let j0 = (y.floor() as usize).min(h - 2);
            let ty = y - j0 as f64;
            let at = |i: usize, j: usize| {
                let t = env.radiance.texel(j * w + i);
                Rgb::new(t[0], t[1], t[2])
            };
            let direct = at(i0, j0) * (1.0 - tx) * (1.0 - ty)
                + at(i1, j0) * tx * (1.0 - ty)
                + at(i0, j0 + 1) * (1.0 - tx) * ty
                + at(i1, j0 + 1) * tx * ty;
            assert!((env.eval(&d) - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn texel_center_footprint_and_wrap() {
        let env = EnvironmentMap::constant(8, 4, Rgb::repeat(1.0));
        let d = uv_to_direction([2.5 / 8.0, 1.5 / 4.0]);
        let fp = env.footprint(&d);
        let max = fp.weights.iter().cloned().fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        assert_eq!(fp.texels[fp.weights.iter().position(|&w| w == max).unwrap()], 8 + 2);

        let d = uv_to_direction([1e-4, 1.5 / 4.0]);
        let fp = env.footprint(&d);
        assert_eq!(fp.texels[0], 8 + 7, "u just above 0 wraps to the last column");
        assert_eq!(fp.texels[1], 8);
    }

    #[test]
    fn single_bright_texel_captures_samples() {
        let (w, h) = (64, 32);
        let mut grid = TexelGrid::new(w, h, 3);
        let target = 10 * w + 20;
        for c in 0..3 {
            *grid.get_mut(target, c) = 5.0;
        }
        let env = EnvironmentMap::new(grid);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut inside = 0;
        for _ in 0..10_000 {
            let s = env.sample([rng.gen(), rng.gen()]);
            let [u, v] = direction_to_uv(&s.dir);
            let i = (u * w as f64) as usize;
            let j = (v * h as f64) as usize;
            inside += (j * w + i == target) as usize;
        }
        assert!(inside >= 9_900, "{inside}");
    }

    #[test]
    fn estimator_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let env = random_env(&mut rng, 64, 32);
        let reference = env.integral(4);
        let n = 100_000;
        let mut sum = Rgb::zeros();
        let mut sq = Rgb::zeros();
        for _ in 0..n {
            let s = env.sample([rng.gen(), rng.gen()]);
            let x = s.radiance / s.pdf;
            sum += x;
            sq += x.component_mul(&x);
        }
        let mean = sum / n as f64;
        for c in 0..3 {
            let var = sq[c] / n as f64 - mean[c] * mean[c];
            let se = (var / n as f64).sqrt();
            assert!((mean[c] - reference[c]).abs() < 3.0 * se + 1e-9, "{} vs {} (se {})", mean[c], reference[c], se);
        }
    }

    #[test]
    fn marginals_normalized_and_black_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let env = random_env(&mut rng, 64, 32);
        assert!((env.marginal_cdf().last().unwrap() - 1.0).abs() < 1e-9);
        let black = EnvironmentMap::constant(8, 4, Rgb::zeros());
        assert!(black.is_black());
        let s = black.sample([0.3, 0.7]);
        assert!((s.pdf - 1.0 / (4.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn rebuild_restores_table_without_changing_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut env = random_env(&mut rng, 16, 8);
        env.radiance.map_inplace(|v| v * 3.0);
        let d = Vec3::new(0.3, 0.4, -0.2).normalize();
        let before = env.eval(&d);
        env.rebuild_table();
        assert_eq!(env.eval(&d), before);
        assert!((env.marginal_cdf().last().unwrap() - 1.0).abs() < 1e-9);
    }
}
