//! Lambertian plus Cook-Torrance reflection model.
//!
//! `f = rho/pi + D*F*G / (4 (n.wo)(n.wi))` with a normalized Blinn-Phong
//! NDF (`e = 2/alpha^2 - 2`), Schlick Fresnel on `h.wi`, and Smith
//! shadowing built from Schlick-GGX terms with `k = alpha^2/2`. The
//! diffuse/specular blend weights are folded into `rho` and `F0`; a channel
//! with `F0 = 0` has zero specular weight, so its lobe (Fresnel tail
//! included) vanishes and the material is purely Lambertian there.

use std::f64::consts::PI;

use crate::math::{channel_mean, reflect, Frame, Rgb, Vec3, INV_PI};

/// Smallest roughness the model evaluates; keeps the lobe exponent finite.
pub const ALPHA_MIN: f64 = 0.02;

/// BRDF parameters at one surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfParams {
    /// Diffuse albedo `rho`.
    pub diffuse: Rgb,
    /// Specular base reflectance `F0`.
    pub specular: Rgb,
    /// Roughness `alpha`, in `[ALPHA_MIN, 1]`.
    pub roughness: f64,
}

impl BrdfParams {
    pub fn new(diffuse: Rgb, specular: Rgb, roughness: f64) -> BrdfParams {
        BrdfParams {
            diffuse,
            specular,
            roughness: roughness.clamp(ALPHA_MIN, 1.0),
        }
    }

    pub fn lambertian(diffuse: Rgb) -> BrdfParams {
        BrdfParams::new(diffuse, Rgb::zeros(), 1.0)
    }

    /// Scales `rho` and `F0` per channel so that `rho + F0 <= 1`.
    pub fn project_energy(&mut self) {
        for c in 0..3 {
            let s = self.diffuse[c] + self.specular[c];
            if s > 1.0 {
                self.diffuse[c] /= s;
                self.specular[c] /= s;
            }
        }
    }

    /// Probability of picking the specular lobe when sampling.
    pub fn specular_probability(&self) -> f64 {
        let md = channel_mean(&self.diffuse).max(0.0);
        let ms = channel_mean(&self.specular).max(0.0);
        if ms == 0.0 {
            0.0
        } else if md == 0.0 {
            1.0
        } else {
            (ms / (md + ms)).clamp(0.1, 0.9)
        }
    }
}

#[inline]
pub fn blinn_exponent(alpha: f64) -> f64 {
    2.0 / (alpha * alpha) - 2.0
}

/// Normalized Blinn-Phong NDF, `(e+2)/(2 pi) cos^e`.
#[inline]
pub fn ndf(cos_h: f64, alpha: f64) -> f64 {
    if cos_h <= 0.0 {
        return 0.0;
    }
    let e = blinn_exponent(alpha);
    (e + 2.0) / (2.0 * PI) * cos_h.powf(e)
}

/// Schlick-GGX single-direction shadowing term.
#[inline]
pub fn smith_g1(cos: f64, alpha: f64) -> f64 {
    let k = 0.5 * alpha * alpha;
    cos / (cos * (1.0 - k) + k)
}

/// Schlick Fresnel per channel, zero where `F0 = 0`.
#[inline]
fn fresnel(f0: &Rgb, tail: f64) -> Rgb {
    f0.map(|f| if f > 0.0 { f + (1.0 - f) * tail } else { 0.0 })
}

#[inline]
fn schlick_tail(cos_d: f64) -> f64 {
    (1.0 - cos_d.clamp(0.0, 1.0)).powi(5)
}

/// Shared pieces of the specular term for one direction pair.
struct Lobe {
    cos_i: f64,
    cos_o: f64,
    cos_h: f64,
    tail: f64,
}

impl Lobe {
    fn new(wi: &Vec3, wo: &Vec3, n: &Vec3) -> Option<Lobe> {
        let cos_i = n.dot(wi);
        let cos_o = n.dot(wo);
        if cos_i <= 0.0 || cos_o <= 0.0 {
            return None;
        }
        let h = (wi + wo).normalize();
        Some(Lobe {
            cos_i,
            cos_o,
            cos_h: n.dot(&h),
            tail: schlick_tail(h.dot(wi)),
        })
    }

    /// `D*G / (4 cos_o cos_i)`.
    fn dg_over_denom(&self, alpha: f64) -> f64 {
        ndf(self.cos_h, alpha) * smith_g1(self.cos_i, alpha) * smith_g1(self.cos_o, alpha)
            / (4.0 * self.cos_i * self.cos_o)
    }
}

/// Evaluates `f(wi, wo)`; zero when either direction is below the horizon.
pub fn eval_brdf(params: &BrdfParams, wi: &Vec3, wo: &Vec3, frame: &Frame) -> Rgb {
    let Some(lobe) = Lobe::new(wi, wo, &frame.normal) else {
        return Rgb::zeros();
    };
    let dg = lobe.dg_over_denom(params.roughness);
    params.diffuse * INV_PI + fresnel(&params.specular, lobe.tail) * dg
}

/// Partial derivatives of [`eval_brdf`] with respect to each parameter.
/// `d_specular` is the derivative for `F0 > 0` (the right derivative at 0).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfDerivatives {
    /// `df_c / d rho_c`, per channel.
    pub d_diffuse: Rgb,
    /// `df_c / d F0_c`, per channel.
    pub d_specular: Rgb,
    /// `df_c / d alpha`, per channel.
    pub d_roughness: Rgb,
}

impl BrdfDerivatives {
    pub fn zero() -> BrdfDerivatives {
        BrdfDerivatives {
            d_diffuse: Rgb::zeros(),
            d_specular: Rgb::zeros(),
            d_roughness: Rgb::zeros(),
        }
    }
}

/// Analytic partials of the BRDF. `alpha` enters through both the lobe
/// exponent `e(alpha)` and the shadowing constant `k(alpha)`.
pub fn brdf_param_derivatives(params: &BrdfParams, wi: &Vec3, wo: &Vec3, frame: &Frame) -> BrdfDerivatives {
    let Some(lobe) = Lobe::new(wi, wo, &frame.normal) else {
        return BrdfDerivatives::zero();
    };
    let alpha = params.roughness;
    let denom = 4.0 * lobe.cos_i * lobe.cos_o;

    let d = ndf(lobe.cos_h, alpha);
    let gi = smith_g1(lobe.cos_i, alpha);
    let go = smith_g1(lobe.cos_o, alpha);

    // dD/dalpha = D * (1/(e+2) + ln cos_h) * de/dalpha, de/dalpha = -4/alpha^3
    let e = blinn_exponent(alpha);
    let de = -4.0 / (alpha * alpha * alpha);
    let dd = if d > 0.0 {
        d * (1.0 / (e + 2.0) + lobe.cos_h.ln()) * de
    } else {
        0.0
    };
    // dG1/dalpha = -c (1-c) / (c + k(1-c))^2 * dk/dalpha, dk/dalpha = alpha
    let k = 0.5 * alpha * alpha;
    let dg1 = |c: f64| {
        let q = c + k * (1.0 - c);
        -c * (1.0 - c) / (q * q) * alpha
    };
    let d_dg = (dd * gi * go + d * dg1(lobe.cos_i) * go + d * gi * dg1(lobe.cos_o)) / denom;

    BrdfDerivatives {
        d_diffuse: Rgb::repeat(INV_PI),
        d_specular: Rgb::repeat((1.0 - lobe.tail) * d * gi * go / denom),
        d_roughness: fresnel(&params.specular, lobe.tail) * d_dg,
    }
}

/// Density of the specular half-vector sampler, expressed over `wi`.
/// The half vector is taken in the normal's hemisphere, which makes the
/// reflection map from half vectors to `wi` injective, so the density
/// integrates to one over the sphere.
fn specular_pdf(alpha: f64, wi: &Vec3, wo: &Vec3, n: &Vec3) -> f64 {
    let sum = wi + wo;
    let len = sum.norm();
    if len < 1e-12 {
        return 0.0;
    }
    let mut h = sum / len;
    if n.dot(&h) < 0.0 {
        h = -h;
    }
    let cos_h = n.dot(&h);
    let wo_h = wo.dot(&h).abs();
    if cos_h <= 0.0 || wo_h <= 0.0 {
        return 0.0;
    }
    ndf(cos_h, alpha) * cos_h / (4.0 * wo_h)
}

/// Mixture density of [`sample_brdf`] for direction `wi`.
pub fn brdf_pdf(params: &BrdfParams, wi: &Vec3, wo: &Vec3, frame: &Frame) -> f64 {
    let ps = params.specular_probability();
    let n = &frame.normal;
    let diffuse = n.dot(wi).max(0.0) * INV_PI;
    let spec = if ps > 0.0 {
        specular_pdf(params.roughness, wi, wo, n)
    } else {
        0.0
    };
    (1.0 - ps) * diffuse + ps * spec
}

#[derive(Clone, Copy, Debug)]
pub struct BrdfSample {
    pub wi: Vec3,
    pub pdf: f64,
    pub value: Rgb,
}

impl BrdfSample {
    /// False for samples that carry no contribution (below the horizon or
    /// zero density).
    pub fn is_useful(&self, frame: &Frame) -> bool {
        self.pdf > 0.0 && frame.normal.dot(&self.wi) > 0.0
    }
}

/// Draws `wi` from the lobe mixture: cosine-weighted diffuse or Blinn-Phong
/// half-vector specular, chosen with `lobe_u`.
pub fn sample_brdf(params: &BrdfParams, wo: &Vec3, frame: &Frame, u: [f64; 2], lobe_u: f64) -> BrdfSample {
    let ps = params.specular_probability();
    let phi = 2.0 * PI * u[1];
    let wi = if lobe_u < ps {
        let e = blinn_exponent(params.roughness);
        let cos_h = u[0].powf(1.0 / (e + 2.0));
        let sin_h = (1.0 - cos_h * cos_h).max(0.0).sqrt();
        let h = frame.to_world(&Vec3::new(sin_h * phi.cos(), sin_h * phi.sin(), cos_h));
        reflect(wo, &h)
    } else {
        let r = u[0].sqrt();
        let z = (1.0 - u[0]).max(0.0).sqrt();
        frame.to_world(&Vec3::new(r * phi.cos(), r * phi.sin(), z))
    };
    let wi = crate::geometry::safe_normalize(wi, frame.normal);
    BrdfSample {
        wi,
        pdf: brdf_pdf(params, &wi, wo, frame),
        value: eval_brdf(params, &wi, wo, frame),
    }
}
