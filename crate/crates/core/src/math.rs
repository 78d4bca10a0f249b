//! Small vector helpers shared across the crate.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;
/// Linear RGB triple.
pub type Rgb = Vector3<f64>;

pub const INV_PI: f64 = std::f64::consts::FRAC_1_PI;

#[inline]
pub fn luminance(c: &Rgb) -> f64 {
    0.2126 * c.x + 0.7152 * c.y + 0.0722 * c.z
}

#[inline]
pub fn channel_mean(c: &Rgb) -> f64 {
    (c.x + c.y + c.z) / 3.0
}

/// Orthonormal, right-handed shading frame (`tangent x bitangent = normal`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub normal: Vec3,
    pub tangent: Vec3,
    pub bitangent: Vec3,
}

impl Frame {
    /// Builds a frame around a unit normal (Duff et al. branchless basis).
    pub fn from_normal(n: Vec3) -> Frame {
        let sign = 1.0f64.copysign(n.z);
        let a = -1.0 / (sign + n.z);
        let b = n.x * n.y * a;
        let tangent = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
        let bitangent = Vec3::new(b, sign + n.y * n.y * a, -n.y);
        Frame {
            normal: n,
            tangent,
            bitangent,
        }
    }

    #[inline]
    pub fn to_local(&self, v: &Vec3) -> Vec3 {
        Vec3::new(v.dot(&self.tangent), v.dot(&self.bitangent), v.dot(&self.normal))
    }

    #[inline]
    pub fn to_world(&self, v: &Vec3) -> Vec3 {
        self.tangent * v.x + self.bitangent * v.y + self.normal * v.z
    }
}

#[inline]
pub fn reflect(v: &Vec3, n: &Vec3) -> Vec3 {
    2.0 * v.dot(n) * n - v
}

/// Power heuristic with exponent 2.
#[inline]
pub fn power_heuristic(pdf_a: f64, pdf_b: f64) -> f64 {
    let a2 = pdf_a * pdf_a;
    let b2 = pdf_b * pdf_b;
    if a2 + b2 == 0.0 {
        0.0
    } else {
        a2 / (a2 + b2)
    }
}
