//! Image files: OpenEXR for linear data, Radiance HDR for input skies, PNG
//! for previews.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};

use crate::lighting::EnvironmentMap;
use crate::optim::Theta;
use crate::texture::{ReflectanceMaps, TexelGrid};
use crate::{Error, Result};

fn to_rgb32f(grid: &TexelGrid) -> ImageBuffer<Rgb<f32>, Vec<f32>> {
    ImageBuffer::from_fn(grid.width as u32, grid.height as u32, |x, y| {
        let t = grid.texel(y as usize * grid.width + x as usize);
        let c = |k: usize| t[k.min(grid.channels - 1)] as f32;
        Rgb([c(0), c(1), c(2)])
    })
}

/// Writes a 1- or 3-channel grid as an RGB float EXR (single-channel grids
/// are replicated into all three channels).
pub fn write_exr(grid: &TexelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    DynamicImage::ImageRgb32F(to_rgb32f(grid)).save_with_format(path, ImageFormat::OpenExr)?;
    Ok(())
}

/// Reads an EXR or HDR file into a grid with `channels` channels (1 keeps
/// the first channel).
pub fn read_linear(path: impl AsRef<Path>, channels: usize) -> Result<TexelGrid> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    let img = image::open(path)?.into_rgb32f();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(TexelGrid::from_fn(w, h, channels, |i, j, c| img.get_pixel(i as u32, j as u32)[c] as f64))
}

/// Writes a display preview: `exposure` scale, clamp, gamma 2.2.
pub fn write_png(grid: &TexelGrid, exposure: f64, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ensure_parent(path)?;
    let img = ImageBuffer::from_fn(grid.width as u32, grid.height as u32, |x, y| {
        let t = grid.texel(y as usize * grid.width + x as usize);
        let c = |k: usize| {
            let v = (t[k.min(grid.channels - 1)] * exposure).clamp(0.0, 1.0);
            (v.powf(1.0 / 2.2) * 255.0).round() as u8
        };
        Rgb([c(0), c(1), c(2)])
    });
    DynamicImage::ImageRgb8(img).save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub const DIFFUSE_FILE: &str = "diffuse.exr";
pub const SPECULAR_FILE: &str = "specular.exr";
pub const ROUGHNESS_FILE: &str = "roughness.exr";
pub const ENV_FILE: &str = "env.exr";

pub fn save_maps(maps: &ReflectanceMaps, dir: &Path) -> Result<()> {
    write_exr(&maps.diffuse, dir.join(DIFFUSE_FILE))?;
    write_exr(&maps.specular, dir.join(SPECULAR_FILE))?;
    write_exr(&maps.roughness, dir.join(ROUGHNESS_FILE))
}

pub fn load_maps(dir: &Path) -> Result<ReflectanceMaps> {
    let maps = ReflectanceMaps {
        diffuse: read_linear(dir.join(DIFFUSE_FILE), 3)?,
        specular: read_linear(dir.join(SPECULAR_FILE), 3)?,
        roughness: read_linear(dir.join(ROUGHNESS_FILE), 1)?,
    };
    if !maps.diffuse.same_shape(&maps.specular) || maps.diffuse.width != maps.roughness.width || maps.diffuse.height != maps.roughness.height {
        return Err(Error::validation(dir.display().to_string(), "reflectance maps differ in resolution"));
    }
    Ok(maps)
}

pub fn load_env(path: &Path) -> Result<EnvironmentMap> {
    let grid = read_linear(path, 3)?;
    if grid.width != 2 * grid.height {
        return Err(Error::validation(path.display().to_string(), format!("environment is {}x{}, width must be twice the height", grid.width, grid.height)));
    }
    Ok(EnvironmentMap::new(grid))
}

/// Writes the three maps and the environment into `dir`.
pub fn save_theta(theta: &Theta, dir: &Path) -> Result<()> {
    save_maps(&theta.maps, dir)?;
    write_exr(&theta.env.radiance, dir.join(ENV_FILE))
}

pub fn load_theta(dir: &Path) -> Result<Theta> {
    Ok(Theta {
        maps: load_maps(dir)?,
        env: load_env(&dir.join(ENV_FILE))?,
    })
}
