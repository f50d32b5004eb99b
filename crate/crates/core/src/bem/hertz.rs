use super::Material;
use crate::error::{Error, Result};
use crate::surface::HeightField;

/// Rigid paraboloid `z = z_apex - r²/(2R)` with the apex on the centre node.
///
/// The apex height is `L²/(4R)`, which puts the corners exactly at zero;
/// anything lower is clamped to zero.
pub fn paraboloid_field(radius: f64, scan_length: f64, n: usize) -> Result<HeightField> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("paraboloid radius must be positive, got {radius}")));
    }
    let apex = scan_length * scan_length / (4.0 * radius);
    let centre = 0.5 * scan_length;
    HeightField::from_fn(n, scan_length, |x, y| {
        let r2 = (x - centre).powi(2) + (y - centre).powi(2);
        (apex - r2 / (2.0 * radius)).max(0.0)
    })
}

/// Analytical force and normalized contact area of a Hertzian paraboloid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HertzReference {
    pub force: f64,
    /// `100 π R Δ / L²` (%).
    pub area_percent: f64,
}

pub fn hertz_reference(radius: f64, delta: f64, material: Material, scan_length: f64) -> Result<HertzReference> {
    if !(radius > 0.0 && scan_length > 0.0 && delta >= 0.0) {
        return Err(Error::InvalidInput("Hertz reference needs R > 0, L > 0 and Δ >= 0".into()));
    }
    material.validate()?;
    Ok(HertzReference {
        force: 4.0 / 3.0 * material.composite_modulus() * (radius * delta.powi(3)).sqrt(),
        area_percent: 100.0 * std::f64::consts::PI * radius * delta / (scan_length * scan_length),
    })
}
