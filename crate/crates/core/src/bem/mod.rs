//! Frictionless normal contact of a rigid rough surface against an elastic
//! half-space, discretized with constant-pressure square cells.

mod hertz;
mod influence;
mod solver;

pub use hertz::{hertz_reference, paraboloid_field, HertzReference};
pub use influence::{ConvolutionWorkspace, InfluenceOperator};
pub use solver::{
    effective_area, interference, solve_contact, solve_contact_with, ContactSolution, InitialActiveSet, SolverOptions,
};

use crate::error::{Error, Result};

/// Composite elastic half-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Young's modulus (force per µm²).
    pub youngs: f64,
    pub poisson: f64,
}

impl Material {
    pub fn new(youngs: f64, poisson: f64) -> Result<Self> {
        let m = Self { youngs, poisson };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.youngs > 0.0) || !self.youngs.is_finite() {
            return Err(Error::InvalidInput(format!("Young's modulus must be positive, got {}", self.youngs)));
        }
        if !(0.0..0.5).contains(&self.poisson) {
            return Err(Error::InvalidInput(format!("Poisson ratio must lie in [0, 0.5), got {}", self.poisson)));
        }
        Ok(())
    }

    /// `E / (1 - ν²)`.
    pub fn composite_modulus(&self) -> f64 {
        self.youngs / (1.0 - self.poisson * self.poisson)
    }
}

impl Default for Material {
    fn default() -> Self {
        Self { youngs: 1.0, poisson: 0.3 }
    }
}

/// Imposed far-field displacement (µm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadCase {
    pub delta: f64,
}

impl LoadCase {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidLoad(format!("far-field displacement must be positive, got {delta}")));
        }
        Ok(Self { delta })
    }
}
