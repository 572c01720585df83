use serde::{Deserialize, Serialize};

use crate::energy::{EnergyError, EnergyModel};
use crate::mesh::Mesh;
use crate::numerics::norm;

/// Characteristic gradient norm `<W> |l|` of a rest mesh and energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminationConstant {
    pub energy_scale: f64,
    pub one_ring_norm: f64,
    pub value: f64,
}

impl TerminationConstant {
    pub fn new(mesh: &Mesh, model: &EnergyModel) -> Result<Self, EnergyError> {
        let energy_scale = model.characteristic_scale(mesh.dim())?;
        let one_ring_norm = norm(&mesh.one_ring_measure());
        Ok(Self { energy_scale, one_ring_norm, value: energy_scale * one_ring_norm })
    }

    /// `|g| / (<W> |l|)`.
    pub fn ratio(&self, gradient_norm: f64) -> f64 {
        gradient_norm / self.value
    }
}

/// `|g|_2 <= epsilon <W> |l|`.
pub fn terminated(gradient: &[f64], constant: &TerminationConstant, epsilon: f64) -> bool {
    norm(gradient) <= epsilon * constant.value
}
