use serde::{Deserialize, Serialize};

/// Positions and velocities of the followers at one instant. The leader is
/// not part of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonState {
    pub time: f64,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl PlatoonState {
    pub fn new(time: f64, positions: Vec<f64>, velocities: Vec<f64>) -> Self {
        assert_eq!(
            positions.len(),
            velocities.len(),
            "position and velocity vectors must have equal length"
        );
        Self {
            time,
            positions,
            velocities,
        }
    }

    /// Unpacks a flat `[x_1..x_N, v_1..v_N]` vector.
    pub fn from_flat(time: f64, y: &[f64]) -> Self {
        let n = y.len() / 2;
        Self::new(time, y[..n].to_vec(), y[n..].to_vec())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.len());
        y.extend_from_slice(&self.positions);
        y.extend_from_slice(&self.velocities);
        y
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}
