use crate::protocol::{Flavor, HiddenState, Model, StationOutput};
use crate::rng::TrialRng;
use crate::target_law::{Direction, Outcome};

/// Non-rejecting baseline: `x = sign(a·λ)`, `y = -sign(b·λ)` for `λ`
/// uniform on the sphere. Its correlation is `-(1 - 2θ/π)`, which cannot
/// reach the singlet value for all settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicSign;

pub fn deterministic_sign() -> DeterministicSign {
    DeterministicSign
}

impl Model for DeterministicSign {
    fn name(&self) -> String {
        "sign".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::Binary
    }

    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState {
        let mut z = HiddenState::new();
        z.push_vector(rng.unit_vector());
        z
    }

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput {
        StationOutput::accept(Outcome::sign_of(a.dot_raw(z.vector(0))), true)
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        StationOutput::accept(Outcome::sign_of(b.dot_raw(z.vector(0))).flip(), true)
    }
}

/// `-(1 - 2θ/π)` with `θ` the angle between the settings.
pub fn sign_model_correlation(a: &Direction, b: &Direction) -> f64 {
    let theta = a.dot(b).clamp(-1.0, 1.0).acos();
    -(1.0 - 2.0 * theta / std::f64::consts::PI)
}
