//! Deliberately defective models. They exist so that the locality audit and
//! the contract checker can be shown to reject something.

use std::sync::Mutex;

use crate::protocol::{Flavor, HiddenState, Model, StationOutput};
use crate::rng::TrialRng;
use crate::target_law::{Direction, Outcome};

/// Station A reads B's most recent setting through shared mutable state, a
/// channel the station interface does not offer. Never run it in parallel.
#[derive(Debug, Default)]
pub struct SettingLeak {
    last_b: Mutex<Option<Direction>>,
}

impl SettingLeak {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Model for SettingLeak {
    fn name(&self) -> String {
        "control-setting-leak".into()
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
        let leaked = *self.last_b.lock().expect("poisoned");
        let setting = leaked.unwrap_or(*a);
        StationOutput::accept(Outcome::sign_of(setting.dot_raw(z.vector(0))).flip(), true)
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        *self.last_b.lock().expect("poisoned") = Some(*b);
        StationOutput::accept(Outcome::sign_of(b.dot_raw(z.vector(0))), true)
    }
}

/// Local, but `X` is pinned to `+1` whenever B rejects, so the marginal of
/// `X` on `{D = 1, E = 0}` is 1 instead of 1/2.
#[derive(Debug, Clone, Copy, Default)]
pub struct BrokenMarginal;

impl Model for BrokenMarginal {
    fn name(&self) -> String {
        "control-broken-marginal".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::Binary
    }

    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState {
        let mut z = HiddenState::new();
        z.push_vector(rng.unit_vector());
        z.push(rng.uniform());
        z
    }

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput {
        let x = if z.get(3) >= 0.5 {
            Outcome::Plus
        } else {
            Outcome::sign_of(a.dot_raw(z.vector(0))).flip()
        };
        StationOutput::accept(x, true)
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        StationOutput::accept(Outcome::sign_of(b.dot_raw(z.vector(0))), z.get(3) < 0.5)
    }
}
