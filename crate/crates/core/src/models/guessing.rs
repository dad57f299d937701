use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{Flavor, HiddenState, Model, StationOutput};
use crate::rng::TrialRng;
use crate::target_law::{singlet_law, Direction, JointLaw, Outcome};

/// Finite setting sets for the two stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteGuessParams {
    pub setting_set_a: Vec<Direction>,
    pub setting_set_b: Vec<Direction>,
}

impl FiniteGuessParams {
    /// `{0°, 90°}` for A and `{45°, 135°}` for B in the x-z plane: the
    /// standard CHSH quad.
    pub fn planar_quad() -> Self {
        Self {
            setting_set_a: vec![Direction::planar_deg(0.0), Direction::planar_deg(90.0)],
            setting_set_b: vec![Direction::planar_deg(45.0), Direction::planar_deg(135.0)],
        }
    }

    /// `k` planar settings per side, evenly spaced over a half turn, with B
    /// offset by half a step.
    pub fn planar_evenly_spaced(k: usize) -> Self {
        let step = 180.0 / k as f64;
        Self {
            setting_set_a: (0..k)
                .map(|i| Direction::planar_deg(i as f64 * step))
                .collect(),
            setting_set_b: (0..k)
                .map(|i| Direction::planar_deg((i as f64 + 0.5) * step))
                .collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (side, set) in [("A", &self.setting_set_a), ("B", &self.setting_set_b)] {
            if set.is_empty() {
                return Err(Error::Parameter(format!("setting set {side} is empty")));
            }
            for (i, d) in set.iter().enumerate() {
                if set[..i].contains(d) {
                    return Err(Error::Parameter(format!(
                        "duplicate setting {d} in set {side}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Guess both settings uniformly, pre-draw `(X, Y)` from the guessed law,
/// and let each station accept iff its guess was right.
#[derive(Debug, Clone)]
pub struct FiniteGuessing {
    params: FiniteGuessParams,
    /// `laws[i * k_b + j]` is the singlet law at `(A[i], B[j])`.
    laws: Vec<JointLaw>,
}

pub fn finite_guessing(params: FiniteGuessParams) -> Result<FiniteGuessing> {
    params.validate()?;
    let laws = params
        .setting_set_a
        .iter()
        .flat_map(|a| params.setting_set_b.iter().map(move |b| singlet_law(a, b)))
        .collect();
    Ok(FiniteGuessing { params, laws })
}

impl FiniteGuessing {
    pub fn params(&self) -> &FiniteGuessParams {
        &self.params
    }

    pub fn k_a(&self) -> usize {
        self.params.setting_set_a.len()
    }

    pub fn k_b(&self) -> usize {
        self.params.setting_set_b.len()
    }
}

const GUESS_A: usize = 0;
const GUESS_B: usize = 1;
const OUT_X: usize = 2;
const OUT_Y: usize = 3;

fn outcome_word(o: Outcome) -> f64 {
    o.value() as f64
}

fn word_outcome(v: f64) -> Outcome {
    Outcome::sign_of(v)
}

impl Model for FiniteGuessing {
    fn name(&self) -> String {
        "guess-finite".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::Binary
    }

    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState {
        let ga = rng.index(self.k_a());
        let gb = rng.index(self.k_b());
        let (x, y) = self.laws[ga * self.k_b() + gb].sample_with(rng.uniform());
        let mut z = HiddenState::new();
        z.push_index(ga);
        z.push_index(gb);
        z.push(outcome_word(x));
        z.push(outcome_word(y));
        z
    }

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput {
        let hit = self.params.setting_set_a.iter().position(|d| d == a) == Some(z.index(GUESS_A));
        StationOutput::accept(word_outcome(z.get(OUT_X)), hit)
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        let hit = self.params.setting_set_b.iter().position(|d| d == b) == Some(z.index(GUESS_B));
        StationOutput::accept(word_outcome(z.get(OUT_Y)), hit)
    }

    fn check_settings(&self, a: &Direction, b: &Direction) -> Result<()> {
        if !self.params.setting_set_a.contains(a) {
            return Err(Error::Domain(format!("{a} is not in setting set A")));
        }
        if !self.params.setting_set_b.contains(b) {
            return Err(Error::Domain(format!("{b} is not in setting set B")));
        }
        Ok(())
    }

    fn setting_pairs(&self) -> Option<Vec<(Direction, Direction)>> {
        let p = &self.params;
        Some(
            p.setting_set_a
                .iter()
                .flat_map(|a| p.setting_set_b.iter().map(move |b| (*a, *b)))
                .collect(),
        )
    }
}
