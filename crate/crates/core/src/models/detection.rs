//! Detection-loophole models built on a uniform hidden direction `λ` and a
//! uniform filter variable `U`.
//!
//! In [`OneSidedDetection`] station A always accepts with
//! `x = -sign(a·λ)`, while station B outputs `y = sign(b·λ)` and accepts
//! with probability `|b·λ|`. Weighting `λ` by `|b·λ|` turns the
//! sign-correlation into exactly `-a·b`, and `E|b·λ| = 1/2` for every `b`.

use crate::protocol::{Flavor, HiddenState, Model, StationOutput};
use crate::rng::TrialRng;
use crate::target_law::{Direction, Outcome};

const LAMBDA: usize = 0;
const FILTER: usize = 3;
const ROLE: usize = 4;

fn sample_lambda_filter(rng: &mut TrialRng) -> HiddenState {
    let mut z = HiddenState::new();
    z.push_vector(rng.unit_vector());
    z.push(rng.uniform());
    z
}

fn anti_sign(z: &HiddenState, s: &Direction) -> Outcome {
    Outcome::sign_of(s.dot_raw(z.vector(LAMBDA))).flip()
}

fn sign(z: &HiddenState, s: &Direction) -> Outcome {
    Outcome::sign_of(s.dot_raw(z.vector(LAMBDA)))
}

fn passes_filter(z: &HiddenState, s: &Direction) -> bool {
    z.get(FILTER) < s.dot_raw(z.vector(LAMBDA)).abs()
}

#[derive(Debug, Clone)]
pub struct OneSidedDetection {
    name: &'static str,
}

/// Conditional law given acceptance is exactly the singlet law; joint
/// acceptance is 1/2 for every pair of settings.
pub fn one_sided_detection() -> OneSidedDetection {
    OneSidedDetection { name: "one-sided" }
}

/// The same construction, registered for its Variant-2 properties: `D` is
/// constant 1, `E` is Bernoulli(1/2) independent of `D`, and `X` keeps a
/// uniform marginal on `{D = 1, E = 0}`.
pub fn asymmetric_variant2() -> OneSidedDetection {
    OneSidedDetection {
        name: "variant2-asym",
    }
}

impl Model for OneSidedDetection {
    fn name(&self) -> String {
        self.name.into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::Binary
    }

    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState {
        sample_lambda_filter(rng)
    }

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput {
        StationOutput::accept(anti_sign(z, a), true)
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        StationOutput::accept(sign(z, b), passes_filter(z, b))
    }
}

/// A fair coin `W` picks which station filters; the other always accepts.
///
/// Each station accepts with probability 3/4, both with probability 1/2, so
/// the acceptances are positively correlated (`1/2 > 9/16`).
#[derive(Debug, Clone, Copy, Default)]
pub struct RoleMixture;

pub fn role_mixture_symmetric() -> RoleMixture {
    RoleMixture
}

impl RoleMixture {
    fn a_filters(z: &HiddenState) -> bool {
        z.get(ROLE) != 0.0
    }
}

impl Model for RoleMixture {
    fn name(&self) -> String {
        "role-mixture".into()
    }

    fn flavor(&self) -> Flavor {
        Flavor::Binary
    }

    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState {
        let mut z = sample_lambda_filter(rng);
        z.push(if rng.coin() { 1.0 } else { 0.0 });
        z
    }

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput {
        let accept = !Self::a_filters(z) || passes_filter(z, a);
        StationOutput::accept(anti_sign(z, a), accept)
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        let accept = Self::a_filters(z) || passes_filter(z, b);
        StationOutput::accept(sign(z, b), accept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{run_experiment, run_trial, SelectionRule};

    #[test]
    fn equal_settings_give_perfect_anticorrelation() {
        let m = one_sided_detection();
        let a = Direction::normalized(1.0, 2.0, -0.5).unwrap();
        for i in 0..5000 {
            let rec = run_trial(&m, &a, &a, 4, i, &SelectionRule::Binary).unwrap();
            if rec.accepted {
                assert_eq!(rec.x, rec.y.flip());
            }
        }
    }

    #[test]
    fn station_a_never_rejects() {
        let m = one_sided_detection();
        let a = Direction::planar_deg(30.0);
        let b = Direction::planar_deg(100.0);
        let t = run_experiment(&m, &a, &b, 50_000, 1, &SelectionRule::Binary).unwrap();
        let det = t.detection.unwrap();
        assert_eq!(det.n_d1(), 50_000);
        assert_eq!(det.n_d0e0(), 0);
    }

    #[test]
    fn role_mixture_marginal_rates() {
        let m = role_mixture_symmetric();
        let a = Direction::planar_deg(0.0);
        let b = Direction::planar_deg(60.0);
        let n = 1_000_000;
        let det = run_experiment(&m, &a, &b, n, 2, &SelectionRule::Binary)
            .unwrap()
            .detection
            .unwrap();
        let nf = n as f64;
        // ½·1 + ½·E|u| with E|u| = ½
        assert!((det.n_d1() as f64 / nf - 0.75).abs() < 0.002);
        assert!((det.n_e1() as f64 / nf - 0.75).abs() < 0.002);
        assert!((det.n_d1e1() as f64 / nf - 0.5).abs() < 0.002);
        assert_eq!(det.n_d0e0(), 0);
    }
}
