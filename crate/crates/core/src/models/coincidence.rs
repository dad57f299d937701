use std::sync::Arc;

use crate::error::{Error, Result};
use crate::protocol::{Flavor, HiddenState, Model, StationOutput, Verdict};
use crate::rng::TrialRng;
use crate::target_law::Direction;

/// A binary-flavor model re-expressed with local times.
#[derive(Clone)]
pub struct CoincidenceParams {
    pub inner: Arc<dyn Model>,
    /// Window half-width `c` the embedding is built for.
    pub c: f64,
    /// Width of the interval rejected times are spread over.
    pub spread: f64,
}

impl std::fmt::Debug for CoincidenceParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoincidenceParams")
            .field("inner", &self.inner.name())
            .field("c", &self.c)
            .field("spread", &self.spread)
            .finish()
    }
}

/// Station A reports `S = 0` when the inner station accepts and
/// `S ∈ [2c, 2c + spread]` otherwise; station B reports `T = 0` or
/// `T ∈ [-2c - spread, -2c]`. A window of width `c` therefore keeps exactly
/// the inner model's `D = 1 = E` trials.
#[derive(Debug, Clone)]
pub struct CoincidenceEmbedding {
    params: CoincidenceParams,
}

pub fn coincidence_embedding(params: CoincidenceParams) -> Result<CoincidenceEmbedding> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::Parameter(format!(
            "window c must be positive, got {}",
            params.c
        )));
    }
    if !(params.spread > 0.0 && params.spread.is_finite()) {
        return Err(Error::Parameter(format!(
            "spread must be positive, got {}",
            params.spread
        )));
    }
    let found = params.inner.flavor();
    if found != Flavor::Binary {
        return Err(Error::Flavor {
            expected: Flavor::Binary,
            found,
        });
    }
    Ok(CoincidenceEmbedding { params })
}

const EXTRA_WORDS: usize = 2;

impl CoincidenceEmbedding {
    pub fn c(&self) -> f64 {
        self.params.c
    }

    pub fn inner(&self) -> &Arc<dyn Model> {
        &self.params.inner
    }

    fn split(z: &HiddenState) -> (HiddenState, f64, f64) {
        let n = z.len() - EXTRA_WORDS;
        (z.prefix(n), z.get(n), z.get(n + 1))
    }

    fn time(&self, inner: &StationOutput, jitter: f64, direction: f64) -> f64 {
        match inner.verdict {
            Verdict::Binary(true) => 0.0,
            _ => direction * (2.0 * self.params.c + self.params.spread * jitter),
        }
    }
}

impl Model for CoincidenceEmbedding {
    fn name(&self) -> String {
        format!("coincidence(inner={})", self.params.inner.name())
    }

    fn flavor(&self) -> Flavor {
        Flavor::Time
    }

    // The inner state is drawn first, so the inner model sees exactly the
    // stream it would see unwrapped.
    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState {
        let mut z = self.params.inner.sample_hidden(rng);
        z.push(rng.uniform());
        z.push(rng.uniform());
        z
    }

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput {
        let (inner_z, jitter, _) = Self::split(z);
        let out = self.params.inner.station_a(&inner_z, a);
        StationOutput::timed(out.outcome, self.time(&out, jitter, 1.0))
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        let (inner_z, _, jitter) = Self::split(z);
        let out = self.params.inner.station_b(&inner_z, b);
        StationOutput::timed(out.outcome, self.time(&out, jitter, -1.0))
    }

    fn check_settings(&self, a: &Direction, b: &Direction) -> Result<()> {
        self.params.inner.check_settings(a, b)
    }

    fn setting_pairs(&self) -> Option<Vec<(Direction, Direction)>> {
        self.params.inner.setting_pairs()
    }
}
