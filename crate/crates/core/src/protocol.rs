//! The two-station protocol engine.
//!
//! A [`Model`] is split into a hidden-state sampler and two station
//! functions. Station A only ever receives `(Z, a)` and station B only
//! `(Z, b)`; the engine is the single place where both settings meet, and it
//! only uses them to record the trial. Post-selection is applied afterwards,
//! on recorded verdicts.

use std::io::{self, Write};
use std::sync::Arc;

use arrayvec::ArrayVec;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{StreamKey, TrialRng};
use crate::target_law::{cell_index, Direction, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Binary,
    Time,
}

/// A station's local post-selection datum: an accept flag or a local time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Binary(bool),
    Time(f64),
}

impl Verdict {
    pub fn flavor(&self) -> Flavor {
        match self {
            Verdict::Binary(_) => Flavor::Binary,
            Verdict::Time(_) => Flavor::Time,
        }
    }

    fn bit_eq(&self, other: &Verdict) -> bool {
        match (self, other) {
            (Verdict::Binary(p), Verdict::Binary(q)) => p == q,
            (Verdict::Time(s), Verdict::Time(t)) => s.to_bits() == t.to_bits(),
            _ => false,
        }
    }
}

/// What one station emits for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationOutput {
    pub outcome: Outcome,
    pub verdict: Verdict,
}

impl StationOutput {
    pub fn accept(outcome: Outcome, accept: bool) -> Self {
        Self {
            outcome,
            verdict: Verdict::Binary(accept),
        }
    }

    pub fn timed(outcome: Outcome, time: f64) -> Self {
        Self {
            outcome,
            verdict: Verdict::Time(time),
        }
    }

    fn bit_eq(&self, other: &StationOutput) -> bool {
        self.outcome == other.outcome && self.verdict.bit_eq(&other.verdict)
    }
}

pub const HIDDEN_CAPACITY: usize = 12;

/// One realization of the shared randomness. The layout of the words is
/// private to the model that produced it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HiddenState {
    words: ArrayVec<f64, HIDDEN_CAPACITY>,
}

impl HiddenState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics if the capacity is exceeded; that is a model bug.
    pub fn push(&mut self, v: f64) {
        self.words.push(v);
    }

    pub fn push_vector(&mut self, v: [f64; 3]) {
        for c in v {
            self.push(c);
        }
    }

    pub fn push_index(&mut self, i: usize) {
        self.push(i as f64);
    }

    pub fn get(&self, i: usize) -> f64 {
        self.words[i]
    }

    pub fn vector(&self, start: usize) -> [f64; 3] {
        [
            self.words[start],
            self.words[start + 1],
            self.words[start + 2],
        ]
    }

    pub fn index(&self, i: usize) -> usize {
        self.words[i] as usize
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// The first `len` words, for wrappers that extend an inner model's state.
    pub fn prefix(&self, len: usize) -> HiddenState {
        let mut words = ArrayVec::new();
        words.extend(self.words.iter().take(len).copied());
        HiddenState { words }
    }
}

/// A local protocol: shared hidden state plus one response function pair per
/// station.
///
/// Station functions see only the hidden state and their own setting. All
/// randomness must come from [`Model::sample_hidden`].
pub trait Model: Send + Sync {
    fn name(&self) -> String;

    fn flavor(&self) -> Flavor;

    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState;

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput;

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput;

    /// Rejects settings outside the model's domain before a run starts.
    fn check_settings(&self, _a: &Direction, _b: &Direction) -> Result<()> {
        Ok(())
    }

    /// Setting pairs to use when a caller needs a representative sample and
    /// the model only accepts a finite set.
    fn setting_pairs(&self) -> Option<Vec<(Direction, Direction)>> {
        None
    }
}

/// How trials are post-selected from the two verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SelectionRule {
    /// Keep trials where both stations accept.
    Binary,
    /// Keep trials whose local times satisfy `|S - T| < c`.
    Window { c: f64 },
}

impl SelectionRule {
    pub fn flavor(&self) -> Flavor {
        match self {
            SelectionRule::Binary => Flavor::Binary,
            SelectionRule::Window { .. } => Flavor::Time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SelectionRule::Window { c } if !(c > 0.0 && c.is_finite()) => Err(Error::Parameter(
                format!("coincidence window must be positive, got {c}"),
            )),
            _ => Ok(()),
        }
    }

    /// The rule matching a model's flavor, checked against it.
    pub fn check_model(&self, model: &dyn Model) -> Result<()> {
        self.validate()?;
        if self.flavor() != model.flavor() {
            return Err(Error::Flavor {
                expected: model.flavor(),
                found: self.flavor(),
            });
        }
        Ok(())
    }

    pub fn accepts(&self, va: &Verdict, vb: &Verdict) -> Result<bool> {
        match *self {
            SelectionRule::Binary => select_binary(va, vb),
            SelectionRule::Window { c } => select_coincidence(va, vb, c),
        }
    }
}

/// Both stations accept.
pub fn select_binary(va: &Verdict, vb: &Verdict) -> Result<bool> {
    match (va, vb) {
        (Verdict::Binary(d), Verdict::Binary(e)) => Ok(*d && *e),
        (Verdict::Binary(_), other) | (other, _) => Err(Error::Flavor {
            expected: Flavor::Binary,
            found: other.flavor(),
        }),
    }
}

/// `|S - T| < c`, strict.
pub fn select_coincidence(va: &Verdict, vb: &Verdict, c: f64) -> Result<bool> {
    let (s, t) = match (va, vb) {
        (Verdict::Time(s), Verdict::Time(t)) => (*s, *t),
        (Verdict::Time(_), other) | (other, _) => {
            return Err(Error::Flavor {
                expected: Flavor::Time,
                found: other.flavor(),
            })
        }
    };
    SelectionRule::Window { c }.validate()?;
    Ok((s - t).abs() < c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub a: Direction,
    pub b: Direction,
    pub x: Outcome,
    pub y: Outcome,
    pub verdict_a: Verdict,
    pub verdict_b: Verdict,
    pub accepted: bool,
}

impl TrialRecord {
    /// Same record with `accepted` recomputed under another rule.
    pub fn reselect(&self, selection: &SelectionRule) -> Result<TrialRecord> {
        Ok(TrialRecord {
            accepted: selection.accepts(&self.verdict_a, &self.verdict_b)?,
            ..*self
        })
    }

    pub fn bit_eq(&self, other: &TrialRecord) -> bool {
        self.trial_index == other.trial_index
            && self.a == other.a
            && self.b == other.b
            && self.x == other.x
            && self.y == other.y
            && self.verdict_a.bit_eq(&other.verdict_a)
            && self.verdict_b.bit_eq(&other.verdict_b)
            && self.accepted == other.accepted
    }
}

fn evaluate(
    model: &dyn Model,
    key: &StreamKey,
    a: &Direction,
    b: &Direction,
    index: u64,
    selection: &SelectionRule,
) -> Result<TrialRecord> {
    let z = model.sample_hidden(&mut key.substream(index));
    let out_a = model.station_a(&z, a);
    let out_b = model.station_b(&z, b);
    let expected = model.flavor();
    for v in [&out_a.verdict, &out_b.verdict] {
        if v.flavor() != expected {
            return Err(Error::Flavor {
                expected,
                found: v.flavor(),
            });
        }
    }
    Ok(TrialRecord {
        trial_index: index,
        a: *a,
        b: *b,
        x: out_a.outcome,
        y: out_b.outcome,
        verdict_a: out_a.verdict,
        verdict_b: out_b.verdict,
        accepted: selection.accepts(&out_a.verdict, &out_b.verdict)?,
    })
}

/// Runs one trial. Deterministic in all arguments.
pub fn run_trial(
    model: &dyn Model,
    a: &Direction,
    b: &Direction,
    seed: u64,
    trial_index: u64,
    selection: &SelectionRule,
) -> Result<TrialRecord> {
    selection.check_model(model)?;
    evaluate(model, &StreamKey::new(seed), a, b, trial_index, selection)
}

/// Counts over `(D, E, x, y)` for binary-flavor runs, regardless of selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    /// `cells[d][e][cell_index(x, y)]`.
    pub cells: [[[u64; 4]; 2]; 2],
}

impl DetectionCounts {
    fn record(&mut self, d: bool, e: bool, cell: usize) {
        self.cells[usize::from(d)][usize::from(e)][cell] += 1;
    }

    fn merge(&mut self, other: &DetectionCounts) {
        for d in 0..2 {
            for e in 0..2 {
                for c in 0..4 {
                    self.cells[d][e][c] += other.cells[d][e][c];
                }
            }
        }
    }

    /// Number of trials with `D = d, E = e`.
    pub fn count(&self, d: bool, e: bool) -> u64 {
        self.cells[usize::from(d)][usize::from(e)].iter().sum()
    }

    /// Outcome-cell counts on `{D = d, E = e}`.
    pub fn cell_counts(&self, d: bool, e: bool) -> [u64; 4] {
        self.cells[usize::from(d)][usize::from(e)]
    }

    pub fn n_d1(&self) -> u64 {
        self.count(true, true) + self.count(true, false)
    }

    pub fn n_e1(&self) -> u64 {
        self.count(true, true) + self.count(false, true)
    }

    pub fn n_d1e1(&self) -> u64 {
        self.count(true, true)
    }

    pub fn n_d0e0(&self) -> u64 {
        self.count(false, false)
    }

    /// Trials on `{D = d, E = e}` with `x = +1`.
    pub fn x_plus(&self, d: bool, e: bool) -> u64 {
        let c = self.cell_counts(d, e);
        c[0] + c[1]
    }

    /// Trials on `{D = d, E = e}` with `y = +1`.
    pub fn y_plus(&self, d: bool, e: bool) -> u64 {
        let c = self.cell_counts(d, e);
        c[0] + c[2]
    }
}

/// Aggregated counts of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub n_total: u64,
    pub n_accepted: u64,
    /// Accepted trials per outcome cell, ordered `(+,+), (+,-), (-,+), (-,-)`.
    pub accepted: [u64; 4],
    /// Present for binary-flavor models.
    pub detection: Option<DetectionCounts>,
}

impl Tally {
    pub fn new(flavor: Flavor) -> Self {
        Self {
            n_total: 0,
            n_accepted: 0,
            accepted: [0; 4],
            detection: match flavor {
                Flavor::Binary => Some(DetectionCounts::default()),
                Flavor::Time => None,
            },
        }
    }

    pub fn record(&mut self, rec: &TrialRecord) {
        let cell = cell_index(rec.x, rec.y);
        self.n_total += 1;
        if rec.accepted {
            self.n_accepted += 1;
            self.accepted[cell] += 1;
        }
        if let (Some(det), Verdict::Binary(d), Verdict::Binary(e)) =
            (self.detection.as_mut(), rec.verdict_a, rec.verdict_b)
        {
            det.record(d, e, cell);
        }
    }

    pub fn merge(&mut self, other: &Tally) {
        self.n_total += other.n_total;
        self.n_accepted += other.n_accepted;
        for (s, o) in self.accepted.iter_mut().zip(other.accepted) {
            *s += o;
        }
        if let (Some(s), Some(o)) = (self.detection.as_mut(), other.detection.as_ref()) {
            s.merge(o);
        }
    }

    /// Re-tallies recorded trials under a (possibly different) selection rule.
    pub fn from_records(
        flavor: Flavor,
        records: &[TrialRecord],
        selection: &SelectionRule,
    ) -> Result<Tally> {
        selection.validate()?;
        let mut tally = Tally::new(flavor);
        for rec in records {
            tally.record(&rec.reselect(selection)?);
        }
        Ok(tally)
    }
}

const BLOCK: u64 = 8192;

/// Controls how many threads evaluate trials. Results never depend on it.
#[derive(Clone, Default)]
pub struct Executor {
    pool: Option<Arc<rayon::ThreadPool>>,
    sequential: bool,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("workers", &self.workers())
            .finish()
    }
}

impl Executor {
    /// `workers == 1` runs inline; larger values use a dedicated pool.
    pub fn new(workers: usize) -> Result<Self> {
        match workers {
            0 => Err(Error::Parameter("worker count must be at least 1".into())),
            1 => Ok(Self::sequential()),
            n => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
                Ok(Self {
                    pool: Some(Arc::new(pool)),
                    sequential: false,
                })
            }
        }
    }

    pub fn sequential() -> Self {
        Self {
            pool: None,
            sequential: true,
        }
    }

    pub fn workers(&self) -> usize {
        match (&self.pool, self.sequential) {
            (_, true) => 1,
            (Some(p), _) => p.current_num_threads(),
            (None, false) => rayon::current_num_threads(),
        }
    }

    fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(op),
            None => op(),
        }
    }

    fn prepare(
        model: &dyn Model,
        a: &Direction,
        b: &Direction,
        n: u64,
        selection: &SelectionRule,
    ) -> Result<()> {
        if n == 0 {
            return Err(Error::EmptyExperiment);
        }
        selection.check_model(model)?;
        model.check_settings(a, b)
    }

    /// Runs trials `0..n` and aggregates them.
    pub fn run_experiment(
        &self,
        model: &dyn Model,
        a: &Direction,
        b: &Direction,
        n: u64,
        seed: u64,
        selection: &SelectionRule,
    ) -> Result<Tally> {
        Self::prepare(model, a, b, n, selection)?;
        let key = StreamKey::new(seed);
        let flavor = model.flavor();
        let block = |blk: u64| -> Result<Tally> {
            let mut tally = Tally::new(flavor);
            for i in (blk * BLOCK)..((blk + 1) * BLOCK).min(n) {
                tally.record(&evaluate(model, &key, a, b, i, selection)?);
            }
            Ok(tally)
        };
        let blocks = n.div_ceil(BLOCK);
        if self.sequential {
            let mut total = Tally::new(flavor);
            for blk in 0..blocks {
                total.merge(&block(blk)?);
            }
            return Ok(total);
        }
        self.install(|| {
            (0..blocks).into_par_iter().map(block).try_reduce(
                || Tally::new(flavor),
                |mut x, y| {
                    x.merge(&y);
                    Ok(x)
                },
            )
        })
    }

    /// Runs trials `0..n` and keeps every record, in trial order.
    pub fn run_records(
        &self,
        model: &dyn Model,
        a: &Direction,
        b: &Direction,
        n: u64,
        seed: u64,
        selection: &SelectionRule,
    ) -> Result<Vec<TrialRecord>> {
        Self::prepare(model, a, b, n, selection)?;
        let key = StreamKey::new(seed);
        if self.sequential {
            return (0..n)
                .map(|i| evaluate(model, &key, a, b, i, selection))
                .collect();
        }
        self.install(|| {
            (0..n)
                .into_par_iter()
                .map(|i| evaluate(model, &key, a, b, i, selection))
                .collect()
        })
    }
}

/// Runs trials `0..n` on the global thread pool.
pub fn run_experiment(
    model: &dyn Model,
    a: &Direction,
    b: &Direction,
    n: u64,
    seed: u64,
    selection: &SelectionRule,
) -> Result<Tally> {
    Executor::default().run_experiment(model, a, b, n, seed, selection)
}

/// Replays `n` trials and checks that each station's output is unaffected by
/// the remote setting: station A at `a` against B at `b1` and `b2`, and
/// station B at `b1` against A at `a` and at the antipode of `a`.
///
/// A `false` return means the model leaks information between stations.
pub fn locality_audit(
    model: &dyn Model,
    n: u64,
    seed: u64,
    a: &Direction,
    b1: &Direction,
    b2: &Direction,
) -> bool {
    let key = StreamKey::new(seed);
    let a2 = a.antipode();
    // one full pass per setting combination, so state carried between
    // trials inside a model reflects that pass only
    let pass = |sa: &Direction, sb: &Direction| -> Vec<(StationOutput, StationOutput)> {
        (0..n)
            .map(|i| {
                let z = model.sample_hidden(&mut key.substream(i));
                (model.station_a(&z, sa), model.station_b(&z, sb))
            })
            .collect()
    };
    let base = pass(a, b1);
    let other_b = pass(a, b2);
    let other_a = pass(&a2, b1);
    base.iter()
        .zip(&other_b)
        .zip(&other_a)
        .all(|((p, q), r)| p.0.bit_eq(&q.0) && p.1.bit_eq(&r.1))
}

pub const TRIAL_CSV_HEADER: &str = "trial,ax,ay,az,bx,by,bz,x,y,va,vb,accepted";

fn verdict_field(v: &Verdict) -> String {
    match v {
        Verdict::Binary(flag) => u8::from(*flag).to_string(),
        Verdict::Time(t) => t.to_string(),
    }
}

/// Writes one CSV row per trial, in the order given.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRIAL_CSV_HEADER}")?;
    for r in records {
        let [ax, ay, az] = r.a.components();
        let [bx, by, bz] = r.b.components();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial_index,
            ax,
            ay,
            az,
            bx,
            by,
            bz,
            r.x.value(),
            r.y.value(),
            verdict_field(&r.verdict_a),
            verdict_field(&r.verdict_b),
            u8::from(r.accepted),
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_binary_truth_table() {
        let acc = Verdict::Binary(true);
        let rej = Verdict::Binary(false);
        assert!(select_binary(&acc, &acc).unwrap());
        assert!(!select_binary(&acc, &rej).unwrap());
        assert!(!select_binary(&rej, &rej).unwrap());
        assert!(matches!(
            select_binary(&acc, &Verdict::Time(0.0)),
            Err(Error::Flavor {
                found: Flavor::Time,
                ..
            })
        ));
    }

    #[test]
    fn select_coincidence_examples() {
        let t = Verdict::Time;
        assert!(select_coincidence(&t(0.0), &t(0.0), 1.0).unwrap());
        assert!(!select_coincidence(&t(0.0), &t(2.0), 1.0).unwrap());
        assert!(select_coincidence(&t(0.5), &t(-0.4), 1.0).unwrap());
        // strict inequality
        assert!(!select_coincidence(&t(0.0), &t(1.0), 1.0).unwrap());
        assert!(matches!(
            select_coincidence(&t(0.0), &Verdict::Binary(true), 1.0),
            Err(Error::Flavor { .. })
        ));
        assert!(matches!(
            select_coincidence(&t(0.0), &t(0.0), 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            select_coincidence(&t(0.0), &t(0.0), -1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn hidden_state_prefix() {
        let mut z = HiddenState::new();
        z.push_vector([1.0, 2.0, 3.0]);
        z.push_index(4);
        let p = z.prefix(3);
        assert_eq!(p.len(), 3);
        assert_eq!(p.vector(0), [1.0, 2.0, 3.0]);
        assert_eq!(z.index(3), 4);
    }

    #[test]
    fn trial_csv_layout() {
        let rec = TrialRecord {
            trial_index: 3,
            a: Direction::new(0.0, 0.0, 1.0).unwrap(),
            b: Direction::new(1.0, 0.0, 0.0).unwrap(),
            x: Outcome::Plus,
            y: Outcome::Minus,
            verdict_a: Verdict::Time(0.0),
            verdict_b: Verdict::Time(-2.5),
            accepted: false,
        };
        let mut buf = Vec::new();
        write_trials_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "trial,ax,ay,az,bx,by,bz,x,y,va,vb,accepted\n3,0,0,1,1,0,0,1,-1,0,-2.5,0\n"
        );
    }

    #[test]
    fn executor_rejects_zero_workers() {
        assert!(Executor::new(0).is_err());
        assert_eq!(Executor::new(1).unwrap().workers(), 1);
        assert_eq!(Executor::new(3).unwrap().workers(), 3);
    }
}
