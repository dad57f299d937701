//! Estimators and contract checkers over experiment tallies.
//!
//! Every reported number carries its standard error and the sample size it
//! was computed from. Pass/fail decisions compare a measured deviation with
//! a fixed tolerance; the standard errors are reported alongside so a reader
//! can judge how many sigmas that tolerance is.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{GridPartition, PartitionGuessing, PartitionParams};
use crate::protocol::{DetectionCounts, Executor, Flavor, Model, SelectionRule, Tally};
use crate::rng::{derive_seed, StreamKey};
use crate::target_law::{
    chsh, singlet_law, tv_continuity_bound, variation_distance, Direction, JointLaw, SettingsQuad,
};

/// Fewest accepted trials an estimate of a joint law is built from.
pub const MIN_ACCEPTED: u64 = 100;

/// Fewest trials per setting pair in a CHSH experiment.
pub const MIN_CHSH_TRIALS: u64 = 10_000;

/// A point estimate with its standard error and sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    /// Binomial proportion `k / n`.
    pub fn proportion(k: u64, n: u64) -> Self {
        if n == 0 {
            return Self {
                value: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let p = k as f64 / n as f64;
        Self {
            value: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    /// `|value - target|` within `sigmas` standard errors.
    pub fn within_sigmas(&self, target: f64, sigmas: f64) -> bool {
        (self.value - target).abs() <= sigmas * self.stderr
    }
}

/// Empirical joint law of accepted trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedLaw {
    pub cells: [f64; 4],
    pub stderr: [f64; 4],
    pub n_accepted: u64,
}

impl EstimatedLaw {
    pub fn from_counts(counts: [u64; 4]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n < MIN_ACCEPTED {
            return Err(Error::InsufficientData {
                n_accepted: n,
                required: MIN_ACCEPTED,
            });
        }
        let nf = n as f64;
        let mut cells = counts.map(|c| c as f64 / nf);
        // absorb rounding so the table sums to one
        let drift: f64 = 1.0 - cells.iter().sum::<f64>();
        let largest = (0..4)
            .max_by(|&i, &j| cells[i].total_cmp(&cells[j]))
            .unwrap_or(0);
        cells[largest] += drift;
        let stderr = cells.map(|p| (p * (1.0 - p) / nf).sqrt());
        Ok(Self {
            cells,
            stderr,
            n_accepted: n,
        })
    }

    pub fn law(&self) -> JointLaw {
        JointLaw::from_cells(self.cells.map(|p| p.clamp(0.0, 1.0)))
            .expect("normalized frequencies form a law")
    }

    pub fn correlation(&self) -> Estimate {
        let e = self.cells[0] - self.cells[1] - self.cells[2] + self.cells[3];
        Estimate {
            value: e,
            stderr: ((1.0 - e * e).max(0.0) / self.n_accepted as f64).sqrt(),
            n: self.n_accepted,
        }
    }

    /// Variation distance to `target`, with the first-order error bound
    /// `½ Σ se_i`.
    pub fn distance_to(&self, target: &JointLaw) -> Estimate {
        Estimate {
            value: variation_distance(&self.law(), target),
            stderr: 0.5 * self.stderr.iter().sum::<f64>(),
            n: self.n_accepted,
        }
    }
}

/// Cell frequencies over the accepted trials of a tally.
pub fn estimate_joint(tally: &Tally) -> Result<EstimatedLaw> {
    EstimatedLaw::from_counts(tally.accepted)
}

/// `n_accepted / n_total` with its binomial standard error.
pub fn success_probability(tally: &Tally) -> Result<Estimate> {
    if tally.n_total == 0 {
        return Err(Error::EmptyExperiment);
    }
    Ok(Estimate::proportion(tally.n_accepted, tally.n_total))
}

/// `E[xy]` over the accepted trials.
pub fn conditional_correlation(tally: &Tally) -> Result<Estimate> {
    Ok(estimate_joint(tally)?.correlation())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub quad: SettingsQuad,
    /// In functional order: (a,b), (a',b), (a',b'), (a,b').
    pub correlations: [Estimate; 4],
    pub chsh: f64,
    /// Root-sum-square of the four correlation errors.
    pub combined_stderr: f64,
    pub n_per_pair: u64,
    pub seed: u64,
}

/// Runs one experiment per setting pair, each on its own derived seed, and
/// applies the CHSH functional to the conditional correlations.
pub fn chsh_experiment(
    model: &dyn Model,
    quad: &SettingsQuad,
    n_per_pair: u64,
    seed: u64,
    selection: &SelectionRule,
    exec: &Executor,
) -> Result<ChshReport> {
    if n_per_pair < MIN_CHSH_TRIALS {
        return Err(Error::Parameter(format!(
            "CHSH needs at least {MIN_CHSH_TRIALS} trials per pair, got {n_per_pair}"
        )));
    }
    let mut correlations = Vec::with_capacity(4);
    for (i, (a, b)) in quad.pairs().iter().enumerate() {
        let tally = exec.run_experiment(
            model,
            a,
            b,
            n_per_pair,
            derive_seed(seed, i as u64),
            selection,
        )?;
        correlations.push(conditional_correlation(&tally)?);
    }
    let correlations: [Estimate; 4] = correlations.try_into().expect("four pairs");
    let [e0, e1, e2, e3] = correlations.map(|e| e.value.clamp(-1.0, 1.0));
    Ok(ChshReport {
        quad: *quad,
        correlations,
        chsh: chsh(e0, e1, e2, e3)?,
        combined_stderr: correlations
            .iter()
            .map(|e| e.stderr * e.stderr)
            .sum::<f64>()
            .sqrt(),
        n_per_pair,
        seed,
    })
}

/// `2 / (1 + √2)`: no local model can meet the independent-detection
/// contract with a symmetric efficiency above this.
pub fn ch_efficiency_bound() -> f64 {
    2.0 / (1.0 + std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComparison {
    pub eta: f64,
    pub bound: f64,
    /// `bound - eta`.
    pub margin: f64,
    pub below_bound: bool,
}

pub fn compare_to_ch_bound(eta: f64) -> BoundComparison {
    let bound = ch_efficiency_bound();
    BoundComparison {
        eta,
        bound,
        margin: bound - eta,
        below_bound: eta < bound,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractVariant {
    /// `D`, `E` independent Bernoulli, target law on `{D = 1 = E}`, correct
    /// single marginals on `{D = 1, E = 0}` and `{D = 0, E = 1}`.
    Full,
    /// The same, conditioned on `{D = 1 or E = 1}`.
    Modest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseKind {
    ConditionalJoint,
    XMarginalD1E0,
    YMarginalD0E1,
    DetectionIndependence,
    RateUniformity,
}

impl ClauseKind {
    pub fn label(&self) -> &'static str {
        match self {
            ClauseKind::ConditionalJoint => "conditional_joint",
            ClauseKind::XMarginalD1E0 => "x_marginal_d1_e0",
            ClauseKind::YMarginalD0E1 => "y_marginal_d0_e1",
            ClauseKind::DetectionIndependence => "detection_independence",
            ClauseKind::RateUniformity => "rate_uniformity",
        }
    }
}

/// One contract clause: the worst measured deviation across setting pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub kind: ClauseKind,
    pub measured: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// No trial fell in the conditioning event at any pair.
    pub vacuous: bool,
    /// Setting pair at which `measured` was attained.
    pub worst_pair: Option<(Direction, Direction)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractReport {
    pub variant: ContractVariant,
    pub model: String,
    pub n_per_pair: u64,
    pub seed: u64,
    pub tolerance: f64,
    pub setting_pairs: usize,
    pub clauses: Vec<Clause>,
    pub eta_a: Estimate,
    pub eta_b: Estimate,
    /// `P(D = 0 = E)`, reported for the modest variant only, never checked.
    pub p_neither: Option<Estimate>,
    pub passed: bool,
}

impl ContractReport {
    pub fn clause(&self, kind: ClauseKind) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.kind == kind)
    }

    pub fn failed_clauses(&self) -> Vec<ClauseKind> {
        self.clauses
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.kind)
            .collect()
    }
}

/// Twelve setting pairs: five in the x-z plane with `a·b` in
/// `{1, ½, 0, -½, -1}` and seven off-plane pairs.
pub fn standard_grid() -> Vec<(Direction, Direction)> {
    let a = Direction::planar_deg(0.0);
    let mut pairs: Vec<(Direction, Direction)> = [0.0, 60.0, 90.0, 120.0, 180.0]
        .iter()
        .map(|&t| (a, Direction::planar_deg(t)))
        .collect();
    let off_plane: [([f64; 3], f64); 7] = [
        ([1.0, 1.0, 1.0], 1.0),
        ([1.0, -2.0, 0.5], 0.5),
        ([0.0, 1.0, 0.0], 0.0),
        ([-1.0, 0.5, 2.0], -0.5),
        ([0.3, -0.4, 0.866], -1.0),
        ([2.0, 1.0, -1.0], 0.3),
        ([1.0, 0.2, 0.1], -0.8),
    ];
    for (u, dot) in off_plane {
        let u = Direction::normalized(u[0], u[1], u[2]).expect("non-zero");
        // a unit vector orthogonal to u, via a cross product with an axis
        // that is not parallel to it
        let axis = if u.z().abs() < 0.9 {
            [0.0, 0.0, 1.0]
        } else {
            [1.0, 0.0, 0.0]
        };
        let [ux, uy, uz] = u.components();
        let w = [
            uy * axis[2] - uz * axis[1],
            uz * axis[0] - ux * axis[2],
            ux * axis[1] - uy * axis[0],
        ];
        let w = Direction::normalized(w[0], w[1], w[2]).expect("non-zero");
        let s = (1.0 - dot * dot).max(0.0).sqrt();
        let b = Direction::normalized(
            dot * ux + s * w.x(),
            dot * uy + s * w.y(),
            dot * uz + s * w.z(),
        )
        .expect("non-zero");
        pairs.push((u, b));
    }
    pairs
}

/// Per-pair measurement of one clause, `None` when the conditioning event
/// was empty.
type Measure = Option<(f64, f64)>;

struct PairMeasures {
    pair: (Direction, Direction),
    joint: Measure,
    x_marginal: Measure,
    y_marginal: Measure,
    independence: (f64, f64),
    eta: (Estimate, Estimate),
}

fn marginal_deviation(plus: u64, n: u64) -> Measure {
    (n > 0).then(|| {
        let e = Estimate::proportion(plus, n);
        ((e.value - 0.5).abs(), e.stderr)
    })
}

fn joint_deviation(counts: [u64; 4], target: &JointLaw) -> Measure {
    let n: u64 = counts.iter().sum();
    (n > 0).then(|| {
        let nf = n as f64;
        let p = counts.map(|c| c as f64 / nf);
        let tv = 0.5
            * p.iter()
                .zip(target.cells())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        let se = 0.5 * p.iter().map(|q| (q * (1.0 - q) / nf).sqrt()).sum::<f64>();
        (tv, se)
    })
}

/// `|P(D∧E) - P(D)P(E)|` with a delta-method standard error.
fn independence_gap(det: &DetectionCounts) -> (f64, f64) {
    let n = (det.count(true, true) + det.count(true, false) + det.count(false, true) + det.n_d0e0())
        as f64;
    let p11 = det.count(true, true) as f64 / n;
    let p10 = det.count(true, false) as f64 / n;
    let p01 = det.count(false, true) as f64 / n;
    let (pd, pe) = (p11 + p10, p11 + p01);
    let gap = p11 - pd * pe;
    let grad = [1.0 - pd - pe, -pe, -pd, 0.0];
    let probs = [p11, p10, p01, 1.0 - p11 - p10 - p01];
    let mean: f64 = grad.iter().zip(probs).map(|(g, p)| g * p).sum();
    let second: f64 = grad.iter().zip(probs).map(|(g, p)| g * g * p).sum();
    (gap.abs(), ((second - mean * mean).max(0.0) / n).sqrt())
}

/// Implied rates `η_A = q11/(q11+q01)`, `η_B = q11/(q11+q10)` on
/// `{D = 1 or E = 1}` and the largest deviation of the observed detection
/// pattern from independent Bernoulli rates conditioned on that event.
fn conditioned_independence(det: &DetectionCounts) -> ((Estimate, Estimate), (f64, f64)) {
    let n11 = det.count(true, true);
    let n10 = det.count(true, false);
    let n01 = det.count(false, true);
    let m = n11 + n10 + n01;
    let eta_a = Estimate::proportion(n11, n11 + n01);
    let eta_b = Estimate::proportion(n11, n11 + n10);
    if m == 0 {
        return ((eta_a, eta_b), (f64::NAN, f64::NAN));
    }
    let mf = m as f64;
    let q = [n11 as f64 / mf, n10 as f64 / mf, n01 as f64 / mf];
    let (ea, eb) = (eta_a.value, eta_b.value);
    let raw = [ea * eb, ea * (1.0 - eb), (1.0 - ea) * eb];
    let z: f64 = raw.iter().sum();
    let dev = if z.is_finite() && z > 0.0 {
        raw.iter()
            .zip(q)
            .map(|(r, qi)| (r / z - qi).abs())
            .fold(0.0, f64::max)
    } else {
        1.0
    };
    let se = q
        .iter()
        .map(|p| (p * (1.0 - p) / mf).sqrt())
        .fold(0.0, f64::max);
    ((eta_a, eta_b), (dev, se))
}

fn worst_clause(
    kind: ClauseKind,
    tol: f64,
    per_pair: impl Iterator<Item = ((Direction, Direction), Measure)>,
) -> Clause {
    let mut worst: Option<((Direction, Direction), f64, f64)> = None;
    for (pair, m) in per_pair {
        if let Some((v, se)) = m {
            let worse = match worst {
                None => true,
                Some((_, w, _)) => v > w || v.is_nan(),
            };
            if worse {
                worst = Some((pair, v, se));
            }
        }
    }
    match worst {
        Some((pair, v, se)) => Clause {
            kind,
            measured: v,
            stderr: se,
            tolerance: tol,
            passed: v <= tol,
            vacuous: false,
            worst_pair: Some(pair),
        },
        None => Clause {
            kind,
            measured: 0.0,
            stderr: 0.0,
            tolerance: tol,
            passed: true,
            vacuous: true,
            worst_pair: None,
        },
    }
}

fn contract_check(
    variant: ContractVariant,
    model: &dyn Model,
    n: u64,
    seed: u64,
    tol: f64,
    exec: &Executor,
) -> Result<ContractReport> {
    if model.flavor() != Flavor::Binary {
        return Err(Error::Flavor {
            expected: Flavor::Binary,
            found: model.flavor(),
        });
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Parameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let pairs = model.setting_pairs().unwrap_or_else(standard_grid);
    let mut measures = Vec::with_capacity(pairs.len());
    let mut pooled = DetectionCounts::default();
    for (i, (a, b)) in pairs.iter().enumerate() {
        let tally = exec.run_experiment(
            model,
            a,
            b,
            n,
            derive_seed(seed, i as u64),
            &SelectionRule::Binary,
        )?;
        let det = tally
            .detection
            .expect("binary flavor tallies detection counts");
        for d in [false, true] {
            for e in [false, true] {
                let cells = det.cell_counts(d, e);
                let target = &mut pooled.cells[usize::from(d)][usize::from(e)];
                for (t, c) in target.iter_mut().zip(cells) {
                    *t += c;
                }
            }
        }
        let (eta, independence) = match variant {
            ContractVariant::Full => (
                (
                    Estimate::proportion(det.n_d1(), tally.n_total),
                    Estimate::proportion(det.n_e1(), tally.n_total),
                ),
                independence_gap(&det),
            ),
            ContractVariant::Modest => conditioned_independence(&det),
        };
        measures.push(PairMeasures {
            pair: (*a, *b),
            joint: joint_deviation(det.cell_counts(true, true), &singlet_law(a, b)),
            x_marginal: marginal_deviation(det.x_plus(true, false), det.count(true, false)),
            y_marginal: marginal_deviation(det.y_plus(false, true), det.count(false, true)),
            independence,
            eta,
        });
    }

    let total = n * pairs.len() as u64;
    let (eta_a, eta_b, p_neither) = match variant {
        ContractVariant::Full => (
            Estimate::proportion(pooled.n_d1(), total),
            Estimate::proportion(pooled.n_e1(), total),
            None,
        ),
        ContractVariant::Modest => {
            let ((ea, eb), _) = conditioned_independence(&pooled);
            (ea, eb, Some(Estimate::proportion(pooled.n_d0e0(), total)))
        }
    };

    let spread = |f: &dyn Fn(&PairMeasures) -> Estimate| -> (f64, f64) {
        let values: Vec<Estimate> = measures.iter().map(f).filter(|e| e.n > 0).collect();
        if values.is_empty() {
            return (0.0, 0.0);
        }
        let max = values
            .iter()
            .map(|e| e.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
        let se = values.iter().map(|e| e.stderr).fold(0.0, f64::max) * std::f64::consts::SQRT_2;
        (max - min, se)
    };
    let (spread_a, se_a) = spread(&|m| m.eta.0);
    let (spread_b, se_b) = spread(&|m| m.eta.1);
    let (uniformity, uniformity_se) = if spread_a >= spread_b {
        (spread_a, se_a)
    } else {
        (spread_b, se_b)
    };

    let clauses = vec![
        worst_clause(
            ClauseKind::ConditionalJoint,
            tol,
            measures.iter().map(|m| (m.pair, m.joint)),
        ),
        worst_clause(
            ClauseKind::XMarginalD1E0,
            tol,
            measures.iter().map(|m| (m.pair, m.x_marginal)),
        ),
        worst_clause(
            ClauseKind::YMarginalD0E1,
            tol,
            measures.iter().map(|m| (m.pair, m.y_marginal)),
        ),
        worst_clause(
            ClauseKind::DetectionIndependence,
            tol,
            measures.iter().map(|m| {
                let (v, se) = m.independence;
                (m.pair, (!v.is_nan()).then_some((v, se)))
            }),
        ),
        Clause {
            kind: ClauseKind::RateUniformity,
            measured: uniformity,
            stderr: uniformity_se,
            tolerance: tol,
            passed: uniformity <= tol,
            vacuous: false,
            worst_pair: None,
        },
    ];
    let passed = clauses.iter().all(|c| c.passed);
    Ok(ContractReport {
        variant,
        model: model.name(),
        n_per_pair: n,
        seed,
        tolerance: tol,
        setting_pairs: pairs.len(),
        clauses,
        eta_a,
        eta_b,
        p_neither,
        passed,
    })
}

/// Checks the independent-detection contract at every pair of
/// [`Model::setting_pairs`] (or [`standard_grid`]), `n` trials each.
///
/// Nothing is ever asserted about `X` on `{D = 0}` or `Y` on `{E = 0}`.
pub fn variant2_contract_check(
    model: &dyn Model,
    n: u64,
    seed: u64,
    tol: f64,
    exec: &Executor,
) -> Result<ContractReport> {
    contract_check(ContractVariant::Full, model, n, seed, tol, exec)
}

/// As [`variant2_contract_check`], conditioned on `{D = 1 or E = 1}`. The
/// rates are the ones implied on that event, and `P(D = 0 = E)` is reported
/// without being checked.
pub fn modest_variant_check(
    model: &dyn Model,
    n: u64,
    seed: u64,
    tol: f64,
    exec: &Executor,
) -> Result<ContractReport> {
    contract_check(ContractVariant::Modest, model, n, seed, tol, exec)
}

/// Which setting pairs a sweep evaluates at each partition size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepSettings {
    /// `count` uniformly random pairs, the same for every `k`.
    Random { count: usize },
    /// `count` pairs of cell representatives of each partition.
    Representatives { count: usize },
}

impl SweepSettings {
    fn count(&self) -> usize {
        match *self {
            SweepSettings::Random { count } | SweepSettings::Representatives { count } => count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    /// Smallest acceptance rate over the sampled pairs.
    pub success: f64,
    pub success_err: f64,
    /// Largest variation distance over the sampled pairs. A sampled
    /// maximum, not a certified supremum.
    pub accuracy_max: f64,
    pub accuracy_err: f64,
    /// `1 / k²`.
    pub bound: f64,
    /// Largest exact discretization distance over the same pairs.
    pub discretization_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub n_per_pair: u64,
    pub seed: u64,
    pub settings: SweepSettings,
    pub points: Vec<SweepPoint>,
}

const SWEEP_SETTINGS_TAG: u64 = 0x5357_4545_5000_0000;

fn random_pairs(seed: u64, count: usize) -> Vec<(Direction, Direction)> {
    let key = StreamKey::new(derive_seed(seed, SWEEP_SETTINGS_TAG));
    (0..count as u64)
        .map(|i| {
            let mut rng = key.substream(i);
            let u = rng.unit_vector();
            let v = rng.unit_vector();
            (
                Direction::normalized(u[0], u[1], u[2]).expect("unit"),
                Direction::normalized(v[0], v[1], v[2]).expect("unit"),
            )
        })
        .collect()
}

/// Runs the cell-guessing protocol over the registered nested partitions
/// with `ks` cells, recording the worst sampled accuracy and success.
pub fn accuracy_success_sweep(
    ks: &[usize],
    n: u64,
    seed: u64,
    settings: SweepSettings,
    exec: &Executor,
) -> Result<SweepCurve> {
    if ks.is_empty() {
        return Err(Error::Parameter(
            "sweep needs at least one partition size".into(),
        ));
    }
    if settings.count() == 0 {
        return Err(Error::Parameter(
            "sweep needs at least one setting pair".into(),
        ));
    }
    let partitions: Vec<GridPartition> = ks
        .iter()
        .map(|&k| GridPartition::registered(k))
        .collect::<Result<_>>()?;
    let random = random_pairs(seed, settings.count());
    let mut points = Vec::with_capacity(ks.len());
    for (grid, &k) in partitions.into_iter().zip(ks) {
        let model: PartitionGuessing =
            crate::models::partition_guessing(PartitionParams::new(std::sync::Arc::new(grid)))?;
        let pairs = match settings {
            SweepSettings::Random { .. } => random.clone(),
            SweepSettings::Representatives { count } => (0..count)
                .map(|i| {
                    (
                        model.representative(i % k),
                        model.representative((3 * i + 1) % k),
                    )
                })
                .collect(),
        };
        let mut point = SweepPoint {
            k,
            success: f64::INFINITY,
            success_err: 0.0,
            accuracy_max: f64::NEG_INFINITY,
            accuracy_err: 0.0,
            bound: 1.0 / (k as f64 * k as f64),
            discretization_max: 0.0,
        };
        for (j, (a, b)) in pairs.iter().enumerate() {
            let pair_seed = derive_seed(seed, ((k as u64) << 32) | j as u64);
            let tally = exec.run_experiment(&model, a, b, n, pair_seed, &SelectionRule::Binary)?;
            let success = success_probability(&tally)?;
            if success.value < point.success {
                point.success = success.value;
                point.success_err = success.stderr;
            }
            let accuracy = estimate_joint(&tally)?.distance_to(&singlet_law(a, b));
            if accuracy.value > point.accuracy_max {
                point.accuracy_max = accuracy.value;
                point.accuracy_err = accuracy.stderr;
            }
            let disc = tv_continuity_bound(
                a,
                &model.representative_of(a),
                b,
                &model.representative_of(b),
            );
            point.discretization_max = point.discretization_max.max(disc);
        }
        points.push(point);
    }
    Ok(SweepCurve {
        n_per_pair: n,
        seed,
        settings,
        points,
    })
}

pub const SWEEP_CSV_HEADER: &str = "k,success,success_err,accuracy_max,bound";

pub fn write_sweep_csv<W: Write>(curve: &SweepCurve, mut out: W) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for p in &curve.points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.k, p.success, p.success_err, p.accuracy_max, p.bound
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        asymmetric_variant2, deterministic_sign, finite_guessing, one_sided_detection,
        role_mixture_symmetric, FiniteGuessParams,
    };
    use crate::protocol::Tally;

    fn tally_with(counts: [u64; 4]) -> Tally {
        let mut t = Tally::new(Flavor::Binary);
        t.accepted = counts;
        t.n_accepted = counts.iter().sum();
        t.n_total = t.n_accepted;
        t
    }

    #[test]
    fn estimate_joint_uniform_counts() {
        let est = estimate_joint(&tally_with([250; 4])).unwrap();
        assert_eq!(est.cells, [0.25; 4]);
        // sqrt(¼·¾/1000)
        for se in est.stderr {
            assert!((se - 0.013_693_063_937_629_153).abs() < 1e-12);
        }
        assert!((est.cells.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_joint_needs_enough_data() {
        let err = estimate_joint(&tally_with([20, 20, 20, 20])).unwrap_err();
        assert_eq!(
            err,
            Error::InsufficientData {
                n_accepted: 80,
                required: MIN_ACCEPTED
            }
        );
    }

    #[test]
    fn estimated_law_sums_to_one_for_awkward_counts() {
        let est = EstimatedLaw::from_counts([1, 3, 7, 2_000_011]).unwrap();
        assert!((est.cells.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn success_probability_of_sign_model_is_one() {
        let a = Direction::planar_deg(0.0);
        let t = Executor::sequential()
            .run_experiment(
                &deterministic_sign(),
                &a,
                &a,
                10_000,
                1,
                &SelectionRule::Binary,
            )
            .unwrap();
        let s = success_probability(&t).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.stderr, 0.0);
        let est = estimate_joint(&t).unwrap();
        assert_eq!(est.cells[1] + est.cells[2], 1.0);
    }

    #[test]
    fn ch_bound_value_and_comparison() {
        assert!((ch_efficiency_bound() - 0.828_427_1).abs() < 1e-6);
        assert!((ch_efficiency_bound() - 2.0 * (2f64.sqrt() - 1.0)).abs() < 1e-15);
        let c = compare_to_ch_bound(2.0 / 3.0);
        assert!(c.below_bound);
        assert!((c.margin - 0.1618).abs() < 1e-4);
    }

    #[test]
    fn standard_grid_spans_required_inner_products() {
        let grid = standard_grid();
        assert_eq!(grid.len(), 12);
        let dots: Vec<f64> = grid.iter().map(|(a, b)| a.dot(b)).collect();
        for want in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            assert!(
                dots.iter().filter(|d| (**d - want).abs() < 1e-12).count() >= 2,
                "{want}"
            );
        }
        assert!(grid.iter().any(|(a, _)| a.y().abs() > 0.1));
    }

    #[test]
    fn chsh_needs_enough_trials() {
        let err = chsh_experiment(
            &deterministic_sign(),
            &SettingsQuad::standard_planar(),
            100,
            0,
            &SelectionRule::Binary,
            &Executor::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn contract_rejects_time_flavor_and_bad_tolerance() {
        let exec = Executor::default();
        let timed = crate::models::shipped_models().pop().unwrap();
        assert!(matches!(
            variant2_contract_check(timed.as_ref(), 1000, 0, 0.01, &exec),
            Err(Error::Flavor { .. })
        ));
        assert!(matches!(
            variant2_contract_check(&one_sided_detection(), 1000, 0, 0.0, &exec),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn asymmetric_variant2_flags_empty_y_cell_as_vacuous() {
        let r = variant2_contract_check(
            &asymmetric_variant2(),
            20_000,
            3,
            0.05,
            &Executor::default(),
        )
        .unwrap();
        let y = r.clause(ClauseKind::YMarginalD0E1).unwrap();
        assert!(y.vacuous && y.passed);
        assert_eq!(r.eta_a.value, 1.0);
        assert_eq!(
            r.clause(ClauseKind::DetectionIndependence)
                .unwrap()
                .measured,
            0.0
        );
    }

    #[test]
    fn contract_is_monotone_in_tolerance() {
        let exec = Executor::default();
        let m = role_mixture_symmetric();
        let mut was_passing = false;
        for tol in [0.001, 0.01, 0.05, 0.07, 0.2, 1.0] {
            let r = variant2_contract_check(&m, 20_000, 8, tol, &exec).unwrap();
            if was_passing {
                assert!(
                    r.passed,
                    "passed at a smaller tolerance but failed at {tol}"
                );
            }
            was_passing = r.passed;
        }
        assert!(was_passing);
    }

    #[test]
    fn modest_check_on_finite_guessing_reports_neither_rate() {
        let m = finite_guessing(FiniteGuessParams::planar_quad()).unwrap();
        let r = modest_variant_check(&m, 250_000, 6, 0.01, &Executor::default()).unwrap();
        let neither = r.p_neither.unwrap();
        assert!((neither.value - 0.25).abs() < 0.0013);
        assert!((r.eta_a.value - 0.5).abs() < 0.005);
    }

    #[test]
    fn sweep_rejects_bad_inputs() {
        let exec = Executor::default();
        let s = SweepSettings::Random { count: 2 };
        assert!(matches!(
            accuracy_success_sweep(&[], 1000, 0, s, &exec),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            accuracy_success_sweep(&[3], 1000, 0, s, &exec),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn sweep_csv_layout() {
        let curve = SweepCurve {
            n_per_pair: 10,
            seed: 1,
            settings: SweepSettings::Random { count: 1 },
            points: vec![SweepPoint {
                k: 8,
                success: 0.015625,
                success_err: 0.001,
                accuracy_max: 0.25,
                accuracy_err: 0.01,
                bound: 0.015625,
                discretization_max: 0.24,
            }],
        };
        let mut buf = Vec::new();
        write_sweep_csv(&curve, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,success,success_err,accuracy_max,bound\n8,0.015625,0.001,0.25,0.015625\n"
        );
    }
}
