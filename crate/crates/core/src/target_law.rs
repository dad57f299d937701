//! The singlet joint law and the functionals used to score simulations
//! against it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs further than this from unit norm are rejected; closer ones are
/// renormalized.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// A measurement setting: a unit vector in three dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidDirection { norm });
        }
        // already unit up to rounding: keep the bits so text round-trips are exact
        if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            return Ok(Self { x, y, z });
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Normalizes any non-zero finite vector.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::InvalidDirection { norm });
        }
        Ok(Self {
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    /// Polar angle `theta` from +z and azimuth `phi`, both in radians.
    pub fn from_spherical(theta: f64, phi: f64) -> Self {
        let s = theta.sin();
        Self {
            x: s * phi.cos(),
            y: s * phi.sin(),
            z: theta.cos(),
        }
    }

    /// A direction in the x-z plane at `degrees` from +z towards +x.
    pub fn planar_deg(degrees: f64) -> Self {
        Self::from_spherical(degrees.to_radians(), 0.0)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Dot product with a raw vector, for hidden variables stored as triples.
    pub fn dot_raw(&self, v: [f64; 3]) -> f64 {
        self.x * v[0] + self.y * v[1] + self.z * v[2]
    }

    pub fn antipode(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}

impl TryFrom<[f64; 3]> for Direction {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Direction::new(v[0], v[1], v[2])
    }
}

impl From<Direction> for [f64; 3] {
    fn from(d: Direction) -> Self {
        d.components()
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// A binary measurement outcome, ±1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    /// Sign with the tie at zero resolved to `Plus`.
    pub fn sign_of(v: f64) -> Self {
        if v >= 0.0 {
            Outcome::Plus
        } else {
            Outcome::Minus
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

impl TryFrom<i8> for Outcome {
    type Error = Error;

    fn try_from(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Outcome::Plus),
            -1 => Ok(Outcome::Minus),
            other => Err(Error::Range {
                value: other as f64,
                lo: -1.0,
                hi: 1.0,
            }),
        }
    }
}

impl From<Outcome> for i8 {
    fn from(o: Outcome) -> Self {
        o.value()
    }
}

/// Index of the cell `(x, y)` in the order `(+,+), (+,-), (-,+), (-,-)`.
pub fn cell_index(x: Outcome, y: Outcome) -> usize {
    let xi = usize::from(x == Outcome::Minus);
    let yi = usize::from(y == Outcome::Minus);
    2 * xi + yi
}

/// Inverse of [`cell_index`].
pub fn cell_outcomes(index: usize) -> (Outcome, Outcome) {
    let x = if index & 2 == 0 {
        Outcome::Plus
    } else {
        Outcome::Minus
    };
    let y = if index & 1 == 0 {
        Outcome::Plus
    } else {
        Outcome::Minus
    };
    (x, y)
}

/// A probability table over `{-1,+1}^2`, cells ordered as in [`cell_index`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct JointLaw {
    cells: [f64; 4],
}

impl JointLaw {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(p_pp: f64, p_pm: f64, p_mp: f64, p_mm: f64) -> Result<Self> {
        Self::from_cells([p_pp, p_pm, p_mp, p_mm])
    }

    pub fn from_cells(cells: [f64; 4]) -> Result<Self> {
        if let Some(p) = cells.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidLaw(format!(
                "cell probability {p} outside [0, 1]"
            )));
        }
        let total: f64 = cells.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidLaw(format!("cells sum to {total}")));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> [f64; 4] {
        self.cells
    }

    pub fn prob(&self, x: Outcome, y: Outcome) -> f64 {
        self.cells[cell_index(x, y)]
    }

    /// `E[xy]` under this law.
    pub fn correlation(&self) -> f64 {
        self.cells[0] - self.cells[1] - self.cells[2] + self.cells[3]
    }

    /// Samples a cell from a uniform `u` in `[0, 1)` by inverting the
    /// cumulative table.
    pub fn sample_with(&self, u: f64) -> (Outcome, Outcome) {
        let mut acc = 0.0;
        for (i, p) in self.cells.iter().enumerate() {
            acc += p;
            if u < acc {
                return cell_outcomes(i);
            }
        }
        // u rounded past the cumulative total: fall back to the last
        // cell with positive mass.
        let last = self.cells.iter().rposition(|p| *p > 0.0).unwrap_or(3);
        cell_outcomes(last)
    }
}

impl TryFrom<[f64; 4]> for JointLaw {
    type Error = Error;

    fn try_from(cells: [f64; 4]) -> Result<Self> {
        JointLaw::from_cells(cells)
    }
}

impl From<JointLaw> for [f64; 4] {
    fn from(l: JointLaw) -> Self {
        l.cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

/// Two settings per side, the arrangement of a CHSH experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SettingsQuad {
    pub a: Direction,
    pub a_prime: Direction,
    pub b: Direction,
    pub b_prime: Direction,
}

impl SettingsQuad {
    /// Planar quad in the x-z plane, angles in degrees.
    pub fn planar_deg(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        Self {
            a: Direction::planar_deg(a),
            a_prime: Direction::planar_deg(a_prime),
            b: Direction::planar_deg(b),
            b_prime: Direction::planar_deg(b_prime),
        }
    }

    /// The quad at 0°, 90° / 45°, 135° that maximizes the singlet CHSH value.
    pub fn standard_planar() -> Self {
        Self::planar_deg(0.0, 90.0, 45.0, 135.0)
    }

    /// The four pairs in functional order: (a,b), (a',b), (a',b'), (a,b').
    pub fn pairs(&self) -> [(Direction, Direction); 4] {
        [
            (self.a, self.b),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
            (self.a, self.b_prime),
        ]
    }
}

fn singlet_law_from_dot(dot: f64) -> JointLaw {
    let same = 0.25 * (1.0 - dot);
    let diff = 0.25 * (1.0 + dot);
    JointLaw {
        cells: [same, diff, diff, same],
    }
}

/// `p(x, y; a, b) = (1 - x y a·b) / 4`.
pub fn singlet_law(a: &Direction, b: &Direction) -> JointLaw {
    singlet_law_from_dot(a.dot(b).clamp(-1.0, 1.0))
}

/// `-a·b`.
pub fn singlet_correlation(a: &Direction, b: &Direction) -> f64 {
    -a.dot(b)
}

/// `P(outcome = +1)` for one party.
pub fn marginal(law: &JointLaw, party: Party) -> f64 {
    let c = law.cells;
    match party {
        Party::A => c[0] + c[1],
        Party::B => c[0] + c[2],
    }
}

/// Half the L1 distance between two tables.
pub fn variation_distance(p: &JointLaw, q: &JointLaw) -> f64 {
    0.5 * p
        .cells
        .iter()
        .zip(q.cells.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// `|E(a,b) + E(a',b) + E(a',b') - E(a,b')|`.
pub fn chsh(e_ab: f64, e_apb: f64, e_apbp: f64, e_abp: f64) -> Result<f64> {
    for e in [e_ab, e_apb, e_apbp, e_abp] {
        if !(-1.0..=1.0).contains(&e) {
            return Err(Error::Range {
                value: e,
                lo: -1.0,
                hi: 1.0,
            });
        }
    }
    Ok((e_ab + e_apb + e_apbp - e_abp).abs())
}

/// Variation distance between the singlet laws at `(a, b)` and at the
/// representatives `(a_rep, b_rep)`. Every cell moves by `|Δ(a·b)|/4`, so
/// this is exact, not only an upper bound.
pub fn tv_continuity_bound(
    a: &Direction,
    a_rep: &Direction,
    b: &Direction,
    b_rep: &Direction,
) -> f64 {
    0.5 * (a.dot(b) - a_rep.dot(b_rep)).abs()
}

/// The singlet law at a given inner product, for callers that only have `a·b`.
pub fn singlet_law_at(dot: f64) -> Result<JointLaw> {
    if !(-1.0..=1.0).contains(&dot) {
        return Err(Error::Range {
            value: dot,
            lo: -1.0,
            hi: 1.0,
        });
    }
    Ok(singlet_law_from_dot(dot))
}
