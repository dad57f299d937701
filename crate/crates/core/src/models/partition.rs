//! Guessing over a finite partition of the sphere.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::protocol::{Flavor, HiddenState, Model, StationOutput};
use crate::rng::TrialRng;
use crate::target_law::{singlet_law, Direction, JointLaw, Outcome};

/// A partition of the unit sphere into `cells()` cells, with one
/// representative direction per cell.
pub trait CellMap: Send + Sync + fmt::Debug {
    fn cells(&self) -> usize;

    /// Must be total: every unit vector maps to some cell in `0..cells()`.
    fn cell_of(&self, d: &Direction) -> usize;

    fn representative(&self, cell: usize) -> Direction;
}

/// Equal-area latitude bands (uniform in `z`) crossed with equal azimuth
/// sectors. Cell index is `band * sectors + sector`.
#[derive(Debug, Clone)]
pub struct GridPartition {
    bands: usize,
    sectors: usize,
    representatives: Vec<Direction>,
}

/// Largest power-of-two cell count in the registered family.
pub const MAX_REGISTERED_CELLS: usize = 1 << 16;

impl GridPartition {
    pub fn new(bands: usize, sectors: usize) -> Result<Self> {
        if bands == 0 || sectors == 0 {
            return Err(Error::Parameter(
                "grid partition needs at least one band and sector".into(),
            ));
        }
        let mut grid = Self {
            bands,
            sectors,
            representatives: Vec::new(),
        };
        grid.representatives = (0..bands * sectors)
            .map(|c| grid.centroid_or_midpoint(c))
            .collect();
        Ok(grid)
    }

    /// The nested family indexed by powers of two: `k = 2^j` uses
    /// `2^(j/2)` bands and `2^(j - j/2)` sectors, so each member refines
    /// the previous one. `k = 8` is the octant partition.
    pub fn registered(k: usize) -> Result<Self> {
        if k == 0 || !k.is_power_of_two() || k > MAX_REGISTERED_CELLS {
            return Err(Error::Parameter(format!(
                "no registered partition with {k} cells (use a power of two up to {MAX_REGISTERED_CELLS})"
            )));
        }
        let j = k.trailing_zeros();
        Self::new(1 << (j / 2), 1 << (j - j / 2))
    }

    /// Sign octants with normalized-centroid representatives `(±1,±1,±1)/√3`.
    pub fn octants() -> Self {
        Self::registered(8).expect("8 is registered")
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn sectors(&self) -> usize {
        self.sectors
    }

    fn band_bounds(&self, band: usize) -> (f64, f64) {
        let w = 2.0 / self.bands as f64;
        (-1.0 + w * band as f64, -1.0 + w * (band + 1) as f64)
    }

    fn sector_bounds(&self, sector: usize) -> (f64, f64) {
        let w = TAU / self.sectors as f64;
        (w * sector as f64, w * (sector + 1) as f64)
    }

    /// Normalized mean of the uniform measure on the cell, or the
    /// band/sector midpoint when that mean is degenerate or falls outside
    /// the cell.
    fn centroid_or_midpoint(&self, cell: usize) -> Direction {
        let (band, sector) = (cell / self.sectors, cell % self.sectors);
        let (z1, z2) = self.band_bounds(band);
        let (p1, p2) = self.sector_bounds(sector);
        // mean of sqrt(1 - z^2) over [z1, z2]
        let antideriv =
            |z: f64| 0.5 * (z * (1.0 - z * z).max(0.0).sqrt() + z.clamp(-1.0, 1.0).asin());
        let mean_r = (antideriv(z2) - antideriv(z1)) / (z2 - z1);
        let cx = mean_r * (p2.sin() - p1.sin()) / (p2 - p1);
        let cy = mean_r * (p1.cos() - p2.cos()) / (p2 - p1);
        let cz = 0.5 * (z1 + z2);
        if let Ok(d) = Direction::normalized(cx, cy, cz) {
            if (cx * cx + cy * cy + cz * cz).sqrt() > 1e-9 && self.cell_of(&d) == cell {
                return d;
            }
        }
        let zm = 0.5 * (z1 + z2);
        let pm = 0.5 * (p1 + p2);
        Direction::from_spherical(zm.acos(), pm)
    }
}

impl CellMap for GridPartition {
    fn cells(&self) -> usize {
        self.bands * self.sectors
    }

    fn cell_of(&self, d: &Direction) -> usize {
        let band = (((d.z() + 1.0) * 0.5 * self.bands as f64) as usize).min(self.bands - 1);
        let mut phi = d.y().atan2(d.x());
        if phi < 0.0 {
            phi += TAU;
        }
        let sector = ((phi / TAU * self.sectors as f64) as usize).min(self.sectors - 1);
        band * self.sectors + sector
    }

    fn representative(&self, cell: usize) -> Direction {
        self.representatives[cell]
    }
}

/// The partition used by the guessing-over-cells protocol.
#[derive(Debug, Clone)]
pub struct PartitionParams {
    pub map: Arc<dyn CellMap>,
}

impl PartitionParams {
    pub fn new(map: Arc<dyn CellMap>) -> Self {
        Self { map }
    }

    pub fn registered(k: usize) -> Result<Self> {
        Ok(Self::new(Arc::new(GridPartition::registered(k)?)))
    }

    pub fn k(&self) -> usize {
        self.map.cells()
    }
}

impl Default for PartitionParams {
    fn default() -> Self {
        Self::new(Arc::new(GridPartition::octants()))
    }
}

/// Guesses a cell for each side, pre-draws `(X, Y)` from the singlet law at
/// the two representatives, and accepts iff each setting falls in its
/// guessed cell.
#[derive(Debug, Clone)]
pub struct PartitionGuessing {
    params: PartitionParams,
    laws: Vec<JointLaw>,
}

pub fn partition_guessing(params: PartitionParams) -> Result<PartitionGuessing> {
    let k = params.k();
    if k == 0 {
        return Err(Error::Parameter("partition has no cells".into()));
    }
    for cell in 0..k {
        let rep = params.map.representative(cell);
        if params.map.cell_of(&rep) != cell {
            return Err(Error::Parameter(format!(
                "representative of cell {cell} lies outside it"
            )));
        }
    }
    let reps: Vec<Direction> = (0..k).map(|c| params.map.representative(c)).collect();
    let laws = reps
        .iter()
        .flat_map(|ra| reps.iter().map(move |rb| singlet_law(ra, rb)))
        .collect();
    Ok(PartitionGuessing { params, laws })
}

impl PartitionGuessing {
    pub fn k(&self) -> usize {
        self.params.k()
    }

    pub fn cell_of(&self, d: &Direction) -> usize {
        self.params.map.cell_of(d)
    }

    pub fn representative_of(&self, d: &Direction) -> Direction {
        self.params.map.representative(self.cell_of(d))
    }

    pub fn representative(&self, cell: usize) -> Direction {
        self.params.map.representative(cell)
    }
}

impl Model for PartitionGuessing {
    fn name(&self) -> String {
        format!("guess-partition(k={})", self.k())
    }

    fn flavor(&self) -> Flavor {
        Flavor::Binary
    }

    fn sample_hidden(&self, rng: &mut TrialRng) -> HiddenState {
        let k = self.k();
        let ga = rng.index(k);
        let gb = rng.index(k);
        let (x, y) = self.laws[ga * k + gb].sample_with(rng.uniform());
        let mut z = HiddenState::new();
        z.push_index(ga);
        z.push_index(gb);
        z.push(x.value() as f64);
        z.push(y.value() as f64);
        z
    }

    fn station_a(&self, z: &HiddenState, a: &Direction) -> StationOutput {
        StationOutput::accept(Outcome::sign_of(z.get(2)), self.cell_of(a) == z.index(0))
    }

    fn station_b(&self, z: &HiddenState, b: &Direction) -> StationOutput {
        StationOutput::accept(Outcome::sign_of(z.get(3)), self.cell_of(b) == z.index(1))
    }
}
