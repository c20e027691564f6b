use crate::error::{Error, Result};
use crate::fem::{FeSpace, FIELDS};
use crate::mesh::{build_transfer, GeometryConfig, MeshHierarchy, TransferOps};
use crate::scalar::Real;
use crate::sparse::CsrMatrix;

/// Mesh hierarchy with one finite element space per level and the transfer
/// operators between neighbouring levels.
#[derive(Clone, Debug)]
pub struct Discretization<T> {
    pub hierarchy: MeshHierarchy<T>,
    pub degree: usize,
    spaces: Vec<FeSpace<T>>,
    transfers: Vec<TransferOps<T>>,
    system_prolongations: Vec<CsrMatrix<T>>,
}

impl<T: Real> Discretization<T> {
    /// Levels `0..=finest_level`.
    pub fn new(geometry: GeometryConfig<T>, finest_level: usize, degree: usize) -> Result<Self> {
        let hierarchy = MeshHierarchy::new(geometry, finest_level + 1)?;
        let spaces = (0..=finest_level)
            .map(|l| FeSpace::new(&hierarchy, l, degree))
            .collect::<Result<Vec<_>>>()?;
        let transfers = spaces
            .windows(2)
            .map(|w| build_transfer(&hierarchy, &w[0], &w[1]))
            .collect::<Result<Vec<_>>>()?;
        let system_prolongations = transfers.iter().map(|t| t.prolongation().block_diagonal(FIELDS)).collect();
        Ok(Self {
            hierarchy,
            degree,
            spaces,
            transfers,
            system_prolongations,
        })
    }

    /// Lowest level a multigrid hierarchy descends to. For Q1 the level-0
    /// space has no macro patches, so its pressure stabilization does not
    /// vanish on smooth pressures and would spoil the coarse correction.
    pub fn coarsest_mg_level(&self) -> usize {
        if self.degree == 1 {
            1.min(self.finest_level())
        } else {
            0
        }
    }

    pub fn finest_level(&self) -> usize {
        self.spaces.len() - 1
    }

    pub fn space(&self, level: usize) -> Result<&FeSpace<T>> {
        self.spaces
            .get(level)
            .ok_or_else(|| Error::Level(format!("level {level} not built (finest {})", self.finest_level())))
    }

    /// Transfer between `coarse_level` and `coarse_level + 1`.
    pub fn transfer(&self, coarse_level: usize) -> Result<&TransferOps<T>> {
        self.transfers
            .get(coarse_level)
            .ok_or_else(|| Error::Level(format!("no transfer above level {coarse_level}")))
    }

    /// Block-diagonal system prolongation between `coarse_level` and the next level.
    pub fn system_prolongation(&self, coarse_level: usize) -> Result<&CsrMatrix<T>> {
        self.system_prolongations
            .get(coarse_level)
            .ok_or_else(|| Error::Level(format!("no transfer above level {coarse_level}")))
    }
}
