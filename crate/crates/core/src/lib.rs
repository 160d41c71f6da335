pub mod certify;
pub mod error;
pub mod export;
pub mod grid;
pub mod lyapunov;
pub mod moments;
pub mod montecarlo;
pub mod norms;
pub mod platoon;
pub mod poly;
pub mod spectral;
pub mod ss;
pub mod tf;

pub use certify::{certify, MeanBound, NormReport, VarianceBound, Verdict};
pub use error::{Assumption, Error, Result};
pub use grid::FrequencyGrid;
pub use moments::{MomentTrajectory, StationaryMoments};
pub use montecarlo::{EnsembleStats, Record, SimulationPlan, ValidationReport};
pub use platoon::{
    build_concatenated, build_vehicle_loop, error_chain_tf, headway_filter, ConcatenatedPlatoon, InitialCondition,
    LeaderProfile, NoiseDistribution, PlatoonInput, PlatoonSpec, SpeedChange, VehicleLoop,
};
pub use poly::Polynomial;
pub use spectral::{GainScan, SpectralFactor, SpectrumLadder};
pub use ss::{realize, spectral_radius, StateSpaceModel};
pub use tf::{close_loop, sensitivity, TransferFunction};
