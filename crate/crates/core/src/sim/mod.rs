//! Synthetic photon-detection streams for the pulsed-excitation experiment.

mod emission;
mod experiment;
mod irf;
mod tdc;
mod transition;

pub use emission::{emission_cdf, emission_density, sample_emission_delay, BeatModulation};
pub use experiment::{
    folded_histogram, raw_histogram, run_experiment, simulate_irf_measurement, EventKind, EventRecord,
    ExperimentConfig, IrfMeasurement, PulseProbabilities, PulseTrain,
};
pub use irf::{apply_instrument_response, Echo, EmpiricalIrf, InstrumentResponse, ParametricIrf};
pub use tdc::{digitize, generate_inl_pattern, InlTable, TdcSpec};
pub use transition::{excitation_probability, saturation_intensity, AtomicTransition, PulseParams, TransitionLabel};
