//! Named configurations reproducing the standard parameter sets.

use crate::config::{ConfigError, SimulationConfig};

const FIG2: &str = "\
# Relaxation from |down> for the coupling sweep, all four methods.
method = nca, nca_markov, born, born_markov
bath.alpha = 0.01, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0
grid.dt = 0.1
grid.born_dt = 0.01
grid.t_max = 300
";

const SPECTRA: &str = "\
# Steady-state sigma_z correlation spectra.
method = nca, nca_markov, born
bath.alpha = 0.1, 0.5, 0.9
spectrum.eta = 0.002
spectrum.t_max = 4000
spectrum.omega_min = 0.0005
spectrum.omega_max = 0.3
spectrum.omega_points = 600
";

const TRANSMISSION: &str = "\
# |T(omega)|^2 over the (omega, epsilon) plane, coherent and incoherent regimes.
method = nca, born
bath.alpha = 0.1, 0.6
spectrum.eta = 0.002
spectrum.t_max = 4000
transmission.epsilon_min = -0.5
transmission.epsilon_max = 0.5
transmission.epsilon_points = 41
transmission.omega_min = 0
transmission.omega_max = 0.3
transmission.omega_points = 121
transmission.n_coupling = 1
";

pub const NAMES: [&str; 3] = ["fig2", "spectra", "transmission"];

/// Configuration text of a preset.
pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "fig2" => Some(FIG2),
        "spectra" => Some(SPECTRA),
        "transmission" => Some(TRANSMISSION),
        _ => None,
    }
}

pub fn preset(name: &str) -> Result<SimulationConfig, ConfigError> {
    let text = preset_text(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    SimulationConfig::parse(text)
}
