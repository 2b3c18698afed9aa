//! Shared fixtures for the benchmarks in `benches/`.

use fairrank::fairspec::u_phi;
use fairrank::noiselab::{synth_nonuniform_fdr, tau_for_gap, FdrSynthSpec};
use fairrank::{FairnessSpec, GammaMode, Instance, Result, SpecParams};

/// Two-group mixture instance at FDR gap 0.3 with an equal-representation spec.
pub fn fixture(m: usize, n: usize, seed: u64) -> Result<(Instance, FairnessSpec)> {
    let base = FdrSynthSpec::new(m, n, 0.0)?;
    let tau = tau_for_gap(&base, 0.3)?;
    let inst = synth_nonuniform_fdr(&base.with_tau(tau)?, seed)?;
    let spec = FairnessSpec::new(u_phi(n, 2, 1.0)?, 2, GammaMode::Heuristic, SpecParams::default(), None)?;
    Ok((inst, spec))
}
