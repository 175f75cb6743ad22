//! Ready-made experiments, one per published result, at desk scale
//! (populations capped at 8000).

use crate::config::{ExperimentConfig, Sweep};
use crate::engine::ChurnSchedule;
use crate::error::{Result, SimError};
use crate::metrics::MetricsDetail;

pub const PRESET_NAMES: [&str; 7] = [
    "fig3-convergence",
    "fig4-slac-partition",
    "fig5-slacer-gcc",
    "fig6-smallworld",
    "fig7-typical-run",
    "churn-recovery",
    "w-sweep",
];

/// Largest population used by any preset.
pub const DESK_SCALE_N: usize = 8000;

/// One-line summary of a preset.
pub fn describe(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig3-convergence" => "cycles to high cooperation from all-defect, W in {0.9, 1.0}, N=2000",
        "fig4-slac-partition" => "SLAC (W=1) largest component and CCP across N in {2000, 4000, 8000}",
        "fig5-slacer-gcc" => "SLACER (W=0.9) giant component and CCP across N in {2000, 4000, 8000}",
        "fig6-smallworld" => "clustering and path length at W=0.9 across N in {2000, 4000, 8000}",
        "fig7-typical-run" => "per-cycle metrics of single N=2000, W=0.9 runs",
        "churn-recovery" => "50% of nodes reset once after convergence, N=2000, W=0.9",
        "w-sweep" => "cooperation over 2000 cycles for W in {0.5, 0.7, 0.9, 1.0}, N=2000",
        _ => return None,
    })
}

fn size_sweep(w: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.run.params.w = w;
    c.run.metrics_detail = MetricsDetail::Basic;
    c.run.metrics_interval = 10;
    c.sweep = Some(Sweep { key: "n".into(), values: ["2000", "4000", "8000"].map(String::from).to_vec() });
    c
}

/// The fully specified config for `name`.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    match name {
        "fig3-convergence" => {
            c.run.metrics_detail = MetricsDetail::Basic;
            c.sweep = Some(Sweep { key: "w".into(), values: vec!["0.9".into(), "1".into()] });
        }
        "fig4-slac-partition" => c = size_sweep(1.0),
        "fig5-slacer-gcc" | "fig6-smallworld" => c = size_sweep(0.9),
        "fig7-typical-run" => {
            c.run.metrics_detail = MetricsDetail::Full;
            c.run.metrics_interval = 1;
            c.charts = true;
        }
        "churn-recovery" => {
            c.run.metrics_detail = MetricsDetail::Basic;
            c.run.stop_ccp = Some(0.90);
            c.run.churn = Some(ChurnSchedule::once_after_convergence(0.5));
        }
        "w-sweep" => {
            c.run.metrics_detail = MetricsDetail::Basic;
            c.run.max_cycles = 2000;
            c.run.stop_coop_fraction = None;
            c.sweep = Some(Sweep { key: "w".into(), values: ["0.5", "0.7", "0.9", "1"].map(String::from).to_vec() });
            c.charts = true;
        }
        _ => {
            return Err(SimError::UnknownPreset { name: name.to_string(), valid: PRESET_NAMES.to_vec() });
        }
    }
    Ok(c)
}
