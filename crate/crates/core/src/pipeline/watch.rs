//! Polling watcher that re-runs the minimal set of stages when an input
//! changes and reports what changed in the verification report.

use std::thread;
use std::time::Duration;

use log::{info, warn};

use super::{
    diff_rows, reanalyze, run_pipeline, InputDigests, PipelineConfig, PipelineError, ReportDiff, RunOutcome, Stage,
    StageLog,
};
use crate::verifier::parse_report;

pub const DEFAULT_POLL_INTERVAL: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct WatchEvent {
    pub full_run: bool,
    pub diff: ReportDiff,
    pub exit_code: i32,
    pub stages: StageLog,
}

pub struct Watcher {
    config: PipelineConfig,
    digests: InputDigests,
    report: String,
}

impl Watcher {
    /// Run the full pipeline once and remember the resulting report.
    pub fn start(config: PipelineConfig) -> Result<(Watcher, RunOutcome), PipelineError> {
        let digests = InputDigests::compute(&config).map_err(|e| PipelineError::new(Stage::Load, e))?;
        let outcome = run_pipeline(&config)?;
        let watcher = Watcher {
            report: outcome.analysis.report.clone(),
            config,
            digests,
        };
        Ok((watcher, outcome))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Poll the inputs once. Returns an event when an input changed and the
    /// re-run succeeded. Read and run errors are logged and retried on the
    /// next tick.
    pub fn tick(&mut self) -> Option<WatchEvent> {
        let digests = match InputDigests::compute(&self.config) {
            Ok(d) => d,
            Err(e) => {
                warn!("watch: cannot read inputs, retrying next tick: {}", e);
                return None;
            }
        };
        if digests == self.digests {
            return None;
        }
        let result = if self.digests.needs_full_run(&digests) {
            info!("watch: firmware or signatures changed, running full pipeline");
            run_pipeline(&self.config)
        } else {
            info!("watch: analysis inputs changed, reanalyzing");
            match reanalyze(&self.config.cdt_path(), &self.config) {
                Err(PipelineError::StaleCdt(why)) => {
                    warn!("watch: {}, running full pipeline", why);
                    run_pipeline(&self.config)
                }
                other => other,
            }
        };
        let outcome = match result {
            Ok(o) => o,
            Err(e) => {
                warn!("watch: re-run failed, retrying next tick: {}", e);
                return None;
            }
        };
        let diff = match (parse_report(&self.report), parse_report(&outcome.analysis.report)) {
            (Ok(old), Ok(new)) => diff_rows(&old, &new),
            (Err(e), _) | (_, Err(e)) => {
                warn!("watch: cannot diff reports: {}", e);
                ReportDiff::default()
            }
        };
        // Digests are taken before the run, so a change made while it was
        // in flight triggers one more run on the next tick.
        self.digests = digests;
        self.report = outcome.analysis.report;
        Some(WatchEvent {
            full_run: outcome.stages.ran(Stage::Extract),
            diff,
            exit_code: outcome.exit_code,
            stages: outcome.stages,
        })
    }
}

/// Run the pipeline, then poll every `interval`, handing each event to
/// `on_event`. Stops after `max_ticks` polls when given.
pub fn watch(
    config: PipelineConfig,
    interval: Duration,
    max_ticks: Option<u64>,
    mut on_event: impl FnMut(&WatchEvent),
) -> Result<RunOutcome, PipelineError> {
    let (mut watcher, first) = Watcher::start(config)?;
    let mut ticks = 0;
    while max_ticks.is_none_or(|m| ticks < m) {
        thread::sleep(interval);
        ticks += 1;
        if let Some(event) = watcher.tick() {
            on_event(&event);
        }
    }
    Ok(first)
}
