//! Executes run configurations and turns results into report rows.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use sparse_accel_core::dispatch::{BankLayout, Dispatcher, RawSource};
use sparse_accel_core::sim::{functional_reference, run_arch, run_baseline, Arch, SimResult, TileConfig};
use sparse_accel_core::sparsity::{IneffCriterion, IsProductTable};

use crate::atomic::write_atomic;
use crate::error::CliError;
use crate::layer_file::LayerFile;
use crate::report::{ReportRow, Verdict};

/// One layer simulated under one tile geometry.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub name: String,
    pub layer: LayerFile,
    pub tile: TileConfig,
    pub archs: Vec<Arch>,
    pub act_crit: IneffCriterion,
    pub weight_crit: IneffCriterion,
}

#[derive(Debug, Clone)]
pub struct ArchOutcome {
    pub result: SimResult,
    pub verdict: Verdict,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.archs.is_empty() {
            return Err(CliError::Input("select at least one architecture".into()));
        }
        if self.tile.brick != self.layer.brick {
            return Err(CliError::Input(format!(
                "tile brick size {} differs from the layer's {}",
                self.tile.brick, self.layer.brick
            )));
        }
        self.tile.validate()?;
        self.layer.layer().validate(self.tile.brick)?;
        Ok(())
    }

    /// Simulates one architecture and checks its output against the
    /// independent functional reference.
    pub fn simulate(&self, arch: Arch) -> Result<ArchOutcome, CliError> {
        let l = &self.layer;
        let layer = l.layer();
        let result = run_arch(arch, &l.acts, &l.filters, &layer, &self.tile, self.act_crit, self.weight_crit)?;
        let expected =
            functional_reference(arch, &l.acts, &l.filters, &layer, &self.tile, self.act_crit, self.weight_crit)?;
        let verdict = if result.output == expected {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Ok(ArchOutcome { result, verdict })
    }

    /// Runs every selected architecture in parallel, one row each.
    pub fn execute(&self) -> Result<Vec<ReportRow>, CliError> {
        self.validate()?;
        let outcomes: Vec<(Arch, ArchOutcome)> = self
            .archs
            .par_iter()
            .map(|&a| self.simulate(a).map(|o| (a, o)))
            .collect::<Result<_, _>>()?;
        let baseline_cycles = match outcomes.iter().find(|(a, _)| *a == Arch::Baseline) {
            Some((_, o)) => o.result.report.cycles,
            None => {
                let l = &self.layer;
                run_baseline(&l.acts, &l.filters, &l.layer(), &self.tile)?.report.cycles
            }
        };
        Ok(outcomes
            .iter()
            .map(|(_, o)| ReportRow::new(&self.name, &o.result.report, baseline_cycles, o.verdict))
            .collect())
    }

    /// Writes the dispatcher event trace of one pass of `arch` (CNV, or
    /// the first product group of CNV²) as `cycle,lane,offset,value|IDLE`.
    pub fn write_trace(&self, arch: Arch, path: &Path) -> Result<(), CliError> {
        self.validate()?;
        let l = &self.layer;
        let layer = l.layer();
        let b = self.tile.brick;
        let table = match arch {
            Arch::Baseline => return Err(CliError::Input("the baseline has no dispatcher trace".into())),
            Arch::Cnv => None,
            Arch::Cnv2 => {
                let group = self.tile.product_groups(0, layer.filters).remove(0);
                Some(IsProductTable::for_group(&l.filters, group, self.weight_crit, b)?)
            }
        };
        let source = RawSource::new(&l.acts, self.act_crit, b);
        let layout = BankLayout::new(self.tile.lanes);
        let dispatcher = Dispatcher::new(&source, &layer, &layout, self.tile.dispatch_config(), table.as_ref())?;
        let mut text = Vec::new();
        dispatcher.run(|e| {
            writeln!(text, "{e}").expect("in-memory write");
        })?;
        write_atomic(path, &text).map_err(|e| CliError::io(path, e))
    }
}

/// Runs independent configurations in parallel, keeping input order.
pub fn execute_all(configs: &[RunConfig]) -> Result<Vec<ReportRow>, CliError> {
    let per: Vec<Vec<ReportRow>> = configs.par_iter().map(RunConfig::execute).collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Thread count from `SPARSE_ACCEL_SIM_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var("SPARSE_ACCEL_SIM_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Input(format!("SPARSE_ACCEL_SIM_THREADS must be a positive integer, got '{v}'"))),
        },
    }
}
