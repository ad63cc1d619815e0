use std::fs;
use std::io::Write;
use std::path::Path;

use matnet_core::Result;
use serde::{Deserialize, Serialize};

use crate::study::{StudyConfig, StudyKind};

/// One (configuration, seed) cell. Metrics are `None` when not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: String,
    /// Sweep value, NaN for variant studies.
    pub value: f64,
    pub seed: u64,
    pub e_c: Option<f64>,
    pub initial_e_c: Option<f64>,
    pub e_sigma: Option<f64>,
    /// Stress error against the first variant of the same seed.
    pub e_sigma_cross: Option<f64>,
    /// Mean iterations per load step.
    pub iterations: Option<f64>,
    pub active_nodes: Option<f64>,
    pub time_per_iter_node_ns: Option<f64>,
    /// Solver wall time over the six paths.
    pub total_ns: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn new(config: &str, value: f64, seed: u64) -> Self {
        Self {
            config: config.to_string(),
            value,
            seed,
            e_c: None,
            initial_e_c: None,
            e_sigma: None,
            e_sigma_cross: None,
            iterations: None,
            active_nodes: None,
            time_per_iter_node_ns: None,
            total_ns: None,
            error: None,
        }
    }
}

/// `(mean, std)` pairs over the successful seeds of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config: String,
    pub value: f64,
    pub seeds: usize,
    pub failed: usize,
    pub e_c: Option<(f64, f64)>,
    pub e_sigma: Option<(f64, f64)>,
    pub e_sigma_cross: Option<(f64, f64)>,
    pub iterations: Option<(f64, f64)>,
    pub active_nodes: Option<(f64, f64)>,
    pub time_per_iter_node_ns: Option<(f64, f64)>,
    pub total_ns: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: StudyKind,
    pub config: StudyConfig,
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    /// False when any cell failed.
    pub complete: bool,
}

pub const REPORT_COLUMNS_LEN: usize = 20;
pub const REPORT_COLUMNS: [&str; REPORT_COLUMNS_LEN] = [
    "row",
    "config",
    "value",
    "seed",
    "seeds",
    "e_c",
    "e_c_std",
    "e_sigma",
    "e_sigma_std",
    "e_sigma_cross",
    "e_sigma_cross_std",
    "iterations",
    "iterations_std",
    "active_nodes",
    "active_nodes_std",
    "time_per_iter_node_ns",
    "time_per_iter_node_ns_std",
    "total_ns",
    "total_ns_std",
    "error",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn pair(v: Option<(f64, f64)>) -> [String; 2] {
    match v {
        Some((m, s)) => [m.to_string(), s.to_string()],
        None => [String::new(), String::new()],
    }
}

impl StudyReport {
    pub fn aggregate(&self, config: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.config == config)
    }

    /// One `cell` row per (configuration, seed), then one `mean` row per
    /// configuration carrying means and standard deviations.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_COLUMNS)?;
        for c in &self.cells {
            let mut row =
                vec!["cell".to_string(), c.config.clone(), c.value.to_string(), c.seed.to_string(), "1".into()];
            for v in
                [c.e_c, c.e_sigma, c.e_sigma_cross, c.iterations, c.active_nodes, c.time_per_iter_node_ns, c.total_ns]
            {
                row.push(cell(v));
                row.push(String::new());
            }
            row.push(c.error.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        for a in &self.aggregates {
            let mut row =
                vec!["mean".to_string(), a.config.clone(), a.value.to_string(), String::new(), a.seeds.to_string()];
            for v in
                [a.e_c, a.e_sigma, a.e_sigma_cross, a.iterations, a.active_nodes, a.time_per_iter_node_ns, a.total_ns]
            {
                row.extend(pair(v));
            }
            row.push(if a.failed > 0 { format!("{} failed", a.failed) } else { String::new() });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Gnuplot script plotting the mean rows of `report.csv` with error bars.
    pub fn plot_recipe(&self) -> String {
        let x = if self.study.is_sweep() { "3" } else { "0" };
        let xtic = if self.study.is_sweep() { "" } else { ":xtic(2)" };
        let mut s = String::new();
        s.push_str("set datafile separator ','\n");
        s.push_str("set terminal pngcairo size 1200,900\n");
        s.push_str(&format!("set output '{}.png'\n", self.study));
        s.push_str("set multiplot layout 2,2\n");
        for (title, col) in [("e_C", 6), ("e_sigma", 8), ("active nodes", 14), ("ns per iteration per node", 16)] {
            s.push_str(&format!("set title '{title}'\n"));
            s.push_str(&format!(
                "plot 'report.csv' using {x}:(stringcolumn(1) eq 'mean' ? ${col} : NaN):{}{xtic} with yerrorbars notitle\n",
                col + 1
            ));
        }
        s.push_str("unset multiplot\n");
        s
    }

    /// Writes `report.csv`, `report.json` and `plot.gp` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_csv(fs::File::create(dir.join("report.csv"))?)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(dir.join("plot.gp"), self.plot_recipe())?;
        Ok(())
    }
}
