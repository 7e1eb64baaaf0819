use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::mlp::{load_checkpoint, save_checkpoint, Mlp};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.nlvl";

/// Numeric per-epoch table. Cells may be empty for metrics that are only
/// evaluated on some epochs. No wall-clock values are recorded, so identical
/// runs write identical files.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn new(columns: &[&str]) -> Self {
        MetricsTable {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        assert_eq!(row.len(), self.columns.len(), "metrics row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// `(x, y)` pairs for every row where both cells are present.
    pub fn series(&self, x: &str, y: &str) -> Vec<(f64, f64)> {
        match (self.column(x), self.column(y)) {
            (Some(i), Some(j)) => self
                .rows
                .iter()
                .filter_map(|r| Some((r[i]?, r[j]?)))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Last present value of a column.
    pub fn last(&self, name: &str) -> Option<f64> {
        let j = self.column(name)?;
        self.rows.iter().rev().find_map(|r| r[j])
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            for (k, v) in r.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if let Some(v) = v {
                    write!(out, "{v}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Empty("metrics file"))?;
        let mut table = MetricsTable {
            columns: header.split(',').map(str::to_string).collect(),
            rows: Vec::new(),
        };
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != table.columns.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 2,
                    msg: format!("expected {} cells, got {}", table.columns.len(), cells.len()),
                });
            }
            let row = cells
                .iter()
                .map(|c| match c.trim() {
                    "" => Ok(None),
                    v => v.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                        path: path.to_path_buf(),
                        line: n + 2,
                        msg: format!("{v:?}: {e}"),
                    }),
                })
                .collect::<Result<_>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }
}

/// On-disk layout of one training run:
///
/// ```text
/// <path>/config.toml        resolved configuration
/// <path>/metrics.csv        per-epoch metrics
/// <path>/checkpoints/       epoch_NNNNN.nlvl and final.nlvl
/// <path>/plots/             SVG figures
/// ```
#[derive(Debug, Clone)]
pub struct RunDirectory {
    path: PathBuf,
}

impl RunDirectory {
    /// Creates the layout and writes the config snapshot.
    pub fn create(path: impl AsRef<Path>, cfg: &RunConfig) -> Result<Self> {
        let run = RunDirectory {
            path: path.as_ref().to_path_buf(),
        };
        for dir in [run.path.clone(), run.checkpoint_dir(), run.plots_dir()] {
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        run.write(CONFIG_FILE, cfg.to_toml())?;
        Ok(run)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if !path.join(CONFIG_FILE).is_file() {
            return Err(Error::Config(format!(
                "{} is not a run directory (no {CONFIG_FILE})",
                path.display()
            )));
        }
        Ok(RunDirectory { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::load(self.path.join(CONFIG_FILE))
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.path.join("checkpoints")
    }

    pub fn plots_dir(&self) -> PathBuf {
        self.path.join("plots")
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.file(name);
        std::fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn save_epoch(&self, mlp: &Mlp, epoch: usize) -> Result<()> {
        save_checkpoint(mlp, self.checkpoint_dir().join(format!("epoch_{epoch:05}.nlvl")))
    }

    pub fn save_final(&self, mlp: &Mlp) -> Result<()> {
        save_checkpoint(mlp, self.checkpoint_dir().join(FINAL_CHECKPOINT))
    }

    pub fn load_final(&self) -> Result<Mlp> {
        load_checkpoint(self.checkpoint_dir().join(FINAL_CHECKPOINT))
    }

    pub fn write_metrics(&self, table: &MetricsTable) -> Result<PathBuf> {
        self.write(METRICS_FILE, table.to_csv())
    }

    /// The metrics table, or an empty one when the run has not written any.
    pub fn metrics(&self) -> Result<MetricsTable> {
        let p = self.file(METRICS_FILE);
        if !p.exists() {
            return Ok(MetricsTable::default());
        }
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        MetricsTable::parse_csv(&text, &p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip_keeps_gaps_and_bits() {
        let mut t = MetricsTable::new(&["epoch", "loss", "robust"]);
        t.push(vec![Some(0.0), Some(0.1 + 0.2), None]);
        t.push(vec![Some(1.0), Some(1e-300), Some(f64::NAN)]);
        let csv = t.to_csv();
        assert!(csv.starts_with("epoch,loss,robust\n0,0.30000000000000004,\n"));
        let back = MetricsTable::parse_csv(&csv, Path::new("m.csv")).unwrap();
        assert_eq!(back.rows[0], t.rows[0]);
        assert_eq!(back.rows[1][1], Some(1e-300));
        assert!(back.rows[1][2].unwrap().is_nan());
        assert_eq!(back.series("epoch", "robust").len(), 1);
        assert!(MetricsTable::parse_csv("a,b\n1\n", Path::new("m.csv")).is_err());
    }
}
