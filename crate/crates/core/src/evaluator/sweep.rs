//! Grid sweeps. Every cell of a sweep uses the same seed list, so cells that
//! differ only in the swept variable see identical episodes.

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::evaluate;
use crate::error::{Error, Result};
use crate::feature_store::{sample_episode, subsample_synthetic, Dataset};
use crate::trainer::{train_episode, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    /// Classes per episode; `None` uses every class in the dataset.
    pub n_way: Option<usize>,
    /// One train+evaluate per seed per cell; the seed drives both episode
    /// sampling and training.
    pub seeds: Vec<u64>,
}

impl SweepOptions {
    pub fn single(seed: u64) -> Self {
        Self {
            n_way: None,
            seeds: vec![seed],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    /// Test accuracy (percent) per seed.
    pub accs: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub spread: f64,
    /// Real support rows of the dataset used for each seed.
    pub real_indices: Vec<Vec<usize>>,
    pub synthetic_indices: Vec<Vec<usize>>,
    /// Inter-domain MMD after training, per seed.
    pub final_mmd: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub row_header: String,
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    /// `cells[row][column]`
    pub cells: Vec<Vec<SweepCell>>,
}

impl SweepTable {
    pub fn shape(&self) -> (usize, usize) {
        (self.row_labels.len(), self.column_labels.len())
    }

    /// Header row: swept variable then the column labels; mean accuracy cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.row_header);
        for c in &self.column_labels {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            out.push_str(label);
            for cell in row {
                out.push_str(&format!(",{:.2}", cell.mean));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain text; cells show `mean ± spread` when several seeds ran.
    pub fn to_text(&self) -> String {
        let show_spread = self.cells.iter().flatten().any(|c| c.accs.len() > 1);
        let cell_text = |c: &SweepCell| {
            if show_spread {
                format!("{:.2} ± {:.2}", c.mean, c.spread)
            } else {
                format!("{:.2}", c.mean)
            }
        };
        let mut grid = vec![std::iter::once(self.row_header.clone())
            .chain(self.column_labels.iter().cloned())
            .collect::<Vec<_>>()];
        for (label, row) in self.row_labels.iter().zip(&self.cells) {
            grid.push(
                std::iter::once(label.clone())
                    .chain(row.iter().map(cell_text))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|j| grid.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, row) in grid.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (s, w))| if j == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
struct CellSpec {
    shots: usize,
    alpha: f64,
    synthetic: Option<usize>,
}

struct Outcome {
    acc: f64,
    real: Vec<usize>,
    synth: Vec<usize>,
    mmd: Option<f64>,
}

fn run_one(data: &Dataset, cell: CellSpec, config: &TrainConfig, n_way: usize, seed: u64) -> Result<Outcome> {
    let mut episode = sample_episode(data, n_way, cell.shots, seed)?;
    let mut alpha = cell.alpha;
    if let Some(count) = cell.synthetic {
        episode = subsample_synthetic(&episode, count, seed)?;
        if count == 0 {
            alpha = 0.0;
        }
    }
    let cfg = TrainConfig {
        alpha,
        seed,
        ..config.clone()
    };
    let run = train_episode(&episode, &cfg)?;
    let report = evaluate(&run.adapter, &episode.query)?;
    Ok(Outcome {
        acc: report.overall_acc,
        mmd: run.final_mmd(),
        real: episode.real_indices,
        synth: episode.synthetic_indices,
    })
}

fn run_grid(
    data: &Dataset,
    grid: &[Vec<CellSpec>],
    config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<Vec<Vec<SweepCell>>> {
    if opts.seeds.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
    }
    config.validate()?;
    let n_way = opts.n_way.unwrap_or(data.num_classes());
    let jobs: Vec<(usize, usize, u64)> = grid
        .iter()
        .enumerate()
        .flat_map(|(r, row)| (0..row.len()).flat_map(move |c| opts.seeds.iter().map(move |&s| (r, c, s))))
        .collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(r, c, s)| run_one(data, grid[r][c], config, n_way, s))
        .collect::<Result<_>>()?;

    let mut it = outcomes.into_iter();
    let per_cell = opts.seeds.len();
    Ok(grid
        .iter()
        .map(|row| {
            row.iter()
                .map(|_| {
                    let outs: Vec<Outcome> = it.by_ref().take(per_cell).collect();
                    let accs: Vec<f64> = outs.iter().map(|o| o.acc).collect();
                    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                    let var = accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64;
                    SweepCell {
                        mean,
                        spread: var.sqrt(),
                        accs,
                        final_mmd: outs.iter().map(|o| o.mmd).collect(),
                        real_indices: outs.iter().map(|o| o.real.clone()).collect(),
                        synthetic_indices: outs.into_iter().map(|o| o.synth).collect(),
                    }
                })
                .collect()
        })
        .collect())
}

fn require_nonempty<T>(what: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::InvalidConfig(format!("empty {what} grid")))
    } else {
        Ok(())
    }
}

/// One row per shot count, a single accuracy column.
pub fn shot_sweep(data: &Dataset, shots: &[usize], config: &TrainConfig, opts: &SweepOptions) -> Result<SweepTable> {
    require_nonempty("shots", shots)?;
    let grid: Vec<Vec<CellSpec>> = shots
        .iter()
        .map(|&s| {
            vec![CellSpec {
                shots: s,
                alpha: config.alpha,
                synthetic: None,
            }]
        })
        .collect();
    Ok(SweepTable {
        row_header: "shots".into(),
        row_labels: shots.iter().map(|s| s.to_string()).collect(),
        column_labels: vec!["acc".into()],
        cells: run_grid(data, &grid, config, opts)?,
    })
}

/// Rows are MMD coefficients, columns are shot counts.
pub fn alpha_ablation(
    data: &Dataset,
    alphas: &[f64],
    shots: &[usize],
    config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    require_nonempty("alpha", alphas)?;
    require_nonempty("shots", shots)?;
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {a}")));
    }
    let grid: Vec<Vec<CellSpec>> = alphas
        .iter()
        .map(|&alpha| {
            shots
                .iter()
                .map(|&s| CellSpec {
                    shots: s,
                    alpha,
                    synthetic: None,
                })
                .collect()
        })
        .collect();
    Ok(SweepTable {
        row_header: "alpha".into(),
        row_labels: alphas.iter().map(|a| a.to_string()).collect(),
        column_labels: shots.iter().map(|s| s.to_string()).collect(),
        cells: run_grid(data, &grid, config, opts)?,
    })
}

/// Rows are shot counts, columns are synthetic rows kept per class. A count
/// of 0 trains without synthetic rows and with alpha forced to 0.
pub fn synth_count_ablation(
    data: &Dataset,
    counts: &[usize],
    shots: &[usize],
    config: &TrainConfig,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    require_nonempty("synthetic count", counts)?;
    require_nonempty("shots", shots)?;
    let grid: Vec<Vec<CellSpec>> = shots
        .iter()
        .map(|&s| {
            counts
                .iter()
                .map(|&c| CellSpec {
                    shots: s,
                    alpha: config.alpha,
                    synthetic: Some(c),
                })
                .collect()
        })
        .collect();
    Ok(SweepTable {
        row_header: "shots".into(),
        row_labels: shots.iter().map(|s| s.to_string()).collect(),
        column_labels: counts.iter().map(|c| c.to_string()).collect(),
        cells: run_grid(data, &grid, config, opts)?,
    })
}
