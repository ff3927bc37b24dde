//! Synthetic LASSO data, partitioned across agents.

use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::rng::{SeededRng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisParams {
    pub total_rows: usize,
    pub num_agents: usize,
    pub rows_per_agent: usize,
    pub dimension: usize,
    pub x0: Vec<f64>,
    pub noise_halfwidth: f64,
}

/// One agent's design block and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBlock {
    pub a: Array2<f64>,
    pub y: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoDataset {
    pub blocks: Vec<DataBlock>,
}

#[derive(Serialize, Deserialize)]
struct BlockFile {
    a: Vec<Vec<f64>>,
    y: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    blocks: Vec<BlockFile>,
}

impl LassoDataset {
    pub fn num_agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn dimension(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.a.ncols())
    }

    /// The full `(A, y)` with blocks stacked in agent order.
    pub fn stacked(&self) -> Result<(Array2<f64>, Array1<f64>)> {
        let a_views: Vec<_> = self.blocks.iter().map(|b| b.a.view()).collect();
        let y_views: Vec<_> = self.blocks.iter().map(|b| b.y.view()).collect();
        let a = concatenate(Axis(0), &a_views).map_err(|e| shape(e.to_string()))?;
        let y = concatenate(Axis(0), &y_views).map_err(|e| shape(e.to_string()))?;
        Ok((a, y))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dimension();
        if self.blocks.is_empty() || n == 0 {
            return Err(invalid("dataset has no blocks or zero dimension"));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.a.ncols() != n || b.a.nrows() != b.y.len() {
                return Err(shape(format!("block {i} has inconsistent shape")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockFile {
                    a: b.a.rows().into_iter().map(|r| r.to_vec()).collect(),
                    y: b.y.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        let mut blocks = Vec::with_capacity(file.blocks.len());
        for (i, b) in file.blocks.into_iter().enumerate() {
            let rows = b.a.len();
            let cols = b.a.first().map_or(0, Vec::len);
            if b.a.iter().any(|r| r.len() != cols) {
                return Err(shape(format!("block {i} has ragged rows")));
            }
            let a = Array2::from_shape_vec((rows, cols), b.a.into_iter().flatten().collect())
                .map_err(|e| shape(e.to_string()))?;
            blocks.push(DataBlock {
                a,
                y: Array1::from(b.y),
            });
        }
        let data = Self { blocks };
        data.validate()?;
        Ok(data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `A` with entries uniform on `[0, 1)`, `y = A·x0 + ε` with `ε` uniform on
/// `[−h, h)`, split into `num_agents` consecutive blocks of `rows_per_agent` rows.
///
/// Draw order on the data stream: all of `A` row-major, then `ε`.
pub fn synthesize_lasso_data(seed: u64, params: &SynthesisParams) -> Result<LassoDataset> {
    let SynthesisParams {
        total_rows,
        num_agents,
        rows_per_agent,
        dimension,
        ref x0,
        noise_halfwidth,
    } = *params;
    if num_agents == 0 || dimension == 0 || rows_per_agent == 0 {
        return Err(invalid("agents, rows and dimension must be positive"));
    }
    if num_agents * rows_per_agent != total_rows {
        return Err(invalid(format!(
            "partition mismatch: {num_agents} × {rows_per_agent} != {total_rows}"
        )));
    }
    if x0.len() != dimension {
        return Err(shape(format!("x0 has length {}, expected {dimension}", x0.len())));
    }
    if !(noise_halfwidth >= 0.0) {
        return Err(invalid(format!("noise half-width must be >= 0, got {noise_halfwidth}")));
    }
    let mut rng = SeededRng::stream(seed, Stream::Data);
    let a = Array2::from_shape_simple_fn((total_rows, dimension), || rng.unit());
    let x0 = Array1::from(x0.clone());
    let mut y = a.dot(&x0);
    if noise_halfwidth > 0.0 {
        for v in y.iter_mut() {
            *v += rng.uniform(-noise_halfwidth, noise_halfwidth);
        }
    }
    let blocks = (0..num_agents)
        .map(|i| {
            let rows = i * rows_per_agent..(i + 1) * rows_per_agent;
            DataBlock {
                a: a.slice(ndarray::s![rows.clone(), ..]).to_owned(),
                y: y.slice(ndarray::s![rows]).to_owned(),
            }
        })
        .collect();
    Ok(LassoDataset { blocks })
}
