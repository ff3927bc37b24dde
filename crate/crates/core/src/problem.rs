use ndarray::ArrayView1;

use crate::error::{invalid, shape, Result};
use crate::oracle::{sum_oracles, FirstOrderOracle, OracleSpec};

/// `min_x Σᵢ fᵢ(x)` with one oracle-backed local objective per agent.
pub struct Problem {
    agents: Vec<Box<dyn FirstOrderOracle>>,
    dimension: usize,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("num_agents", &self.agents.len())
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl Problem {
    pub fn new(agents: Vec<Box<dyn FirstOrderOracle>>) -> Result<Self> {
        let dimension = agents
            .first()
            .ok_or_else(|| invalid("problem needs at least one agent"))?
            .dimension();
        if agents.iter().any(|a| a.dimension() != dimension) {
            return Err(shape("agents disagree on the problem dimension"));
        }
        Ok(Self { agents, dimension })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn agent(&self, i: usize) -> &dyn FirstOrderOracle {
        self.agents[i].as_ref()
    }

    pub fn agents(&self) -> impl Iterator<Item = &dyn FirstOrderOracle> {
        self.agents.iter().map(|a| a.as_ref())
    }

    /// `f(z) = Σᵢ fᵢ(z)` with the true local objectives.
    pub fn true_objective(&self, z: ArrayView1<f64>) -> Result<f64> {
        let mut total = 0.0;
        for agent in &self.agents {
            total += agent.true_value(z)?;
        }
        Ok(total)
    }

    pub fn certified_specs(&self, accuracy: f64) -> Result<Vec<OracleSpec>> {
        self.agents.iter().map(|a| a.certified_spec(accuracy)).collect()
    }

    /// `(Σδᵢ, ΣLᵢ)` for the whole objective.
    pub fn aggregate_spec(&self, accuracy: f64) -> Result<OracleSpec> {
        sum_oracles(&self.certified_specs(accuracy)?)
    }

    /// Largest per-agent curvature constant.
    pub fn max_lipschitz(&self, accuracy: f64) -> Result<f64> {
        Ok(self
            .certified_specs(accuracy)?
            .iter()
            .map(|s| s.lipschitz)
            .fold(0.0, f64::max))
    }
}
