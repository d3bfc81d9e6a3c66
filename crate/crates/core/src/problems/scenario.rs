use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LayeredParams, PreferenceVector};

use super::QuadraticProblem;

/// The clients of one experiment: a shared problem, one preference vector
/// per client and, for planted scenarios, the ground-truth group of each
/// client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientBank {
    pub problem: QuadraticProblem,
    pub preferences: Vec<PreferenceVector>,
    pub groups: Option<Vec<usize>>,
}

impl ClientBank {
    pub fn new(problem: QuadraticProblem, preferences: Vec<PreferenceVector>) -> Result<Self> {
        if preferences.is_empty() {
            return Err(Error::Precondition("client bank has no clients".into()));
        }
        if let Some(p) = preferences.iter().find(|p| p.len() != problem.objectives()) {
            return Err(Error::Shape(format!(
                "preference of length {} for {} objectives",
                p.len(),
                problem.objectives()
            )));
        }
        Ok(Self {
            problem,
            preferences,
            groups: None,
        })
    }

    pub fn len(&self) -> usize {
        self.preferences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preferences.is_empty()
    }

    /// Analytic optimum of every client.
    pub fn optima(&self) -> Result<Vec<LayeredParams>> {
        self.preferences
            .iter()
            .map(|w| self.problem.analytic_optimum(w))
            .collect()
    }
}

/// Groups of clients with identical preferences pulling towards antipodal
/// optima.
///
/// With `g` groups there are `g` objectives. Objective centers come in
/// antipodal pairs along the coordinate axes: `c_0 = +s·e_0`, `c_1 = −s·e_0`,
/// `c_2 = +s·e_1`, `c_3 = −s·e_1`, and so on. Group `k` puts weight
/// `dominance` on objective `k` and spreads the remainder evenly, so for an
/// even group count group `k` has its optimum at `(d − (1−d)/(g−1))·c_k`.
/// Clients are numbered group by group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictingGroups {
    pub group_sizes: Vec<usize>,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_dominance")]
    pub dominance: f64,
    #[serde(default = "default_layers")]
    pub layer_sizes: Vec<usize>,
}

fn default_separation() -> f64 {
    1.0
}

fn default_dominance() -> f64 {
    0.85
}

fn default_layers() -> Vec<usize> {
    vec![4, 4]
}

impl ConflictingGroups {
    pub fn new(group_sizes: Vec<usize>) -> Self {
        Self {
            group_sizes,
            separation: default_separation(),
            dominance: default_dominance(),
            layer_sizes: default_layers(),
        }
    }

    pub fn clients(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn build(&self) -> Result<ClientBank> {
        let g = self.group_sizes.len();
        if g < 2 {
            return Err(Error::Config("conflicting groups need at least two groups".into()));
        }
        if self.group_sizes.contains(&0) {
            return Err(Error::Config("every group needs at least one client".into()));
        }
        if !(self.dominance > 1.0 / g as f64 && self.dominance <= 1.0) {
            return Err(Error::Config(format!(
                "dominance {} must lie in (1/{g}, 1]",
                self.dominance
            )));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("separation must be positive".into()));
        }
        let dim: usize = self.layer_sizes.iter().sum();
        let axes = g.div_ceil(2);
        if dim < axes {
            return Err(Error::Config(format!(
                "{g} groups need a model dimension of at least {axes}, got {dim}"
            )));
        }
        let centers: Vec<Vec<f64>> = (0..g)
            .map(|j| {
                let mut c = vec![0.0; dim];
                c[j / 2] = if j % 2 == 0 { self.separation } else { -self.separation };
                c
            })
            .collect();
        let problem = QuadraticProblem::isotropic(centers, self.layer_sizes.clone())?;
        let rest = (1.0 - self.dominance) / (g - 1) as f64;
        let mut preferences = Vec::with_capacity(self.clients());
        let mut groups = Vec::with_capacity(self.clients());
        for (k, &size) in self.group_sizes.iter().enumerate() {
            let w: Vec<f64> = (0..g).map(|j| if j == k { self.dominance } else { rest }).collect();
            let w = PreferenceVector::new(w)?;
            for _ in 0..size {
                preferences.push(w.clone());
                groups.push(k);
            }
        }
        let mut bank = ClientBank::new(problem, preferences)?;
        bank.groups = Some(groups);
        Ok(bank)
    }
}
