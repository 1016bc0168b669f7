//! JSON environment files: `size`, `horizon`, optional `labels`, and per-step
//! row-major kernels and measure vectors. Floats round-trip bit-exactly.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::environment::{Environment, Kernel, Measure};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFile {
    pub size: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// `kernels[t-1][x*size + y] = K_t(x,y)`
    pub kernels: Vec<Vec<f64>>,
    pub measures: Vec<Vec<f64>>,
}

impl EnvironmentFile {
    pub fn from_environment(env: &Environment) -> Self {
        let n = env.size();
        let kernels = (1..=env.horizon())
            .map(|t| {
                let m = env.kernel(t).matrix();
                (0..n).flat_map(|x| (0..n).map(move |y| m[(x, y)])).collect()
            })
            .collect();
        let measures = (1..=env.horizon()).map(|t| env.measure(t).weights().iter().copied().collect()).collect();
        EnvironmentFile { size: n, horizon: env.horizon(), labels: env.space().labels().map(<[String]>::to_vec), kernels, measures }
    }

    /// Builds the environment without validating the non-decreasing hypotheses.
    /// Consecutive identical steps share storage.
    pub fn into_environment(self) -> Result<Environment> {
        let n = self.size;
        if self.kernels.len() != self.horizon || self.measures.len() != self.horizon {
            return Err(Error::Structural(format!(
                "horizon {} but {} kernels and {} measures",
                self.horizon,
                self.kernels.len(),
                self.measures.len()
            )));
        }
        let mut kernels: Vec<Arc<Kernel>> = Vec::with_capacity(self.horizon);
        let mut measures: Vec<Arc<Measure>> = Vec::with_capacity(self.horizon);
        for (t, (k, m)) in self.kernels.into_iter().zip(self.measures).enumerate() {
            if k.len() != n * n || m.len() != n {
                return Err(Error::Structural(format!("step {} has {} kernel entries and {} weights for size {n}", t + 1, k.len(), m.len())));
            }
            let k = Kernel::new(DMatrix::from_row_slice(n, n, &k)).map_err(|e| at_step(e, t + 1))?;
            let m = Measure::new(m).map_err(|e| at_step(e, t + 1))?;
            match (kernels.last(), measures.last()) {
                (Some(pk), Some(pm)) if **pk == k && **pm == m => {
                    kernels.push(Arc::clone(pk));
                    measures.push(Arc::clone(pm));
                }
                _ => {
                    kernels.push(Arc::new(k));
                    measures.push(Arc::new(m));
                }
            }
        }
        let env = Environment::from_shared(kernels, measures)?;
        match self.labels {
            Some(l) => env.with_labels(l),
            None => Ok(env),
        }
    }
}

fn at_step(e: Error, t: usize) -> Error {
    match e {
        Error::Domain(s) => Error::Domain(format!("step {t}: {s}")),
        Error::Structural(s) => Error::Structural(format!("step {t}: {s}")),
        other => other,
    }
}

pub fn environment_to_json(env: &Environment) -> Result<String> {
    serde_json::to_string(&EnvironmentFile::from_environment(env)).map_err(|e| Error::Io(e.to_string()))
}

pub fn environment_from_json(text: &str) -> Result<Environment> {
    let file: EnvironmentFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("environment file: {e}")))?;
    file.into_environment()
}

pub fn read_environment(path: &Path) -> Result<Environment> {
    environment_from_json(&std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?)
}

pub fn write_environment(env: &Environment, path: &Path) -> Result<()> {
    std::fs::write(path, environment_to_json(env)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{cycle_edges, gen_stick, ConductanceSchedule, EdgeExpr};

    #[test]
    fn round_trip_is_bit_exact() {
        let s = ConductanceSchedule::uniform(
            5,
            20,
            &cycle_edges(5),
            EdgeExpr::PowerLaw { scale: 0.1, exponent: 0.7, offset: 1.0 / 3.0 + 1.0 },
            true,
        )
        .unwrap();
        let env = gen_stick(5, &s).unwrap();
        let back = environment_from_json(&environment_to_json(&env).unwrap()).unwrap();
        assert_eq!(back.horizon(), 20);
        for t in 1..=20 {
            let (a, b) = (env.kernel(t).matrix(), back.kernel(t).matrix());
            assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            let (a, b) = (env.measure(t).weights(), back.measure(t).weights());
            assert!(a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn constant_steps_share_storage() {
        let s = ConductanceSchedule::uniform(4, 30, &cycle_edges(4), EdgeExpr::Constant { value: 2.0 }, true).unwrap();
        let env = gen_stick(4, &s).unwrap();
        let back = environment_from_json(&environment_to_json(&env).unwrap()).unwrap();
        assert_eq!(back.kernel_runs(), vec![(1, 30)]);
    }

    #[test]
    fn malformed_files_name_the_step() {
        let bad = r#"{"size":2,"horizon":2,"kernels":[[1,0,0,1],[0.5,0.6,0,1]],"measures":[[1,1],[1,1]]}"#;
        let err = environment_from_json(bad).unwrap_err();
        assert!(err.to_string().contains("step 2"), "{err}");
        let short = r#"{"size":2,"horizon":3,"kernels":[[1,0,0,1]],"measures":[[1,1]]}"#;
        assert!(matches!(environment_from_json(short), Err(Error::Structural(_))));
    }
}
