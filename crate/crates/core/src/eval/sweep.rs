use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{build_grid, GridKind};
use crate::path::{ExactPosterior, MixturePath, PerturbedPosterior, PosteriorModel};
use crate::rng::TrajectoryKey;
use crate::samplers::{run_validated, MixtureRate, SamplerKind, SamplerSpec, DEFAULT_M};
use crate::space::State;

use super::empirical_tv;

pub const CSV_HEADER: &str = "sampler,K,seed,n_samples,tv,nfe_mean,wall_seconds";

/// One sampler entry of a sweep, with its knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSampler {
    /// Name written to the `sampler` column.
    pub label: String,
    pub kind: SamplerKind,
    pub m: usize,
    pub j: Option<usize>,
    pub t_theta: f64,
    /// Standard deviation of the logit noise applied to the exact posterior.
    pub noise_scale: f64,
    pub noise_seed: u64,
    pub cache: bool,
}

impl SweepSampler {
    pub fn new(kind: SamplerKind) -> Self {
        Self {
            label: kind.name().to_string(),
            kind,
            m: DEFAULT_M,
            j: None,
            t_theta: 0.0,
            noise_scale: 0.0,
            noise_seed: 0,
            cache: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub path: Arc<MixturePath>,
    pub samplers: Vec<SweepSampler>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_samples: usize,
    pub tv_coords: Vec<usize>,
    pub grid: GridKind,
    pub delta: f64,
    /// Record wall time; when off the column is written as 0 so output is
    /// byte-reproducible.
    pub timing: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samplers.is_empty() {
            return Err(Error::config("no samplers configured"));
        }
        if self.ks.is_empty() {
            return Err(Error::config("K_list is empty"));
        }
        if let Some(&k) = self.ks.iter().find(|&&k| k == 0) {
            return Err(Error::config(format!("K = {k} is not a valid step count")));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("no seeds configured"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("n_samples must be >= 1"));
        }
        crate::distributions::check_coords(&self.tv_coords, self.path.space().dims())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sampler: String,
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub tv: f64,
    pub nfe_mean: f64,
    pub wall_seconds: f64,
}

impl SweepRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.sampler,
            self.k,
            self.seed,
            self.n_samples,
            self.tv,
            self.nfe_mean,
            self.wall_seconds
        )
    }
}

fn posterior_for(
    sampler: &SweepSampler,
    exact: &Arc<ExactPosterior>,
) -> Result<Arc<dyn PosteriorModel>> {
    if sampler.noise_scale == 0.0 {
        Ok(exact.clone())
    } else {
        Ok(Arc::new(PerturbedPosterior::new(
            exact.clone(),
            sampler.noise_scale,
            sampler.noise_seed,
        )?))
    }
}

/// Runs every `(sampler, K, seed)` cell and returns records in that order.
/// Trajectories inside a cell run in parallel on the current rayon pool.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRecord>> {
    config.validate()?;
    let path = &config.path;
    let horizon = 1.0 - config.delta;
    let reference = path.exact_marginal(horizon, &config.tv_coords)?;
    let exact = Arc::new(ExactPosterior::new(path.clone()));
    let mut records = Vec::new();

    for sampler in &config.samplers {
        let posterior = posterior_for(sampler, &exact)?;
        for &k in &config.ks {
            let grid = build_grid(config.grid, path.schedule(), k, config.delta)?;
            let mut spec = SamplerSpec::new(sampler.kind, grid, posterior.clone())
                .with_m(sampler.m)
                .with_t_theta(sampler.t_theta)
                .with_cache(sampler.cache);
            if let Some(j) = sampler.j {
                spec = spec.with_j(j);
            }
            if sampler.kind.is_general() {
                spec = spec.with_cond_rate(Arc::new(MixtureRate::new(path.schedule())));
            }
            spec.validate(path)?;

            for &seed in &config.seeds {
                let start = Instant::now();
                let runs: Vec<(State, u64)> = (0..config.n_samples as u64)
                    .into_par_iter()
                    .map(|i| {
                        run_validated(&spec, path, TrajectoryKey::new(seed, i))
                            .map(|t| (t.final_state, t.nfe))
                    })
                    .collect::<Result<_>>()?;
                let wall = start.elapsed().as_secs_f64();
                let nfe_total: u64 = runs.iter().map(|r| r.1).sum();
                let samples: Vec<State> = runs.into_iter().map(|r| r.0).collect();
                let tv = empirical_tv(&samples, &reference, &config.tv_coords)?;
                records.push(SweepRecord {
                    sampler: sampler.label.clone(),
                    k,
                    seed,
                    n_samples: config.n_samples,
                    tv,
                    nfe_mean: nfe_total as f64 / config.n_samples as f64,
                    wall_seconds: if config.timing { wall } else { 0.0 },
                });
            }
        }
    }
    Ok(records)
}

/// Writes the header and one LF-terminated row per record.
pub fn write_csv<W: Write>(records: &[SweepRecord], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{blockwise_ar1, SourceSpec};
    use crate::eval::spearman;
    use crate::schedule::TimeSchedule;

    fn config(kind: SamplerKind, ks: Vec<usize>, seeds: Vec<u64>, n: usize) -> SweepConfig {
        let path = MixturePath::new(
            TimeSchedule::Linear,
            SourceSpec::Masked,
            blockwise_ar1(3, 8).unwrap(),
        )
        .unwrap();
        SweepConfig {
            path: Arc::new(path),
            samplers: vec![SweepSampler::new(kind)],
            ks,
            seeds,
            n_samples: n,
            tv_coords: vec![0, 1, 2],
            grid: GridKind::Uniform,
            delta: 0.01,
            timing: false,
        }
    }

    #[test]
    fn one_row_per_seed() {
        let records = sweep(&config(SamplerKind::Euler, vec![1], vec![3, 1, 2], 200)).unwrap();
        assert_eq!(
            records.iter().map(|r| r.seed).collect::<Vec<_>>(),
            vec![3, 1, 2]
        );
        assert!(records
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.tv) && r.k == 1));
    }

    #[test]
    fn reproducible_and_csv_shaped() {
        let cfg = config(SamplerKind::LocationCorrected, vec![2, 5], vec![7], 500);
        let a = sweep(&cfg).unwrap();
        let b = sweep(&cfg).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("location-corrected,2,7,500,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn euler_tv_trends_down_in_k() {
        let ks = vec![1, 2, 4, 8, 16];
        let records = sweep(&config(
            SamplerKind::Euler,
            ks.clone(),
            vec![0, 1, 2],
            20_000,
        ))
        .unwrap();
        let mean_tv: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let tvs: Vec<f64> = records.iter().filter(|r| r.k == k).map(|r| r.tv).collect();
                tvs.iter().sum::<f64>() / tvs.len() as f64
            })
            .collect();
        let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        assert!(spearman(&kf, &mean_tv).unwrap() <= 0.0, "{mean_tv:?}");
    }

    #[test]
    fn euler_makes_one_call_per_step_without_cache() {
        let path = MixturePath::new(
            TimeSchedule::Linear,
            SourceSpec::Uniform,
            blockwise_ar1(3, 5).unwrap(),
        )
        .unwrap();
        let mut sampler = SweepSampler::new(SamplerKind::Euler);
        sampler.cache = false;
        let cfg = SweepConfig {
            path: Arc::new(path),
            samplers: vec![sampler],
            ks: vec![6],
            seeds: vec![0],
            n_samples: 50,
            tv_coords: vec![0],
            grid: GridKind::Optimal,
            delta: 0.01,
            timing: true,
        };
        let records = sweep(&cfg).unwrap();
        assert_eq!(records[0].nfe_mean, 6.0);
    }

    #[test]
    fn rejects_empty_k_list() {
        let cfg = config(SamplerKind::Euler, vec![], vec![0], 10);
        assert!(matches!(sweep(&cfg), Err(Error::Config(_))));
    }
}
