//! Euler–Maruyama simulation of the time-reversed diffusion
//! `dX_s = sigma(t - s, X_s) dB_s + b(t - s, X_s) ds`, killed at the first
//! exit from `D`.
//!
//! Exit detection either looks at grid states only or, by default, also
//! samples a between-step crossing with the one-sided Brownian-bridge
//! probability `exp(-2 d1 d2 / (sigma_n^2 dt))`, where `d1`, `d2` are the
//! distances of the step endpoints to the nearest face and `sigma_n^2` is
//! the diffusion along that face's normal.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientField, DomainSpec, Location, ProblemSpec};
use crate::rng::{derive_seed, stream_rng};

mod density;
pub use density::{empirical_density_check, DensityConfig, DensityReport};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitDetection {
    GridOnly,
    #[default]
    BridgeCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub n_steps: usize,
    /// The fixed `t` of `X^{t,x}`; the path runs over `s in [0, t]`.
    pub t_eval: f64,
    pub x0: Vec<f64>,
    pub seed: u64,
    pub exit_detection: ExitDetection,
    /// When false the trajectory continues after the first exit (the exit is
    /// still recorded). Used by the comparison checks on unkilled paths.
    pub stop_at_exit: bool,
}

impl PathConfig {
    pub fn new(n_steps: usize, t_eval: f64, x0: Vec<f64>, seed: u64) -> Self {
        Self { n_steps, t_eval, x0, seed, exit_detection: ExitDetection::BridgeCorrected, stop_at_exit: true }
    }

    pub fn with_detection(mut self, d: ExitDetection) -> Self {
        self.exit_detection = d;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    pub fn unkilled(mut self) -> Self {
        self.stop_at_exit = false;
        self
    }

    pub fn dt(&self) -> f64 {
        self.t_eval / self.n_steps as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::InvalidConfig("n_steps must be at least 2".into()));
        }
        if !(self.t_eval > 0.0) || !self.t_eval.is_finite() {
            return Err(Error::InvalidConfig("t_eval must be positive".into()));
        }
        Ok(())
    }
}

/// First exit of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitInfo {
    pub index: usize,
    pub time: f64,
    pub point: Vec<f64>,
}

/// Discretized trajectory on the uniform grid `s_i = i dt`.
///
/// States are stored up to and including the exit index (or all `n_steps +
/// 1` of them for a surviving path, or when `stop_at_exit` is off).
#[derive(Debug, Clone, PartialEq)]
pub struct KilledPath {
    pub dim: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub t_eval: f64,
    pub states: Vec<f64>,
    pub exit: Option<ExitInfo>,
    pub seed: u64,
}

impl KilledPath {
    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| i as f64 * self.dt).collect()
    }

    pub fn exit_index(&self) -> Option<usize> {
        self.exit.as_ref().map(|e| e.index)
    }

    pub fn exit_time(&self) -> Option<f64> {
        self.exit.as_ref().map(|e| e.time)
    }

    pub fn survived(&self) -> bool {
        self.exit.is_none()
    }

    /// Number of grid cells inside `[0, t ∧ tau]`.
    pub fn active_cells(&self) -> usize {
        self.exit_index().unwrap_or(self.n_steps)
    }

    /// Whether the path is still alive at grid index `i`.
    pub fn alive_at(&self, i: usize) -> bool {
        self.exit_index().is_none_or(|e| i < e)
    }

    /// `X_{t ∧ tau}` and whether it lies on the boundary.
    pub fn stopped_state(&self) -> (&[f64], bool) {
        match &self.exit {
            Some(e) => (&e.point, true),
            None => (self.state(self.n_steps), false),
        }
    }

    /// `h(t ∧ tau, X_{t ∧ tau})` with the boundary value read at the forward
    /// time `t - tau`.
    pub fn terminal_value(&self, spec: &ProblemSpec) -> f64 {
        match &self.exit {
            Some(e) => (spec.data.boundary)((self.t_eval - e.time).max(0.0), &e.point),
            None => (spec.data.initial)(self.state(self.n_steps)),
        }
    }
}

/// Prepared simulator for one problem (extended, time-reflected
/// coefficients).
#[derive(Debug, Clone)]
pub struct PathSimulator {
    domain: DomainSpec,
    coeffs: CoefficientField,
    tol: f64,
}

impl PathSimulator {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.validate()?;
        Self::from_parts(spec.domain.clone(), spec.simulation_coefficients()?)
    }

    /// Simulator for raw coefficients; no Hurst validation (used by the
    /// eigen and density oracles).
    pub fn from_parts(domain: DomainSpec, coeffs: CoefficientField) -> Result<Self> {
        if coeffs.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: coeffs.dim() });
        }
        let tol = domain.default_tol();
        Ok(Self { domain, coeffs, tol })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Runs one trajectory starting at path time `s_offset` (coefficients are
    /// read at `t_eval - s_offset - i dt`), calling `observe(i, state)` for
    /// every stored state. Returns the first exit, if any.
    pub fn walk<F: FnMut(usize, &[f64])>(&self, cfg: &PathConfig, s_offset: f64, mut observe: F) -> Result<Option<ExitInfo>> {
        cfg.validate()?;
        let d = self.dim();
        if cfg.x0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cfg.x0.len() });
        }
        if self.domain.classify(&cfg.x0, self.tol) != Location::Interior {
            return Err(Error::StartOutsideDomain);
        }
        let dt = cfg.dt();
        let sqrt_dt = dt.sqrt();
        let mut normals = stream_rng(cfg.seed, 0);
        let mut uniforms = stream_rng(cfg.seed, 1);

        let mut x = cfg.x0.clone();
        let mut next = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut sig = vec![0.0; d * d];
        let mut dw = vec![0.0; d];
        let mut normal = vec![0.0; d];
        let const_sigma = self.coeffs.constant_diffusion().map(|s| s.to_vec());
        let zero_drift = self.coeffs.has_zero_drift();
        let mut exit: Option<ExitInfo> = None;

        observe(0, &x);
        for i in 0..cfg.n_steps {
            let time_arg = cfg.t_eval - s_offset - i as f64 * dt;
            if !zero_drift {
                self.coeffs.drift(time_arg, &x, &mut b);
            }
            match &const_sigma {
                Some(s) => sig.copy_from_slice(s),
                None => self.coeffs.diffusion(time_arg, &x, &mut sig),
            }
            for w in dw.iter_mut() {
                *w = sqrt_dt * normals.sample::<f64, _>(StandardNormal);
            }
            for m in 0..d {
                let mut acc = x[m];
                if !zero_drift {
                    acc += b[m] * dt;
                }
                for k in 0..d {
                    acc += sig[m * d + k] * dw[k];
                }
                next[m] = acc;
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::CoefficientEvaluationFailure { t: time_arg, reason: "non-finite state".into() });
            }

            if exit.is_none() {
                let loc = self.domain.classify(&next, self.tol);
                let crossed = match loc {
                    Location::Interior => {
                        cfg.exit_detection == ExitDetection::BridgeCorrected
                            && self.bridge_crossed(&x, &next, &sig, dt, &mut normal, &mut uniforms)
                    }
                    _ => true,
                };
                if crossed {
                    exit = Some(ExitInfo {
                        index: i + 1,
                        time: (i + 1) as f64 * dt,
                        point: self.domain.project_to_boundary(&next),
                    });
                }
            }
            std::mem::swap(&mut x, &mut next);
            observe(i + 1, &x);
            if exit.is_some() && cfg.stop_at_exit {
                break;
            }
        }
        Ok(exit)
    }

    #[inline]
    fn bridge_crossed<R: Rng>(&self, x: &[f64], next: &[f64], sig: &[f64], dt: f64, normal: &mut [f64], rng: &mut R) -> bool {
        let (face, d2) = self.domain.nearest_face(next);
        let d1 = self.domain.face_distance(face, x);
        if d1 <= 0.0 || d2 <= 0.0 {
            return true;
        }
        let d = self.dim();
        self.domain.face_normal(face, next, normal);
        // sigma_n^2 = n^T sigma sigma^T n = |sigma^T n|^2
        let mut var = 0.0;
        for k in 0..d {
            let c: f64 = (0..d).map(|m| sig[m * d + k] * normal[m]).sum();
            var += c * c;
        }
        let expo = 2.0 * d1 * d2 / (var * dt);
        if expo > 40.0 {
            return false;
        }
        rng.random::<f64>() < (-expo).exp()
    }

    pub fn simulate(&self, cfg: &PathConfig) -> Result<KilledPath> {
        self.simulate_from(cfg, 0.0)
    }

    pub(crate) fn simulate_from(&self, cfg: &PathConfig, s_offset: f64) -> Result<KilledPath> {
        let d = self.dim();
        let mut states = Vec::with_capacity((cfg.n_steps + 1) * d);
        let exit = self.walk(cfg, s_offset, |_, x| states.extend_from_slice(x))?;
        Ok(KilledPath { dim: d, dt: cfg.dt(), n_steps: cfg.n_steps, t_eval: cfg.t_eval, states, exit, seed: cfg.seed })
    }

    /// `k` independent paths; path `j` uses `derive_seed(master_seed, j)`.
    pub fn simulate_replicas(&self, base: &PathConfig, k: usize, master_seed: u64) -> Result<Vec<KilledPath>> {
        if k == 0 {
            return Err(Error::InvalidConfig("need at least one replica".into()));
        }
        (0..k as u64)
            .into_par_iter()
            .map(|j| self.simulate(&base.with_seed(derive_seed(master_seed, j))))
            .collect()
    }

    /// Paths for `t1` and `t2` driven by the same Brownian increments on the
    /// grid `dt = max(t1, t2) / n_steps`; the shorter path runs
    /// `round(min / dt)` steps.
    pub fn simulate_coupled(&self, cfg: &PathConfig, t1: f64, t2: f64) -> Result<(KilledPath, KilledPath)> {
        if !(t1 > 0.0 && t2 > 0.0) {
            return Err(Error::InvalidConfig("coupled times must be positive".into()));
        }
        let dt = t1.max(t2) / cfg.n_steps as f64;
        // Same seed gives identical normal streams; the shared dt keeps the
        // increments identical too.
        Ok((self.simulate_on_grid(cfg, t1, dt)?, self.simulate_on_grid(cfg, t2, dt)?))
    }

    fn simulate_on_grid(&self, cfg: &PathConfig, t: f64, dt: f64) -> Result<KilledPath> {
        let steps = ((t / dt).round() as usize).max(2);
        let mut c = cfg.clone();
        c.n_steps = steps;
        // t_eval drives both dt = t_eval / n_steps and the coefficient time
        // argument; use the grid-consistent horizon.
        c.t_eval = steps as f64 * dt;
        let d = self.dim();
        let mut states = Vec::with_capacity((steps + 1) * d);
        let shift = c.t_eval - t;
        let exit = self.walk(&c, shift, |_, x| states.extend_from_slice(x))?;
        Ok(KilledPath { dim: d, dt, n_steps: steps, t_eval: t, states, exit, seed: cfg.seed })
    }

    /// Fraction of `n_paths` paths still alive at each grid index in
    /// `indices` (sorted ascending), without storing trajectories.
    pub fn survival_at(&self, base: &PathConfig, n_paths: usize, master_seed: u64, indices: &[usize]) -> Result<Vec<f64>> {
        let exits: Vec<usize> = (0..n_paths as u64)
            .into_par_iter()
            .map(|j| {
                let cfg = base.with_seed(derive_seed(master_seed, j));
                self.walk(&cfg, 0.0, |_, _| {}).map(|e| e.map_or(usize::MAX, |e| e.index))
            })
            .collect::<Result<_>>()?;
        Ok(indices
            .iter()
            .map(|&i| exits.iter().filter(|&&e| e > i).count() as f64 / n_paths as f64)
            .collect())
    }
}

/// Writes trajectories as whitespace-separated columns
/// `path time x_1 .. x_d exited` after a versioned header line.
pub fn write_path_dump<W: Write>(mut w: W, paths: &[KilledPath]) -> std::io::Result<()> {
    let d = paths.first().map_or(0, |p| p.dim);
    write!(w, "# fkpath v1 dim={d}\n# path time")?;
    for m in 1..=d {
        write!(w, " x{m}")?;
    }
    writeln!(w, " exited")?;
    for (j, p) in paths.iter().enumerate() {
        for i in 0..p.len() {
            write!(w, "{j} {:.12e}", i as f64 * p.dt)?;
            for v in p.state(i) {
                write!(w, " {v:.12e}")?;
            }
            writeln!(w, " {}", u8::from(!p.alive_at(i)))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundaryData, HurstParams, Product};

    fn bm_spec(domain: DomainSpec) -> ProblemSpec {
        let d = domain.dim();
        ProblemSpec::new(domain, CoefficientField::brownian(d), HurstParams::isotropic(0.9, 0.9, d), BoundaryData::constant(1.0), Product::Skorohod, 4.0)
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let sim = PathSimulator::new(&bm_spec(DomainSpec::interval(-1.0, 1.0).unwrap())).unwrap();
        let cfg = PathConfig::new(100, 1.0, vec![0.0], 99);
        assert_eq!(sim.simulate(&cfg).unwrap(), sim.simulate(&cfg).unwrap());
    }

    #[test]
    fn start_outside_is_rejected() {
        let sim = PathSimulator::new(&bm_spec(DomainSpec::interval(-1.0, 1.0).unwrap())).unwrap();
        let cfg = PathConfig::new(10, 1.0, vec![1.0], 1);
        assert!(matches!(sim.simulate(&cfg), Err(Error::StartOutsideDomain)));
        let cfg = PathConfig::new(10, 1.0, vec![0.0, 0.0], 1);
        assert!(matches!(sim.simulate(&cfg), Err(Error::DimensionMismatch { .. })));
        let cfg = PathConfig::new(1, 1.0, vec![0.0], 1);
        assert!(sim.simulate(&cfg).is_err());
    }

    #[test]
    fn killed_path_invariants() {
        let dom = DomainSpec::interval(-0.5, 0.5).unwrap();
        let sim = PathSimulator::new(&bm_spec(dom.clone())).unwrap();
        for seed in 0..200 {
            let p = sim.simulate(&PathConfig::new(200, 2.0, vec![0.1], seed)).unwrap();
            assert_eq!(p.state(0), &[0.1]);
            if let Some(e) = &p.exit {
                assert_eq!(p.len(), e.index + 1);
                for i in 0..e.index {
                    assert!(dom.signed_distance(p.state(i)) > 0.0);
                }
                assert!(dom.signed_distance(&e.point).abs() <= dom.default_tol());
                assert!(e.time > 0.0 && e.time <= 2.0 + 1e-12);
            } else {
                assert_eq!(p.len(), 201);
            }
        }
    }

    #[test]
    fn replica_one_matches_derived_seed() {
        let sim = PathSimulator::new(&bm_spec(DomainSpec::interval(-1.0, 1.0).unwrap())).unwrap();
        let cfg = PathConfig::new(50, 1.0, vec![0.0], 0);
        let reps = sim.simulate_replicas(&cfg, 1, 1234).unwrap();
        let direct = sim.simulate(&cfg.with_seed(derive_seed(1234, 0))).unwrap();
        assert_eq!(reps[0], direct);
    }

    #[test]
    fn replicas_do_not_depend_on_thread_count() {
        let sim = PathSimulator::new(&bm_spec(DomainSpec::interval(-1.0, 1.0).unwrap())).unwrap();
        let cfg = PathConfig::new(50, 1.0, vec![0.0], 0);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let eight = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| sim.simulate_replicas(&cfg, 64, 5).unwrap());
        let b = eight.install(|| sim.simulate_replicas(&cfg, 64, 5).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn bridge_only_adds_exits() {
        let sim = PathSimulator::new(&bm_spec(DomainSpec::interval(-1.0, 1.0).unwrap())).unwrap();
        for n in [10, 40, 160] {
            let mut grid_exits = 0;
            let mut bridge_exits = 0;
            for seed in 0..400 {
                let base = PathConfig::new(n, 1.0, vec![0.3], seed);
                let g = sim.simulate(&base.clone().with_detection(ExitDetection::GridOnly)).unwrap();
                let b = sim.simulate(&base).unwrap();
                // pathwise: the bridge exit can only come earlier
                match (g.exit_index(), b.exit_index()) {
                    (Some(gi), Some(bi)) => assert!(bi <= gi),
                    (Some(_), None) => panic!("bridge run survived a grid exit"),
                    _ => {}
                }
                grid_exits += usize::from(!g.survived());
                bridge_exits += usize::from(!b.survived());
            }
            assert!(bridge_exits >= grid_exits);
        }
    }

    #[test]
    fn coupled_identical_for_equal_times_and_autonomous_coefficients() {
        let sim = PathSimulator::new(&bm_spec(DomainSpec::interval(-3.0, 3.0).unwrap())).unwrap();
        let cfg = PathConfig::new(100, 1.0, vec![0.0], 42);
        let (a, b) = sim.simulate_coupled(&cfg, 1.0, 1.0).unwrap();
        assert_eq!(a.states, b.states);
        let (a, b) = sim.simulate_coupled(&cfg, 1.0, 0.5).unwrap();
        let common = b.len().min(a.len());
        assert_eq!(&a.states[..common], &b.states[..common]);
    }

    #[test]
    fn path_dump_has_versioned_header() {
        let sim = PathSimulator::new(&bm_spec(DomainSpec::interval(-1.0, 1.0).unwrap())).unwrap();
        let p = sim.simulate(&PathConfig::new(4, 1.0, vec![0.0], 3)).unwrap();
        let mut buf = Vec::new();
        write_path_dump(&mut buf, &[p.clone()]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("# fkpath v1 dim=1"));
        assert_eq!(s.lines().count(), 2 + p.len());
    }
}
