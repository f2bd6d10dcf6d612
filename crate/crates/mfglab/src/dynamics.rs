//! Noising transitions and generation dynamics.
//!
//! Noising runs in `s in [0, T]` with the data at `s = 0`; the forward SDE
//! is `dY = -f(Y) ds + sigma dW` with affine `f(x) = a x + b`, so the
//! transition kernel is Gaussian and sampled exactly. Generation runs in
//! `t = T - s` and queries the score at noising time `T - t`.

use crate::autodiff::{batched, MlpParams};
use crate::error::{Error, Result};
use crate::targets::{Gaussian, ParticleEnsemble, TargetDistribution};
use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Affine-drift noising specification with constant coefficients, so the
/// transition kernel is available in closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeSpec {
    /// Drift `f(x, t) = a x + b` (per unit time).
    pub a: f64,
    pub b: f64,
    /// Diffusion (per square-root time), constant and positive.
    pub sigma: f64,
    /// Horizon `T`.
    pub horizon: f64,
    pub dim: usize,
}

impl SdeSpec {
    pub fn new(a: f64, b: f64, sigma: f64, horizon: f64, dim: usize) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if horizon <= 0.0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if dim == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        Ok(Self {
            a,
            b,
            sigma,
            horizon,
            dim,
        })
    }

    /// The standard Ornstein-Uhlenbeck instance `f(x) = x/2`, `sigma = 1`.
    pub fn ou(dim: usize, horizon: f64) -> Self {
        Self::new(0.5, 0.0, 1.0, horizon, dim).expect("valid OU spec")
    }

    /// `f(x) = a x + b` applied row-wise.
    pub fn drift(&self, x: &Array2<f64>) -> Array2<f64> {
        x * self.a + self.b
    }

    /// `div f = a d`, constant in space.
    pub fn div_f(&self) -> f64 {
        self.a * self.dim as f64
    }

    /// Noising transition over elapsed time `s`:
    /// `Y(s) = scale * Y(0) + shift + N(0, var I)`.
    pub fn transition(&self, s: f64) -> (f64, f64, f64) {
        if self.a != 0.0 {
            let scale = (-self.a * s).exp();
            let shift = -(self.b / self.a) * (1.0 - scale);
            let var = self.sigma * self.sigma * (1.0 - (-2.0 * self.a * s).exp())
                / (2.0 * self.a);
            (scale, shift, var)
        } else {
            (1.0, -self.b * s, self.sigma * self.sigma * s)
        }
    }

    /// Stationary variance of the noising process, when it exists.
    pub fn stationary_var(&self) -> Option<f64> {
        (self.a > 0.0).then(|| self.sigma * self.sigma / (2.0 * self.a))
    }

    /// Number of steps for a step size that divides the horizon.
    pub fn steps_for(&self, dt: f64) -> Result<usize> {
        if dt <= 0.0 {
            return Err(Error::Config("step size must be positive".into()));
        }
        let k = (self.horizon / dt).round();
        if (k * dt - self.horizon).abs() > 1e-12 * self.horizon.max(1.0) {
            return Err(Error::Config(format!(
                "step size {dt} does not divide horizon {}",
                self.horizon
            )));
        }
        Ok(k as usize)
    }
}

/// The law of the noising process at time `s` started from a Gaussian or
/// mixture target: means scale, covariances contract, and isotropic noise
/// is added. Undefined for the checkerboard.
pub fn noised_target(target: &TargetDistribution, spec: &SdeSpec, s: f64) -> Result<TargetDistribution> {
    let (scale, shift, var) = spec.transition(s);
    let noise = |g: &Gaussian| -> Result<Gaussian> {
        let mean = &g.mean * scale + shift;
        let mut cov = &g.cov * (scale * scale);
        for i in 0..cov.nrows() {
            cov[[i, i]] += var;
        }
        Gaussian::new(mean, cov)
    };
    match target {
        TargetDistribution::Gaussian(g) => Ok(TargetDistribution::Gaussian(noise(g)?)),
        TargetDistribution::GaussianMixture {
            weights,
            components,
        } => {
            let comps: Result<Vec<Gaussian>> = components.iter().map(noise).collect();
            TargetDistribution::mixture(weights.clone(), comps?)
        }
        TargetDistribution::Checkerboard => Err(Error::Unsupported(
            "noised checkerboard has no closed form".into(),
        )),
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-particle RNG stream: results are independent of how a batch is
/// partitioned across workers.
pub fn particle_rng(seed: u64, particle: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(particle.wrapping_add(1))))
}

fn particle_rngs(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n as u64).map(|i| particle_rng(seed, i)).collect()
}

fn draw_normal_rows(rngs: &mut [ChaCha8Rng], d: usize) -> Array2<f64> {
    let n = rngs.len();
    let mut out = Array2::zeros((n, d));
    for (i, rng) in rngs.iter_mut().enumerate() {
        for j in 0..d {
            out[[i, j]] = StandardNormal.sample(rng);
        }
    }
    out
}

/// Exact noising of an ensemble to time `s`.
pub fn ou_perturb(
    spec: &SdeSpec,
    batch: &ParticleEnsemble,
    s: f64,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if !(0.0..=spec.horizon).contains(&s) {
        return Err(Error::Domain(format!(
            "noising time {s} outside [0, {}]",
            spec.horizon
        )));
    }
    if batch.dim() != spec.dim {
        return Err(Error::Config("ensemble dimension mismatch".into()));
    }
    let (scale, shift, var) = spec.transition(s);
    let sd = var.max(0.0).sqrt();
    let mut rngs = particle_rngs(seed, batch.len());
    let noise = draw_normal_rows(&mut rngs, spec.dim);
    let states = &batch.states * scale + shift + &noise * sd;
    ParticleEnsemble::new(states, s, seed, "ou-perturb")
}

/// A velocity-defining score field `s(y, s_time)`, evaluated batched.
pub trait ScoreField: Sync {
    fn dim(&self) -> usize;
    /// `(n, d)` score values at noising time `s`.
    fn eval(&self, states: &Array2<f64>, s: f64) -> Array2<f64>;
}

/// Identically-zero score.
pub struct ZeroScore(pub usize);

impl ScoreField for ZeroScore {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, states: &Array2<f64>, _s: f64) -> Array2<f64> {
        Array2::zeros(states.raw_dim())
    }
}

/// A vector-output network `s_theta(y, s)`.
pub struct NetScore<'a>(pub &'a MlpParams);

impl ScoreField for NetScore<'_> {
    fn dim(&self) -> usize {
        self.0.spatial_dim()
    }
    fn eval(&self, states: &Array2<f64>, s: f64) -> Array2<f64> {
        batched::net_values(self.0, states, &vec![s; states.nrows()])
    }
}

/// Gradient of a scalar-output network: `s = grad phi`.
pub struct PotentialScore<'a>(pub &'a MlpParams);

impl ScoreField for PotentialScore<'_> {
    fn dim(&self) -> usize {
        self.0.spatial_dim()
    }
    fn eval(&self, states: &Array2<f64>, s: f64) -> Array2<f64> {
        batched::potential_gradient(self.0, states, &vec![s; states.nrows()])
    }
}

/// Exact score of the noised law `eta(., s)` for a Gaussian or mixture
/// target under the affine noising process.
pub struct AnalyticNoisedScore<'a> {
    pub target: &'a TargetDistribution,
    pub spec: &'a SdeSpec,
}

impl ScoreField for AnalyticNoisedScore<'_> {
    fn dim(&self) -> usize {
        self.spec.dim
    }
    fn eval(&self, states: &Array2<f64>, s: f64) -> Array2<f64> {
        let noised = noised_target(self.target, self.spec, s)
            .expect("analytic noised score requires a smooth target");
        let mut out = Array2::zeros(states.raw_dim());
        for (i, row) in states.rows().into_iter().enumerate() {
            out.row_mut(i)
                .assign(&noised.score(row).expect("smooth target score"));
        }
        out
    }
}

fn check_finite(states: &Array2<f64>, step: usize, what: &str) -> Result<()> {
    if states.iter().any(|v| !v.is_finite()) {
        return Err(Error::DivergedSimulation {
            step,
            what: what.to_string(),
        });
    }
    Ok(())
}

/// Options shared by the stochastic and deterministic samplers.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Record every `stride`-th intermediate state (plus the endpoint).
    pub snapshot_stride: Option<usize>,
}

/// Simulation output: final ensemble plus optional recorded states.
pub struct SimOutput {
    pub ensemble: ParticleEnsemble,
    /// `(generation time, states)` snapshots, when requested.
    pub snapshots: Vec<(f64, Array2<f64>)>,
}

/// Euler-Maruyama simulation of the reverse SDE
/// `dX = [f(X, t) + sigma^2 s(X, T - t)] dt + sigma dW` from `t = 0` to `T`,
/// started from `N(0, I)` unless `init` overrides it.
pub fn reverse_sde_simulate(
    spec: &SdeSpec,
    score: &dyn ScoreField,
    n: usize,
    dt: f64,
    seed: u64,
    init: Option<&TargetDistribution>,
    opts: &SimOptions,
) -> Result<SimOutput> {
    let steps = spec.steps_for(dt)?;
    if n == 0 {
        return Err(Error::Config("need at least one particle".into()));
    }
    let mut rngs = particle_rngs(seed, n);
    let mut x = match init {
        None => draw_normal_rows(&mut rngs, spec.dim),
        Some(t) => t.sample(n, splitmix64(seed))?.states,
    };
    let sig_dt = spec.sigma * dt.sqrt();
    let sigma2 = spec.sigma * spec.sigma;
    let mut snapshots = Vec::new();
    let record = |snaps: &mut Vec<(f64, Array2<f64>)>, k: usize, x: &Array2<f64>| {
        if let Some(stride) = opts.snapshot_stride {
            if k % stride == 0 {
                snaps.push((k as f64 * dt, x.clone()));
            }
        }
    };
    record(&mut snapshots, 0, &x);
    for k in 0..steps {
        let t = k as f64 * dt;
        let s_time = spec.horizon - t;
        let drift = spec.drift(&x) + score.eval(&x, s_time) * sigma2;
        let noise = draw_normal_rows(&mut rngs, spec.dim);
        x = x + drift * dt + noise * sig_dt;
        check_finite(&x, k + 1, "reverse SDE state")?;
        record(&mut snapshots, k + 1, &x);
    }
    Ok(SimOutput {
        ensemble: ParticleEnsemble::new(x, 0.0, seed, "reverse-sde")?,
        snapshots,
    })
}

/// Deterministic integrator choice for the probability-flow ODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeMethod {
    Rk4,
    Euler,
}

/// Probability-flow ODE `dx = [f(x, t) + (sigma^2/2) s(x, T - t)] dt` from
/// `N(0, I)` draws (or `init`), integrated with RK4 by default.
pub fn probability_flow_simulate(
    spec: &SdeSpec,
    score: &dyn ScoreField,
    n: usize,
    dt: f64,
    seed: u64,
    method: OdeMethod,
    init: Option<&TargetDistribution>,
) -> Result<ParticleEnsemble> {
    let steps = spec.steps_for(dt)?;
    if n == 0 {
        return Err(Error::Config("need at least one particle".into()));
    }
    let mut rngs = particle_rngs(seed, n);
    let mut x = match init {
        None => draw_normal_rows(&mut rngs, spec.dim),
        Some(t) => t.sample(n, splitmix64(seed))?.states,
    };
    let half_sigma2 = 0.5 * spec.sigma * spec.sigma;
    let rhs = |x: &Array2<f64>, t: f64| -> Array2<f64> {
        spec.drift(x) + score.eval(x, spec.horizon - t) * half_sigma2
    };
    for k in 0..steps {
        let t = k as f64 * dt;
        x = match method {
            OdeMethod::Euler => {
                let k1 = rhs(&x, t);
                x + k1 * dt
            }
            OdeMethod::Rk4 => {
                let k1 = rhs(&x, t);
                let k2 = rhs(&(&x + &(&k1 * (dt / 2.0))), t + dt / 2.0);
                let k3 = rhs(&(&x + &(&k2 * (dt / 2.0))), t + dt / 2.0);
                let k4 = rhs(&(&x + &(&k3 * dt)), t + dt);
                x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
            }
        };
        check_finite(&x, k + 1, "probability-flow state")?;
    }
    ParticleEnsemble::new(x, 0.0, seed, "probability-flow")
}

/// Flow direction for potential-driven transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// Data side (`t = 0`) to reference side (`t = T`).
    Forward,
    /// Reference side (`t = T`) back to the data side.
    Reverse,
}

/// Which path integrals [`flow_integrate_batch`] accumulates.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowQuadrature {
    /// `int div v dt = -int lap U dt` (log-density change).
    pub divergence: bool,
    /// `int 1/2 |grad U|^2 dt` (transport cost).
    pub kinetic: bool,
    /// `int |dU/dt - 1/2 |grad U|^2| dt` (HJB residual along the path).
    pub hjb: bool,
    /// Record states after every step.
    pub trajectory: bool,
}

/// Result of integrating the potential flow `dx/dt = -grad U(x, t)`.
pub struct FlowIntegration {
    pub endpoints: Array2<f64>,
    /// Signed `int_{t0}^{t1} div v dt` along each trajectory.
    pub div_integral: Array1<f64>,
    pub kinetic_integral: Array1<f64>,
    pub hjb_integral: Array1<f64>,
    /// States at every step boundary (including both ends) when requested.
    pub trajectory: Vec<Array2<f64>>,
}

/// Derivatives of a scalar potential `U(x, t)` needed by the flow
/// integrator: spatial gradient, and on request Laplacian and time partial.
pub struct PotentialEval {
    /// `(n, d)`
    pub grad: Array2<f64>,
    pub laplacian: Option<Array1<f64>>,
    pub time_partial: Option<Array1<f64>>,
}

/// A scalar potential driving the flow `dx/dt = -grad U`.
pub trait FlowPotential: Sync {
    fn spatial_dim(&self) -> usize;
    fn eval(&self, x: &Array2<f64>, t: f64, laplacian: bool, time_partial: bool) -> PotentialEval;
}

impl FlowPotential for MlpParams {
    fn spatial_dim(&self) -> usize {
        MlpParams::spatial_dim(self)
    }

    fn eval(&self, x: &Array2<f64>, t: f64, laplacian: bool, time_partial: bool) -> PotentialEval {
        assert_eq!(self.d_out(), 1, "flow potential must have scalar output");
        let d = MlpParams::spatial_dim(self);
        let n = x.nrows();
        let n_dirs = if time_partial { d + 1 } else { d };
        let inputs = batched::stack_time_const(x, t);
        let dirs = batched::axis_directions(self.d_in(), n_dirs);
        let jets = batched::jets_batch(self, &inputs, &dirs, laplacian);
        let mut grad = Array2::zeros((n, d));
        for k in 0..d {
            grad.column_mut(k).assign(&jets.first[k].column(0));
        }
        let laplacian = jets.second.map(|sec| {
            let mut lap = Array1::zeros(n);
            for item in sec.iter().take(d) {
                lap += &item.column(0);
            }
            lap
        });
        let time_partial = time_partial.then(|| jets.first[d].column(0).to_owned());
        PotentialEval {
            grad,
            laplacian,
            time_partial,
        }
    }
}

/// The analytic reference potential `U(x) = scale/2 |x|^2`, whose flow,
/// divergence and transport integrals are all available in closed form.
pub struct QuadraticPotential {
    pub dim: usize,
    pub scale: f64,
}

impl FlowPotential for QuadraticPotential {
    fn spatial_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Array2<f64>, _t: f64, laplacian: bool, time_partial: bool) -> PotentialEval {
        let n = x.nrows();
        PotentialEval {
            grad: x * self.scale,
            laplacian: laplacian.then(|| Array1::from_elem(n, self.scale * self.dim as f64)),
            time_partial: time_partial.then(|| Array1::zeros(n)),
        }
    }
}

/// A potential that is constant in `x` and `t` (zero velocity field).
pub struct ConstantPotential(pub usize);

impl FlowPotential for ConstantPotential {
    fn spatial_dim(&self) -> usize {
        self.0
    }

    fn eval(&self, x: &Array2<f64>, _t: f64, laplacian: bool, time_partial: bool) -> PotentialEval {
        let n = x.nrows();
        PotentialEval {
            grad: Array2::zeros((n, self.0)),
            laplacian: laplacian.then(|| Array1::zeros(n)),
            time_partial: time_partial.then(|| Array1::zeros(n)),
        }
    }
}

struct FlowRates {
    velocity: Array2<f64>,
    div: Array1<f64>,
    kinetic: Array1<f64>,
    hjb: Array1<f64>,
}

fn flow_rates(
    potential: &dyn FlowPotential,
    x: &Array2<f64>,
    t: f64,
    quad: &FlowQuadrature,
) -> FlowRates {
    let n = x.nrows();
    let ev = potential.eval(x, t, quad.divergence, quad.hjb);
    let velocity = -&ev.grad;
    let div = match ev.laplacian {
        // div v = -lap U
        Some(lap) => -lap,
        None => Array1::zeros(0),
    };
    let kinetic = if quad.kinetic || quad.hjb {
        Array1::from_shape_fn(n, |i| {
            0.5 * ev.grad.row(i).iter().map(|v| v * v).sum::<f64>()
        })
    } else {
        Array1::zeros(0)
    };
    let hjb = if quad.hjb {
        let dt_u = ev.time_partial.as_ref().unwrap();
        Array1::from_shape_fn(n, |i| (dt_u[i] - kinetic[i]).abs())
    } else {
        Array1::zeros(0)
    };
    FlowRates {
        velocity,
        div,
        kinetic: if quad.kinetic { kinetic } else { Array1::zeros(0) },
        hjb,
    }
}

/// RK4 integration of the potential flow over `[t_start, t_end]` (either
/// orientation), with requested path integrals carried as augmented state so
/// they share the integrator's accuracy.
pub fn flow_integrate_batch(
    potential: &dyn FlowPotential,
    states: &Array2<f64>,
    t_start: f64,
    t_end: f64,
    steps: usize,
    quad: &FlowQuadrature,
) -> Result<FlowIntegration> {
    if states.ncols() != potential.spatial_dim() {
        return Err(Error::Config("state dimension mismatch".into()));
    }
    if steps == 0 {
        return Err(Error::Config("need at least one step".into()));
    }
    let n = states.nrows();
    let dt = (t_end - t_start) / steps as f64;
    let mut x = states.to_owned();
    let mut div = Array1::zeros(n);
    let mut kin = Array1::zeros(n);
    let mut hjb = Array1::zeros(n);
    let mut trajectory = Vec::new();
    if quad.trajectory {
        trajectory.push(x.clone());
    }
    let add_acc = |acc: &mut Array1<f64>, r1: &Array1<f64>, r2: &Array1<f64>, r3: &Array1<f64>, r4: &Array1<f64>, dt: f64| {
        if r1.len() > 0 {
            *acc = &*acc + &((r1 + &(r2 * 2.0) + &(r3 * 2.0) + r4) * (dt / 6.0));
        }
    };
    for k in 0..steps {
        let t = t_start + k as f64 * dt;
        let r1 = flow_rates(potential, &x, t, quad);
        let x2 = &x + &(&r1.velocity * (dt / 2.0));
        let r2 = flow_rates(potential, &x2, t + dt / 2.0, quad);
        let x3 = &x + &(&r2.velocity * (dt / 2.0));
        let r3 = flow_rates(potential, &x3, t + dt / 2.0, quad);
        let x4 = &x + &(&r3.velocity * dt);
        let r4 = flow_rates(potential, &x4, t + dt, quad);
        x = &x + &((&r1.velocity + &(&r2.velocity * 2.0) + &(&r3.velocity * 2.0) + &r4.velocity)
            * (dt / 6.0));
        add_acc(&mut div, &r1.div, &r2.div, &r3.div, &r4.div, dt);
        add_acc(&mut kin, &r1.kinetic, &r2.kinetic, &r3.kinetic, &r4.kinetic, dt);
        add_acc(&mut hjb, &r1.hjb, &r2.hjb, &r3.hjb, &r4.hjb, dt);
        check_finite(&x, k + 1, "potential flow state")?;
        if quad.trajectory {
            trajectory.push(x.clone());
        }
    }
    Ok(FlowIntegration {
        endpoints: x,
        div_integral: div,
        kinetic_integral: kin,
        hjb_integral: hjb,
        trajectory,
    })
}

/// Single-trajectory potential-flow integration with log-density tracking.
/// Returns the endpoint and the signed accumulated divergence integral
/// `int div v dt` over the traversed interval; the log-density change along
/// the path is its negative in the traversal direction.
pub fn cnf_integrate(
    potential: &dyn FlowPotential,
    x0: ArrayView1<f64>,
    direction: FlowDirection,
    dt: f64,
    horizon: f64,
) -> Result<(Array1<f64>, f64)> {
    if dt <= 0.0 || horizon <= 0.0 {
        return Err(Error::Config("dt and horizon must be positive".into()));
    }
    let k = (horizon / dt).round();
    if (k * dt - horizon).abs() > 1e-12 * horizon.max(1.0) {
        return Err(Error::Config(format!(
            "step size {dt} does not divide horizon {horizon}"
        )));
    }
    let (t0, t1) = match direction {
        FlowDirection::Forward => (0.0, horizon),
        FlowDirection::Reverse => (horizon, 0.0),
    };
    let states = x0.insert_axis(ndarray::Axis(0)).to_owned();
    let quad = FlowQuadrature {
        divergence: true,
        ..Default::default()
    };
    let out = flow_integrate_batch(potential, &states, t0, t1, k as usize, &quad)?;
    Ok((out.endpoints.row(0).to_owned(), out.div_integral[0]))
}

/// Trajectory CSV: `particle,step,t,x0,...` rows for recorded snapshots.
pub fn write_trajectory_csv(
    w: &mut impl std::io::Write,
    snapshots: &[(f64, Array2<f64>)],
) -> Result<()> {
    if snapshots.is_empty() {
        return Err(Error::Config("no snapshots recorded".into()));
    }
    let d = snapshots[0].1.ncols();
    let header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    writeln!(w, "particle,step,t,{}", header.join(","))?;
    for (step, (t, states)) in snapshots.iter().enumerate() {
        for (p, row) in states.rows().into_iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{p},{step},{t},{}", cells.join(","))?;
        }
    }
    Ok(())
}
