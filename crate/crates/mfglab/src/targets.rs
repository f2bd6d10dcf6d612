//! Target distributions with sampling and, where defined, log-density and
//! score, plus the particle-ensemble container and its CSV format.

use crate::autodiff::act::normal_cdf;
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1};
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufRead, Write};

/// Checkerboard geometry: a 4x4 grid of unit cells covering `[-2, 2]^2`,
/// uniform on the 8 cells with even `i + j`; density `1/8` on the support.
pub const CHECKERBOARD_EXTENT: f64 = 2.0;
const CHECKERBOARD_CELLS: usize = 8;

/// Log-density evaluation result. Off-support regions carry a dedicated
/// sentinel so `-inf` never silently enters arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDensity {
    Finite(f64),
    OffSupport,
}

impl LogDensity {
    pub fn finite(self) -> Option<f64> {
        match self {
            LogDensity::Finite(v) => Some(v),
            LogDensity::OffSupport => None,
        }
    }

    /// Collapse to a raw float, mapping the sentinel to `-inf`.
    pub fn value_or_neg_inf(self) -> f64 {
        match self {
            LogDensity::Finite(v) => v,
            LogDensity::OffSupport => f64::NEG_INFINITY,
        }
    }
}

/// A Gaussian component with precomputed Cholesky factor, inverse and
/// normalization.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
    chol: Array2<f64>,
    inv: Array2<f64>,
    log_norm: f64,
}

fn cholesky(cov: &Array2<f64>) -> Result<Array2<f64>> {
    let n = cov.nrows();
    if cov.ncols() != n {
        return Err(Error::Config("covariance must be square".into()));
    }
    for i in 0..n {
        for j in 0..n {
            if (cov[[i, j]] - cov[[j, i]]).abs() > 1e-12 * cov[[i, i]].abs().max(1.0) {
                return Err(Error::Config("covariance must be symmetric".into()));
            }
        }
    }
    let mut l = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = cov[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Config(
                        "covariance must be positive definite".into(),
                    ));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

fn tri_solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

impl Gaussian {
    pub fn new(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        let chol = cholesky(&cov)?;
        let n = mean.len();
        if cov.nrows() != n {
            return Err(Error::Config("mean/covariance dimension mismatch".into()));
        }
        // inv = L^-T L^-1 via n triangular solves
        let mut inv = Array2::zeros((n, n));
        for j in 0..n {
            let mut e = Array1::zeros(n);
            e[j] = 1.0;
            let y = tri_solve_lower(&chol, &e);
            // back substitution with L^T
            let mut x = Array1::zeros(n);
            for i in (0..n).rev() {
                let mut s = y[i];
                for k in i + 1..n {
                    s -= chol[[k, i]] * x[k];
                }
                x[i] = s / chol[[i, i]];
            }
            inv.column_mut(j).assign(&x);
        }
        let log_det: f64 = (0..n).map(|i| chol[[i, i]].ln()).sum::<f64>() * 2.0;
        let log_norm = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det);
        Ok(Self {
            mean,
            cov,
            chol,
            inv,
            log_norm,
        })
    }

    pub fn isotropic(mean: Array1<f64>, var: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, Array2::eye(d) * var)
    }

    pub fn standard(d: usize) -> Self {
        Self::isotropic(Array1::zeros(d), 1.0).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_pdf(&self, x: ArrayView1<f64>) -> f64 {
        let diff = &x.to_owned() - &self.mean;
        let q = diff.dot(&self.inv.dot(&diff));
        self.log_norm - 0.5 * q
    }

    /// `-Sigma^-1 (x - mean)`
    pub fn score(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let diff = &x.to_owned() - &self.mean;
        -self.inv.dot(&diff)
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Array1<f64> {
        let z = Array1::from_shape_fn(self.dim(), |_| StandardNormal.sample(rng));
        &self.mean + &self.chol.dot(&z)
    }
}

/// Sampleable target distribution.
#[derive(Debug, Clone)]
pub enum TargetDistribution {
    Gaussian(Gaussian),
    GaussianMixture {
        weights: Vec<f64>,
        components: Vec<Gaussian>,
    },
    /// The fixed 2-D checkerboard described at [`CHECKERBOARD_EXTENT`].
    Checkerboard,
}

impl TargetDistribution {
    pub fn gaussian(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self> {
        Ok(TargetDistribution::Gaussian(Gaussian::new(mean, cov)?))
    }

    pub fn isotropic_gaussian(mean: Array1<f64>, var: f64) -> Result<Self> {
        Ok(TargetDistribution::Gaussian(Gaussian::isotropic(
            mean, var,
        )?))
    }

    pub fn standard_normal(d: usize) -> Self {
        TargetDistribution::Gaussian(Gaussian::standard(d))
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::Config("mixture weight/component mismatch".into()));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::Config("mixture weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Error::Config("mixture component dimensions differ".into()));
        }
        Ok(TargetDistribution::GaussianMixture {
            weights,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetDistribution::Gaussian(g) => g.dim(),
            TargetDistribution::GaussianMixture { components, .. } => components[0].dim(),
            TargetDistribution::Checkerboard => 2,
        }
    }

    /// Analytic mean (all targets here have one).
    pub fn mean(&self) -> Array1<f64> {
        match self {
            TargetDistribution::Gaussian(g) => g.mean.clone(),
            TargetDistribution::GaussianMixture {
                weights,
                components,
            } => {
                let mut m = Array1::zeros(self.dim());
                for (w, c) in weights.iter().zip(components) {
                    m.scaled_add(*w, &c.mean);
                }
                m
            }
            TargetDistribution::Checkerboard => Array1::zeros(2),
        }
    }

    /// Analytic covariance.
    pub fn covariance(&self) -> Array2<f64> {
        match self {
            TargetDistribution::Gaussian(g) => g.cov.clone(),
            TargetDistribution::GaussianMixture {
                weights,
                components,
            } => {
                let d = self.dim();
                let m = self.mean();
                let mut cov = Array2::zeros((d, d));
                for (w, c) in weights.iter().zip(components) {
                    let dm = &c.mean - &m;
                    for i in 0..d {
                        for j in 0..d {
                            cov[[i, j]] += w * (c.cov[[i, j]] + dm[i] * dm[j]);
                        }
                    }
                }
                cov
            }
            TargetDistribution::Checkerboard => {
                // Sum of per-cell uniform moments over the 8 occupied cells.
                let mut exx = 0.0;
                let mut exy = 0.0;
                for (lo_x, lo_y) in checkerboard_cells() {
                    let (cx, cy) = (lo_x + 0.5, lo_y + 0.5);
                    // E[x^2] over [a, a+1] = a^2 + a + 1/3
                    exx += lo_x * lo_x + lo_x + 1.0 / 3.0;
                    exy += cx * cy;
                }
                let n = CHECKERBOARD_CELLS as f64;
                let mut cov = Array2::zeros((2, 2));
                cov[[0, 0]] = exx / n;
                cov[[1, 1]] = exx / n; // x/y symmetric geometry
                cov[[0, 1]] = exy / n;
                cov[[1, 0]] = exy / n;
                cov
            }
        }
    }

    /// Exact log-density; `up to additive constant` does not apply to any of
    /// these targets, but the checkerboard is flat on its support and
    /// off-support points return the sentinel.
    pub fn log_density(&self, x: ArrayView1<f64>) -> Result<LogDensity> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite evaluation point".into()));
        }
        if x.len() != self.dim() {
            return Err(Error::Config("dimension mismatch".into()));
        }
        Ok(match self {
            TargetDistribution::Gaussian(g) => LogDensity::Finite(g.log_pdf(x)),
            TargetDistribution::GaussianMixture {
                weights,
                components,
            } => {
                let logs: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| w.ln() + c.log_pdf(x))
                    .collect();
                LogDensity::Finite(log_sum_exp(&logs))
            }
            TargetDistribution::Checkerboard => {
                if checkerboard_contains(x[0], x[1]) {
                    LogDensity::Finite(-(CHECKERBOARD_CELLS as f64).ln())
                } else {
                    LogDensity::OffSupport
                }
            }
        })
    }

    /// Exact gradient of the log-density. Unsupported for the checkerboard,
    /// whose density is discontinuous.
    pub fn score(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite evaluation point".into()));
        }
        match self {
            TargetDistribution::Gaussian(g) => Ok(g.score(x)),
            TargetDistribution::GaussianMixture {
                weights,
                components,
            } => {
                let logs: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| w.ln() + c.log_pdf(x))
                    .collect();
                let lse = log_sum_exp(&logs);
                let mut s = Array1::zeros(self.dim());
                for (lw, c) in logs.iter().zip(components) {
                    let resp = (lw - lse).exp();
                    s.scaled_add(resp, &c.score(x));
                }
                Ok(s)
            }
            TargetDistribution::Checkerboard => Err(Error::UnsupportedScore(
                "checkerboard density is discontinuous".into(),
            )),
        }
    }

    /// i.i.d. draws, deterministic given the seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<ParticleEnsemble> {
        if n == 0 {
            return Err(Error::Config("need at least one sample".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.dim();
        let mut states = Array2::zeros((n, d));
        match self {
            TargetDistribution::Gaussian(g) => {
                for mut row in states.rows_mut() {
                    row.assign(&g.draw(&mut rng));
                }
            }
            TargetDistribution::GaussianMixture {
                weights,
                components,
            } => {
                for mut row in states.rows_mut() {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = components.len() - 1;
                    for (k, w) in weights.iter().enumerate() {
                        acc += w;
                        if u < acc {
                            pick = k;
                            break;
                        }
                    }
                    row.assign(&components[pick].draw(&mut rng));
                }
            }
            TargetDistribution::Checkerboard => {
                let cells = checkerboard_cells();
                for mut row in states.rows_mut() {
                    let cell = cells[rng.gen_range(0..cells.len())];
                    row[0] = cell.0 + rng.gen::<f64>();
                    row[1] = cell.1 + rng.gen::<f64>();
                }
            }
        }
        Ok(ParticleEnsemble {
            states,
            time_label: 0.0,
            seed,
            tag: "target-sample".to_string(),
        })
    }
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Lower-left corners of the 8 occupied unit cells.
fn checkerboard_cells() -> Vec<(f64, f64)> {
    let mut cells = Vec::with_capacity(CHECKERBOARD_CELLS);
    for i in 0..4 {
        for j in 0..4 {
            if (i + j) % 2 == 0 {
                cells.push((
                    i as f64 - CHECKERBOARD_EXTENT,
                    j as f64 - CHECKERBOARD_EXTENT,
                ));
            }
        }
    }
    cells
}

/// Support membership of the checkerboard.
pub fn checkerboard_contains(x: f64, y: f64) -> bool {
    if !((-CHECKERBOARD_EXTENT..CHECKERBOARD_EXTENT).contains(&x)
        && (-CHECKERBOARD_EXTENT..CHECKERBOARD_EXTENT).contains(&y))
    {
        return false;
    }
    let i = (x + CHECKERBOARD_EXTENT).floor() as i64;
    let j = (y + CHECKERBOARD_EXTENT).floor() as i64;
    (i + j) % 2 == 0
}

/// Exact probability mass a standard normal assigns to the checkerboard
/// support (product-CDF sum over cells).
pub fn checkerboard_mass_standard_normal() -> f64 {
    checkerboard_cells()
        .into_iter()
        .map(|(lx, ly)| {
            (normal_cdf(lx + 1.0) - normal_cdf(lx)) * (normal_cdf(ly + 1.0) - normal_cdf(ly))
        })
        .sum()
}

/// A batch of d-dimensional states with generation metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    /// `(n, d)`
    pub states: Array2<f64>,
    /// Noising time the states live at.
    pub time_label: f64,
    pub seed: u64,
    pub tag: String,
}

impl ParticleEnsemble {
    pub fn new(states: Array2<f64>, time_label: f64, seed: u64, tag: &str) -> Result<Self> {
        if states.nrows() == 0 {
            return Err(Error::Config("ensemble must hold at least one state".into()));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite particle state".into()));
        }
        Ok(Self {
            states,
            time_label,
            seed,
            tag: tag.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn sample_mean(&self) -> Array1<f64> {
        self.states.mean_axis(ndarray::Axis(0)).unwrap()
    }

    pub fn sample_covariance(&self) -> Array2<f64> {
        let n = self.len() as f64;
        let m = self.sample_mean();
        let d = self.dim();
        let mut cov = Array2::zeros((d, d));
        for row in self.states.rows() {
            for i in 0..d {
                for j in 0..d {
                    cov[[i, j]] += (row[i] - m[i]) * (row[j] - m[j]);
                }
            }
        }
        cov / (n - 1.0)
    }

    /// Write `x0,x1,...` header plus one row per particle at 17 significant
    /// digits, enough for exact `f64` round-trips.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let d = self.dim();
        let header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.states.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is ascii")
    }

    pub fn save_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)
    }

    pub fn read_csv(r: &mut impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty ensemble csv".into()))??;
        let d = header.split(',').count();
        let mut data: Vec<f64> = Vec::new();
        let mut n = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            for cell in line.split(',') {
                let v: f64 = cell
                    .trim()
                    .parse()
                    .map_err(|e| Error::Config(format!("bad csv value {cell:?}: {e}")))?;
                data.push(v);
            }
            n += 1;
        }
        let states = Array2::from_shape_vec((n, d), data)
            .map_err(|e| Error::Config(format!("ragged csv: {e}")))?;
        ParticleEnsemble::new(states, 0.0, 0, "csv")
    }

    pub fn load_csv(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_csv(&mut f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn standard_normal_moments_within_clt_bounds() {
        let t = TargetDistribution::standard_normal(2);
        let e = t.sample(100_000, 7).unwrap();
        let m = e.sample_mean();
        for v in m.iter() {
            assert!(v.abs() < 0.02, "mean {v}");
        }
        let c = e.sample_covariance();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((c[[i, j]] - want).abs() < 0.03, "cov[{i},{j}] = {}", c[[i, j]]);
            }
        }
    }

    #[test]
    fn checkerboard_samples_stay_on_support() {
        let t = TargetDistribution::Checkerboard;
        let e = t.sample(20_000, 3).unwrap();
        for row in e.states.rows() {
            assert!(checkerboard_contains(row[0], row[1]));
        }
    }

    #[test]
    fn symmetric_mixture_mean_near_origin() {
        let t = TargetDistribution::mixture(
            vec![0.5, 0.5],
            vec![
                Gaussian::isotropic(array![2.0, 0.0], 1.0).unwrap(),
                Gaussian::isotropic(array![-2.0, 0.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        let e = t.sample(100_000, 11).unwrap();
        let m = e.sample_mean();
        for v in m.iter() {
            assert!(v.abs() < 0.03, "mean {v}");
        }
    }

    #[test]
    fn standard_normal_log_density_at_origin() {
        let t = TargetDistribution::standard_normal(2);
        let ld = t.log_density(array![0.0, 0.0].view()).unwrap();
        let want = -(2.0 * std::f64::consts::PI).ln();
        assert!((ld.finite().unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn checkerboard_sentinel_off_support() {
        let t = TargetDistribution::Checkerboard;
        // (0.5, 0.5) lies in cell (2, 2): even parity, on support
        assert_eq!(
            t.log_density(array![0.5, 0.5].view()).unwrap(),
            LogDensity::Finite(-(8.0f64).ln())
        );
        // (0.5, 1.5) lies in cell (2, 3): odd parity
        assert_eq!(
            t.log_density(array![0.5, 1.5].view()).unwrap(),
            LogDensity::OffSupport
        );
        assert_eq!(
            t.log_density(array![5.0, 0.0].view()).unwrap(),
            LogDensity::OffSupport
        );
        assert_eq!(
            t.log_density(array![0.5, 1.5].view())
                .unwrap()
                .value_or_neg_inf(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn mixture_log_density_matches_direct_sum() {
        let c1 = Gaussian::isotropic(array![1.0, -1.0], 0.5).unwrap();
        let c2 = Gaussian::new(array![-1.0, 2.0], array![[1.0, 0.3], [0.3, 0.8]]).unwrap();
        let t = TargetDistribution::mixture(vec![0.3, 0.7], vec![c1.clone(), c2.clone()]).unwrap();
        let x = array![0.4, 0.2];
        // independent direct evaluation of the mixture formula
        let direct = (0.3 * c1.log_pdf(x.view()).exp() + 0.7 * c2.log_pdf(x.view()).exp()).ln();
        let got = t.log_density(x.view()).unwrap().finite().unwrap();
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn gaussian_scores() {
        let t = TargetDistribution::standard_normal(2);
        let s = t.score(array![0.7, -1.3].view()).unwrap();
        assert_eq!(s, array![-0.7, 1.3]);

        // N(m, Sigma) score at probe points vs finite differences of log_density
        let g = TargetDistribution::gaussian(
            array![0.5, -0.25],
            array![[1.2, 0.4], [0.4, 0.9]],
        )
        .unwrap();
        let h = 1e-6;
        for probe in [array![0.0, 0.0], array![1.0, -2.0], array![-0.3, 0.8]] {
            let s = g.score(probe.view()).unwrap();
            for i in 0..2 {
                let mut xp = probe.clone();
                xp[i] += h;
                let mut xm = probe.clone();
                xm[i] -= h;
                let fd = (g.log_density(xp.view()).unwrap().finite().unwrap()
                    - g.log_density(xm.view()).unwrap().finite().unwrap())
                    / (2.0 * h);
                let rel = (s[i] - fd).abs() / s[i].abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-6, "score[{i}] {} vs fd {fd}", s[i]);
            }
        }
    }

    #[test]
    fn equal_mixture_score_vanishes_at_center() {
        let t = TargetDistribution::mixture(
            vec![0.5, 0.5],
            vec![
                Gaussian::isotropic(array![1.5, 0.0], 1.0).unwrap(),
                Gaussian::isotropic(array![-1.5, 0.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        let s = t.score(array![0.0, 0.0].view()).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-14), "{s:?}");
    }

    #[test]
    fn checkerboard_score_unsupported() {
        let t = TargetDistribution::Checkerboard;
        assert!(matches!(
            t.score(array![0.5, 0.5].view()),
            Err(Error::UnsupportedScore(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let t = TargetDistribution::Checkerboard;
        let a = t.sample(500, 9).unwrap();
        let b = t.sample(500, 9).unwrap();
        assert_eq!(a.states, b.states);
        let c = t.sample(500, 10).unwrap();
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn csv_roundtrip_is_value_exact() {
        let t = TargetDistribution::standard_normal(3);
        let e = t.sample(64, 5).unwrap();
        let text = e.to_csv_string();
        assert!(text.starts_with("x0,x1,x2\n"));
        let back =
            ParticleEnsemble::read_csv(&mut std::io::BufReader::new(text.as_bytes())).unwrap();
        assert_eq!(e.states, back.states);
    }

    #[test]
    fn checkerboard_covariance_is_analytic() {
        let cov = TargetDistribution::Checkerboard.covariance();
        assert!((cov[[0, 0]] - 4.0 / 3.0).abs() < 1e-14);
        assert!((cov[[1, 1]] - 4.0 / 3.0).abs() < 1e-14);
        assert!((cov[[0, 1]] - 0.25).abs() < 1e-14);
        // spot-check against a big sample
        let e = TargetDistribution::Checkerboard.sample(200_000, 1).unwrap();
        let sc = e.sample_covariance();
        for i in 0..2 {
            for j in 0..2 {
                assert!((sc[[i, j]] - cov[[i, j]]).abs() < 0.02);
            }
        }
    }
}
