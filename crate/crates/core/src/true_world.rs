//! Normal-model "true world" used by the simulation study.
//!
//! `F[i][k] | C[i][k-1] ~ N(f_k, sigma_k^2 / C[i][k-1]^gamma)` with normally
//! distributed starting values.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::chain_ladder::Gamma;
use crate::error::{Error, Result};
use crate::triangle::{NextDiagonal, Triangle};

/// Development factors of the reference parameter set, `f_1..f_10`.
pub const REFERENCE_F: [f64; 10] = [1.5, 1.2, 1.12, 1.07, 1.04, 1.02, 1.01, 1.005, 1.002, 1.0];
/// Standard deviations of the reference set as `sigma_k * f0^(-gamma/2)`.
pub const REFERENCE_SIGMA_SCALED: [f64; 10] = [0.2, 0.12, 0.08, 0.045, 0.03, 0.018, 0.01, 0.006, 0.003, 0.0];
pub const REFERENCE_F0: f64 = 1_420_000.0;
pub const REFERENCE_SIGMA0: f64 = 336_000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrueParams {
    pub f0: f64,
    pub sigma0: f64,
    /// `f[k - 1]` is `f_k`.
    pub f: Vec<f64>,
    /// `sigma[k - 1]` is `sigma_k` in the units of `Var[F | C] = sigma_k^2 / C^gamma`.
    pub sigma: Vec<f64>,
    pub gamma: Gamma,
}

impl TrueParams {
    pub fn new(gamma: Gamma, f0: f64, sigma0: f64, f: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let params = Self {
            f0,
            sigma0,
            f,
            sigma,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters from standard deviations quoted for a cell of size
    /// `f0`: `sigma_k = sigma_scaled_k * f0^(gamma/2)`.
    pub fn from_scaled(gamma: Gamma, f0: f64, sigma0: f64, f: Vec<f64>, sigma_scaled: &[f64]) -> Result<Self> {
        let scale = f0.powf(gamma.exponent() as f64 / 2.0);
        let sigma = sigma_scaled.iter().map(|s| s * scale).collect();
        Self::new(gamma, f0, sigma0, f, sigma)
    }

    /// The reference parameter set with `n = 10`.
    pub fn reference(gamma: Gamma) -> Self {
        Self::from_scaled(
            gamma,
            REFERENCE_F0,
            REFERENCE_SIGMA0,
            REFERENCE_F.to_vec(),
            &REFERENCE_SIGMA_SCALED,
        )
        .expect("reference parameters are valid")
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.f.len();
        if n < 2 {
            return Err(Error::Config(format!("need at least 2 development years, got {n}")));
        }
        if self.sigma.len() != n {
            return Err(Error::Config(format!(
                "{} development factors but {} standard deviations",
                n,
                self.sigma.len()
            )));
        }
        if !(self.f0 > 0.0 && self.f0.is_finite()) {
            return Err(Error::Config(format!("f0 must be positive, got {}", self.f0)));
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config(format!("sigma0 must be non-negative, got {}", self.sigma0)));
        }
        if let Some(k) = self.f.iter().position(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("f[{}] = {} must be positive", k + 1, self.f[k])));
        }
        if let Some(k) = self.sigma.iter().position(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config(format!(
                "sigma[{}] = {} must be non-negative",
                k + 1,
                self.sigma[k]
            )));
        }
        if self.f[n - 1] != 1.0 || self.sigma[n - 1] != 0.0 {
            return Err(Error::Config(
                "the last development year must have f = 1 and sigma = 0".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    fn draw_factor<R: Rng + ?Sized>(&self, k: usize, prev: f64, rng: &mut R) -> (f64, f64, bool) {
        let z: f64 = rng.sample(StandardNormal);
        let sd = self.sigma[k - 1] / self.gamma.weight(prev).sqrt();
        let f = self.f[k - 1] + sd * z;
        if f <= 0.0 {
            // the residue that reproduces F = 1
            (1.0, (1.0 - self.f[k - 1]) / sd, true)
        } else {
            (f, z, false)
        }
    }
}

/// Residues `zeta[i][k]`, `k = 1..=n-i`, actually used to build a triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidueSet {
    rows: Vec<Vec<f64>>,
}

impl ResidueSet {
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.rows[i][k - 1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedTriangle {
    pub triangle: Triangle,
    pub residues: ResidueSet,
    /// Number of non-positive factors reset to 1.
    pub resets: usize,
    /// Number of rejected non-positive starting values.
    pub redraws: usize,
}

/// Draws one triangle with `n + 1` accident years from the true model.
pub fn simulate_triangle<R: Rng + ?Sized>(params: &TrueParams, rng: &mut R) -> SimulatedTriangle {
    let n = params.n();
    let mut rows = Vec::with_capacity(n + 1);
    let mut residues = Vec::with_capacity(n + 1);
    let mut resets = 0;
    let mut redraws = 0;
    for i in 0..=n {
        let start = loop {
            let z: f64 = rng.sample(StandardNormal);
            let c = params.f0 + params.sigma0 * z;
            if c > 0.0 {
                break c;
            }
            redraws += 1;
            log::debug!("accident year {i}: starting value {c} redrawn");
        };
        let mut row = Vec::with_capacity(n - i + 1);
        let mut zeta = Vec::with_capacity(n - i);
        row.push(start);
        for k in 1..=n - i {
            let prev = row[k - 1];
            let (f, z, reset) = params.draw_factor(k, prev, rng);
            if reset {
                resets += 1;
                log::debug!("factor F[{i}][{k}] reset to 1");
            }
            row.push(prev * f);
            zeta.push(z);
        }
        rows.push(row);
        residues.push(zeta);
    }
    SimulatedTriangle {
        triangle: Triangle::from_rows(&rows).expect("simulated triangle is well formed"),
        residues: ResidueSet { rows: residues },
        resets,
        redraws,
    }
}

/// Draws next year's incremental payments `Z[i][n-i+1]`, `i = 1..=n`, under
/// the true parameters. Returns the diagonal and the number of factor resets.
pub fn simulate_next_diagonal<R: Rng + ?Sized>(
    tri: &Triangle,
    params: &TrueParams,
    rng: &mut R,
) -> Result<(NextDiagonal, usize)> {
    let n = tri.n();
    if params.n() != n {
        return Err(Error::Validation(format!(
            "parameters cover {} development years, triangle has {}",
            params.n(),
            n
        )));
    }
    let mut resets = 0;
    let payments = (1..=n)
        .map(|i| {
            let c = tri.latest(i);
            let (f, _, reset) = params.draw_factor(n - i + 1, c, rng);
            if reset {
                resets += 1;
                log::debug!("next-year factor of accident year {i} reset to 1");
            }
            (f - 1.0) * c
        })
        .collect();
    Ok((NextDiagonal::new(payments), resets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn noiseless(gamma: Gamma) -> TrueParams {
        TrueParams::new(gamma, 1000.0, 0.0, vec![1.5, 1.2, 1.1, 1.0], vec![0.0; 4]).unwrap()
    }

    #[test]
    fn scaled_sigma_convention() {
        let p0 = TrueParams::reference(Gamma::Zero);
        let p1 = TrueParams::reference(Gamma::One);
        assert_eq!(p0.sigma[0], 0.2);
        assert!((p1.sigma[0] - 0.2 * REFERENCE_F0.sqrt()).abs() < 1e-9);
        assert_eq!(p1.n(), 10);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let ok = || noiseless(Gamma::Zero);
        assert!(TrueParams::new(Gamma::Zero, -1.0, 0.0, ok().f, ok().sigma).is_err());
        assert!(TrueParams::new(Gamma::Zero, 1.0, -1.0, ok().f, ok().sigma).is_err());
        assert!(TrueParams::new(Gamma::Zero, 1.0, 0.0, vec![1.5, 1.2, 1.1, 1.01], ok().sigma).is_err());
        assert!(TrueParams::new(Gamma::Zero, 1.0, 0.0, ok().f, vec![0.0, 0.0, 0.0, 0.1]).is_err());
        assert!(TrueParams::new(Gamma::Zero, 1.0, 0.0, ok().f, vec![0.0; 3]).is_err());
        assert!(TrueParams::new(Gamma::Zero, 1.0, 0.0, vec![1.5, 0.0, 1.1, 1.0], ok().sigma).is_err());
    }

    #[test]
    fn zero_noise_is_deterministic() {
        for gamma in [Gamma::Zero, Gamma::One] {
            let p = noiseless(gamma);
            let sim = simulate_triangle(&p, &mut stream(1, 0));
            let tri = &sim.triangle;
            for i in 0..=4 {
                let mut c = 1000.0;
                assert_eq!(tri.get(i, 0), c);
                for k in 1..=4 - i {
                    c *= p.f[k - 1];
                    assert!((tri.get(i, k) - c).abs() < 1e-9);
                }
            }
            let (diag, _) = simulate_next_diagonal(tri, &p, &mut stream(1, 1)).unwrap();
            for i in 1..=4 {
                let expected = (p.f[4 - i] - 1.0) * tri.latest(i);
                assert!((diag.get(i) - expected).abs() < 1e-9);
            }
            assert_eq!(diag.get(1), 0.0);
        }
    }

    #[test]
    fn residues_round_trip() {
        for gamma in [Gamma::Zero, Gamma::One] {
            let p = TrueParams::reference(gamma);
            let sim = simulate_triangle(&p, &mut stream(9, 2));
            let tri = &sim.triangle;
            for i in 0..=10 {
                for k in 1..=10 - i {
                    if p.sigma[k - 1] == 0.0 {
                        continue;
                    }
                    let prev = tri.get(i, k - 1);
                    let f = tri.get(i, k) / prev;
                    let z = (f - p.f[k - 1]) * gamma.weight(prev).sqrt() / p.sigma[k - 1];
                    assert!((z - sim.residues.get(i, k)).abs() < 1e-9, "{i} {k}");
                }
            }
        }
    }

    #[test]
    fn simulation_is_reproducible() {
        let p = TrueParams::reference(Gamma::One);
        let a = simulate_triangle(&p, &mut stream(3, 5));
        let b = simulate_triangle(&p, &mut stream(3, 5));
        assert_eq!(a.triangle, b.triangle);
        assert_eq!(a.residues, b.residues);
    }

    #[test]
    fn resets_follow_the_rule() {
        // huge dispersion forces many non-positive factors
        let p = TrueParams::new(Gamma::Zero, 100.0, 0.0, vec![1.0, 1.0, 1.0], vec![5.0, 5.0, 0.0]).unwrap();
        let sim = simulate_triangle(&p, &mut stream(4, 0));
        assert!(sim.resets > 0);
        assert!(sim.triangle.rows().flatten().all(|c| *c > 0.0));
        for i in 0..=3 {
            for k in 1..=(3 - i).min(2) {
                let f = sim.triangle.get(i, k) / sim.triangle.get(i, k - 1);
                let z = (f - 1.0) / 5.0;
                assert!((z - sim.residues.get(i, k)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn horizon_mismatch_is_an_error() {
        let tri = simulate_triangle(&noiseless(Gamma::Zero), &mut stream(0, 0)).triangle;
        assert!(simulate_next_diagonal(&tri, &TrueParams::reference(Gamma::Zero), &mut stream(0, 1)).is_err());
    }
}
