//! Delay functions, the delayed-time map and its inverse, plant coefficient
//! fields, and seeded scenario sampling for dataset generation.
//!
//! A delay is admissible when it is strictly positive and, wherever it is
//! smaller than the position (`tau(s) < s`), its slope stays below one in
//! magnitude. Admissible delays split into two regions by the value at the
//! outflow boundary: `tau(1) >= 1` selects the single-branch feedback,
//! `tau(1) < 1` the two-branch one.

use crate::grid::{interp1, UniformGrid};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance for the delayed-time inverse.
pub const INVERSE_TOLERANCE: f64 = 1e-10;

/// Dense scan resolution used when estimating suprema of analytic families.
const BOUND_SCAN: usize = 2048;

#[derive(Debug, Error)]
pub enum DelayError {
    #[error("delay sample {value} at node {index} is not positive")]
    NonPositiveDelay { index: usize, value: f64 },
    #[error("|tau'({s})| = {slope} >= 1 where tau(s) < s")]
    SlopeViolation { s: f64, slope: f64 },
    #[error("grid needs at least two nodes, got {0}")]
    InvalidGrid(usize),
    #[error("inverse argument {y} outside [{lo}, {hi}]")]
    OutOfRange { y: f64, lo: f64, hi: f64 },
    #[error("bracketing failed while inverting the delayed-time map")]
    NonMonotone,
    #[error("sampler exhausted {0} retries without an admissible draw")]
    RetryExhausted(usize),
    #[error("unknown delay family `{0}`")]
    UnknownFamily(String),
    #[error("family `{family}` expects {expected} parameters, got {got}")]
    BadParams {
        family: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Error)]
pub enum CoefficientError {
    #[error("recirculation gain must vanish at s = 1, got {0}")]
    NonzeroEndpoint(f64),
    #[error("grid needs at least two nodes, got {0}")]
    InvalidGrid(usize),
    #[error("unknown coefficient family `{0}`")]
    UnknownFamily(String),
    #[error("family `{family}` expects {expected} parameters, got {got}")]
    BadParams {
        family: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Delay region selecting the feedback branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// `tau(1) >= 1`: single feedback branch, single kernel branch.
    D1,
    /// `tau(1) < 1`: two feedback branches coupled to two kernel branches.
    D2,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Region::D1 => write!(f, "d1"),
            Region::D2 => write!(f, "d2"),
        }
    }
}

/// Empirical Lipschitz estimate with the analytic value where the family
/// admits one.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub empirical: f64,
    pub analytic: Option<f64>,
}

impl LipschitzEstimate {
    /// The constant fed into the analytic formulas: analytic when known,
    /// otherwise the grid estimate.
    pub fn value(&self) -> f64 {
        self.analytic.unwrap_or(self.empirical)
    }
}

/// Analytic (or tabulated) delay family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DelayFamily {
    /// `offset + amplitude * cos(frequency * acos(s))`.
    CosineChebyshev {
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    /// `amplitude * exp(rate * s)`; `rate < 0` gives the shrinking delays.
    Exponential { amplitude: f64, rate: f64 },
    Constant { value: f64 },
    /// Uniform samples over `[0, 1]`, evaluated by linear interpolation.
    Tabulated { samples: Vec<f64> },
}

impl DelayFamily {
    /// Build a family from a config `(name, parameter array)` pair.
    pub fn from_config(name: &str, params: &[f64]) -> Result<Self, DelayError> {
        let expect = |n: usize, family: &'static str| {
            if params.len() == n {
                Ok(())
            } else {
                Err(DelayError::BadParams {
                    family,
                    expected: n,
                    got: params.len(),
                })
            }
        };
        match name {
            "cosine-chebyshev" => {
                expect(3, "cosine-chebyshev")?;
                Ok(Self::CosineChebyshev {
                    offset: params[0],
                    amplitude: params[1],
                    frequency: params[2],
                })
            }
            "exponential" => {
                expect(2, "exponential")?;
                Ok(Self::Exponential {
                    amplitude: params[0],
                    rate: params[1],
                })
            }
            "constant" => {
                expect(1, "constant")?;
                Ok(Self::Constant { value: params[0] })
            }
            "tabulated" => {
                if params.len() < 2 {
                    return Err(DelayError::InvalidGrid(params.len()));
                }
                Ok(Self::Tabulated {
                    samples: params.to_vec(),
                })
            }
            other => Err(DelayError::UnknownFamily(other.to_string())),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::CosineChebyshev {
                offset,
                amplitude,
                frequency,
            } => offset + amplitude * (frequency * s.clamp(-1.0, 1.0).acos()).cos(),
            Self::Exponential { amplitude, rate } => amplitude * (rate * s).exp(),
            Self::Constant { value } => *value,
            Self::Tabulated { samples } => interp1(samples, s),
        }
    }

    /// Analytic derivative where the family admits one.
    fn deriv_analytic(&self, s: f64) -> Option<f64> {
        match self {
            Self::CosineChebyshev {
                amplitude,
                frequency,
                ..
            } => {
                // d/ds cos(k*acos(s)) = k*sin(k*u)/sin(u) with u = acos(s);
                // the ratio tends to k^2 as s -> 1.
                let u = s.clamp(-1.0, 1.0).acos();
                let ratio = if u < 1e-7 {
                    *frequency
                } else {
                    (frequency * u).sin() / u.sin()
                };
                Some(amplitude * frequency * ratio)
            }
            Self::Exponential { amplitude, rate } => Some(amplitude * rate * (rate * s).exp()),
            Self::Constant { .. } => Some(0.0),
            Self::Tabulated { .. } => None,
        }
    }

    fn is_tabulated(&self) -> bool {
        matches!(self, Self::Tabulated { .. })
    }
}

/// Validated delay with samples, derivative, bounds and region tag.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DelayFunction {
    family: DelayFamily,
    grid: UniformGrid,
    samples: Vec<f64>,
    deriv: Vec<f64>,
    tau_sup: f64,
    tau_inf: f64,
    slope_sup: f64,
    region: Region,
    lipschitz: LipschitzEstimate,
    slope_lipschitz: LipschitzEstimate,
}

/// Build and validate a delay function on an `n`-node grid.
pub fn make_delay(family: DelayFamily, n: usize) -> Result<DelayFunction, DelayError> {
    DelayFunction::new(family, n)
}

impl DelayFunction {
    pub fn new(family: DelayFamily, n: usize) -> Result<Self, DelayError> {
        if n < 2 {
            return Err(DelayError::InvalidGrid(n));
        }
        if let DelayFamily::Tabulated { samples } = &family {
            if samples.len() < 2 {
                return Err(DelayError::InvalidGrid(samples.len()));
            }
        }
        let grid = UniformGrid::new(n);
        let samples: Vec<f64> = grid.nodes().map(|s| family.eval(s)).collect();
        for (index, &value) in samples.iter().enumerate() {
            if !(value > 0.0) {
                return Err(DelayError::NonPositiveDelay { index, value });
            }
        }
        let deriv: Vec<f64> = if family.is_tabulated() {
            central_differences(&samples, grid.spacing())
        } else {
            grid.nodes()
                .map(|s| family.deriv_analytic(s).unwrap_or(0.0))
                .collect()
        };

        // Admissibility scan on a dense grid: positive everywhere, slope
        // below one wherever tau(s) < s.
        let mut tau_sup = f64::MIN;
        let mut tau_inf = f64::MAX;
        let mut slope_sup = 0.0f64;
        for i in 0..=BOUND_SCAN {
            let s = i as f64 / BOUND_SCAN as f64;
            let tau = family.eval(s);
            if !(tau > 0.0) {
                return Err(DelayError::NonPositiveDelay {
                    index: i,
                    value: tau,
                });
            }
            let slope = match &family {
                DelayFamily::Tabulated { .. } => interp1(&deriv, s),
                f => f.deriv_analytic(s).unwrap_or(0.0),
            };
            if tau < s && slope.abs() >= 1.0 {
                return Err(DelayError::SlopeViolation {
                    s,
                    slope: slope.abs(),
                });
            }
            tau_sup = tau_sup.max(tau);
            tau_inf = tau_inf.min(tau);
            slope_sup = slope_sup.max(slope.abs());
        }

        let region = if family.eval(1.0) >= 1.0 {
            Region::D1
        } else {
            Region::D2
        };

        let lipschitz = LipschitzEstimate {
            empirical: max_difference_quotient(&samples, grid.spacing()),
            analytic: match &family {
                DelayFamily::Tabulated { .. } => None,
                _ => Some(slope_sup),
            },
        };
        let slope_lipschitz = LipschitzEstimate {
            empirical: max_difference_quotient(&deriv, grid.spacing()),
            analytic: None,
        };

        Ok(Self {
            family,
            grid,
            samples,
            deriv,
            tau_sup,
            tau_inf,
            slope_sup,
            region,
            lipschitz,
            slope_lipschitz,
        })
    }

    pub fn family(&self) -> &DelayFamily {
        &self.family
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn deriv_samples(&self) -> &[f64] {
        &self.deriv
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.family.eval(s)
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match &self.family {
            DelayFamily::Tabulated { .. } => interp1(&self.deriv, s),
            f => f.deriv_analytic(s).unwrap_or(0.0),
        }
    }

    /// `sup tau`.
    pub fn tau_sup(&self) -> f64 {
        self.tau_sup
    }

    /// `inf tau`.
    pub fn tau_inf(&self) -> f64 {
        self.tau_inf
    }

    /// `sup |tau'|`.
    pub fn slope_sup(&self) -> f64 {
        self.slope_sup
    }

    pub fn region(&self) -> Region {
        self.region
    }

    /// Lipschitz constant of `tau`.
    pub fn lipschitz(&self) -> LipschitzEstimate {
        self.lipschitz
    }

    /// Lipschitz constant of `tau'`.
    pub fn slope_lipschitz(&self) -> LipschitzEstimate {
        self.slope_lipschitz
    }

    pub fn delayed_time_map(&self) -> DelayedTimeMap {
        DelayedTimeMap::new(self.clone())
    }

    /// Samples resampled onto an `n`-node grid (model channels, probes).
    pub fn resample(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.eval(i as f64 / (n - 1) as f64))
            .collect()
    }
}

/// Region of a delay: decided by the boundary value `tau(1)`.
pub fn classify_delay(delay: &DelayFunction) -> Region {
    delay.region()
}

fn central_differences(samples: &[f64], h: f64) -> Vec<f64> {
    let n = samples.len();
    let mut d = vec![0.0; n];
    d[0] = (samples[1] - samples[0]) / h;
    d[n - 1] = (samples[n - 1] - samples[n - 2]) / h;
    for i in 1..n - 1 {
        d[i] = (samples[i + 1] - samples[i - 1]) / (2.0 * h);
    }
    d
}

fn max_difference_quotient(samples: &[f64], h: f64) -> f64 {
    samples
        .windows(2)
        .map(|w| ((w[1] - w[0]) / h).abs())
        .fold(0.0, f64::max)
}

/// The delayed-time map `g(s) = s - tau(s)` with its clamped supremum,
/// derivative bounds and a tolerance-controlled inverse.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DelayedTimeMap {
    delay: DelayFunction,
    g_samples: Vec<f64>,
    scan: Vec<f64>,
    g_bar: f64,
    g_prime_sup: f64,
    g_prime_inf: f64,
    inverse_lipschitz: LipschitzEstimate,
}

impl DelayedTimeMap {
    fn new(delay: DelayFunction) -> Self {
        let g_samples: Vec<f64> = delay
            .grid()
            .nodes()
            .map(|s| s - delay.eval(s))
            .collect();
        // Dense scan shared by the bound estimates and the inverse bracketing.
        let scan: Vec<f64> = (0..=BOUND_SCAN)
            .map(|i| {
                let s = i as f64 / BOUND_SCAN as f64;
                s - delay.eval(s)
            })
            .collect();
        let g_sup = scan.iter().fold(f64::MIN, |m, &v| m.max(v));
        let mut g_prime_sup = 0.0f64;
        let mut g_prime_inf = f64::MAX;
        for i in 0..=BOUND_SCAN {
            let s = i as f64 / BOUND_SCAN as f64;
            let gp = (1.0 - delay.deriv(s)).abs();
            g_prime_sup = g_prime_sup.max(gp);
            g_prime_inf = g_prime_inf.min(gp);
        }
        let inverse_lipschitz = LipschitzEstimate {
            empirical: if g_prime_inf > 0.0 {
                1.0 / g_prime_inf
            } else {
                f64::INFINITY
            },
            analytic: if delay.slope_sup() < 1.0 {
                Some(1.0 / (1.0 - delay.slope_sup()))
            } else {
                None
            },
        };
        Self {
            delay,
            g_samples,
            scan,
            g_bar: g_sup.max(0.0),
            g_prime_sup,
            g_prime_inf,
            inverse_lipschitz,
        }
    }

    pub fn delay(&self) -> &DelayFunction {
        &self.delay
    }

    pub fn g(&self, s: f64) -> f64 {
        s - self.delay.eval(s)
    }

    pub fn g_prime(&self, s: f64) -> f64 {
        1.0 - self.delay.deriv(s)
    }

    pub fn g_samples(&self) -> &[f64] {
        &self.g_samples
    }

    /// Supremum of `g` clamped at zero; the split point of the
    /// transformation's two formulas.
    pub fn g_bar(&self) -> f64 {
        self.g_bar
    }

    pub fn g_prime_sup(&self) -> f64 {
        self.g_prime_sup
    }

    pub fn g_prime_inf(&self) -> f64 {
        self.g_prime_inf
    }

    /// Lipschitz constant of the inverse map.
    pub fn inverse_lipschitz(&self) -> LipschitzEstimate {
        self.inverse_lipschitz
    }

    pub fn range(&self) -> (f64, f64) {
        (self.g(0.0), self.g(1.0))
    }

    /// Invert `g` at `y` to within [`INVERSE_TOLERANCE`].
    ///
    /// Brackets on the rightmost sign change of the dense scan (for
    /// non-negative `y` the level set lies on the strictly increasing part of
    /// `g`, so the crossing is unique), then bisects the analytic map, or a
    /// monotone-cubic interpolant for tabulated delays.
    pub fn invert(&self, y: f64) -> Result<f64, DelayError> {
        let (lo, hi) = self.range();
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if y < lo - slack || y > hi + slack {
            return Err(DelayError::OutOfRange { y, lo, hi });
        }
        let y = y.clamp(lo, hi);
        let m = self.scan.len() - 1;
        let mut bracket = None;
        for j in (0..m).rev() {
            let a = self.scan[j] - y;
            let b = self.scan[j + 1] - y;
            if a == 0.0 && b == 0.0 {
                continue;
            }
            if a * b <= 0.0 {
                bracket = Some(j);
                break;
            }
        }
        let j = bracket.ok_or(DelayError::NonMonotone)?;
        let mut a = j as f64 / m as f64;
        let mut b = (j + 1) as f64 / m as f64;
        if self.delay.family().is_tabulated() {
            return self.invert_monotone_cubic(y, a, b);
        }
        let mut fa = self.g(a) - y;
        for _ in 0..200 {
            if b - a <= 1e-15 {
                break;
            }
            let mid = 0.5 * (a + b);
            let fm = self.g(mid) - y;
            if (fa <= 0.0) == (fm <= 0.0) {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
            if (self.g(0.5 * (a + b)) - y).abs() <= INVERSE_TOLERANCE * 0.1 {
                break;
            }
        }
        let q = 0.5 * (a + b);
        if (self.g(q) - y).abs() > INVERSE_TOLERANCE {
            return Err(DelayError::NonMonotone);
        }
        Ok(q.clamp(0.0, 1.0))
    }

    /// Inverse interpolation on a monotone cubic Hermite model of the sampled
    /// map (Fritsch–Carlson limited slopes), bisected inside the bracket cell.
    fn invert_monotone_cubic(&self, y: f64, mut a: f64, mut b: f64) -> Result<f64, DelayError> {
        let g = &self.g_samples;
        let n = g.len();
        let h = 1.0 / (n - 1) as f64;
        let cell = ((0.5 * (a + b)) / h).floor().max(0.0) as usize;
        let cell = cell.min(n - 2);
        let d0 = g[cell + 1] - g[cell];
        let slope = |k: usize| -> f64 {
            if k == 0 {
                (g[1] - g[0]) / h
            } else if k == n - 1 {
                (g[n - 1] - g[n - 2]) / h
            } else {
                let left = (g[k] - g[k - 1]) / h;
                let right = (g[k + 1] - g[k]) / h;
                if left * right <= 0.0 {
                    0.0
                } else {
                    // Harmonic-mean limiter keeps the interpolant monotone.
                    2.0 * left * right / (left + right)
                }
            }
        };
        let m0 = slope(cell);
        let m1 = slope(cell + 1);
        let x0 = cell as f64 * h;
        let eval = |x: f64| -> f64 {
            let t = ((x - x0) / h).clamp(0.0, 1.0);
            let t2 = t * t;
            let t3 = t2 * t;
            g[cell] * (2.0 * t3 - 3.0 * t2 + 1.0)
                + h * m0 * (t3 - 2.0 * t2 + t)
                + g[cell + 1] * (-2.0 * t3 + 3.0 * t2)
                + h * m1 * (t3 - t2)
        };
        a = a.max(x0);
        b = b.min(x0 + h);
        let mut fa = eval(a) - y;
        let fb = eval(b) - y;
        if fa * fb > 0.0 {
            // The Hermite model reproduces the bracket endpoints only to
            // roundoff; a vanishing endpoint residual is still a root.
            let eps = 1e-9 * (1.0 + y.abs());
            if fb.abs() <= eps {
                return Ok(b.clamp(0.0, 1.0));
            }
            if fa.abs() <= eps {
                return Ok(a.clamp(0.0, 1.0));
            }
            if d0.abs() > 0.0 {
                return Err(DelayError::NonMonotone);
            }
        }
        for _ in 0..200 {
            if b - a <= 1e-15 {
                break;
            }
            let mid = 0.5 * (a + b);
            let fm = eval(mid) - y;
            if (fa <= 0.0) == (fm <= 0.0) {
                a = mid;
                fa = fm;
            } else {
                b = mid;
            }
        }
        Ok((0.5 * (a + b)).clamp(0.0, 1.0))
    }
}

/// Invert the delayed-time map at `y` (thin wrapper over
/// [`DelayedTimeMap::invert`]).
pub fn delayed_time_inverse(map: &DelayedTimeMap, y: f64) -> Result<f64, DelayError> {
    map.invert(y)
}

/// Recirculation gain family `c(s)`; every analytic family vanishes at `s=1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum GainFamily {
    /// `gain * (1 - s)`.
    Ramp { gain: f64 },
    Zero,
    Tabulated { samples: Vec<f64> },
}

impl GainFamily {
    pub fn from_config(name: &str, params: &[f64]) -> Result<Self, CoefficientError> {
        match name {
            "ramp" => {
                if params.len() != 1 {
                    return Err(CoefficientError::BadParams {
                        family: "ramp",
                        expected: 1,
                        got: params.len(),
                    });
                }
                Ok(Self::Ramp { gain: params[0] })
            }
            "zero" => Ok(Self::Zero),
            "tabulated" => {
                if params.len() < 2 {
                    return Err(CoefficientError::InvalidGrid(params.len()));
                }
                Ok(Self::Tabulated {
                    samples: params.to_vec(),
                })
            }
            other => Err(CoefficientError::UnknownFamily(other.to_string())),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::Ramp { gain } => gain * (1.0 - s),
            Self::Zero => 0.0,
            Self::Tabulated { samples } => interp1(samples, s),
        }
    }

    fn lipschitz_analytic(&self) -> Option<f64> {
        match self {
            Self::Ramp { gain } => Some(gain.abs()),
            Self::Zero => Some(0.0),
            Self::Tabulated { .. } => None,
        }
    }
}

/// Integral coupling family `f(s, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CouplingFamily {
    /// `cos_amp * cos(2π q + cos_phase) + sin_amp * sin(2π s + sin_phase)`.
    Harmonic {
        cos_amp: f64,
        cos_phase: f64,
        sin_amp: f64,
        sin_phase: f64,
    },
    Zero,
}

impl CouplingFamily {
    pub fn from_config(name: &str, params: &[f64]) -> Result<Self, CoefficientError> {
        match name {
            "harmonic" => {
                if params.len() != 4 {
                    return Err(CoefficientError::BadParams {
                        family: "harmonic",
                        expected: 4,
                        got: params.len(),
                    });
                }
                Ok(Self::Harmonic {
                    cos_amp: params[0],
                    cos_phase: params[1],
                    sin_amp: params[2],
                    sin_phase: params[3],
                })
            }
            "zero" => Ok(Self::Zero),
            other => Err(CoefficientError::UnknownFamily(other.to_string())),
        }
    }

    pub fn eval(&self, s: f64, q: f64) -> f64 {
        match self {
            Self::Harmonic {
                cos_amp,
                cos_phase,
                sin_amp,
                sin_phase,
            } => {
                let two_pi = std::f64::consts::TAU;
                cos_amp * (two_pi * q + cos_phase).cos() + sin_amp * (two_pi * s + sin_phase).sin()
            }
            Self::Zero => 0.0,
        }
    }

    fn sup(&self) -> f64 {
        match self {
            Self::Harmonic {
                cos_amp, sin_amp, ..
            } => cos_amp.abs() + sin_amp.abs(),
            Self::Zero => 0.0,
        }
    }

    fn lipschitz_analytic(&self) -> Option<f64> {
        match self {
            Self::Harmonic { sin_amp, .. } => Some(std::f64::consts::TAU * sin_amp.abs()),
            Self::Zero => Some(0.0),
        }
    }
}

/// Plant coefficients with bounds and Lipschitz estimates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoefficientSet {
    gain: GainFamily,
    coupling: CouplingFamily,
    grid: UniformGrid,
    c_samples: Vec<f64>,
    c_sup: f64,
    f_sup: f64,
    c_lipschitz: LipschitzEstimate,
    f_lipschitz: LipschitzEstimate,
}

impl CoefficientSet {
    pub fn new(
        gain: GainFamily,
        coupling: CouplingFamily,
        n: usize,
    ) -> Result<Self, CoefficientError> {
        if n < 2 {
            return Err(CoefficientError::InvalidGrid(n));
        }
        if let GainFamily::Tabulated { samples } = &gain {
            if samples.len() < 2 {
                return Err(CoefficientError::InvalidGrid(samples.len()));
            }
            let end = *samples.last().unwrap();
            if end.abs() > 1e-12 {
                return Err(CoefficientError::NonzeroEndpoint(end));
            }
        }
        let grid = UniformGrid::new(n);
        let c_samples: Vec<f64> = grid.nodes().map(|s| gain.eval(s)).collect();
        let mut c_sup = 0.0f64;
        let mut f_sup = 0.0f64;
        for i in 0..=BOUND_SCAN {
            let s = i as f64 / BOUND_SCAN as f64;
            c_sup = c_sup.max(gain.eval(s).abs());
            for j in 0..=64 {
                let q = j as f64 / 64.0;
                f_sup = f_sup.max(coupling.eval(s, q).abs());
            }
        }
        // Analytic suprema are exact for these families; prefer them so the
        // stored bound dominates every sample by construction.
        f_sup = f_sup.max(coupling.sup());
        let h = grid.spacing();
        let c_lipschitz = LipschitzEstimate {
            empirical: max_difference_quotient(&c_samples, h),
            analytic: gain.lipschitz_analytic(),
        };
        let f_first_arg: Vec<f64> = grid.nodes().map(|s| coupling.eval(s, 0.5)).collect();
        let f_lipschitz = LipschitzEstimate {
            empirical: max_difference_quotient(&f_first_arg, h),
            analytic: coupling.lipschitz_analytic(),
        };
        Ok(Self {
            gain,
            coupling,
            grid,
            c_samples,
            c_sup,
            f_sup,
            c_lipschitz,
            f_lipschitz,
        })
    }

    /// The plant of the reference scenarios: `c = 20(1-s)`,
    /// `f = 5cos(2πq) + 5sin(2πs)`.
    pub fn reference(n: usize) -> Self {
        Self::new(
            GainFamily::Ramp { gain: 20.0 },
            CouplingFamily::Harmonic {
                cos_amp: 5.0,
                cos_phase: 0.0,
                sin_amp: 5.0,
                sin_phase: 0.0,
            },
            n,
        )
        .expect("reference coefficients are valid")
    }

    pub fn zero(n: usize) -> Self {
        Self::new(GainFamily::Zero, CouplingFamily::Zero, n).expect("zero coefficients are valid")
    }

    pub fn c(&self, s: f64) -> f64 {
        self.gain.eval(s)
    }

    pub fn f(&self, s: f64, q: f64) -> f64 {
        self.coupling.eval(s, q)
    }

    pub fn gain_family(&self) -> &GainFamily {
        &self.gain
    }

    pub fn coupling_family(&self) -> &CouplingFamily {
        &self.coupling
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn c_samples(&self) -> &[f64] {
        &self.c_samples
    }

    pub fn c_sup(&self) -> f64 {
        self.c_sup
    }

    pub fn f_sup(&self) -> f64 {
        self.f_sup
    }

    pub fn c_lipschitz(&self) -> LipschitzEstimate {
        self.c_lipschitz
    }

    pub fn f_lipschitz(&self) -> LipschitzEstimate {
        self.f_lipschitz
    }
}

/// Chebyshev-style initial condition `A cos(G acos(s - k))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub amplitude: f64,
    pub frequency: f64,
    pub shift: f64,
}

impl InitialCondition {
    /// The reference initial state `5 cos(4 acos(s - 0.2))`.
    pub fn reference() -> Self {
        Self {
            amplitude: 5.0,
            frequency: 4.0,
            shift: 0.2,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.amplitude * (self.frequency * (s - self.shift).clamp(-1.0, 1.0).acos()).cos()
    }

    pub fn sample(&self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| self.eval(i as f64 / (n - 1) as f64))
            .collect()
    }
}

/// Parameter ranges for scenario sampling; defaults follow the dataset
/// recipe the reference experiments use.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SamplerRanges {
    pub initial_amplitude: (f64, f64),
    pub initial_frequency: (f64, f64),
    pub initial_shift: (f64, f64),
    pub d1_amplitude: (f64, f64),
    pub d1_frequency: (f64, f64),
    pub d2_amplitude: (f64, f64),
    pub d2_rate: (f64, f64),
}

impl Default for SamplerRanges {
    fn default() -> Self {
        Self {
            initial_amplitude: (0.5, 8.0),
            initial_frequency: (0.0, 8.0),
            initial_shift: (0.0, 0.5),
            d1_amplitude: (-1.0, 1.0),
            d1_frequency: (0.0, 8.0),
            d2_amplitude: (0.4, 0.8),
            d2_rate: (0.8, 2.4),
        }
    }
}

/// A sampled `(delay, initial condition)` pair.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub delay: DelayFunction,
    pub initial: InitialCondition,
}

/// Seeded sampler of admissible delays and initial conditions.
///
/// Deterministic for a fixed seed; draws violating the admissibility checks
/// are rejected and retried up to a cap.
pub struct ScenarioSampler {
    rng: ChaCha8Rng,
    ranges: SamplerRanges,
    grid_points: usize,
    retry_cap: usize,
}

impl ScenarioSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            ranges: SamplerRanges::default(),
            grid_points: 41,
            retry_cap: 200,
        }
    }

    pub fn with_grid(mut self, n: usize) -> Self {
        self.grid_points = n;
        self
    }

    pub fn with_ranges(mut self, ranges: SamplerRanges) -> Self {
        self.ranges = ranges;
        self
    }

    fn uniform(&mut self, range: (f64, f64)) -> f64 {
        if range.0 == range.1 {
            range.0
        } else {
            self.rng.gen_range(range.0..range.1)
        }
    }

    /// Draw an admissible delay in the requested region.
    ///
    /// The shrinking-exponential family is sampled as `A exp(-G s)` so every
    /// accepted draw actually lands in the small-delay region.
    pub fn sample_delay(&mut self, region: Region) -> Result<DelayFunction, DelayError> {
        for _ in 0..self.retry_cap {
            let family = match region {
                Region::D1 => DelayFamily::CosineChebyshev {
                    offset: 3.0,
                    amplitude: self.uniform(self.ranges.d1_amplitude),
                    frequency: self.uniform(self.ranges.d1_frequency),
                },
                Region::D2 => DelayFamily::Exponential {
                    amplitude: self.uniform(self.ranges.d2_amplitude),
                    rate: -self.uniform(self.ranges.d2_rate),
                },
            };
            match DelayFunction::new(family, self.grid_points) {
                Ok(delay) if delay.region() == region => return Ok(delay),
                _ => continue,
            }
        }
        Err(DelayError::RetryExhausted(self.retry_cap))
    }

    /// Like [`Self::sample_delay`] but additionally requires a global slope
    /// bound below one, which the inverse-map Lipschitz ceiling needs.
    pub fn sample_delay_slope_bounded(
        &mut self,
        region: Region,
    ) -> Result<DelayFunction, DelayError> {
        for _ in 0..self.retry_cap {
            let delay = self.sample_delay(region)?;
            if delay.slope_sup() < 1.0 {
                return Ok(delay);
            }
        }
        Err(DelayError::RetryExhausted(self.retry_cap))
    }

    pub fn sample_initial(&mut self) -> InitialCondition {
        InitialCondition {
            amplitude: self.uniform(self.ranges.initial_amplitude),
            frequency: self.uniform(self.ranges.initial_frequency),
            shift: self.uniform(self.ranges.initial_shift),
        }
    }

    /// Draw a `(delay, initial condition)` scenario in the requested region.
    pub fn sample_scenario(&mut self, region: Region) -> Result<Scenario, DelayError> {
        let delay = self.sample_delay(region)?;
        let initial = self.sample_initial();
        Ok(Scenario { delay, initial })
    }

    /// Randomized plant coefficients with the reference shapes: ramp gain
    /// (vanishing at `s = 1`) and harmonic coupling.
    pub fn sample_coefficients(&mut self, n: usize) -> CoefficientSet {
        let gain = self.uniform((0.0, 20.0));
        let cos_amp = self.uniform((-5.0, 5.0));
        let sin_amp = self.uniform((-5.0, 5.0));
        let cos_phase = self.uniform((0.0, std::f64::consts::TAU));
        let sin_phase = self.uniform((0.0, std::f64::consts::TAU));
        CoefficientSet::new(
            GainFamily::Ramp { gain },
            CouplingFamily::Harmonic {
                cos_amp,
                cos_phase,
                sin_amp,
                sin_phase,
            },
            n,
        )
        .expect("sampled coefficient families are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_d1() -> DelayFunction {
        DelayFunction::new(
            DelayFamily::CosineChebyshev {
                offset: 3.0,
                amplitude: 0.5,
                frequency: 5.0,
            },
            41,
        )
        .unwrap()
    }

    fn reference_d2() -> DelayFunction {
        DelayFunction::new(
            DelayFamily::Exponential {
                amplitude: 0.5,
                rate: -1.6,
            },
            41,
        )
        .unwrap()
    }

    #[test]
    fn reference_families_classify_as_expected() {
        let d1 = reference_d1();
        assert_eq!(d1.region(), Region::D1);
        assert!((d1.eval(1.0) - 3.5).abs() < 1e-12);

        let d2 = reference_d2();
        assert_eq!(d2.region(), Region::D2);
        assert!((d2.eval(1.0) - 0.5 * (-1.6f64).exp()).abs() < 1e-12);
        assert!((d2.eval(1.0) - 0.1009).abs() < 1e-4);

        let unit = DelayFunction::new(DelayFamily::Constant { value: 1.0 }, 11).unwrap();
        assert_eq!(classify_delay(&unit), Region::D1);
    }

    #[test]
    fn constant_delay_has_zero_slope_and_shifted_map() {
        let d = DelayFunction::new(DelayFamily::Constant { value: 0.2 }, 21).unwrap();
        assert_eq!(d.region(), Region::D2);
        assert!(d.deriv_samples().iter().all(|&v| v == 0.0));
        let map = d.delayed_time_map();
        assert!((map.g(0.7) - 0.5).abs() < 1e-14);
        assert!((map.invert(0.0).unwrap() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn rejects_inadmissible_delays() {
        let negative = DelayFunction::new(DelayFamily::Constant { value: -0.1 }, 11);
        assert!(matches!(
            negative,
            Err(DelayError::NonPositiveDelay { .. })
        ));

        // tau = 0.9 - 0.89 s dips below s with slope magnitude 0.89 < 1: fine.
        let ok = DelayFunction::new(
            DelayFamily::Tabulated {
                samples: (0..41)
                    .map(|i| 0.9 - 0.89 * i as f64 / 40.0)
                    .collect(),
            },
            41,
        );
        assert!(ok.is_ok());

        // Slope -1.5 where tau < s violates admissibility.
        let bad = DelayFunction::new(
            DelayFamily::Tabulated {
                samples: (0..41)
                    .map(|i| (0.9 - 1.5 * i as f64 / 40.0).max(0.01))
                    .collect(),
            },
            41,
        );
        assert!(matches!(bad, Err(DelayError::SlopeViolation { .. })));
    }

    #[test]
    fn linear_delay_inverse_is_exact() {
        // tau(s) = s/2 gives g(s) = s/2.
        let d = DelayFunction::new(
            DelayFamily::Tabulated {
                samples: (0..101).map(|i| (i as f64 / 100.0) * 0.5 + 1e-9).collect(),
            },
            101,
        )
        .unwrap();
        let map = d.delayed_time_map();
        assert!((map.invert(0.25).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn exponential_inverse_matches_independent_bisection() {
        // Independent oracle: bisect q - 0.5 exp(-1.6 q) = 0 to 1e-10.
        let g = |q: f64| q - 0.5 * (-1.6 * q).exp();
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if g(mid) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let oracle = 0.5 * (a + b);
        assert!((oracle - 0.306292411750987).abs() < 1e-9);

        let map = reference_d2().delayed_time_map();
        let got = map.invert(0.0).unwrap();
        assert!((got - oracle).abs() < 1e-9, "got {got}, oracle {oracle}");
    }

    #[test]
    fn inverse_round_trip_and_range_errors() {
        let map = reference_d2().delayed_time_map();
        let (lo, hi) = map.range();
        for i in 0..=1000 {
            let y = lo + (hi - lo) * i as f64 / 1000.0;
            let q = map.invert(y).unwrap();
            assert!((map.g(q) - y).abs() <= INVERSE_TOLERANCE, "y={y}");
        }
        assert!(matches!(
            map.invert(hi + 0.1),
            Err(DelayError::OutOfRange { .. })
        ));
    }

    #[test]
    fn clamped_supremum_of_delayed_time_map() {
        // Large delay: g < 0 everywhere, so the clamped supremum is zero.
        let d1 = reference_d1();
        assert_eq!(d1.delayed_time_map().g_bar(), 0.0);
        // Small delay: supremum sits at the right edge.
        let d2 = reference_d2();
        let map = d2.delayed_time_map();
        assert!((map.g_bar() - (1.0 - d2.eval(1.0))).abs() < 1e-12);
    }

    #[test]
    fn reference_coefficients_have_expected_bounds() {
        let coeffs = CoefficientSet::reference(41);
        assert!((coeffs.c_sup() - 20.0).abs() < 1e-9);
        assert!((coeffs.f_sup() - 10.0).abs() < 1e-9);
        assert_eq!(coeffs.c(1.0), 0.0);
        for (i, &c) in coeffs.c_samples().iter().enumerate() {
            assert!(c.abs() <= coeffs.c_sup() + 1e-12, "sample {i}");
        }
    }

    #[test]
    fn sampler_is_deterministic_and_region_true() {
        let mut a = ScenarioSampler::new(1);
        let mut b = ScenarioSampler::new(1);
        let s1 = a.sample_scenario(Region::D1).unwrap();
        let s2 = b.sample_scenario(Region::D1).unwrap();
        assert_eq!(s1.delay.samples(), s2.delay.samples());
        assert_eq!(s1.initial, s2.initial);
        match s1.delay.family() {
            DelayFamily::CosineChebyshev {
                offset,
                amplitude,
                frequency,
            } => {
                assert_eq!(*offset, 3.0);
                assert!((-1.0..=1.0).contains(amplitude));
                assert!((0.0..=8.0).contains(frequency));
            }
            other => panic!("unexpected family {other:?}"),
        }
    }

    #[test]
    fn d2_draws_all_pass_admissibility() {
        let mut sampler = ScenarioSampler::new(7);
        for _ in 0..500 {
            let delay = sampler.sample_delay(Region::D2).unwrap();
            assert!(delay.eval(1.0) < 1.0);
            let map = delay.delayed_time_map();
            // Increasing delayed time wherever the admissibility condition bites.
            for i in 0..=40 {
                let s = i as f64 / 40.0;
                if delay.eval(s) < s {
                    assert!(map.g_prime(s) > 0.0);
                }
            }
        }
    }

    #[test]
    fn classification_tracks_boundary_value_on_random_draws() {
        let mut sampler = ScenarioSampler::new(11);
        for i in 0..1000 {
            let region = if i % 2 == 0 { Region::D1 } else { Region::D2 };
            let delay = sampler.sample_delay(region).unwrap();
            let expected = if delay.eval(1.0) >= 1.0 {
                Region::D1
            } else {
                Region::D2
            };
            assert_eq!(classify_delay(&delay), expected);
        }
    }
}
