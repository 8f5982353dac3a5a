#![allow(dead_code)]

use vexbayes_core::smc::ModelHooks;
use vexbayes_core::RngStream;

/// Adaptive Simpson integration of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `P(a, x)` by numerical integration of the gamma density. For `a < 1` the
/// substitution `t = s^(1/a)` removes the singularity at zero.
pub fn inc_gamma_by_quadrature(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let gamma_a = libm::tgamma(a);
    // The unnormalised integral is of order Gamma(a).
    let tol = 1e-14 * gamma_a.max(1.0);
    if a < 1.0 {
        let f = move |s: f64| (-s.powf(1.0 / a)).exp() / a;
        integrate(&f, 0.0, x.powf(a), tol) / gamma_a
    } else {
        let f = move |t: f64| if t == 0.0 { if a == 1.0 { 1.0 } else { 0.0 } } else { (-t + (a - 1.0) * t.ln()).exp() };
        // Split at the mode to help the adaptive rule on long ranges.
        let mode = (a - 1.0).min(x);
        let head = if mode > 0.0 { integrate(&f, 0.0, mode, tol) } else { 0.0 };
        (head + integrate(&f, mode, x, tol)) / gamma_a
    }
}

/// Normal mean with known noise: prior `N(0, prior_sd^2)`, observations
/// `N(theta, noise_sd^2)`.
pub struct ConjugateNormal {
    pub y: Vec<f64>,
    pub prior_sd: f64,
    pub noise_sd: f64,
}

impl ConjugateNormal {
    pub fn simulate(m: usize, prior_sd: f64, noise_sd: f64, seed: u64) -> Self {
        let mut s = RngStream::new(seed, 99);
        let theta = s.standard_normal() * prior_sd;
        let y = s.fill_gaussian(m, theta, noise_sd).unwrap();
        ConjugateNormal { y, prior_sd, noise_sd }
    }

    /// Closed-form log marginal likelihood: `y ~ N(0, s^2 I + t^2 1 1')`.
    pub fn log_evidence(&self) -> f64 {
        let m = self.y.len() as f64;
        let (s2, t2) = (self.noise_sd * self.noise_sd, self.prior_sd * self.prior_sd);
        let sum: f64 = self.y.iter().sum();
        let sumsq: f64 = self.y.iter().map(|v| v * v).sum();
        let quad = (sumsq - t2 * sum * sum / (s2 + m * t2)) / s2;
        -0.5 * m * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * (1.0 + m * t2 / s2).ln() - 0.5 * quad
    }
}

impl ModelHooks for ConjugateNormal {
    fn dim(&self) -> usize {
        1
    }
    fn log_prior(&self, theta: &[f64]) -> f64 {
        let z = theta[0] / self.prior_sd;
        -0.5 * z * z
    }
    fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let s2 = self.noise_sd * self.noise_sd;
        let c = -0.5 * (2.0 * std::f64::consts::PI * s2).ln();
        self.y.iter().map(|v| c - 0.5 * (v - theta[0]).powi(2) / s2).sum()
    }
    fn sample_prior(&self, stream: &mut RngStream, theta: &mut [f64]) {
        theta[0] = stream.standard_normal() * self.prior_sd;
    }
}

pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
