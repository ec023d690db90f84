//! Distance process of a reflection-coupled linear pair started along the
//! first eigenmode: `dr = -theta r dt + 2 dB`, absorbed at 0.

use spde_coupling::grid_noise::NoiseStream;
use statrs::function::erf::erf;

/// `u(t) = (e^{2 theta t} - 1) / (2 theta)`, the clock of the time change.
fn clock(theta: f64, t: f64) -> f64 {
    if theta == 0.0 {
        t
    } else {
        (2.0 * theta * t).exp_m1() / (2.0 * theta)
    }
}

/// `P(tau > t) = erf(r0 / (2 sqrt(2 u(t))))`.
pub fn survival(r0: f64, theta: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    erf(r0 / (2.0 * (2.0 * clock(theta, t)).sqrt()))
}

pub fn cdf(r0: f64, theta: f64, t: f64) -> f64 {
    1.0 - survival(r0, theta, t)
}

/// `E tau` by integrating the survival function.
pub fn mean(r0: f64, theta: f64) -> f64 {
    let h = 1e-4;
    let mut t = 0.0;
    let mut acc = 0.0;
    loop {
        let s = survival(r0, theta, t + 0.5 * h);
        acc += s * h;
        t += h;
        if s < 1e-14 {
            return acc;
        }
    }
}

/// One hitting time from exact OU transitions on a step `h`, with a
/// Brownian-bridge crossing test between steps. Censored at `t_max`.
pub fn simulate(r0: f64, theta: f64, h: f64, t_max: f64, stream: &mut NoiseStream) -> (f64, bool) {
    let decay = (-theta * h).exp();
    let sd = 2.0 * clock(theta, h).sqrt() * decay;
    let steps = (t_max / h).round() as usize;
    let mut r = r0;
    for k in 1..=steps {
        let next = r * decay + sd * stream.standard_normal();
        let u = stream.uniform();
        if next <= 0.0 || u < (-r * next / (2.0 * h)).exp() {
            return (k as f64 * h, false);
        }
        r = next;
    }
    (steps as f64 * h, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_limits() {
        assert_eq!(survival(1.0, 10.0, 0.0), 1.0);
        assert!(survival(1.0, 10.0, 50.0) < 1e-10);
        assert!(survival(1.0, 0.0, 1.0) > survival(1.0, 0.0, 2.0));
    }

    #[test]
    fn simulated_mean_matches_exact() {
        let theta = std::f64::consts::PI.powi(2);
        let mut s = NoiseStream::new(5, 0);
        let m = 4000;
        let total: f64 = (0..m).map(|_| simulate(1.0, theta, 1e-4, 5.0, &mut s).0).sum();
        let exact = mean(1.0, theta);
        assert!(
            (total / m as f64 - exact).abs() < 0.01,
            "{} vs {exact}",
            total / m as f64
        );
    }
}
