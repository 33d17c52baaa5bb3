//! CES demand estimated from budget shares by censored maximum likelihood.
//!
//! With utility `(α x1^ρ + (1-α) x2^ρ)^{1/ρ}` the optimal expenditure share
//! of good 1 at price ratio `r = p1/p2` is `g / (r^m + g)` where
//! `m = ρ/(1-ρ)` and `g = (α/(1-α))^{1/(1-ρ)}`. Observed shares are that
//! prediction plus normal noise, censored at 0 and 1 (a two-limit Tobit).
//! The fit runs over `(ln g, m, ln σ)`.

use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;
use libm::erfc;

use crate::dataset::ChoiceDataset;
use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Smallest noise scale considered.
pub const SIGMA_FLOOR: f64 = 1e-6;
/// Bound on `|m|`; reaching it means `ρ` is numerically at 1.
pub const M_CAP: f64 = 1e6;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Goods are the two accounts as recorded.
    #[default]
    Ces,
    /// Two equiprobable states; each observation is reordered so the first
    /// good is the larger payout.
    DisappointmentAversion,
}

/// Share of good 1 predicted at price ratio `p1/p2`.
pub fn predicted_share(g: f64, m: f64, price_ratio: f64) -> f64 {
    logistic(g.ln() - m * price_ratio.ln())
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(g, m)` from `(α, ρ)`.
pub fn to_gm(alpha: f64, rho: f64) -> (f64, f64) {
    let m = rho / (1.0 - rho);
    let g = (alpha / (1.0 - alpha)).powf(1.0 / (1.0 - rho));
    (g, m)
}

/// `(α, ρ)` from `(g, m)`. `m < -1` gives `ρ > 1`, which no concave CES
/// utility produces.
pub fn to_alpha_rho(g: f64, m: f64) -> (f64, f64) {
    let rho = m / (1.0 + m);
    // g^{1-ρ} = g^{1/(1+m)}, written through logs to stay finite
    let z = g.ln() / (1.0 + m);
    (logistic(z), rho)
}

/// CES demand for two goods.
pub fn ces_demand(alpha: f64, rho: f64, prices: &[f64], expenditure: f64) -> Vec<f64> {
    let (g, m) = to_gm(alpha, rho);
    let s = predicted_share(g, m, prices[0] / prices[1]);
    vec![s * expenditure / prices[0], (1.0 - s) * expenditure / prices[1]]
}

/// `ln Φ(w)` and the inverse Mills ratio `φ(w)/Φ(w)`, accurate in the far
/// left tail.
fn log_cdf_and_mills(w: f64) -> (f64, f64) {
    if w > -30.0 {
        let cdf = 0.5 * erfc(-w / SQRT_2);
        let pdf = (-0.5 * w * w - LN_SQRT_2PI).exp();
        (cdf.ln(), pdf / cdf)
    } else {
        // asymptotic expansion of the Mills ratio
        let w2 = w * w;
        let series = 1.0 - 1.0 / w2 + 3.0 / (w2 * w2) - 15.0 / (w2 * w2 * w2);
        let log_cdf = -0.5 * w2 - LN_SQRT_2PI - (-w).ln() + series.ln();
        (log_cdf, -w / series)
    }
}

/// Shares and price ratios of a two-good dataset.
#[derive(Debug, Clone, PartialEq)]
struct ShareData {
    shares: Vec<f64>,
    log_ratios: Vec<f64>,
}

impl ShareData {
    fn new(ds: &ChoiceDataset, kind: ModelKind) -> Result<Self> {
        if ds.goods() != 2 {
            return Err(Error::WrongGoodsCount {
                expected: 2,
                found: ds.goods(),
            });
        }
        let (mut shares, mut log_ratios) = (Vec::new(), Vec::new());
        for obs in ds.observations() {
            let (mut p, mut x) = ([obs.prices()[0], obs.prices()[1]], [obs.bundle()[0], obs.bundle()[1]]);
            if kind == ModelKind::DisappointmentAversion && x[1] > x[0] {
                p.swap(0, 1);
                x.swap(0, 1);
            }
            let s = p[0] * x[0] / (p[0] * x[0] + p[1] * x[1]);
            shares.push(s.clamp(0.0, 1.0));
            log_ratios.push((p[0] / p[1]).ln());
        }
        Ok(ShareData { shares, log_ratios })
    }

    /// Log-likelihood and its gradient in `(ln g, m, ln σ)`.
    fn eval(&self, theta: [f64; 3]) -> (f64, [f64; 3]) {
        let [a, m, b] = theta;
        let sigma = b.exp();
        let mut ll = 0.0;
        let mut grad = [0.0; 3];
        for (&s, &lr) in self.shares.iter().zip(&self.log_ratios) {
            let mu = logistic(a - m * lr);
            let dmu_da = mu * (1.0 - mu);
            let dmu_dm = -dmu_da * lr;
            // d ll / d mu and d ll / d b for this observation
            let (l, d_mu, d_b) = if s <= 0.0 {
                let w = -mu / sigma;
                let (lc, mills) = log_cdf_and_mills(w);
                (lc, -mills / sigma, -mills * w)
            } else if s >= 1.0 {
                let v = (mu - 1.0) / sigma;
                let (lc, mills) = log_cdf_and_mills(v);
                (lc, mills / sigma, -mills * v)
            } else {
                let z = (s - mu) / sigma;
                (-0.5 * z * z - b - LN_SQRT_2PI, z / sigma, z * z - 1.0)
            };
            ll += l;
            grad[0] += d_mu * dmu_da;
            grad[1] += d_mu * dmu_dm;
            grad[2] += d_b;
        }
        (ll, grad)
    }
}

/// Censored-normal log-likelihood of the shares of `ds` (two goods).
pub fn loglik(g: f64, m: f64, sigma: f64, ds: &ChoiceDataset) -> Result<f64> {
    Ok(loglik_gradient(g, m, sigma, ds)?.0)
}

/// Log-likelihood with its gradient in `(ln g, m, ln σ)`.
pub fn loglik_gradient(g: f64, m: f64, sigma: f64, ds: &ChoiceDataset) -> Result<(f64, [f64; 3])> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    if !(g > 0.0) {
        return Err(Error::InvalidArgument(format!("g must be positive, got {g}")));
    }
    let data = ShareData::new(ds, ModelKind::Ces)?;
    Ok(data.eval([g.ln(), m, sigma.ln()]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationResult {
    pub label: String,
    pub alpha: f64,
    pub rho: f64,
    pub g: f64,
    pub m: f64,
    pub sigma: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl EstimationResult {
    pub const CSV_HEADER: &'static str = "label,alpha,rho,g,m,sigma,loglik,converged,iterations";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.label,
            self.alpha,
            self.rho,
            self.g,
            self.m,
            self.sigma,
            self.loglik,
            self.converged,
            self.iterations
        )
    }
}

struct Fit {
    theta: [f64; 3],
    ll: f64,
    converged: bool,
    iterations: usize,
}

const LOWER: [f64; 3] = [f64::NEG_INFINITY, -M_CAP, -13.815_510_557_964_274];
const UPPER: [f64; 3] = [f64::INFINITY, M_CAP, f64::INFINITY];

fn project(mut t: [f64; 3]) -> [f64; 3] {
    for i in 0..3 {
        t[i] = t[i].clamp(LOWER[i], UPPER[i]);
    }
    t
}

/// Coordinates held at a bound because the ascent direction leaves the box.
fn active_set(t: &[f64; 3], grad: &[f64; 3]) -> [bool; 3] {
    let mut active = [false; 3];
    for i in 0..3 {
        active[i] = (t[i] <= LOWER[i] && grad[i] < 0.0) || (t[i] >= UPPER[i] && grad[i] > 0.0);
    }
    active
}

fn projected_norm(grad: &[f64; 3], active: &[bool; 3]) -> f64 {
    (0..3)
        .filter(|&i| !active[i])
        .map(|i| grad[i] * grad[i])
        .sum::<f64>()
        .sqrt()
}

/// Projected BFGS ascent from `start`.
fn maximize(data: &ShareData, start: [f64; 3]) -> Fit {
    let mut t = project(start);
    let (mut ll, mut grad) = data.eval(t);
    let mut h = [[0.0; 3]; 3];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        let active = active_set(&t, &grad);
        if projected_norm(&grad, &active) < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        // ascent direction d = H g on the free coordinates
        let mut d = [0.0; 3];
        for i in 0..3 {
            if !active[i] {
                d[i] = (0..3).filter(|&j| !active[j]).map(|j| h[i][j] * grad[j]).sum();
            }
        }
        let mut slope: f64 = (0..3).map(|i| d[i] * grad[i]).sum();
        if !(slope > 0.0) {
            // lost positive definiteness: restart from steepest ascent
            h = [[0.0; 3]; 3];
            for i in 0..3 {
                h[i][i] = 1.0;
                d[i] = if active[i] { 0.0 } else { grad[i] };
            }
            slope = (0..3).map(|i| d[i] * grad[i]).sum();
        }
        let mut step = 1.0;
        let accepted = loop {
            let cand = project(std::array::from_fn(|i| t[i] + step * d[i]));
            let (cll, cgrad) = data.eval(cand);
            let moved: f64 = (0..3).map(|i| (cand[i] - t[i]) * grad[i]).sum();
            if cll.is_finite() && cll >= ll + 1e-4 * moved.min(step * slope) {
                break Some((cand, cll, cgrad));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((cand, cll, cgrad)) = accepted else {
            break;
        };
        let s: [f64; 3] = std::array::from_fn(|i| cand[i] - t[i]);
        // y is the change in the gradient of -ll
        let y: [f64; 3] = std::array::from_fn(|i| grad[i] - cgrad[i]);
        let sy: f64 = (0..3).map(|i| s[i] * y[i]).sum();
        if sy > 1e-300 {
            let hy: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| h[i][j] * y[j]).sum());
            let yhy: f64 = (0..3).map(|i| y[i] * hy[i]).sum();
            let rho = 1.0 / sy;
            for i in 0..3 {
                for j in 0..3 {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let stalled = (cll - ll).abs() <= 1e-15 * ll.abs().max(1.0)
            && s.iter().all(|v| v.abs() <= 1e-15);
        t = cand;
        ll = cll;
        grad = cgrad;
        if stalled {
            break;
        }
    }
    if !converged {
        let active = active_set(&t, &grad);
        converged = projected_norm(&grad, &active) < GRAD_TOL;
    }
    Fit {
        theta: t,
        ll,
        converged,
        iterations,
    }
}

/// Starting noise scale: root mean squared residual at `(a, m)`.
fn start_sigma(data: &ShareData, a: f64, m: f64) -> f64 {
    let ss: f64 = data
        .shares
        .iter()
        .zip(&data.log_ratios)
        .map(|(&s, &lr)| (s - logistic(a - m * lr)).powi(2))
        .sum();
    (ss / data.shares.len() as f64).sqrt().max(1e-3)
}

/// Largest absolute share residual, used to recognise an exact fit.
fn max_residual(data: &ShareData, a: f64, m: f64) -> f64 {
    data.shares
        .iter()
        .zip(&data.log_ratios)
        .map(|(&s, &lr)| (s - logistic(a - m * lr)).abs())
        .fold(0.0, f64::max)
}

/// Maximum likelihood estimate from nine starts over
/// `g ∈ {0.25, 1, 4}`, `m ∈ {-0.5, 0.5, 2}`.
///
/// The best start wins; near ties go to the smaller `|m|`. `converged`
/// requires a projected gradient norm below `1e-8`, except that a fit with
/// `σ` at its floor and every residual below `1e-9` counts as converged
/// (the data are reproduced exactly). Reaching the `|m|` cap is never
/// converged.
pub fn estimate_ces(ds: &ChoiceDataset, kind: ModelKind) -> Result<EstimationResult> {
    if ds.len() < 3 {
        return Err(Error::InvalidArgument(
            "estimation needs at least three observations".into(),
        ));
    }
    let data = ShareData::new(ds, kind)?;
    let (lo, hi) = data
        .log_ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi - lo <= 1e-12 {
        return Err(Error::Degenerate("all observations share one price ratio".into()));
    }
    let mut best: Option<Fit> = None;
    for g0 in [0.25f64, 1.0, 4.0] {
        for m0 in [-0.5, 0.5, 2.0] {
            let a0 = g0.ln();
            let fit = maximize(&data, [a0, m0, start_sigma(&data, a0, m0).ln()]);
            let better = match &best {
                None => true,
                Some(b) => {
                    let tie = (fit.ll - b.ll).abs() <= 1e-9 * b.ll.abs().max(1.0);
                    if tie {
                        fit.theta[1].abs() < b.theta[1].abs()
                    } else {
                        fit.ll > b.ll
                    }
                }
            };
            if better {
                best = Some(fit);
            }
        }
    }
    let fit = best.expect("nine starts");
    let [a, m, b] = fit.theta;
    let exact = b <= LOWER[2] && max_residual(&data, a, m) <= 1e-9;
    let converged = (fit.converged || exact) && m.abs() < M_CAP;
    let g = a.exp();
    let (alpha, rho) = to_alpha_rho(g, m);
    Ok(EstimationResult {
        label: ds.label().to_string(),
        alpha,
        rho,
        g,
        m,
        sigma: b.exp(),
        loglik: fit.ll,
        converged,
        iterations: fit.iterations,
    })
}

/// Density of the standard normal, exposed for tests of the likelihood.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_dataset;

    fn ces_data(alpha: f64, rho: f64, noise: &[f64]) -> ChoiceDataset {
        let rows = (0..22).map(|t| {
            let r = (3f64.ln() * (2.0 * t as f64 / 21.0 - 1.0)).exp();
            let p = vec![r.sqrt(), 1.0 / r.sqrt()];
            let (g, m) = to_gm(alpha, rho);
            let s = (predicted_share(g, m, r) + noise.get(t).copied().unwrap_or(0.0)).clamp(0.0, 1.0);
            let x = vec![s * 100.0 / p[0], (1.0 - s) * 100.0 / p[1]];
            (p, x)
        });
        make_dataset(rows).unwrap()
    }

    #[test]
    fn share_examples() {
        assert_eq!(predicted_share(1.0, 1.0, 1.0), 0.5);
        assert_eq!(predicted_share(1.0, 0.0, 7.0), 0.5);
        assert!((predicted_share(3.0, 1.0, 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn parameter_map_round_trip() {
        for alpha in [0.1, 0.5, 0.77] {
            for rho in [-3.0, -0.2, 0.0, 0.4, 0.9] {
                let (g, m) = to_gm(alpha, rho);
                let (a2, r2) = to_alpha_rho(g, m);
                assert!((a2 - alpha).abs() < 1e-9 && (r2 - rho).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_residual_loglik() {
        let ds = ces_data(0.5, 0.5, &[]);
        let (g, m) = to_gm(0.5, 0.5);
        let ll = loglik(g, m, 0.1, &ds).unwrap();
        let expected = -22.0 * (0.1f64.ln() + 0.5 * (2.0 * PI).ln());
        assert!((ll - expected).abs() < 1e-9);
        assert!(loglik(g, m, 0.0, &ds).is_err());
    }

    #[test]
    fn upper_censored_contribution() {
        let ds = make_dataset(vec![(vec![1.0, 1.0], vec![1.0, 0.0])]).unwrap();
        let ll = loglik(1.0, 1.0, 0.5, &ds).unwrap();
        // 1 - Φ(1)
        let tail = 0.158_655_253_931_457_05f64;
        assert!((ll - tail.ln()).abs() < 1e-12, "{ll} {}", tail.ln());
    }

    #[test]
    fn far_tail_is_finite_and_continuous() {
        let (a, ma) = log_cdf_and_mills(-30.0 + 1e-9);
        let (b, mb) = log_cdf_and_mills(-30.0 - 1e-9);
        assert!((a - b).abs() < 1e-6 && (ma - mb).abs() < 1e-6);
        assert!(log_cdf_and_mills(-1e6).0.is_finite());
    }

    #[test]
    fn gradient_matches_differences() {
        let ds = ces_data(0.3, -0.4, &[0.02, -0.01, 0.5, -0.7]);
        let data = ShareData::new(&ds, ModelKind::Ces).unwrap();
        for theta in [[0.2, 0.7, -2.0], [-1.0, -0.3, -1.0], [0.0, 1.5, -3.0]] {
            let (_, g) = data.eval(theta);
            for k in 0..3 {
                let mut up = theta;
                let mut dn = theta;
                up[k] += 1e-5;
                dn[k] -= 1e-5;
                let fd = (data.eval(up).0 - data.eval(dn).0) / 2e-5;
                assert!((fd - g[k]).abs() <= 1e-4 * g[k].abs().max(1.0), "{k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn recovers_noiseless_parameters() {
        for (alpha, rho) in [(0.5, 0.5), (0.3, -1.0), (0.7, 0.2)] {
            let est = estimate_ces(&ces_data(alpha, rho, &[]), ModelKind::Ces).unwrap();
            assert!((est.alpha - alpha).abs() < 1e-4, "{est:?}");
            assert!((est.rho - rho).abs() < 1e-4, "{est:?}");
            assert!(est.converged, "{est:?}");
        }
    }

    #[test]
    fn flat_shares_give_flat_demand() {
        let rows = (0..10).map(|t| {
            let p = vec![1.0 + t as f64 * 0.3, 1.0];
            (p.clone(), vec![50.0 / p[0], 50.0])
        });
        let est = estimate_ces(&make_dataset(rows).unwrap(), ModelKind::Ces).unwrap();
        assert!(est.m.abs() < 0.05 && (est.alpha - 0.5).abs() < 0.01, "{est:?}");
    }

    #[test]
    fn rejects_thin_data() {
        let same = make_dataset(vec![(vec![1.0, 2.0], vec![1.0, 1.0]); 4]).unwrap();
        assert!(matches!(estimate_ces(&same, ModelKind::Ces), Err(Error::Degenerate(_))));
        let short = make_dataset(vec![(vec![1.0, 2.0], vec![1.0, 1.0]); 2]).unwrap();
        assert!(estimate_ces(&short, ModelKind::Ces).is_err());
    }

    #[test]
    fn da_fit_ignores_account_labels() {
        let ds = ces_data(0.4, 0.3, &[0.01, -0.02, 0.03, 0.0, -0.01]);
        let swapped = make_dataset(ds.observations().iter().enumerate().map(|(t, o)| {
            let (p, x) = (o.prices(), o.bundle());
            if t % 3 == 0 {
                (vec![p[1], p[0]], vec![x[1], x[0]])
            } else {
                (p.to_vec(), x.to_vec())
            }
        }))
        .unwrap();
        let a = estimate_ces(&ds, ModelKind::DisappointmentAversion).unwrap();
        let b = estimate_ces(&swapped, ModelKind::DisappointmentAversion).unwrap();
        assert!((a.alpha - b.alpha).abs() < 1e-9 && (a.loglik - b.loglik).abs() < 1e-9);
    }
}
