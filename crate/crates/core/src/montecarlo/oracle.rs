//! Deterministic quadrature reference for the mean per-hop BLER.
//!
//! Within one hop every gain class is a sum (or maximum) of i.i.d.
//! exponentials sharing one mean, so the expectation collapses to a handful
//! of one-dimensional laws:
//!
//! * `h` is exponential, so for fixed power and interference the SINR is
//!   exponential and `psi(s) = E[eps(t)], t ~ Exp(s)` is a 1-D integral;
//! * the receive-side interference sum is Erlang(M);
//! * the beacon and transmit-side sums are Erlang(L) and Erlang(M);
//! * the maximum of N interference-link gains has CDF `(1 - e^{-x/mu})^N`.
//!
//! Each layer is a monotone function of a positive scale and is tabulated
//! on a log grid with cubic interpolation; the interpolation error is
//! measured at every cell midpoint and carried into the bound together with
//! the quadrature error estimates and the probability mass cut off by
//! truncating each law.

use std::cell::Cell;

use super::quadrature::integrate;
use super::McError;
use crate::channel::{ChannelModel, Fading};
use crate::ehmodel::EhScheme;
use crate::fblmetrics::{inst_bler, FblParams};
use crate::scenario::{build_geometry, Constants, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Absolute tolerance of every quadrature layer.
    pub tol: f64,
    /// Probability mass dropped from each tail of each truncated law.
    pub tail: f64,
    /// Table nodes per decade.
    pub per_decade: f64,
    pub fading: Fading,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tol: 1e-8, tail: 1e-10, per_decade: 120.0, fading: Fading::Rayleigh }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub per_hop_bler: Vec<f64>,
    pub per_hop_error: Vec<f64>,
    pub e2e_bler: f64,
    /// Bound on `|e2e_bler - exact|`.
    pub error_bound: f64,
}

/// Erlang(n, mean `mu` per stage).
#[derive(Debug, Clone, Copy)]
struct Erlang {
    n: u32,
    mu: f64,
}

impl Erlang {
    fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let y = x / self.mu;
        let log = (self.n as f64 - 1.0) * y.ln() - y - ln_factorial(self.n - 1) - self.mu.ln();
        log.exp()
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let y = x / self.mu;
        let n = self.n as f64;
        if y < n + 1.0 {
            // e^-y y^n / n! * sum_j y^j / ((n+1)..(n+j))
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut k = n;
            while term > sum * 1e-17 {
                k += 1.0;
                term *= y / k;
                sum += term;
            }
            (n * y.ln() - y - ln_factorial(self.n)).exp() * sum
        } else {
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..self.n {
                term *= y / k as f64;
                sum += term;
            }
            1.0 - (-y).exp() * sum
        }
    }

    /// Support truncated to `[q(tail), q(1 - tail)]`.
    fn support(&self, tail: f64) -> (f64, f64) {
        let find = |target: f64, upper: bool| {
            let (mut lo, mut hi) = (self.mu * 1e-300_f64.max(f64::MIN_POSITIVE), self.mu * (self.n as f64 + 200.0));
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                let below = if upper { 1.0 - self.cdf(mid) < target } else { self.cdf(mid) >= target };
                if below {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            if upper { hi } else { lo }
        };
        (find(tail, false), find(tail, true))
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Maximum of `n` i.i.d. exponentials with mean `mu`.
#[derive(Debug, Clone, Copy)]
struct MaxExp {
    n: u32,
    mu: f64,
}

impl MaxExp {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (self.n as f64 * (-(-x / self.mu).exp_m1()).ln()).exp().min(1.0)
    }

    #[cfg(test)]
    fn quantile(&self, q: f64) -> f64 {
        // (1 - e^{-x/mu})^n = q
        -self.mu * (-(q.ln() / self.n as f64).exp()).ln_1p()
    }

    fn upper(&self, tail: f64) -> f64 {
        let root = -((-tail).ln_1p() / self.n as f64).exp_m1();
        -self.mu * root.ln()
    }
}

/// Cubic interpolant of a function of `ln x` on a uniform grid.
struct LogTable {
    x0: f64,
    dx: f64,
    values: Vec<f64>,
    /// Largest midpoint deviation from the tabulated function.
    error: f64,
}

impl LogTable {
    fn build<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, per_decade: f64) -> Self {
        let (mut a, mut b) = (lo.ln(), hi.ln());
        if !(b - a > 1e-6) {
            a -= 0.01;
            b += 0.01;
        }
        let dx = std::f64::consts::LN_10 / per_decade;
        let n = (((b - a) / dx).ceil() as usize).max(3) + 1;
        let dx = (b - a) / (n - 1) as f64;
        let values: Vec<f64> = (0..n).map(|i| f((a + i as f64 * dx).exp())).collect();
        let mut table = Self { x0: a, dx, values, error: 0.0 };
        let mut worst: f64 = 0.0;
        for i in 0..n - 1 {
            let x = (a + (i as f64 + 0.5) * dx).exp();
            worst = worst.max((table.eval(x) - f(x)).abs());
        }
        table.error = worst;
        table
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = ((x.ln() - self.x0) / self.dx).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).saturating_sub(1).min(n - 4);
        let u = t - i as f64;
        let v = &self.values[i..i + 4];
        // Lagrange basis on nodes 0, 1, 2, 3.
        let l0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
        let l1 = u * (u - 2.0) * (u - 3.0) / 2.0;
        let l2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
        let l3 = u * (u - 1.0) * (u - 2.0) / 6.0;
        l0 * v[0] + l1 * v[1] + l2 * v[2] + l3 * v[3]
    }
}

/// `max(tol, reported)` accumulated across nested evaluations.
#[derive(Default)]
struct WorstError(Cell<f64>);

impl WorstError {
    fn note(&self, e: f64) {
        self.0.set(self.0.get().max(e));
    }

    fn get(&self) -> f64 {
        self.0.get()
    }
}

const MAX_DEPTH: u32 = 40;

/// `integral f(x) dx` over `[lo, hi]`, evaluated in `ln x` with one panel
/// per half decade so that features at small `x` are resolved.
fn integrate_log<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> super::Integral {
    let (a, b) = (lo.ln(), hi.ln());
    let panels = (((b - a) / (0.5 * std::f64::consts::LN_10)).ceil() as usize).max(1);
    let pts: Vec<f64> = (0..=panels).map(|i| a + (b - a) * i as f64 / panels as f64).collect();
    integrate(
        &|z: f64| {
            let x = z.exp();
            f(x) * x
        },
        &pts,
        tol,
        MAX_DEPTH,
    )
}

/// Mean BLER of one hop.
#[allow(clippy::too_many_arguments)]
fn hop_oracle(
    scheme: EhScheme,
    fbl: &FblParams,
    kappa: f64,
    p_pb: f64,
    p_pt: f64,
    i_th: f64,
    sigma2: f64,
    dims: (u32, u32, u32),
    means: (f64, f64, f64, f64, f64),
    opts: &OracleOptions,
) -> (f64, f64) {
    let (l, m, n) = dims;
    let (mu_g, mu_vtx, mu_vrx, mu_h, mu_f) = means;
    let tol = opts.tol;
    let tail = opts.tail;
    let t0 = fbl.rate.exp2() - 1.0;
    let combine = |beacon: f64, primary: f64| scheme.combine(beacon, primary);
    // SINR = power * gain_scale * h / w
    let gain_scale = 1.0 / (sigma2 * p_pt);

    if opts.fading == Fading::PointMass {
        let p = (kappa * combine(p_pb * l as f64 * mu_g, p_pt * m as f64 * mu_vtx)).min(i_th / mu_f);
        let gamma = p * gain_scale * mu_h / (m as f64 * mu_vrx);
        return (inst_bler(gamma, fbl), 0.0);
    }

    let g_law = Erlang { n: l, mu: mu_g };
    let vtx_law = Erlang { n: m, mu: mu_vtx };
    let w_law = Erlang { n: m, mu: mu_vrx };
    let f_law = MaxExp { n, mu: mu_f };
    let (g_lo, g_hi) = g_law.support(tail);
    let (vtx_lo, vtx_hi) = vtx_law.support(tail);
    let (w_lo, w_hi) = w_law.support(tail);
    let mut bound = 0.0;

    let (x_lo, x_hi) = match scheme {
        EhScheme::Pt => (p_pt * vtx_lo, p_pt * vtx_hi),
        _ => (combine(p_pb * g_lo, p_pt * vtx_lo), combine(p_pb * g_hi, p_pt * vtx_hi)),
    };
    let (a_lo, a_hi) = (kappa * x_lo, kappa * x_hi);
    let f_hi = f_law.upper(tail);
    let cap_binds = i_th.is_finite() && i_th / f_hi < a_hi;
    let b_lo = if cap_binds { i_th / f_hi } else { a_lo };
    let p_lo = a_lo.min(b_lo);

    // Layer 1: E_h over an exponential SINR with mean s.
    let psi = |s: f64| {
        let u0 = t0 / s;
        let upper = 40.0;
        let mut pts = vec![0.0];
        for k in [0.5, 0.8, 1.0, 1.25, 2.0] {
            if u0 * k < upper {
                pts.push(u0 * k);
            }
        }
        pts.push(upper);
        let r = integrate(&|u: f64| inst_bler(s * u, fbl) * (-u).exp(), &pts, tol * 0.1, MAX_DEPTH);
        r.value
    };
    let s_lo = p_lo * gain_scale * mu_h / w_hi;
    let s_hi = a_hi * gain_scale * mu_h / w_lo;
    let psi_t = LogTable::build(psi, s_lo, s_hi, opts.per_decade);
    // 40-mean truncation of h.
    bound += psi_t.error + tol * 0.1 + (-40f64).exp();

    // Layer 2: E_w at fixed transmit power.
    let w_err = WorstError::default();
    let phi = |p: f64| {
        let r = integrate_log(&|w: f64| psi_t.eval(p * gain_scale * mu_h / w) * w_law.pdf(w), w_lo, w_hi, tol);
        w_err.note(r.error);
        r.value
    };
    let phi_t = LogTable::build(phi, p_lo, a_hi, opts.per_decade);
    bound += phi_t.error + w_err.get().max(tol) + 2.0 * tail;

    // Layer 3: E_F of phi(min(a, I_th / F)).
    let cap_err = WorstError::default();
    let lambda_t = if cap_binds {
        let lambda = |a: f64| {
            // P(I_th / F > a) = P(F < I_th / a).
            let keep = f_law.cdf(i_th / a);
            let mut total = phi_t.eval(a) * keep;
            if b_lo < a {
                // B = I_th / F has density f_F(I_th / b) I_th / b^2.
                let r = integrate_log(
                    &|b: f64| {
                        let x = i_th / b;
                        let dens = max_exp_pdf(&f_law, x) * x / b;
                        phi_t.eval(b) * dens
                    },
                    b_lo,
                    a,
                    tol,
                );
                cap_err.note(r.error);
                total += r.value;
            }
            total
        };
        let t = LogTable::build(lambda, a_lo, a_hi, opts.per_decade);
        bound += t.error + cap_err.get().max(tol) + tail;
        Some(t)
    } else {
        if i_th.is_finite() {
            bound += tail;
        }
        None
    };
    let lam = |a: f64| match &lambda_t {
        Some(t) => t.eval(a),
        None => phi_t.eval(a),
    };

    // Layer 4: E over the harvested power.
    let outer_err = WorstError::default();
    let value = match scheme {
        EhScheme::Pt => {
            let r = integrate_log(&|y: f64| lam(kappa * p_pt * y) * vtx_law.pdf(y), vtx_lo, vtx_hi, tol);
            outer_err.note(r.error);
            bound += 2.0 * tail;
            r.value
        }
        _ => {
            let inner = |x: f64| {
                let r = integrate_log(
                    &|y: f64| lam(kappa * combine(p_pb * x, p_pt * y)) * vtx_law.pdf(y),
                    vtx_lo,
                    vtx_hi,
                    tol,
                );
                outer_err.note(r.error);
                r.value
            };
            let r = integrate_log(&|x: f64| inner(x) * g_law.pdf(x), g_lo, g_hi, tol);
            outer_err.note(r.error);
            bound += 4.0 * tail + tol;
            r.value
        }
    };
    bound += outer_err.get().max(tol);
    (value.clamp(0.0, 1.0), bound)
}

fn max_exp_pdf(law: &MaxExp, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let e = (-x / law.mu).exp();
    let base = -(-x / law.mu).exp_m1();
    law.n as f64 * base.powi(law.n as i32 - 1) * e / law.mu
}

/// Quadrature reference for a single-hop chain.
pub fn single_hop_oracle(
    scenario: &Scenario,
    constants: &Constants,
    scheme: EhScheme,
    opts: &OracleOptions,
) -> Result<OracleResult, McError> {
    if scenario.hops != 1 {
        return Err(McError::Oracle(format!("single-hop oracle needs K = 1, got {}", scenario.hops)));
    }
    quadrature_oracle(scenario, constants, scheme, opts)
}

/// Quadrature reference for the per-hop and end-to-end mean BLER.
///
/// Hops are evaluated independently: the integration variables of one hop
/// are its own `h`, receive-side interference sum, transmit-side sum, beacon
/// sum and interference-link maximum, at most five for any L, M, N.
pub fn quadrature_oracle(
    scenario: &Scenario,
    constants: &Constants,
    scheme: EhScheme,
    opts: &OracleOptions,
) -> Result<OracleResult, McError> {
    constants.validate()?;
    scenario.validate(constants)?;
    let geometry = build_geometry(scenario)?;
    let model = ChannelModel::new(scenario, &geometry, constants, opts.fading)?;
    let fbl = FblParams::new(scenario, constants)?;
    let powers = scenario.linear_powers()?;
    let kappa = scenario.hops as f64 * constants.eta * scenario.n_e as f64 / (constants.m - scenario.n_e) as f64;
    let dims = (scenario.antennas, scenario.primary_tx, scenario.primary_rx);
    let mut per_hop = Vec::new();
    let mut errors = Vec::new();
    for hop in 0..scenario.hops as usize {
        let means = (
            model.mean_g()[hop],
            model.mean_v()[hop],
            model.mean_v()[hop + 1],
            model.mean_h()[hop],
            model.mean_f()[hop],
        );
        let (v, e) = hop_oracle(
            scheme,
            &fbl,
            kappa,
            powers.p_pb,
            powers.p_pt,
            powers.i_th,
            constants.sigma2,
            dims,
            means,
            opts,
        );
        if !v.is_finite() {
            return Err(McError::Oracle(format!("non-finite value at hop {hop}")));
        }
        per_hop.push(v);
        errors.push(e);
    }
    let survive: f64 = per_hop.iter().map(|e| 1.0 - e).product();
    Ok(OracleResult {
        e2e_bler: 1.0 - survive,
        error_bound: errors.iter().sum(),
        per_hop_bler: per_hop,
        per_hop_error: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::McConfig;

    #[test]
    fn erlang_cdf_matches_closed_forms() {
        let e = Erlang { n: 1, mu: 2.0 };
        assert!((e.cdf(3.0) - (1.0 - (-1.5f64).exp())).abs() < 1e-15);
        let e = Erlang { n: 3, mu: 1.0 };
        let y: f64 = 2.5;
        let exact = 1.0 - (-y).exp() * (1.0 + y + y * y / 2.0);
        assert!((e.cdf(y) - exact).abs() < 1e-14);
        let y: f64 = 6.0;
        let exact = 1.0 - (-y).exp() * (1.0 + y + y * y / 2.0);
        assert!((e.cdf(y) - exact).abs() < 1e-14);
        let mass = integrate(&|x| e.pdf(x), &[0.0, 3.0, 60.0], 1e-12, 30).value;
        assert!((mass - 1.0).abs() < 1e-11);
    }

    #[test]
    fn truncated_support_holds_the_mass() {
        let e = Erlang { n: 2, mu: 0.3 };
        let (lo, hi) = e.support(1e-10);
        assert!((e.cdf(lo) - 1e-10).abs() < 1e-12);
        assert!((1.0 - e.cdf(hi) - 1e-10).abs() < 1e-12);
        let f = MaxExp { n: 3, mu: 2.0 };
        assert!((f.cdf(f.quantile(0.3)) - 0.3).abs() < 1e-14);
        assert!((1.0 - f.cdf(f.upper(1e-9)) - 1e-9).abs() < 1e-14);
    }

    #[test]
    fn log_table_interpolates_smooth_function() {
        let t = LogTable::build(|x: f64| 1.0 / (1.0 + x), 1e-3, 1e3, 100.0);
        assert!(t.error < 1e-8, "{}", t.error);
        assert!((t.eval(2.0) - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn point_mass_oracle_is_the_kernel() {
        let s = Scenario { hops: 2, ..Scenario::default() };
        let c = Constants { sigma2: 1e-9, ..Constants::default() };
        let opts = OracleOptions { fading: Fading::PointMass, ..OracleOptions::default() };
        for scheme in EhScheme::ALL {
            let r = quadrature_oracle(&s, &c, scheme, &opts).unwrap();
            assert_eq!(r.error_bound, 0.0);
            let mc = McConfig { n_realizations: 1, scheme, fading: Fading::PointMass, ..McConfig::default() };
            let est = super::super::estimate(&s, &c, &mc).unwrap();
            for hop in 0..2 {
                assert!((r.per_hop_bler[hop] - est.per_hop_bler[hop]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cap_slack_continuity() {
        let c = Constants { sigma2: 1e-6, ..Constants::default() };
        let base = Scenario { hops: 1, antennas: 1, primary_tx: 1, primary_rx: 1, ..Scenario::default() };
        for scheme in EhScheme::ALL {
            let open = Scenario { i_th_db: f64::INFINITY, ..base.clone() };
            let wide = Scenario { i_th_db: 200.0, ..base.clone() };
            let a = single_hop_oracle(&open, &c, scheme, &OracleOptions::default()).unwrap();
            let b = single_hop_oracle(&wide, &c, scheme, &OracleOptions::default()).unwrap();
            assert!((a.e2e_bler - b.e2e_bler).abs() < 1e-6);
        }
    }

    #[test]
    fn single_hop_rejects_chains() {
        let r = single_hop_oracle(&Scenario::default(), &Constants::default(), EhScheme::Pt, &OracleOptions::default());
        assert!(matches!(r, Err(McError::Oracle(_))));
    }

    #[test]
    fn bound_within_budget_and_resolution_stable() {
        let s = Scenario { hops: 1, antennas: 2, primary_tx: 2, primary_rx: 2, i_th_db: -100.0, ..Scenario::default() };
        let c = Constants { sigma2: 1e-7, ..Constants::default() };
        let coarse = single_hop_oracle(&s, &c, EhScheme::Sum, &OracleOptions { per_decade: 60.0, ..OracleOptions::default() }).unwrap();
        let fine = single_hop_oracle(&s, &c, EhScheme::Sum, &OracleOptions::default()).unwrap();
        assert!(fine.error_bound < 1e-4);
        assert!((coarse.e2e_bler - fine.e2e_bler).abs() <= coarse.error_bound + fine.error_bound);
    }

    #[test]
    fn exponential_sinr_closed_form() {
        // psi(s) against the exponential-law integral computed directly.
        let fbl = FblParams::from_parts(250.0, 256.0 / 250.0).unwrap();
        let s = 3.0;
        let direct = integrate(
            &|t: f64| inst_bler(t, &fbl) * (-t / s).exp() / s,
            &[0.0, 0.5, 1.0, 1.5, 2.0, 200.0],
            1e-12,
            40,
        );
        let via_u = integrate(&|u: f64| inst_bler(s * u, &fbl) * (-u).exp(), &[0.0, 1.0 / 3.0, 40.0], 1e-12, 40);
        assert!((direct.value - via_u.value).abs() < 1e-10);
    }
}
