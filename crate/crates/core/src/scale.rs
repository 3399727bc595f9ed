//! Scale function of the tagged-cell log-mass process.
//!
//! `eta` has drift `a` and jumps of size `-ln V` at rate `2B`, so its scale
//! function `W` (Laplace transform `1 / psi_eta`) is the sum of the series
//! `(1/a) sum_n a^{-n} I_n(x)` with `I_n = int_0^x Lbar^{*n}` and `Lbar` the
//! tail of the jump measure. Summing the series gives the renewal equation
//!
//! ```text
//! a W(x) = 1 + int_0^x Lbar(x - y) W(y) dy,
//! ```
//!
//! which we solve by product integration (piecewise-linear `W`, exact cell
//! integrals of `Lbar`) on a grid aligned with the atoms of the kernel, at
//! spacings `h` and `2h`, followed by Richardson extrapolation. One-sided
//! derivatives come from `a W'(x -/+) = 2B W(x) - int W(x - s) Pi(ds)` over
//! `s < x` (resp. `s <= x`). Between nodes `W` is cubic Hermite; beyond the
//! table it follows a fitted exponential tail.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numeric::{dot, gauss_legendre_01, integrate_with_breaks, tanh_sinh};
use crate::spectral::right_inverse_phi;

/// Grid controls for [`ScaleFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleConfig {
    /// Fine grid spacing; the table itself is stored at twice this.
    pub h: f64,
    /// End of the tabulated range.
    pub x_max: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self { h: 1e-3, x_max: 20.0 }
    }
}

/// Number of Talbot nodes.
pub const TALBOT_NODES: usize = 36;

/// Tabulated scale function.
#[derive(Debug, Clone)]
pub struct ScaleFunction {
    a: f64,
    total_rate: f64,
    h: f64,
    w: Vec<f64>,
    dl: Vec<f64>,
    dr: Vec<f64>,
    x_end: f64,
    w_end: f64,
    dw_end: f64,
    tail_rate: f64,
}

struct Solution {
    w: Vec<f64>,
    dl: Vec<f64>,
    dr: Vec<f64>,
}

/// Jump sizes `-ln v` of the kernel atoms with their rho-masses.
fn atom_jumps(p: &ModelParams) -> Vec<(f64, f64)> {
    p.kernel
        .shape
        .atoms()
        .into_iter()
        .filter(|a| a.1 > 0.0)
        .map(|(v, w)| (-v.ln(), p.kernel.total_mass() * w))
        .collect()
}

/// Tail of the continuous part of the jump measure at `s >= 0`.
fn cont_tail(p: &ModelParams, atoms_v: &[(f64, f64)], s: f64) -> f64 {
    let u = (-s).exp();
    let atomic: f64 = atoms_v.iter().filter(|a| a.0 < u).map(|a| a.1).sum();
    (p.kernel.total_mass() * (p.kernel.shape.cdf_left(u) - atomic)).max(0.0)
}

fn solve(p: &ModelParams, h: f64, n: usize) -> Solution {
    let a = p.a;
    let total = p.kernel.total_mass();
    let jumps = atom_jumps(p);
    let atoms_v = p.kernel.shape.atoms();
    let has_cont = p.kernel.shape.atom_mass() < 1.0 - 1e-15;
    let gl = gauss_legendre_01(8);

    // Cell integrals A_m = int Lbar, S_m = int Lbar theta over [mh, (m+1)h],
    // theta = (s - mh)/h; P_m, Q_m the same for the continuous jump measure.
    let mut a_m = vec![0.0; n];
    let mut s_m = vec![0.0; n];
    let mut p_m = vec![0.0; n];
    let mut q_m = vec![0.0; n];
    let mut tail_lo = if has_cont { cont_tail(p, &atoms_v, 0.0) } else { 0.0 };
    for m in 0..n {
        let lo = m as f64 * h;
        if has_cont {
            let (ac, sc) = if m == 0 {
                (
                    tanh_sinh(|s| cont_tail(p, &atoms_v, s), lo, lo + h, 1e-14),
                    tanh_sinh(|s| cont_tail(p, &atoms_v, s) * (s - lo) / h, lo, lo + h, 1e-14),
                )
            } else {
                let mut ac = 0.0;
                let mut sc = 0.0;
                for &(t, wt) in &gl {
                    let v = wt * h * cont_tail(p, &atoms_v, lo + t * h);
                    ac += v;
                    sc += v * t;
                }
                (ac, sc)
            };
            let tail_hi = cont_tail(p, &atoms_v, lo + h);
            a_m[m] += ac;
            s_m[m] += sc;
            p_m[m] = tail_lo - tail_hi;
            q_m[m] = ac / h - tail_hi;
            tail_lo = tail_hi;
        }
        for &(j, mass) in &jumps {
            let d = (j - lo).clamp(0.0, h);
            a_m[m] += mass * d;
            s_m[m] += mass * d * d / (2.0 * h);
        }
    }
    // Reversed copies turn every convolution sum into a forward dot product.
    let rev = |v: Vec<f64>| -> Vec<f64> { v.into_iter().rev().collect() };
    let c_r = rev(a_m.iter().zip(&s_m).map(|(x, y)| x - y).collect());
    let r_r = rev(p_m.iter().zip(&q_m).map(|(x, y)| x - y).collect());
    let c0 = c_r[n - 1];
    let s0 = s_m[0];
    let s_r = rev(s_m);
    let q_r = rev(q_m);

    let mut w = vec![0.0; n + 1];
    w[0] = 1.0 / a;
    let denom = a - c0;
    for i in 1..=n {
        // w[i-1] S_0 + sum_{m=1}^{i-1} (w[i-1-m] S_m + w[i-m] C_m)
        let acc = w[i - 1] * s0
            + dot(&w[..i - 1], &s_r[n - i..n - 1])
            + dot(&w[1..i], &c_r[n - i..n - 1]);
        w[i] = (1.0 + acc) / denom;
    }

    let interp = |x: f64| -> f64 {
        if x <= 0.0 {
            return w[0];
        }
        let pos = x / h;
        let j = pos.floor() as usize;
        if j >= n {
            return w[n];
        }
        let t = pos - j as f64;
        if t < 1e-9 {
            w[j]
        } else if t > 1.0 - 1e-9 {
            w[j + 1]
        } else {
            w[j] * (1.0 - t) + w[j + 1] * t
        }
    };

    let mut dl = vec![0.0; n + 1];
    let mut dr = vec![0.0; n + 1];
    dr[0] = total * w[0] / a;
    dl[0] = dr[0];
    for i in 1..=n {
        let x = i as f64 * h;
        let mut cont = 0.0;
        if has_cont {
            // sum_{m=0}^{i-1} w[i-1-m] Q_m + w[i-m] (P_m - Q_m)
            cont = dot(&w[..i], &q_r[n - i..]) + dot(&w[1..=i], &r_r[n - i..]);
        }
        let mut strict = 0.0;
        let mut at = 0.0;
        for &(j, mass) in &jumps {
            let gap = x - j;
            if gap.abs() <= 1e-9 * h {
                at += mass * w[0];
            } else if gap > 0.0 {
                strict += mass * interp(gap);
            }
        }
        dl[i] = (total * w[i] - cont - strict) / a;
        dr[i] = dl[i] - at / a;
    }
    Solution { w, dl, dr }
}

impl ScaleFunction {
    pub fn new(params: &ModelParams, config: ScaleConfig) -> Result<Self> {
        if !(config.h > 0.0 && config.x_max > 0.0) {
            return Err(Error::InvalidArgument("scale grid needs h > 0 and x_max > 0".into()));
        }
        // Align the coarse grid with the smallest atom jump so kinks fall on nodes.
        let mut h_coarse = 2.0 * config.h;
        if let Some(j_min) = atom_jumps(params).iter().map(|a| a.0).reduce(f64::min) {
            let k = (j_min / h_coarse).round().max(1.0);
            h_coarse = j_min / k;
        }
        let n = (config.x_max / h_coarse).ceil() as usize;
        let coarse = solve(params, h_coarse, n);
        let fine = solve(params, 0.5 * h_coarse, 2 * n);
        let rich = |f: &[f64], c: &[f64]| -> Vec<f64> {
            (0..=n).map(|i| (4.0 * f[2 * i] - c[i]) / 3.0).collect()
        };
        let w = rich(&fine.w, &coarse.w);
        let dl = rich(&fine.dl, &coarse.dl);
        let dr = rich(&fine.dr, &coarse.dr);
        let x_end = n as f64 * h_coarse;

        // Exponential tail fitted on the last unit of the table.
        // When W' has decayed into roundoff before x_end the fit moves back to
        // the last unit that is still resolved and the tail slope is zeroed.
        let back = ((1.0 / h_coarse).round() as usize).min(n / 2).max(1);
        let floor = 1e-12 * w[n].abs();
        let mut end = n;
        while end > back && dl[end] <= floor {
            end -= 1;
        }
        let (d1, d0) = (dl[end], dl[end - back]);
        let tail_rate = if d1 > 0.0 && d0 > 0.0 {
            (d1 / d0).ln() / (back as f64 * h_coarse)
        } else {
            0.0
        };
        let dw_end = if end < n && tail_rate < 0.0 { 0.0 } else { dl[n] };
        Ok(Self {
            a: params.a,
            total_rate: params.kernel.total_mass(),
            h: h_coarse,
            w_end: w[n],
            dw_end,
            w,
            dl,
            dr,
            x_end,
            tail_rate,
        })
    }

    pub fn with_defaults(params: &ModelParams) -> Result<Self> {
        Self::new(params, ScaleConfig::default())
    }

    /// Spacing of the stored table.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn x_end(&self) -> f64 {
        self.x_end
    }

    /// Exponential rate of the fitted tail: negative when `W` converges.
    pub fn tail_rate(&self) -> f64 {
        self.tail_rate
    }

    fn tail(&self, x: f64) -> (f64, f64) {
        let d = x - self.x_end;
        let s = self.tail_rate;
        let growth = if s.abs() < 1e-12 { d } else { (s * d).exp_m1() / s };
        (self.w_end + self.dw_end * growth, self.dw_end * (s * d).exp())
    }

    /// Cubic Hermite data on the cell containing `x` (left-closed).
    #[inline]
    fn hermite(&self, x: f64) -> (usize, f64) {
        let pos = x / self.h;
        let j = (pos.floor() as usize).min(self.w.len() - 2);
        (j, pos - j as f64)
    }

    /// `W(x)`; zero for negative `x`.
    pub fn w(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= self.x_end {
            return self.tail(x).0;
        }
        let (j, t) = self.hermite(x);
        let h = self.h;
        let (y0, y1) = (self.w[j], self.w[j + 1]);
        let (m0, m1) = (self.dr[j] * h, self.dl[j + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    /// Left derivative `W'(x-)`; at `x = 0` the right limit `2B / a^2`.
    pub fn w_prime(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return if x == 0.0 { self.total_rate / (self.a * self.a) } else { 0.0 };
        }
        if x > self.x_end {
            return self.tail(x).1;
        }
        let pos = x / self.h;
        let near = pos.round();
        if (pos - near).abs() < 1e-9 {
            return self.dl[near as usize];
        }
        let (j, t) = self.hermite(x);
        let h = self.h;
        let (y0, y1) = (self.w[j], self.w[j + 1]);
        let (m0, m1) = (self.dr[j] * h, self.dl[j + 1] * h);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h
    }

    /// `lim W(x)` as `x -> inf`, from the fitted tail; `None` if it diverges.
    pub fn limit(&self) -> Option<f64> {
        if self.tail_rate < -1e-6 {
            Some(self.w_end - self.dw_end / self.tail_rate)
        } else {
            None
        }
    }

    /// `int_0^inf e^{-beta x} W(x) dx` by quadrature over the table plus the
    /// tail in closed form.
    pub fn laplace_transform(&self, beta: f64) -> Result<f64> {
        if beta <= self.tail_rate.max(0.0) {
            return Err(Error::OutOfDomain { value: beta, lower: self.tail_rate.max(0.0) });
        }
        let breaks: Vec<f64> = (1..self.x_end.floor() as usize).map(|k| k as f64).collect();
        let body = integrate_with_breaks(
            |x| (-beta * x).exp() * self.w(x),
            0.0,
            self.x_end,
            &breaks,
            1e-13,
            0.0,
        );
        // tail: W = w_end + dw_end (e^{s d} - 1)/s with d = x - x_end
        let s = self.tail_rate;
        let e = (-beta * self.x_end).exp();
        let tail = if s.abs() < 1e-12 {
            e * (self.w_end / beta + self.dw_end / (beta * beta))
        } else {
            e * (self.w_end / beta + self.dw_end / s * (1.0 / (beta - s) - 1.0 / beta))
        };
        Ok(body + tail)
    }

    /// Smallest `N` such that the factorial tail bound of the series beyond
    /// order `N` is at most `tol` at `x`.
    pub fn truncation_order(&self, x: f64, tol: f64) -> usize {
        series_truncation_order(self.a, self.total_rate, x, tol)
    }
}

/// `sum_{n > N} (2B x / a)^n / (a n!)`.
pub fn series_tail_bound(a: f64, total_rate: f64, x: f64, order: usize) -> f64 {
    let z = total_rate * x / a;
    let mut term = 1.0;
    for n in 1..=order {
        term *= z / n as f64;
    }
    let mut sum = 0.0;
    let mut n = order + 1;
    loop {
        term *= z / n as f64;
        sum += term;
        if term < 1e-18 * sum.max(1e-300) && n as f64 > z {
            break;
        }
        n += 1;
    }
    sum / a
}

pub fn series_truncation_order(a: f64, total_rate: f64, x: f64, tol: f64) -> usize {
    let mut n = 0;
    while series_tail_bound(a, total_rate, x, n) > tol {
        n += 1;
    }
    n
}

/// `W(x)` with the default grid. The renewal equation sums the whole series,
/// so `tol` only bounds the discretization target and must be at least 1e-9.
pub fn scale_w(params: &ModelParams, x: f64, tol: f64) -> Result<f64> {
    if tol < 1e-9 {
        return Err(Error::InvalidArgument(format!("tolerance {tol} below grid accuracy")));
    }
    let cfg = ScaleConfig { x_max: ScaleConfig::default().x_max.max(x + 1.0), ..Default::default() };
    Ok(ScaleFunction::new(params, cfg)?.w(x))
}

pub fn scale_w_prime(params: &ModelParams, x: f64, tol: f64) -> Result<f64> {
    if tol < 1e-9 {
        return Err(Error::InvalidArgument(format!("tolerance {tol} below grid accuracy")));
    }
    let cfg = ScaleConfig { x_max: ScaleConfig::default().x_max.max(x + 1.0), ..Default::default() };
    Ok(ScaleFunction::new(params, cfg)?.w_prime(x))
}

/// `psi_eta` at a complex argument.
pub fn psi_eta_complex(params: &ModelParams, z: Complex64) -> Complex64 {
    let total = params.kernel.total_mass();
    params.a * z + total * (params.kernel.shape.moment_complex(z) - 1.0)
}

/// `W(x)` by fixed-Talbot inversion of `1 / psi_eta`.
///
/// The contour `s(theta) = sigma + r theta (cot theta + i)`, `theta` in
/// `(-pi, pi)`, with `r = 2M / (5x)` and `M = TALBOT_NODES`, is shifted by
/// `sigma = Phi(0)` so every pole of `1 / psi_eta` lies inside it.
pub fn laplace_inversion_oracle(params: &ModelParams, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::OutOfDomain { value: x, lower: 0.0 });
    }
    let sigma = right_inverse_phi(params, 0.0)?;
    let m = TALBOT_NODES;
    let r = 2.0 * m as f64 / (5.0 * x);
    let scale = params.a.max(params.kernel.total_mass());
    let f = |s: Complex64| -> Result<Complex64> {
        let psi = psi_eta_complex(params, s + sigma);
        if psi.norm() < 1e-10 * scale {
            return Err(Error::ContourFailure((s + sigma).re));
        }
        Ok(1.0 / psi)
    };
    let mut sum = 0.5 * (f(Complex64::new(r, 0.0))? * (r * x).exp()).re;
    for k in 1..m {
        let theta = k as f64 * std::f64::consts::PI / m as f64;
        let cot = 1.0 / theta.tan();
        let s = Complex64::new(r * theta * cot, r * theta);
        let dsig = theta + (theta * cot - 1.0) * cot;
        sum += ((s * x).exp() * f(s)? * Complex64::new(1.0, dsig)).re;
    }
    let out = (sigma * x).exp() * r / m as f64 * sum;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::ContourFailure(sigma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelShape;
    use crate::spectral::psi_eta;
    use approx::assert_relative_eq;

    fn config_a() -> ModelParams {
        ModelParams::new(1.0, 0.3, 0.1, 1.0, KernelShape::Uniform)
    }
    fn config_b() -> ModelParams {
        ModelParams::new(0.3, 0.5, 0.1, 1.0, KernelShape::Uniform)
    }

    // For the uniform kernel 1/psi_eta is rational:
    // W(x) = (1/a) [ -1/r0 + (r0 + 1)/r0 e^{r0 x} ] with r0 = 2B/a - 1.
    fn w_uniform(a: f64, b: f64, x: f64) -> f64 {
        let r0 = 2.0 * b / a - 1.0;
        (-1.0 / r0 + (r0 + 1.0) / r0 * (r0 * x).exp()) / a
    }
    fn w_prime_uniform(a: f64, b: f64, x: f64) -> f64 {
        let r0 = 2.0 * b / a - 1.0;
        (r0 + 1.0) * (r0 * x).exp() / a
    }

    #[test]
    fn value_at_zero_and_derivative_limit() {
        let s = ScaleFunction::with_defaults(&config_a()).unwrap();
        assert_relative_eq!(s.w(0.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(s.w_prime(0.0), 0.6, max_relative = 1e-12);
        assert_relative_eq!(s.w_prime(1e-7), 0.6, max_relative = 1e-6);
    }

    #[test]
    fn uniform_matches_rational_closed_form() {
        for (p, xs) in [(config_a(), [0.1, 1.0, 5.0, 19.0, 30.0]), (config_b(), [0.1, 1.0, 2.0, 5.0, 12.0])] {
            let s = ScaleFunction::with_defaults(&p).unwrap();
            for &x in &xs {
                let want = w_uniform(p.a, p.b, x);
                assert_relative_eq!(s.w(x), want, max_relative = 1e-9);
                assert_relative_eq!(s.w_prime(x), w_prime_uniform(p.a, p.b, x), max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn config_a_limit_and_tail() {
        let s = ScaleFunction::with_defaults(&config_a()).unwrap();
        assert_relative_eq!(s.limit().unwrap(), 2.5, max_relative = 1e-8);
        assert_relative_eq!(s.tail_rate(), -0.4, max_relative = 1e-6);
    }

    #[test]
    fn laplace_transform_identity() {
        let p = config_a();
        let s = ScaleFunction::with_defaults(&p).unwrap();
        for beta in [1.0, 2.0, 5.0] {
            let want = 1.0 / psi_eta(&p, beta).unwrap();
            assert_relative_eq!(s.laplace_transform(beta).unwrap(), want, max_relative = 1e-8);
        }
        assert_relative_eq!(s.laplace_transform(2.0).unwrap(), 0.625, max_relative = 1e-8);
    }

    #[test]
    fn talbot_agrees_with_closed_form() {
        for (p, x) in [(config_a(), 1.0), (config_b(), 2.0), (config_a(), 0.01), (config_b(), 5.0)] {
            let got = laplace_inversion_oracle(&p, x).unwrap();
            assert_relative_eq!(got, w_uniform(p.a, p.b, x), max_relative = 1e-8);
        }
    }

    #[test]
    fn tail_bound_is_monotone_in_order() {
        let b0 = series_tail_bound(1.0, 0.6, 2.0, 0);
        assert_relative_eq!(b0, (1.2f64).exp() - 1.0, max_relative = 1e-12);
        let n = series_truncation_order(1.0, 0.6, 2.0, 1e-10);
        assert!(series_tail_bound(1.0, 0.6, 2.0, n) <= 1e-10);
        assert!(series_tail_bound(1.0, 0.6, 2.0, n - 1) > 1e-10);
    }
}
