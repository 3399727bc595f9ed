//! Quadrature, root finding and a few special functions shared by the
//! analytic modules.

use num_complex::Complex64;

/// Order-independent (for a fixed slice order) pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const GK15_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK15_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK15_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK15_WK[7];
    let mut g = fc * GK15_WG[3];
    for i in 0..7 {
        let dx = h * GK15_X[i];
        let s = f(c - dx) + f(c + dx);
        k += GK15_WK[i] * s;
        if i % 2 == 1 {
            g += GK15_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate falls below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(&mut f, lo, hi);
    let mut segs: Vec<(f64, f64, f64, f64)> = vec![(lo, hi, v, e)];
    for _ in 0..2000 {
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .unwrap();
        let (sa, sb, _, _) = segs.swap_remove(idx);
        let m = 0.5 * (sa + sb);
        if m <= sa || m >= sb {
            segs.push((sa, sb, 0.0, 0.0));
            break;
        }
        let (v1, e1) = gk15(&mut f, sa, m);
        let (v2, e2) = gk15(&mut f, m, sb);
        segs.push((sa, m, v1, e1));
        segs.push((m, sb, v2, e2));
    }
    segs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let vals: Vec<f64> = segs.iter().map(|s| s.2).collect();
    sign * pairwise_sum(&vals)
}

/// Integral over `[a, b]` split at the given interior breakpoints.
pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut edges = vec![a];
    edges.extend(pts);
    edges.push(b);
    edges
        .windows(2)
        .map(|w| integrate(&mut f, w[0], w[1], rel_tol, abs_tol))
        .sum()
}

/// Tanh-sinh (double exponential) quadrature on `[a, b]`; robust to
/// integrable endpoint singularities. `f` is never evaluated at the endpoints.
///
/// Nodes near `b` are limited by the spacing of doubles below `b`, so strong
/// singularities should be mapped to the lower end.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h2 = 0.5 * (b - a);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut step = 1.0;
    let mut sum = half_pi * f(c);
    let mut prev = f64::NAN;
    // Level 0 nodes at integer multiples of step up to t_max.
    let t_max = 4.0;
    let mut level = 0;
    loop {
        let mut k = 1usize;
        loop {
            let t = if level == 0 { k as f64 * step } else { (2 * k - 1) as f64 * step };
            if t > t_max {
                break;
            }
            let s = half_pi * t.sinh();
            let ch = s.cosh();
            // distance from the endpoints, computed without cancellation
            let delta = 1.0 / (s.exp() * ch);
            let w = half_pi * t.cosh() / (ch * ch);
            let x_hi = b - h2 * delta;
            let x_lo = a + h2 * delta;
            if x_hi > a && x_hi < b {
                sum += w * f(x_hi);
            }
            if x_lo > a && x_lo < b {
                sum += w * f(x_lo);
            }
            k += 1;
        }
        let est = sum * step * h2;
        if level >= 3 && (est - prev).abs() <= rel_tol * est.abs().max(1e-300) {
            return est;
        }
        if level >= 9 {
            return est;
        }
        prev = est;
        level += 1;
        step *= 0.5;
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_01(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    let nf = n as f64;
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = x;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Bisection on a sign-changing bracket.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid <= lo || mid >= hi {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Safeguarded Newton iteration for an increasing function on `[lo, hi]`
/// with `f(lo) <= 0 <= f(hi)`. Falls back to bisection whenever a Newton
/// step leaves the bracket. Stops once `|f(x)| <= ftol`.
pub fn newton_bracketed<F, D>(mut f: F, mut df: D, mut lo: f64, mut hi: f64, ftol: f64) -> f64
where
    F: FnMut(f64) -> f64,
    D: FnMut(f64) -> f64,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..500 {
        let fx = f(x);
        if fx.abs() <= ftol {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = x - fx / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if next == x || hi - lo <= f64::EPSILON * x.abs().max(1e-300) {
            return x;
        }
        x = next;
    }
    x
}

/// Complex log-gamma (Lanczos, g = 7) with reflection for `Re z < 1/2`.
/// A logarithm of `sin(pi z)` that does not overflow for large `|Im z|`
/// (branch unspecified up to multiples of `2 pi i`).
fn ln_sin_pi(z: Complex64) -> Complex64 {
    let pi = std::f64::consts::PI;
    let i = Complex64::new(0.0, 1.0);
    let ln_2i = Complex64::new(2f64.ln(), 0.5 * pi);
    if z.im >= 0.0 {
        // sin(pi z) = e^{-i pi z} (e^{2 i pi z} - 1) / (2i)
        -i * pi * z + ((2.0 * i * pi * z).exp() - 1.0).ln() - ln_2i
    } else {
        // sin(pi z) = e^{i pi z} (1 - e^{-2 i pi z}) / (2i)
        i * pi * z + (1.0 - (-2.0 * i * pi * z).exp()).ln() - ln_2i
    }
}

pub fn ln_gamma_complex(z: Complex64) -> Complex64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let pi = std::f64::consts::PI;
    if z.re < 0.5 {
        // Gamma(z) Gamma(1-z) = pi / sin(pi z)
        return Complex64::new(pi.ln(), 0.0)
            - ln_sin_pi(z)
            - ln_gamma_complex(Complex64::new(1.0, 0.0) - z);
    }
    let z = z - 1.0;
    let mut x = Complex64::new(COEF[0], 0.0);
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    Complex64::new(0.5 * (2.0 * pi).ln(), 0.0) + (z + 0.5) * t.ln() - t + x.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gk_integrates_smooth_and_kinked() {
        let v = integrate(|x| x.exp(), 0.0, 1.0, 1e-13, 0.0);
        assert_relative_eq!(v, std::f64::consts::E - 1.0, max_relative = 1e-13);
        let v = integrate_with_breaks(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], 1e-13, 0.0);
        assert_relative_eq!(v, 0.5 * (0.09 + 0.49), max_relative = 1e-13);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularities() {
        let v = tanh_sinh(|x: f64| -x.ln(), 0.0, 1.0, 1e-13);
        assert_relative_eq!(v, 1.0, max_relative = 1e-12);
        let v = tanh_sinh(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-13);
        assert_relative_eq!(v, 2.0, max_relative = 1e-11);
        let v = tanh_sinh(|x: f64| x.powf(-0.7), 0.0, 1.0, 1e-12);
        assert_relative_eq!(v, 1.0 / 0.3, max_relative = 1e-9);
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let nodes = gauss_legendre_01(12);
        let s: f64 = nodes.iter().map(|&(x, w)| w * x.powi(20)).sum();
        assert_relative_eq!(s, 1.0 / 21.0, max_relative = 1e-13);
        let total: f64 = nodes.iter().map(|p| p.1).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn complex_lgamma_matches_real() {
        for &x in &[0.3, 1.0, 2.5, 7.2, -0.4] {
            let c = ln_gamma_complex(Complex64::new(x, 0.0));
            let r = statrs::function::gamma::gamma(x);
            assert_relative_eq!(c.exp().re, r, max_relative = 1e-12);
        }
        // |Gamma(iy)|^2 = pi / (y sinh(pi y))
        let y: f64 = 1.7;
        let g = ln_gamma_complex(Complex64::new(0.0, y)).exp();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(g.norm_sqr(), pi / (y * (pi * y).sinh()), max_relative = 1e-12);
    }

    #[test]
    fn roots() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15);
        assert_relative_eq!(r, 2f64.sqrt(), max_relative = 1e-14);
        let r = newton_bracketed(|x| x.powi(3) - 5.0, |x| 3.0 * x * x, 0.0, 5.0, 1e-14);
        assert_relative_eq!(r, 5f64.cbrt(), max_relative = 1e-14);
    }
}
