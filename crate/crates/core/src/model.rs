//! Model parameters and the binary fragmentation kernel rho.
//!
//! rho is a measure on (0, 1) of total mass 2B describing the relative mass
//! `v` of one of the two daughters at a division. We store it as a rate `B`
//! together with a symmetric probability law of `V` (the normalized kernel
//! rho / 2B); every moment of rho is `2B` times the corresponding moment of
//! the law.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result, Violation};
use crate::numeric::{bisect, integrate, ln_gamma_complex, tanh_sinh};
use crate::rng::StreamRng;

/// Relative tolerance for the mass identities of a kernel.
pub const KERNEL_IDENTITY_TOL: f64 = 1e-10;
/// Tolerance used when matching mirror atoms.
const ATOM_MATCH_TOL: f64 = 1e-12;
/// Relative tolerance for quadrature-backed moments.
pub const MOMENT_QUAD_TOL: f64 = 1e-12;

/// Probability law of the fraction `V` handed to one daughter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum KernelShape {
    /// `V ~ U(0, 1)`.
    Uniform,
    /// Symmetric `Beta(alpha, alpha)`.
    Beta { alpha: f64 },
    /// Finitely many atoms `(position, probability)`.
    Atoms { atoms: Vec<(f64, f64)> },
    /// Finite mixture `(weight, component)`.
    Mixture { components: Vec<(f64, KernelShape)> },
}

impl KernelShape {
    /// The symmetric pair `{v0, 1 - v0}` with equal weight.
    pub fn atomic(v0: f64) -> Self {
        if (v0 - 0.5).abs() < ATOM_MATCH_TOL {
            KernelShape::Atoms { atoms: vec![(0.5, 1.0)] }
        } else {
            KernelShape::Atoms { atoms: vec![(v0, 0.5), (1.0 - v0, 0.5)] }
        }
    }

    pub fn beta(alpha: f64) -> Self {
        KernelShape::Beta { alpha }
    }

    fn ln_beta_norm(alpha: f64) -> f64 {
        ln_beta(alpha, alpha)
    }

    /// Moments `E[V^q]` are finite iff `q` is strictly above this value.
    pub fn divergence_threshold(&self) -> f64 {
        match self {
            KernelShape::Uniform => -1.0,
            KernelShape::Beta { alpha } => -alpha,
            KernelShape::Atoms { .. } => f64::NEG_INFINITY,
            KernelShape::Mixture { components } => components
                .iter()
                .filter(|(w, _)| *w > 0.0)
                .map(|(_, s)| s.divergence_threshold())
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn check_order(&self, q: f64) -> Result<()> {
        let threshold = self.divergence_threshold();
        if q <= threshold {
            Err(Error::DivergentMoment { order: q, threshold })
        } else {
            Ok(())
        }
    }

    /// `E[V^q (ln V)^j]` for `j` in 0..=2, in closed form.
    pub fn log_moment(&self, q: f64, j: u32) -> Result<f64> {
        assert!(j <= 2, "only derivatives up to order two are provided");
        self.check_order(q)?;
        Ok(match self {
            KernelShape::Uniform => {
                let fact = [1.0, 1.0, 2.0][j as usize];
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * fact / (q + 1.0).powi(j as i32 + 1)
            }
            KernelShape::Beta { alpha } => {
                let a = *alpha;
                let m = (ln_beta(a + q, a) - Self::ln_beta_norm(a)).exp();
                let d1 = digamma(a + q) - digamma(2.0 * a + q);
                match j {
                    0 => m,
                    1 => m * d1,
                    _ => m * (d1 * d1 + trigamma(a + q) - trigamma(2.0 * a + q)),
                }
            }
            KernelShape::Atoms { atoms } => atoms
                .iter()
                .map(|&(v, p)| p * v.powf(q) * v.ln().powi(j as i32))
                .sum(),
            KernelShape::Mixture { components } => {
                let mut s = 0.0;
                for (w, c) in components {
                    if *w > 0.0 {
                        s += w * c.log_moment(q, j)?;
                    }
                }
                s
            }
        })
    }

    /// `E[V^q]`.
    pub fn moment(&self, q: f64) -> Result<f64> {
        self.log_moment(q, 0)
    }

    /// `E[V^z]` for complex `z` right of the divergence threshold.
    pub fn moment_complex(&self, z: Complex64) -> Complex64 {
        match self {
            KernelShape::Uniform => 1.0 / (z + 1.0),
            KernelShape::Beta { alpha } => {
                let a = *alpha;
                let lg = ln_gamma_complex(z + a) - ln_gamma_complex(z + 2.0 * a);
                (lg + ln_gamma(2.0 * a) - ln_gamma(a)).exp()
            }
            KernelShape::Atoms { atoms } => atoms
                .iter()
                .map(|&(v, p)| p * (z * v.ln()).exp())
                .sum(),
            KernelShape::Mixture { components } => {
                components.iter().map(|(w, c)| *w * c.moment_complex(z)).sum()
            }
        }
    }

    /// `E[-ln V]`.
    pub fn neg_log_mean(&self) -> f64 {
        match self {
            KernelShape::Uniform => 1.0,
            KernelShape::Beta { alpha } => digamma(2.0 * alpha) - digamma(*alpha),
            KernelShape::Atoms { atoms } => atoms.iter().map(|&(v, p)| -p * v.ln()).sum(),
            KernelShape::Mixture { components } => {
                components.iter().map(|(w, c)| w * c.neg_log_mean()).sum()
            }
        }
    }

    /// Density of the absolutely continuous part at `v`.
    pub fn density(&self, v: f64) -> f64 {
        if !(v > 0.0 && v < 1.0) {
            return 0.0;
        }
        match self {
            KernelShape::Uniform => 1.0,
            KernelShape::Beta { alpha } => {
                let a = *alpha;
                ((a - 1.0) * (v.ln() + (1.0 - v).ln()) - Self::ln_beta_norm(a)).exp()
            }
            KernelShape::Atoms { .. } => 0.0,
            KernelShape::Mixture { components } => {
                components.iter().map(|(w, c)| w * c.density(v)).sum()
            }
        }
    }

    /// `P(V <= v)`.
    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        if v >= 1.0 {
            return 1.0;
        }
        match self {
            KernelShape::Uniform => v,
            KernelShape::Beta { alpha } => beta_reg(*alpha, *alpha, v),
            KernelShape::Atoms { atoms } => {
                atoms.iter().filter(|a| a.0 <= v).map(|a| a.1).sum()
            }
            KernelShape::Mixture { components } => {
                components.iter().map(|(w, c)| w * c.cdf(v)).sum()
            }
        }
    }

    /// `P(V < v)`.
    pub fn cdf_left(&self, v: f64) -> f64 {
        let atoms_at: f64 = self.atoms().iter().filter(|a| a.0 == v).map(|a| a.1).sum();
        self.cdf(v) - atoms_at
    }

    /// `E[g(V); lo <= V <= hi]`, atoms included at both ends.
    ///
    /// Continuous parts use tanh-sinh quadrature, so `g` may have integrable
    /// singularities at the interval ends.
    pub fn expect_between<F: FnMut(f64) -> f64>(&self, g: &mut F, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        let hi = hi.min(1.0);
        if lo >= hi {
            return self
                .atoms()
                .iter()
                .filter(|a| a.0 >= lo && a.0 <= hi)
                .map(|a| a.1 * g(a.0))
                .sum();
        }
        match self {
            KernelShape::Uniform => tanh_sinh(|v| g(v), lo, hi, MOMENT_QUAD_TOL),
            KernelShape::Beta { .. } => {
                // Fold the upper half onto (0, 1/2] through the symmetry of the
                // density so that endpoint singularities always sit near 0,
                // where tanh-sinh nodes are representable.
                let mut s = 0.0;
                if lo < 0.5 {
                    s += tanh_sinh(|v| g(v) * self.density(v), lo, hi.min(0.5), MOMENT_QUAD_TOL);
                }
                if hi > 0.5 {
                    s += tanh_sinh(
                        |w| g(1.0 - w) * self.density(w),
                        1.0 - hi,
                        1.0 - lo.max(0.5),
                        MOMENT_QUAD_TOL,
                    );
                }
                s
            }
            KernelShape::Atoms { atoms } => atoms
                .iter()
                .filter(|a| a.0 >= lo && a.0 <= hi)
                .map(|a| a.1 * g(a.0))
                .sum(),
            KernelShape::Mixture { components } => {
                let mut s = 0.0;
                for (w, c) in components {
                    s += w * c.expect_between(g, lo, hi);
                }
                s
            }
        }
    }

    /// `E[g(V)]`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.expect_between(&mut g, 0.0, 1.0)
    }

    /// Atoms of the law, flattened through mixtures.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            KernelShape::Atoms { atoms } => atoms.clone(),
            KernelShape::Mixture { components } => components
                .iter()
                .flat_map(|(w, c)| c.atoms().into_iter().map(move |(v, p)| (v, w * p)))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Probability mass carried by atoms.
    pub fn atom_mass(&self) -> f64 {
        self.atoms().iter().map(|a| a.1).sum()
    }

    /// A discrete law on (0, 1) approximating this one with `n` nodes per
    /// continuous component; used by the non-linear semigroup solver.
    pub fn nodes(&self, n: usize) -> Vec<(f64, f64)> {
        match self {
            KernelShape::Uniform => crate::numeric::gauss_legendre_01(n),
            KernelShape::Beta { alpha } => {
                // Gauss-Legendre in the probability scale: v = F^{-1}(u)
                let a = *alpha;
                crate::numeric::gauss_legendre_01(n)
                    .into_iter()
                    .map(|(u, w)| (beta_inverse_cdf(a, u), w))
                    .collect()
            }
            KernelShape::Atoms { atoms } => atoms.clone(),
            KernelShape::Mixture { components } => components
                .iter()
                .flat_map(|(w, c)| c.nodes(n).into_iter().map(move |(v, p)| (v, w * p)))
                .collect(),
        }
    }

    /// Draw `V` using a fixed number of uniforms per family (one for simple
    /// families, one more to pick a mixture component).
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            KernelShape::Uniform => rng.open01(),
            KernelShape::Beta { alpha } => beta_inverse_cdf(*alpha, rng.open01()),
            KernelShape::Atoms { atoms } => {
                let u = rng.open01();
                let mut acc = 0.0;
                for &(v, p) in atoms {
                    acc += p;
                    if u < acc {
                        return v;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.5)
            }
            KernelShape::Mixture { components } => {
                let u = rng.open01();
                let mut acc = 0.0;
                for (w, c) in components {
                    acc += w;
                    if u < acc {
                        return c.sample(rng);
                    }
                }
                components.last().expect("empty mixture").1.sample(rng)
            }
        }
    }

    fn collect_violations(&self, out: &mut Vec<Violation>) {
        match self {
            KernelShape::Uniform => {}
            KernelShape::Beta { alpha } => {
                if !(*alpha > 0.0) || !alpha.is_finite() {
                    out.push(Violation::BadShapeParameter { name: "alpha", value: *alpha });
                }
            }
            KernelShape::Atoms { atoms } => {
                for &(v, p) in atoms {
                    if !(v > 0.0 && v < 1.0) {
                        out.push(Violation::SupportOutsideUnitInterval(v));
                    }
                    if !(p >= 0.0) {
                        out.push(Violation::BadShapeParameter { name: "atom weight", value: p });
                    }
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > KERNEL_IDENTITY_TOL {
                    out.push(Violation::NotNormalized { total });
                }
                if !atoms_symmetric(atoms) {
                    out.push(Violation::AsymmetricKernel);
                }
            }
            KernelShape::Mixture { components } => {
                let total: f64 = components.iter().map(|c| c.0).sum();
                if (total - 1.0).abs() > KERNEL_IDENTITY_TOL || components.is_empty() {
                    out.push(Violation::NotNormalized { total });
                }
                for (w, c) in components {
                    if !(*w >= 0.0) {
                        out.push(Violation::BadShapeParameter { name: "mixture weight", value: *w });
                    }
                    c.collect_violations(out);
                }
            }
        }
    }

    /// Mean of the law, exact for every family.
    pub fn mean(&self) -> f64 {
        match self {
            KernelShape::Uniform | KernelShape::Beta { .. } => 0.5,
            KernelShape::Atoms { atoms } => atoms.iter().map(|a| a.0 * a.1).sum(),
            KernelShape::Mixture { components } => components.iter().map(|(w, c)| w * c.mean()).sum(),
        }
    }
}

fn atoms_symmetric(atoms: &[(f64, f64)]) -> bool {
    // Compare the total weight at v and at 1 - v for every support point.
    atoms.iter().all(|&(v, _)| {
        let here: f64 = atoms
            .iter()
            .filter(|a| (a.0 - v).abs() <= ATOM_MATCH_TOL)
            .map(|a| a.1)
            .sum();
        let mirror: f64 = atoms
            .iter()
            .filter(|a| (a.0 - (1.0 - v)).abs() <= ATOM_MATCH_TOL)
            .map(|a| a.1)
            .sum();
        (here - mirror).abs() <= ATOM_MATCH_TOL * here.max(1.0)
    })
}

/// Inverse CDF of the symmetric `Beta(alpha, alpha)` law.
pub fn beta_inverse_cdf(alpha: f64, u: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-15 {
        return u;
    }
    // Exploit symmetry so the search always runs in the lower half.
    if u > 0.5 {
        return 1.0 - beta_inverse_cdf(alpha, 1.0 - u);
    }
    if u == 0.5 {
        return 0.5;
    }
    let ln_norm = ln_beta(alpha, alpha);
    let mut lo = 0.0;
    let mut hi = 0.5;
    // Newton from the small-v asymptote v ~ (u alpha B)^(1/alpha), guarded
    // by a bisection bracket.
    let mut x = ((u * alpha).ln() + ln_norm).exp().powf(1.0 / alpha).clamp(1e-300, 0.5);
    for _ in 0..100 {
        let f = beta_reg(alpha, alpha, x) - u;
        if f.abs() <= 1e-15 * u.max(1e-300) {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = ((alpha - 1.0) * (x.ln() + (1.0 - x).ln()) - ln_norm).exp();
        let mut next = x - f / dens;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-16 * x {
            return next;
        }
        x = next;
    }
    bisect(|v| beta_reg(alpha, alpha, v) - u, lo, hi, 1e-17)
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0))))
}

/// The fragmentation kernel rho = 2B * law(V).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentationKernel {
    pub shape: KernelShape,
    /// Fragmentation rate `B`; rho has total mass `2B`.
    pub rate: f64,
}

impl FragmentationKernel {
    pub fn new(shape: KernelShape, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn total_mass(&self) -> f64 {
        2.0 * self.rate
    }

    /// `int v^q rho(dv)`.
    pub fn mellin(&self, q: f64) -> Result<f64> {
        Ok(self.total_mass() * self.shape.moment(q)?)
    }

    /// `int v^q rho(dv)` by quadrature, independent of the closed forms.
    pub fn mellin_quadrature(&self, q: f64) -> Result<f64> {
        self.shape.check_order(q)?;
        Ok(self.total_mass() * self.shape.expect(|v| v.powf(q)))
    }

    /// `int (-ln v) rho(dv)`.
    pub fn log_moment(&self) -> f64 {
        self.total_mass() * self.shape.neg_log_mean()
    }

    /// `int v^{-r} rho(dv)`, `+inf` when divergent.
    pub fn neg_moment(&self, r: f64) -> f64 {
        self.mellin(-r).unwrap_or(f64::INFINITY)
    }

    /// Supremum of the `r > 0` with a finite negative moment.
    pub fn neg_moment_threshold(&self) -> f64 {
        -self.shape.divergence_threshold()
    }

    /// `int h(u) Pi(du)` over the locally-largest measure, written in the
    /// multiplicative scale: `Pi` is rho folded onto [1/2, 1) with half of
    /// any atom at exactly 1/2, so it has mass `B`.
    pub fn largest_expect<F: FnMut(f64) -> f64>(&self, mut h: F) -> f64 {
        // max(V, 1-V) has twice the law of V on (1/2, 1) plus the atom at 1/2.
        let half: f64 = self.shape.atoms().iter().filter(|a| a.0 == 0.5).map(|a| a.1).sum();
        let upper = self.shape.expect_between(&mut h, 0.5, 1.0);
        let at_half = if half > 0.0 { half * h(0.5) } else { 0.0 };
        self.rate * (2.0 * upper - at_half)
    }

    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        self.shape.sample(rng)
    }
}

/// Full parameter set of the growth-fragmentation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Growth rate.
    pub a: f64,
    /// Fragmentation rate.
    #[serde(rename = "B")]
    pub b: f64,
    /// Killing rate.
    pub k: f64,
    /// Mass cap.
    pub c: f64,
    pub kernel: FragmentationKernel,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, k: f64, c: f64, shape: KernelShape) -> Self {
        Self { a, b, k, c, kernel: FragmentationKernel::new(shape, b) }
    }

    /// Every violated invariant, in a fixed order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, value) in [("a", self.a), ("B", self.b), ("c", self.c)] {
            if !(value > 0.0) || !value.is_finite() {
                out.push(Violation::NonPositiveRate { name, value });
            }
        }
        if !(self.k >= 0.0) || !self.k.is_finite() {
            out.push(Violation::NegativeKilling(self.k));
        }
        self.kernel.shape.collect_violations(&mut out);
        // int v rho(dv) = 2 * rate * E[V] must equal B.
        let first = self.kernel.total_mass() * self.kernel.shape.mean();
        if (first - self.b).abs() > KERNEL_IDENTITY_TOL * self.b.abs().max(f64::MIN_POSITIVE)
            || (self.kernel.rate - self.b).abs() > KERNEL_IDENTITY_TOL * self.b.abs()
        {
            out.push(Violation::MassMismatch { expected: self.b, found: first });
        }
        out
    }

    pub fn validate(self) -> Result<Self> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(v))
        }
    }

    pub fn log_cap(&self) -> f64 {
        self.c.ln()
    }

    /// Malthusian rate `B - k`.
    pub fn lambda_star(&self) -> f64 {
        self.b - self.k
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ModelConfig = serde_json::from_str(s)?;
        cfg.into_params()
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config(&self) -> ModelConfig {
        ModelConfig {
            a: self.a,
            b: self.b,
            k: self.k,
            c: self.c,
            kernel: KernelConfig::from_shape(&self.kernel.shape, self.kernel.total_mass()),
        }
    }
}

/// On-disk model description.
///
/// ```json
/// {"a": 1.0, "B": 0.3, "k": 0.1, "c": 1.0,
///  "kernel": {"family": "uniform", "params": {}}}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub k: f64,
    pub c: f64,
    pub kernel: KernelConfig,
}

/// Kernel section of a model config. `atoms` masses are absolute (in units
/// of rho, so they must sum to 2B); mixture weights are probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum KernelConfig {
    Uniform {},
    Atomic { v0: f64 },
    Beta { alpha: f64 },
    Atoms { atoms: Vec<(f64, f64)> },
    Mixture { components: Vec<(f64, KernelConfig)> },
}

impl KernelConfig {
    fn to_shape(&self, total_mass: f64) -> KernelShape {
        match self {
            KernelConfig::Uniform {} => KernelShape::Uniform,
            KernelConfig::Atomic { v0 } => KernelShape::atomic(*v0),
            KernelConfig::Beta { alpha } => KernelShape::Beta { alpha: *alpha },
            KernelConfig::Atoms { atoms } => KernelShape::Atoms {
                atoms: atoms.iter().map(|&(v, m)| (v, m / total_mass)).collect(),
            },
            KernelConfig::Mixture { components } => KernelShape::Mixture {
                components: components.iter().map(|(w, c)| (*w, c.to_shape(total_mass))).collect(),
            },
        }
    }

    fn from_shape(shape: &KernelShape, total_mass: f64) -> Self {
        match shape {
            KernelShape::Uniform => KernelConfig::Uniform {},
            KernelShape::Beta { alpha } => KernelConfig::Beta { alpha: *alpha },
            KernelShape::Atoms { atoms } => KernelConfig::Atoms {
                atoms: atoms.iter().map(|&(v, p)| (v, p * total_mass)).collect(),
            },
            KernelShape::Mixture { components } => KernelConfig::Mixture {
                components: components
                    .iter()
                    .map(|(w, c)| (*w, KernelConfig::from_shape(c, total_mass)))
                    .collect(),
            },
        }
    }
}

impl ModelConfig {
    pub fn into_params(self) -> Result<ModelParams> {
        let shape = self.kernel.to_shape(2.0 * self.b);
        ModelParams::new(self.a, self.b, self.k, self.c, shape).validate()
    }
}

/// `int_lo^hi g` against the law of `V` by adaptive Gauss-Kronrod; only
/// used to cross-check closed forms in tests.
pub fn law_integral_gk<F: Fn(f64) -> f64>(shape: &KernelShape, g: F, lo: f64, hi: f64) -> f64 {
    integrate(|v| g(v) * shape.density(v), lo, hi, 1e-13, 0.0)
        + shape
            .atoms()
            .iter()
            .filter(|a| a.0 >= lo && a.0 <= hi)
            .map(|a| a.1 * g(a.0))
            .sum::<f64>()
}
