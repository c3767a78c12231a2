//! Gaussian expectations of tanh observables by Gauss-Hermite quadrature.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussHermite;

use crate::error::{domain, Error, Result};

/// Quadrature order used by [`GaussianExpectation::default`].
pub const DEFAULT_NODES: usize = 160;

/// tanh and its first four derivatives, plus its Taylor coefficients at zero.
#[derive(Debug, Clone)]
pub struct ActivationModel {
    /// `σ_m = tanh^{(m)}(0)` for `m = 0..=20`.
    pub taylor: Vec<i128>,
}

impl Default for ActivationModel {
    fn default() -> Self {
        ActivationModel { taylor: tanh_taylor(20) }
    }
}

impl ActivationModel {
    pub fn sigma(&self, z: f64) -> f64 {
        z.tanh()
    }

    /// `d^order/dz^order tanh(z)` for `order <= 4`, in closed form.
    pub fn derivative(&self, order: usize, z: f64) -> f64 {
        let t = z.tanh();
        let s = 1.0 - t * t;
        match order {
            0 => t,
            1 => s,
            2 => -2.0 * t * s,
            3 => -2.0 * s * s + 4.0 * t * t * s,
            4 => 16.0 * t * s * s - 8.0 * t * t * t * s,
            _ => panic!("derivative order {order} not supported"),
        }
    }
}

/// Derivatives of tanh at zero, from the polynomial recursion
/// `P_{m+1}(t) = P_m'(t) (1 - t^2)` with `P_0(t) = t`.
fn tanh_taylor(max: usize) -> Vec<i128> {
    let mut poly: Vec<i128> = vec![0, 1];
    let mut out = Vec::with_capacity(max + 1);
    for _ in 0..=max {
        out.push(poly[0]);
        let deriv: Vec<i128> = (1..poly.len()).map(|k| k as i128 * poly[k]).collect();
        let mut next = vec![0i128; deriv.len() + 2];
        for (k, &c) in deriv.iter().enumerate() {
            next[k] += c;
            next[k + 2] -= c;
        }
        poly = next;
    }
    out
}

/// One factor of an integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Factor {
    Sigma,
    D1,
    D2,
    D3,
    D4,
    Z,
}

/// A monomial in `σ, σ', σ'', σ''', σ''''` and `z`, given by multiplicities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MomentSpec {
    /// Powers of `σ^{(0)}, ..., σ^{(4)}`.
    pub derivs: [u8; 5],
    pub z: u8,
}

/// Activation factors allowed in one monomial; six covers `⟨σ^6⟩` in the sextic vertex.
pub const MAX_ACTIVATION_FACTORS: u8 = 6;
pub const MAX_Z_FACTORS: u8 = 2;

impl MomentSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, factor: Factor, power: u8) -> Self {
        match factor {
            Factor::Sigma => self.derivs[0] += power,
            Factor::D1 => self.derivs[1] += power,
            Factor::D2 => self.derivs[2] += power,
            Factor::D3 => self.derivs[3] += power,
            Factor::D4 => self.derivs[4] += power,
            Factor::Z => self.z += power,
        }
        self
    }

    pub fn sigma(self, p: u8) -> Self {
        self.with(Factor::Sigma, p)
    }
    pub fn d1(self, p: u8) -> Self {
        self.with(Factor::D1, p)
    }
    pub fn d2(self, p: u8) -> Self {
        self.with(Factor::D2, p)
    }
    pub fn d3(self, p: u8) -> Self {
        self.with(Factor::D3, p)
    }
    pub fn d4(self, p: u8) -> Self {
        self.with(Factor::D4, p)
    }
    pub fn z(self, p: u8) -> Self {
        self.with(Factor::Z, p)
    }

    pub fn validate(&self) -> Result<()> {
        let acts: u8 = self.derivs.iter().sum();
        if acts > MAX_ACTIVATION_FACTORS || self.z > MAX_Z_FACTORS {
            return Err(domain(format!(
                "moment spec {self:?} exceeds {MAX_ACTIVATION_FACTORS} activation or {MAX_Z_FACTORS} z factors"
            )));
        }
        Ok(())
    }

    /// Whether the integrand is odd under `z -> -z`.
    pub fn is_odd(&self) -> bool {
        // σ and its even derivatives are odd functions.
        let odd = self.derivs[0] + self.derivs[2] + self.derivs[4] + self.z;
        odd % 2 == 1
    }

    pub fn eval(&self, z: f64) -> f64 {
        let t = z.tanh();
        let s = 1.0 - t * t;
        let vals = [
            t,
            s,
            -2.0 * t * s,
            -2.0 * s * s + 4.0 * t * t * s,
            16.0 * t * s * s - 8.0 * t * t * t * s,
        ];
        let mut acc = z.powi(self.z as i32);
        for (v, &p) in vals.iter().zip(&self.derivs) {
            if p > 0 {
                acc *= v.powi(p as i32);
            }
        }
        acc
    }
}

/// A 2x2 covariance between two preactivations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel2 {
    pub k11: f64,
    pub k22: f64,
    pub k12: f64,
}

impl Kernel2 {
    pub fn new(k11: f64, k22: f64, k12: f64) -> Result<Self> {
        if !(k11 > 0.0 && k22 > 0.0) {
            return Err(domain(format!("kernel diagonal must be positive: {k11}, {k22}")));
        }
        if k12.abs() > (k11 * k22).sqrt() * (1.0 + 1e-12) {
            return Err(domain(format!("kernel is indefinite: k12={k12}, k11={k11}, k22={k22}")));
        }
        Ok(Kernel2 { k11, k22, k12 })
    }

    pub fn transposed(&self) -> Self {
        Kernel2 { k11: self.k22, k22: self.k11, k12: self.k12 }
    }
}

/// `(χ_∥, χ_⊥, h, g)` at one kernel value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Susceptibilities {
    pub chi_par: f64,
    pub chi_perp: f64,
    pub h: f64,
    pub g: f64,
}

/// Gauss-Hermite rule rescaled to the standard normal: `E[f(u)] ≈ Σ w_i f(u_i)`.
#[derive(Debug, Clone)]
pub struct GaussianExpectation {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for GaussianExpectation {
    fn default() -> Self {
        Self::with_nodes(DEFAULT_NODES)
    }
}

impl GaussianExpectation {
    pub fn with_nodes(count: usize) -> Self {
        let count = NonZeroUsize::new(count.max(1)).expect("nonzero");
        let rule = GaussHermite::new(count);
        let norm = std::f64::consts::PI.sqrt();
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (x * std::f64::consts::SQRT_2, w / norm))
            .unzip();
        GaussianExpectation { nodes, weights }
    }

    /// Shared default-order instance.
    pub fn shared() -> &'static GaussianExpectation {
        static INSTANCE: OnceLock<GaussianExpectation> = OnceLock::new();
        INSTANCE.get_or_init(GaussianExpectation::default)
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// `E[f(z)]` for `z ~ N(0, k)` and an arbitrary integrand.
    pub fn expect_fn(&self, k: f64, f: impl Fn(f64) -> f64) -> f64 {
        let sd = k.sqrt();
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(sd * u)).sum()
    }

    /// `⟨spec⟩_K` for a single Gaussian variable of variance `k`.
    pub fn expect1(&self, spec: &MomentSpec, k: f64) -> Result<f64> {
        spec.validate()?;
        if !(k > 0.0) {
            return Err(domain(format!("expect1 needs K > 0, got {k}")));
        }
        if spec.is_odd() {
            return Ok(0.0);
        }
        let v = self.expect_fn(k, |z| spec.eval(z));
        finite(v, "expect1")
    }

    /// `E[f(z1) g(z2)]` for `(z1, z2)` with covariance `k`.
    pub fn expect2(&self, a: &MomentSpec, b: &MomentSpec, k: &Kernel2) -> Result<f64> {
        a.validate()?;
        b.validate()?;
        let k = Kernel2::new(k.k11, k.k22, k.k12)?;
        let det = k.k11 * k.k22 - k.k12 * k.k12;
        let s1 = k.k11.sqrt();
        if det.abs() < 1e-14 * k.k11 * k.k22 {
            // Rank one: z2 is a fixed multiple of z1.
            let ratio = k.k12.signum() * (k.k22 / k.k11).sqrt();
            let v = self.expect_fn(k.k11, |z| a.eval(z) * b.eval(ratio * z));
            return finite(v, "expect2");
        }
        let c = k.k12 / s1;
        let r = (det / k.k11).sqrt();
        let mut acc = 0.0;
        for (&u, &wu) in self.nodes.iter().zip(&self.weights) {
            let fa = a.eval(s1 * u);
            if fa == 0.0 {
                continue;
            }
            let inner: f64 = self
                .nodes
                .iter()
                .zip(&self.weights)
                .map(|(&v, &wv)| wv * b.eval(c * u + r * v))
                .sum();
            acc += wu * fa * inner;
        }
        finite(acc, "expect2")
    }

    pub fn susceptibilities(&self, k: f64, c_w: f64) -> Result<Susceptibilities> {
        if !(k > 0.0) {
            return Err(domain(format!("susceptibilities need K > 0, got {k}")));
        }
        let zss = self.expect1(&MomentSpec::new().z(1).sigma(1).d1(1), k)?;
        let s1s1 = self.expect1(&MomentSpec::new().d1(2), k)?;
        let zzs1s1 = self.expect1(&MomentSpec::new().z(2).d1(2), k)?;
        let g = self.expect1(&MomentSpec::new().sigma(2), k)?;
        Ok(Susceptibilities {
            chi_par: c_w / k * zss,
            chi_perp: c_w * s1s1,
            h: c_w / (4.0 * k * k) * (zzs1s1 - k * s1s1),
            g,
        })
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical { tensor: what.into(), detail: format!("non-finite value {v}") })
    }
}

/// [`GaussianExpectation::expect1`] on the shared default rule.
pub fn expect1(spec: &MomentSpec, k: f64) -> Result<f64> {
    GaussianExpectation::shared().expect1(spec, k)
}

/// [`GaussianExpectation::expect2`] on the shared default rule.
pub fn expect2(a: &MomentSpec, b: &MomentSpec, k: &Kernel2) -> Result<f64> {
    GaussianExpectation::shared().expect2(a, b, k)
}

/// [`GaussianExpectation::susceptibilities`] on the shared default rule.
pub fn susceptibilities(k: f64, c_w: f64) -> Result<Susceptibilities> {
    GaussianExpectation::shared().susceptibilities(k, c_w)
}
