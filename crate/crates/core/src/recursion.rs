//! Infinite-width kernels and their finite-width corrections, layer by layer.
//!
//! State at layer `ℓ` is advanced to `ℓ+1` from a snapshot; learning-rate
//! schedules are evaluated at `ℓ+1`. Where an update needs a quantity already at
//! `ℓ+1` (only `Q`, which uses `F'`), that quantity is computed first. The order
//! is K, Θ, V4, F, D, B, A, P, Q, S, U, R, T, V6.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::gauss_expect::{GaussianExpectation, Kernel2, MomentSpec as M, Susceptibilities};

/// A per-layer learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant(f64),
    /// `scale / ℓ`.
    Inverse(f64),
}

impl Schedule {
    pub fn at(&self, ell: usize) -> f64 {
        match *self {
            Schedule::Constant(c) => c,
            Schedule::Inverse(s) => s / ell as f64,
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(c) => write!(f, "{c}"),
            Schedule::Inverse(s) if *s == 1.0 => write!(f, "1/ell"),
            Schedule::Inverse(s) => write!(f, "{s}/ell"),
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(num) = s.strip_suffix("/ell") {
            let scale: f64 = num
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad schedule scale in {s:?}")))?;
            return Ok(Schedule::Inverse(scale));
        }
        s.parse::<f64>()
            .map(Schedule::Constant)
            .map_err(|_| Error::Config(format!("schedule must be a number or \"<c>/ell\", got {s:?}")))
    }
}

impl Serialize for Schedule {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Schedule::Constant(c) => ser.serialize_f64(*c),
            other => ser.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Schedule {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(c) => Ok(Schedule::Constant(c)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Which four-point update to use for `V4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum V4Rule {
    /// Haar-orthogonal weights: `C²(⟨σ⁴⟩ − 3g²) + χ_∥² V4`.
    #[default]
    Orthogonal,
    /// Gaussian weights: the two orthogonal subtraction terms dropped and `V4 = 0` at layer 1.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub width: usize,
    pub depth: usize,
    pub c_w: f64,
    pub lambda_b: Schedule,
    pub lambda_w: Schedule,
    pub v4_rule: V4Rule,
}

impl NetworkConfig {
    pub fn new(width: usize, depth: usize, c_w: f64) -> Self {
        NetworkConfig {
            width,
            depth,
            c_w,
            lambda_b: Schedule::Inverse(1.0),
            lambda_w: Schedule::Constant(1.0),
            v4_rule: V4Rule::Orthogonal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 3 {
            return Err(Error::Config(format!("width must be >= 3, got {}", self.width)));
        }
        if self.depth < 1 {
            return Err(Error::Config("depth must be >= 1".into()));
        }
        if !(self.c_w > 0.0) || !self.c_w.is_finite() {
            return Err(Error::Config(format!("c_w must be positive, got {}", self.c_w)));
        }
        Ok(())
    }
}

/// Names of the single-input tensors, in CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tensor {
    K,
    Theta,
    V4,
    D,
    F,
    A,
    B,
    P,
    Q,
    R,
    S,
    T,
    U,
    V6,
}

impl Tensor {
    pub const ALL: [Tensor; 14] = [
        Tensor::K,
        Tensor::Theta,
        Tensor::V4,
        Tensor::D,
        Tensor::F,
        Tensor::A,
        Tensor::B,
        Tensor::P,
        Tensor::Q,
        Tensor::R,
        Tensor::S,
        Tensor::T,
        Tensor::U,
        Tensor::V6,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Tensor::K => "K",
            Tensor::Theta => "Theta",
            Tensor::V4 => "V4",
            Tensor::D => "D",
            Tensor::F => "F",
            Tensor::A => "A",
            Tensor::B => "B",
            Tensor::P => "P",
            Tensor::Q => "Q",
            Tensor::R => "R",
            Tensor::S => "S",
            Tensor::T => "T",
            Tensor::U => "U",
            Tensor::V6 => "V6",
        }
    }

    pub fn parse(s: &str) -> Option<Tensor> {
        match s {
            "V" => Some(Tensor::V4),
            "Θ" | "Th" => Some(Tensor::Theta),
            _ => Tensor::ALL.iter().copied().find(|t| t.name() == s),
        }
    }
}

impl fmt::Display for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The twelve finite-width tensors of a single input.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensors {
    pub v4: f64,
    pub d: f64,
    pub f: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub u: f64,
    pub v6: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerState {
    pub ell: usize,
    pub kernel: f64,
    pub theta: f64,
    pub tensors: Tensors,
}

impl LayerState {
    pub fn get(&self, t: Tensor) -> f64 {
        let x = &self.tensors;
        match t {
            Tensor::K => self.kernel,
            Tensor::Theta => self.theta,
            Tensor::V4 => x.v4,
            Tensor::D => x.d,
            Tensor::F => x.f,
            Tensor::A => x.a,
            Tensor::B => x.b,
            Tensor::P => x.p,
            Tensor::Q => x.q,
            Tensor::R => x.r,
            Tensor::S => x.s,
            Tensor::T => x.t,
            Tensor::U => x.u,
            Tensor::V6 => x.v6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<LayerState>,
}

impl Trajectory {
    /// State at layer `ell` (1-based).
    pub fn at(&self, ell: usize) -> Option<&LayerState> {
        ell.checked_sub(1).and_then(|i| self.states.get(i))
    }

    pub fn series(&self, t: Tensor) -> Vec<f64> {
        self.states.iter().map(|s| s.get(t)).collect()
    }
}

/// Symmetric 2x2 NTK of an input pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ntk2 {
    pub t11: f64,
    pub t22: f64,
    pub t12: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub ell: usize,
    pub kernel: Kernel2,
    pub theta: Ntk2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairTrajectory {
    pub states: Vec<PairState>,
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(domain(format!("input has length {}, network width is {n}", x.len())));
    }
    Ok(())
}

/// Layer-1 state of a single input.
///
/// Gaussian first-layer preactivations are exactly Gaussian, so their `V4` starts at zero.
pub fn init_from_input(x: &[f64], cfg: &NetworkConfig) -> Result<LayerState> {
    check_len(x, cfg.width)?;
    let n = cfg.width as f64;
    let xx = sq_norm(x) / n;
    let kernel = cfg.c_w * xx;
    let v4 = match cfg.v4_rule {
        V4Rule::Orthogonal => -2.0 * kernel * kernel,
        V4Rule::Gaussian => 0.0,
    };
    Ok(LayerState {
        ell: 1,
        kernel,
        theta: cfg.lambda_b.at(1) + cfg.lambda_w.at(1) * xx,
        tensors: Tensors { v4, ..Tensors::default() },
    })
}

/// Layer-1 kernel and NTK of an input pair.
///
/// A zero input gives a zero diagonal; that is reported when stepping, not here.
pub fn init_pair(x1: &[f64], x2: &[f64], cfg: &NetworkConfig) -> Result<PairState> {
    check_len(x1, cfg.width)?;
    check_len(x2, cfg.width)?;
    let n = cfg.width as f64;
    let (g11, g22, g12) = (sq_norm(x1) / n, sq_norm(x2) / n, dot(x1, x2) / n);
    let (lb, lw) = (cfg.lambda_b.at(1), cfg.lambda_w.at(1));
    Ok(PairState {
        ell: 1,
        kernel: Kernel2 { k11: cfg.c_w * g11, k22: cfg.c_w * g22, k12: cfg.c_w * g12 },
        theta: Ntk2 { t11: lb + lw * g11, t22: lb + lw * g22, t12: lb + lw * g12 },
    })
}

fn degenerate(k: f64) -> Error {
    domain(format!("degenerate kernel K = {k}; all recursions divide by K"))
}

/// `K^{(ℓ+1)} = C_W ⟨σ²⟩_K`.
pub fn step_kernel(state: &LayerState, cfg: &NetworkConfig) -> Result<f64> {
    if !(state.kernel > 0.0) {
        return Err(degenerate(state.kernel));
    }
    Ok(cfg.c_w * GaussianExpectation::shared().expect1(&M::new().sigma(2), state.kernel)?)
}

/// `Θ^{(ℓ+1)} = λ_b + λ_W ⟨σ²⟩_K + C_W ⟨σ'²⟩_K Θ`.
pub fn step_ntk(state: &LayerState, cfg: &NetworkConfig) -> Result<f64> {
    if !(state.kernel > 0.0) {
        return Err(degenerate(state.kernel));
    }
    let q = GaussianExpectation::shared();
    let g = q.expect1(&M::new().sigma(2), state.kernel)?;
    let s1 = q.expect1(&M::new().d1(2), state.kernel)?;
    let next = state.ell + 1;
    Ok(cfg.lambda_b.at(next) + cfg.lambda_w.at(next) * g + cfg.c_w * s1 * state.theta)
}

/// The Gaussian expectations at one kernel value that the tensor updates use.
struct Moments {
    sus: Susceptibilities,
    s4: f64,
    s6: f64,
    s2d1_2: f64,
    d1_2: f64,
    d1_4: f64,
    d2d1_2s: f64,
    d2s: f64,
    d3d1_3: f64,
    d3d1: f64,
    d2_2: f64,
    d2_2d1_2: f64,
    zd1s: f64,
    zd2d1: f64,
    s3d2: f64,
    d4s: f64,
}

impl Moments {
    fn at(k: f64, c_w: f64) -> Result<Self> {
        let q = GaussianExpectation::shared();
        let e = |m: M| q.expect1(&m, k);
        Ok(Moments {
            sus: q.susceptibilities(k, c_w)?,
            s4: e(M::new().sigma(4))?,
            s6: e(M::new().sigma(6))?,
            s2d1_2: e(M::new().sigma(2).d1(2))?,
            d1_2: e(M::new().d1(2))?,
            d1_4: e(M::new().d1(4))?,
            d2d1_2s: e(M::new().d2(1).d1(2).sigma(1))?,
            d2s: e(M::new().d2(1).sigma(1))?,
            d3d1_3: e(M::new().d3(1).d1(3))?,
            d3d1: e(M::new().d3(1).d1(1))?,
            d2_2: e(M::new().d2(2))?,
            d2_2d1_2: e(M::new().d2(2).d1(2))?,
            zd1s: e(M::new().z(1).d1(1).sigma(1))?,
            zd2d1: e(M::new().z(1).d2(1).d1(1))?,
            s3d2: e(M::new().sigma(3).d2(1))?,
            d4s: e(M::new().d4(1).sigma(1))?,
        })
    }
}

fn check(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical { tensor: name.into(), detail: format!("value {v}") })
    }
}

/// Advances all twelve finite-width tensors from `ℓ` to `ℓ+1`.
pub fn step_tensors_single(state: &LayerState, cfg: &NetworkConfig) -> Result<Tensors> {
    let k = state.kernel;
    if !(k > 0.0) {
        return Err(degenerate(k));
    }
    let m = Moments::at(k, cfg.c_w)?;
    Ok(advance(state, cfg, &m)?.2)
}

fn advance(state: &LayerState, cfg: &NetworkConfig, m: &Moments) -> Result<(f64, f64, Tensors)> {
    let c = cfg.c_w;
    let next = state.ell + 1;
    let lb = cfg.lambda_b.at(next);
    let lw = cfg.lambda_w.at(next);
    let k = state.kernel;
    let th = state.theta;
    let x = &state.tensors;
    let Susceptibilities { chi_par: cp, chi_perp: ct, h, g } = m.sus;

    let k_next = check("K", c * g)?;
    let th_next = check("Theta", lb + lw * g + ct * th)?;

    let v4_source = match cfg.v4_rule {
        V4Rule::Orthogonal => m.s4 - 3.0 * g * g,
        V4Rule::Gaussian => m.s4 - g * g,
    };
    let v4 = check("V4", c * c * v4_source + cp * cp * x.v4)?;
    let f = check("F", cp * cp * x.f + c * c * (m.s2d1_2 - g * m.d1_2) * th)?;

    let quartic = c * c * m.s4 - (c * g).powi(2) + cp * cp * x.v4;
    let mixed = c * c * m.s2d1_2 - c * g * ct + 2.0 * h * cp * x.v4;
    let r = lw / c;
    let d = check("D", ct * cp * x.d + r * quartic + th * mixed)?;
    let b = check("B", ct * ct * x.b + c * c * (m.d1_4 - m.d1_2 * m.d1_2) * th * th)?;
    let a = check(
        "A",
        ct * ct * x.a
            + r * r * quartic
            + 2.0 * r * th * mixed
            + 2.0 * r * ct * cp * x.d
            + 4.0 * h * ct * th * x.d
            + th * th * (c * c * m.d1_4 - ct * ct + (2.0 * h).powi(2) * x.v4),
    )?;

    let dd_homog = c * ct * m.d2s + ct * ct;
    let p = check("P", c * c * m.d2d1_2s * th * th + c * ct * m.d2s * x.b + dd_homog * x.p)?;
    let q = check(
        "Q",
        c * c * m.d2d1_2s * th * th + r * f + 2.0 * h * cp * th * x.f + dd_homog * x.q,
    )?;
    let s = check(
        "S",
        ct * ct * x.s
            + lw * c * m.d1_4 * th * th
            + c * c * m.d2_2d1_2 * th.powi(3)
            + ct * (lw * m.d1_2 + c * th * m.d2_2) * x.b,
    )?;
    let u = check("U", ct * ct * x.u + c * c * m.d2_2d1_2 * th.powi(3))?;
    let r_next = check(
        "R",
        ct * ct * x.r
            + lw * c * m.d2d1_2s * th * th
            + c * c * m.d3d1_3 * th.powi(3)
            + ct * (lw * m.d2s + c * th * m.d3d1) * (x.b + x.p)
            + ct * (lw * m.d1_2 + c * th * m.d2_2) * x.p,
    )?;
    let t = check(
        "T",
        ct * ct * x.t
            + 2.0 * c * lw * m.d2d1_2s * th * th
            + c * c * m.d2_2d1_2 * th.powi(3)
            + lw * lw * th * m.s2d1_2
            + (lw * m.zd1s + c * th * m.zd2d1).powi(2) * x.f / (k * k)
            + 2.0 * ct * (lw * (m.d2s + m.d1_2) + c * th * (m.d3d1 + m.d2_2)) * x.q,
    )?;
    let v6 = check(
        "V6",
        c.powi(3) * (m.s6 - 15.0 * m.s4 * g + 30.0 * g.powi(3))
            + 6.0 * c * c * x.v4 * cp * (3.0 * m.s2d1_2 + m.s3d2 - 3.0 * m.d1_2 * g - 3.0 * g * m.d2s)
            + 1.5 * c * cp * cp * x.v4 * x.v4 * (3.0 * m.d2_2 + 4.0 * m.d3d1 + m.d4s)
            + cp.powi(3) * x.v6,
    )?;

    Ok((k_next, th_next, Tensors { v4, d, f, a, b, p, q, r: r_next, s, t, u, v6 }))
}

/// Full single-input state at `ℓ+1`.
pub fn step(state: &LayerState, cfg: &NetworkConfig) -> Result<LayerState> {
    if !(state.kernel > 0.0) {
        return Err(degenerate(state.kernel));
    }
    let m = Moments::at(state.kernel, cfg.c_w)?;
    let (kernel, theta, tensors) = advance(state, cfg, &m)?;
    Ok(LayerState { ell: state.ell + 1, kernel, theta, tensors })
}

/// Layers `1..=cfg.depth` for one input.
pub fn run(x: &[f64], cfg: &NetworkConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut states = Vec::with_capacity(cfg.depth);
    states.push(init_from_input(x, cfg)?);
    while states.len() < cfg.depth {
        let next = step(states.last().expect("nonempty"), cfg)?;
        states.push(next);
    }
    Ok(Trajectory { states })
}

/// Advances the kernel and NTK of an input pair by one layer.
pub fn step_pair(state: &PairState, cfg: &NetworkConfig) -> Result<PairState> {
    let kk = state.kernel;
    if !(kk.k11 > 0.0 && kk.k22 > 0.0) {
        return Err(degenerate(kk.k11.min(kk.k22)));
    }
    let q = GaussianExpectation::shared();
    let kk = Kernel2::new(kk.k11, kk.k22, kk.k12)?;
    let sig = M::new().sigma(1);
    let d1 = M::new().d1(1);
    let g11 = q.expect1(&M::new().sigma(2), kk.k11)?;
    let g22 = q.expect1(&M::new().sigma(2), kk.k22)?;
    let g12 = q.expect2(&sig, &sig, &kk)?;
    let s11 = q.expect1(&M::new().d1(2), kk.k11)?;
    let s22 = q.expect1(&M::new().d1(2), kk.k22)?;
    let s12 = q.expect2(&d1, &d1, &kk)?;
    let next = state.ell + 1;
    let (lb, lw, c) = (cfg.lambda_b.at(next), cfg.lambda_w.at(next), cfg.c_w);
    let th = state.theta;
    Ok(PairState {
        ell: next,
        kernel: Kernel2 { k11: c * g11, k22: c * g22, k12: c * g12 },
        theta: Ntk2 {
            t11: lb + lw * g11 + c * s11 * th.t11,
            t22: lb + lw * g22 + c * s22 * th.t22,
            t12: lb + lw * g12 + c * s12 * th.t12,
        },
    })
}

/// Layers `1..=cfg.depth` of the kernel and NTK of an input pair.
pub fn run_pair(x1: &[f64], x2: &[f64], cfg: &NetworkConfig) -> Result<PairTrajectory> {
    cfg.validate()?;
    let mut states = Vec::with_capacity(cfg.depth);
    states.push(init_pair(x1, x2, cfg)?);
    while states.len() < cfg.depth {
        let next = step_pair(states.last().expect("nonempty"), cfg)?;
        states.push(next);
    }
    Ok(PairTrajectory { states })
}

/// Dimensionless tensors at one layer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NormalizedTensors {
    pub ell: usize,
    pub v4: f64,
    pub d: f64,
    pub f: f64,
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub u: f64,
    pub v6: f64,
}

impl NormalizedTensors {
    pub const COLUMNS: [Tensor; 12] = [
        Tensor::V4,
        Tensor::D,
        Tensor::F,
        Tensor::A,
        Tensor::B,
        Tensor::P,
        Tensor::Q,
        Tensor::R,
        Tensor::S,
        Tensor::T,
        Tensor::U,
        Tensor::V6,
    ];

    pub fn get(&self, t: Tensor) -> Option<f64> {
        Some(match t {
            Tensor::V4 => self.v4,
            Tensor::D => self.d,
            Tensor::F => self.f,
            Tensor::A => self.a,
            Tensor::B => self.b,
            Tensor::P => self.p,
            Tensor::Q => self.q,
            Tensor::R => self.r,
            Tensor::S => self.s,
            Tensor::T => self.t,
            Tensor::U => self.u,
            Tensor::V6 => self.v6,
            Tensor::K | Tensor::Theta => return None,
        })
    }
}

/// `D/(KΘ)`, `F/(KΘ)`, `{A,B,P,Q}/Θ²`, `{R,S,T,U}·K/Θ³`, `V4/K²`, `V6/K³`.
pub fn normalize_state(s: &LayerState) -> Result<NormalizedTensors> {
    let (k, th) = (s.kernel, s.theta);
    if k == 0.0 || th == 0.0 {
        return Err(domain(format!("cannot normalize layer {}: K={k}, Theta={th}", s.ell)));
    }
    let x = &s.tensors;
    let kt = k * th;
    let t2 = th * th;
    let c3 = k / th.powi(3);
    Ok(NormalizedTensors {
        ell: s.ell,
        v4: x.v4 / (k * k),
        d: x.d / kt,
        f: x.f / kt,
        a: x.a / t2,
        b: x.b / t2,
        p: x.p / t2,
        q: x.q / t2,
        r: x.r * c3,
        s: x.s * c3,
        t: x.t * c3,
        u: x.u * c3,
        v6: x.v6 / k.powi(3),
    })
}

pub fn normalize(traj: &Trajectory) -> Result<Vec<NormalizedTensors>> {
    traj.states.iter().map(normalize_state).collect()
}
