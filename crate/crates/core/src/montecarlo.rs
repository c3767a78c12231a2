//! Ensembles of finite-width tanh networks with Haar-orthogonal weights.
//!
//! Each network draws its weights from its own ChaCha stream, so any network can
//! be regenerated on demand. Tensors that need the ensemble-mean NTK for
//! centering are computed in two passes over the same streams instead of
//! holding every NTK matrix in memory.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::recursion::NetworkConfig;

/// Largest width for which full NTK matrices are propagated.
pub const MAX_NTK_WIDTH: usize = 512;

/// Networks per parallel task; fixed so reductions do not depend on thread count.
const CHUNK: usize = 8;

/// An independent, reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl EnsembleEstimate {
    /// Mean and `sd / sqrt(n)` of the values.
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(domain(format!("standard error needs at least 2 samples, got {n}")));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(EnsembleEstimate { mean, stderr: (var / n as f64).sqrt(), n_samples: n })
    }

    /// Whether `target` lies within `k` standard errors, allowing an absolute floor.
    pub fn brackets(&self, target: f64, k: f64, floor: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + floor
    }
}

/// `sqrt(c_w) Q` with `Q` Haar on `O(n)`.
///
/// QR of a Gaussian matrix, with the columns of `Q` multiplied by the signs of
/// `diag(R)`; without that correction `Q` is not Haar distributed.
pub fn sample_orthogonal<R: Rng + ?Sized>(n: usize, c_w: f64, rng: &mut R) -> DMatrix<f64> {
    assert!(n >= 1, "matrix size must be positive");
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let r = qr.r();
        if (0..n).any(|i| r[(i, i)] == 0.0) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return q * c_w.sqrt();
    }
}

/// `z^{(1)} = W^{(1)} x`, `z^{(ℓ+1)} = W^{(ℓ+1)} tanh(z^{(ℓ)})`.
pub fn forward(weights: &[DMatrix<f64>], x: &[f64]) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(weights.len());
    let mut h = DVector::from_column_slice(x);
    for (l, w) in weights.iter().enumerate() {
        if l > 0 {
            h = out.last().map(|z: &DVector<f64>| z.map(f64::tanh)).expect("previous layer");
        }
        out.push(w * &h);
    }
    out
}

/// Empirical NTK of inputs `a`, `b` at every layer, as full `n x n` matrices.
pub fn ntk_forward(
    weights: &[DMatrix<f64>],
    x: (&[f64], &[f64]),
    z: (&[DVector<f64>], &[DVector<f64>]),
    cfg: &NetworkConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let n = cfg.width;
    if n > MAX_NTK_WIDTH {
        return Err(domain(format!("NTK matrices limited to width {MAX_NTK_WIDTH}, got {n}")));
    }
    let nf = n as f64;
    let xx: f64 = x.0.iter().zip(x.1).map(|(a, b)| a * b).sum();
    let mut theta = DMatrix::from_diagonal_element(n, n, cfg.lambda_b.at(1) + cfg.lambda_w.at(1) * xx / nf);
    let mut out = Vec::with_capacity(weights.len());
    for l in 1..weights.len() {
        let (za, zb) = (&z.0[l - 1], &z.1[l - 1]);
        let sa = za.map(f64::tanh);
        let sb = zb.map(f64::tanh);
        let da = za.map(|v| 1.0 - v.tanh().powi(2));
        let db = zb.map(|v| 1.0 - v.tanh().powi(2));
        let ell = l + 1;
        let diag = cfg.lambda_b.at(ell) + cfg.lambda_w.at(ell) * sa.dot(&sb) / nf;
        let mut m = theta.clone();
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] *= da[i] * db[j];
            }
        }
        let w = &weights[l];
        let mut next = w * m * w.transpose();
        for i in 0..n {
            next[(i, i)] += diag;
        }
        out.push(std::mem::replace(&mut theta, next));
    }
    out.push(theta);
    Ok(out)
}

/// One network's preactivations and NTK matrices.
///
/// `ntk[p][ℓ-1]` is the NTK of input pair `p`: `(0,0)`, then `(1,1)` and `(0,1)`
/// when a second input is present.
#[derive(Debug, Clone)]
pub struct SimState {
    pub preacts: Vec<Vec<DVector<f64>>>,
    pub ntk: Vec<Vec<DMatrix<f64>>>,
}

fn pairs(n_inputs: usize) -> &'static [(usize, usize)] {
    if n_inputs == 1 {
        &[(0, 0)]
    } else {
        &[(0, 0), (1, 1), (0, 1)]
    }
}

pub fn sample_weights(cfg: &NetworkConfig, stream: RngStream) -> Vec<DMatrix<f64>> {
    let mut rng = stream.rng();
    (0..cfg.depth).map(|_| sample_orthogonal(cfg.width, cfg.c_w, &mut rng)).collect()
}

pub fn simulate(weights: &[DMatrix<f64>], inputs: &[&[f64]], cfg: &NetworkConfig) -> Result<SimState> {
    if inputs.is_empty() || inputs.len() > 2 {
        return Err(domain("simulate takes one or two inputs"));
    }
    for x in inputs {
        if x.len() != cfg.width {
            return Err(domain(format!("input length {} != width {}", x.len(), cfg.width)));
        }
    }
    let preacts: Vec<Vec<DVector<f64>>> = inputs.iter().map(|x| forward(weights, x)).collect();
    let ntk = pairs(inputs.len())
        .iter()
        .map(|&(a, b)| ntk_forward(weights, (inputs[a], inputs[b]), (&preacts[a], &preacts[b]), cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimState { preacts, ntk })
}

/// Per-network, per-layer contributions to the estimators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct LayerStats {
    /// `(1/n) z_a·z_b` for each input pair.
    k: [f64; 3],
    /// `(1/n) tr Θ̂_ab` for each input pair.
    th: [f64; 3],
    /// `Σ_{i≠j} z_i² z_j²` for the first input.
    q: f64,
    d: f64,
    f: f64,
    a: f64,
    b: f64,
}

fn layer_stats(state: &SimState, means: Option<&[DMatrix<f64>]>, exclude_diagonal: bool) -> Vec<LayerStats> {
    let depth = state.preacts[0].len();
    let n = state.preacts[0][0].len();
    let nf = n as f64;
    let prs = pairs(state.preacts.len());
    (0..depth)
        .map(|l| {
            let mut s = LayerStats::default();
            for (p, &(a, b)) in prs.iter().enumerate() {
                s.k[p] = state.preacts[a][l].dot(&state.preacts[b][l]) / nf;
                s.th[p] = state.ntk[p][l].trace() / nf;
            }
            let z = &state.preacts[0][l];
            let z2: f64 = z.iter().map(|v| v * v).sum();
            let z4: f64 = z.iter().map(|v| v.powi(4)).sum();
            s.q = z2 * z2 - z4;
            if let Some(means) = means {
                let delta = &state.ntk[0][l] - &means[l];
                let tr = delta.trace();
                let mut zz = 0.0;
                let mut dd = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        if exclude_diagonal && i == j {
                            continue;
                        }
                        let v = delta[(i, j)];
                        zz += z[i] * z[j] * v;
                        dd += v * v;
                    }
                }
                let off = if exclude_diagonal { nf / (nf - 1.0) } else { 1.0 };
                s.d = z2 * tr / nf;
                s.f = off * zz / nf;
                s.a = tr * tr / nf;
                s.b = off * dd / nf;
            }
            s
        })
        .collect()
}

/// How standard errors are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorBars {
    /// `K̄`, `Θ̄` across all networks; four-point tensors across repetitions.
    #[default]
    Paper,
    /// Every quantity across repetitions.
    Repetitions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub network: NetworkConfig,
    pub n_net: usize,
    pub n_stats: usize,
    pub seed: u64,
    pub error_bars: ErrorBars,
    /// Drop `i = j` terms from the `F̄` and `B̄` double sums.
    pub exclude_diagonal: bool,
    /// Offset added to every stream id, to separate runs sharing a seed.
    pub stream_offset: u64,
}

impl McConfig {
    pub fn new(network: NetworkConfig, n_net: usize, n_stats: usize, seed: u64) -> Self {
        McConfig {
            network,
            n_net,
            n_stats,
            seed,
            error_bars: ErrorBars::Paper,
            exclude_diagonal: false,
            stream_offset: 0,
        }
    }

    fn stream(&self, rep: usize, net: usize) -> RngStream {
        RngStream::new(self.seed, self.stream_offset + (rep * self.n_net + net) as u64)
    }
}

/// Estimator names in output order; `*_norm` are the dimensionless ratios.
pub const ESTIMATES: [&str; 16] = [
    "K", "K22", "K12", "Theta", "Theta22", "Theta12", "V4", "D", "F", "A", "B", "V4_norm", "D_norm",
    "F_norm", "A_norm", "B_norm",
];

#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub tensor: &'static str,
    pub ell: usize,
    pub estimate: EnsembleEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub c_w: f64,
    pub seed: u64,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn get(&self, tensor: &str, ell: usize) -> Option<&EnsembleEstimate> {
        self.rows.iter().find(|r| r.tensor == tensor && r.ell == ell).map(|r| &r.estimate)
    }

    pub fn series(&self, tensor: &str) -> Vec<&EnsembleEstimate> {
        self.rows.iter().filter(|r| r.tensor == tensor).map(|r| &r.estimate).collect()
    }
}

/// Runs `f` on a pool capped by `ORTHOSTAT_THREADS`, if set.
pub fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("ORTHOSTAT_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    match cap.filter(|&c| c > 0).and_then(|c| rayon::ThreadPoolBuilder::new().num_threads(c).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

fn validate(cfg: &McConfig, inputs: &[&[f64]]) -> Result<()> {
    cfg.network.validate()?;
    if cfg.network.width > MAX_NTK_WIDTH {
        return Err(domain(format!("NTK matrices limited to width {MAX_NTK_WIDTH}")));
    }
    if cfg.n_net < 2 {
        return Err(Error::Config("n_net must be at least 2".into()));
    }
    if cfg.n_stats < 1 {
        return Err(Error::Config("n_stats must be at least 1".into()));
    }
    if inputs.is_empty() || inputs.len() > 2 {
        return Err(domain("one or two inputs required"));
    }
    Ok(())
}

/// Ensemble-mean NTK of the first input at every layer, for one repetition.
fn mean_ntk(cfg: &McConfig, inputs: &[&[f64]], rep: usize) -> Result<Vec<DMatrix<f64>>> {
    let net = &cfg.network;
    let n = net.width;
    let chunks: Vec<Vec<DMatrix<f64>>> = (0..cfg.n_net)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|ids| -> Result<Vec<DMatrix<f64>>> {
            let mut acc = vec![DMatrix::zeros(n, n); net.depth];
            for &i in ids {
                let w = sample_weights(net, cfg.stream(rep, i));
                let z = forward(&w, inputs[0]);
                let th = ntk_forward(&w, (inputs[0], inputs[0]), (&z, &z), net)?;
                for (a, t) in acc.iter_mut().zip(th) {
                    *a += t;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![DMatrix::zeros(n, n); net.depth];
    for c in chunks {
        for (t, m) in total.iter_mut().zip(c) {
            *t += m;
        }
    }
    let inv = 1.0 / cfg.n_net as f64;
    Ok(total.into_iter().map(|m| m * inv).collect())
}

fn repetition_stats(cfg: &McConfig, inputs: &[&[f64]], rep: usize, centered: bool) -> Result<Vec<Vec<LayerStats>>> {
    let means = if centered { Some(mean_ntk(cfg, inputs, rep)?) } else { None };
    let net = &cfg.network;
    (0..cfg.n_net)
        .into_par_iter()
        .map(|i| {
            let w = sample_weights(net, cfg.stream(rep, i));
            let state = simulate(&w, inputs, net)?;
            Ok(layer_stats(&state, means.as_deref(), cfg.exclude_diagonal))
        })
        .collect()
}

/// Estimators of one repetition at one layer.
struct RepEstimate {
    k: [f64; 3],
    th: [f64; 3],
    v4: f64,
    d: f64,
    f: f64,
    a: f64,
    b: f64,
}

fn mean_of(stats: &[Vec<LayerStats>], l: usize, f: impl Fn(&LayerStats) -> f64) -> f64 {
    stats.iter().map(|s| f(&s[l])).sum::<f64>() / stats.len() as f64
}

fn rep_estimate(stats: &[Vec<LayerStats>], l: usize, n: usize) -> RepEstimate {
    let nf = n as f64;
    let k = [0, 1, 2].map(|p| mean_of(stats, l, |s| s.k[p]));
    let th = [0, 1, 2].map(|p| mean_of(stats, l, |s| s.th[p]));
    let q = mean_of(stats, l, |s| s.q);
    RepEstimate {
        k,
        th,
        v4: q / (nf - 1.0) - nf * k[0] * k[0],
        d: mean_of(stats, l, |s| s.d),
        f: mean_of(stats, l, |s| s.f),
        a: mean_of(stats, l, |s| s.a),
        b: mean_of(stats, l, |s| s.b),
    }
}

/// Monte-Carlo estimates of `K̄`, `Θ̄` (and, when `tensors` is set, `V̄4, D̄, F̄, Ā, B̄`
/// with their normalized ratios) at every layer.
pub fn run_ensemble(cfg: &McConfig, inputs: &[&[f64]], tensors: bool) -> Result<McReport> {
    validate(cfg, inputs)?;
    let all: Vec<Vec<Vec<LayerStats>>> = with_thread_cap(|| {
        (0..cfg.n_stats).map(|rep| repetition_stats(cfg, inputs, rep, tensors)).collect::<Result<_>>()
    })?;
    let depth = cfg.network.depth;
    let n = cfg.network.width;
    let n_pairs = pairs(inputs.len()).len();
    let per_rep_needed = cfg.error_bars == ErrorBars::Repetitions || tensors;
    if per_rep_needed && cfg.n_stats < 2 {
        return Err(domain("repetition error bars need n_stats >= 2"));
    }
    let mut rows = Vec::new();
    for l in 0..depth {
        let reps: Vec<RepEstimate> = all.iter().map(|s| rep_estimate(s, l, n)).collect();
        let over_reps = |f: &dyn Fn(&RepEstimate) -> f64| {
            EnsembleEstimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>())
        };
        let pooled = |f: &dyn Fn(&LayerStats) -> f64| {
            let v: Vec<f64> = all.iter().flat_map(|r| r.iter().map(|s| f(&s[l]))).collect();
            EnsembleEstimate::from_samples(&v)
        };
        let ell = l + 1;
        let names = [["K", "Theta"], ["K22", "Theta22"], ["K12", "Theta12"]];
        let mut push = |tensor: &'static str, e: EnsembleEstimate| rows.push(McRow { tensor, ell, estimate: e });
        for (p, [kn, tn]) in names.iter().enumerate().take(n_pairs) {
            let (ke, te) = match cfg.error_bars {
                ErrorBars::Paper => (pooled(&|s| s.k[p])?, pooled(&|s| s.th[p])?),
                ErrorBars::Repetitions => (over_reps(&|r| r.k[p])?, over_reps(&|r| r.th[p])?),
            };
            push(kn, ke);
            push(tn, te);
        }
        if tensors {
            push("V4", over_reps(&|r| r.v4)?);
            push("D", over_reps(&|r| r.d)?);
            push("F", over_reps(&|r| r.f)?);
            push("A", over_reps(&|r| r.a)?);
            push("B", over_reps(&|r| r.b)?);
            push("V4_norm", over_reps(&|r| r.v4 / (r.k[0] * r.k[0]))?);
            push("D_norm", over_reps(&|r| r.d / (r.k[0] * r.th[0]))?);
            push("F_norm", over_reps(&|r| r.f / (r.k[0] * r.th[0]))?);
            push("A_norm", over_reps(&|r| r.a / (r.th[0] * r.th[0]))?);
            push("B_norm", over_reps(&|r| r.b / (r.th[0] * r.th[0]))?);
        }
    }
    rows.sort_by_key(|r| (ESTIMATES.iter().position(|&t| t == r.tensor), r.ell));
    Ok(McReport { c_w: cfg.network.c_w, seed: cfg.seed, rows })
}

/// Estimates from an in-memory ensemble treated as a single repetition.
///
/// Standard errors are across networks; `V̄4` uses its linearization
/// `q_I/(n-1) − 2n K̄ k_I` as the per-network contribution.
pub fn estimate_tensors(states: &[SimState], c_w: f64, exclude_diagonal: bool) -> Result<McReport> {
    if states.len() < 2 {
        return Err(domain(format!("standard error needs at least 2 samples, got {}", states.len())));
    }
    let depth = states[0].preacts[0].len();
    let n = states[0].preacts[0][0].len();
    let means: Vec<DMatrix<f64>> = (0..depth)
        .map(|l| {
            let mut m = DMatrix::zeros(n, n);
            for s in states {
                m += &s.ntk[0][l];
            }
            m / states.len() as f64
        })
        .collect();
    let stats: Vec<Vec<LayerStats>> = states.iter().map(|s| layer_stats(s, Some(&means), exclude_diagonal)).collect();
    let nf = n as f64;
    let mut rows = Vec::new();
    for l in 0..depth {
        let ell = l + 1;
        let col = |f: &dyn Fn(&LayerStats) -> f64| stats.iter().map(|s| f(&s[l])).collect::<Vec<f64>>();
        let k = EnsembleEstimate::from_samples(&col(&|s| s.k[0]))?;
        let th = EnsembleEstimate::from_samples(&col(&|s| s.th[0]))?;
        let kbar = k.mean;
        let mut v4 = EnsembleEstimate::from_samples(&col(&|s| s.q / (nf - 1.0) - 2.0 * nf * kbar * s.k[0]))?;
        v4.mean += nf * kbar * kbar;
        rows.push(McRow { tensor: "K", ell, estimate: k });
        rows.push(McRow { tensor: "Theta", ell, estimate: th });
        rows.push(McRow { tensor: "V4", ell, estimate: v4 });
        rows.push(McRow { tensor: "D", ell, estimate: EnsembleEstimate::from_samples(&col(&|s| s.d))? });
        rows.push(McRow { tensor: "F", ell, estimate: EnsembleEstimate::from_samples(&col(&|s| s.f))? });
        rows.push(McRow { tensor: "A", ell, estimate: EnsembleEstimate::from_samples(&col(&|s| s.a))? });
        rows.push(McRow { tensor: "B", ell, estimate: EnsembleEstimate::from_samples(&col(&|s| s.b))? });
    }
    rows.sort_by_key(|r| (ESTIMATES.iter().position(|&t| t == r.tensor), r.ell));
    Ok(McReport { c_w, seed: 0, rows })
}

/// `K̄`, `Θ̄` trajectories for several weight variances, one report per value.
pub fn sweep_cw(values: &[f64], base: &McConfig, inputs: &[&[f64]]) -> Result<Vec<McReport>> {
    values
        .iter()
        .enumerate()
        .map(|(idx, &c_w)| {
            let mut cfg = base.clone();
            cfg.network.c_w = c_w;
            cfg.stream_offset = base.stream_offset + ((idx as u64) << 32);
            run_ensemble(&cfg, inputs, false)
        })
        .collect()
}
