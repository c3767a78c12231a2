//! Large-depth series `O(ℓ) = ℓ^{-p} Σ c_{ij} (log ℓ)^j / ℓ^i` and their calibration.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::recursion::{Tensor, Trajectory};

/// The coefficient tables as printed, one row per nonzero `(tensor, i, j)`.
pub const BUNDLED_TABLES: &str = include_str!("../data/expansion_tables.csv");

/// Series truncation: `i, j` run over `0..=MAX_INDEX`.
pub const MAX_INDEX: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionTable {
    pub tensor: Tensor,
    pub p: i32,
    pub coeffs: [[f64; MAX_INDEX + 1]; MAX_INDEX + 1],
    /// Coefficients exactly as written in the data file, keyed by `(i, j)`.
    pub printed: BTreeMap<(usize, usize), String>,
    pub free_constants: BTreeMap<String, f64>,
}

impl ExpansionTable {
    pub fn new(tensor: Tensor, p: i32) -> Self {
        ExpansionTable {
            tensor,
            p,
            coeffs: [[0.0; MAX_INDEX + 1]; MAX_INDEX + 1],
            printed: BTreeMap::new(),
            free_constants: BTreeMap::new(),
        }
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i][j]
    }
}

/// Parses `"-0.5"` or `"-25/96"`.
pub fn parse_coefficient(s: &str) -> Result<f64> {
    let bad = || Error::Config(format!("malformed coefficient {s:?}"));
    let s = s.trim();
    match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.parse().map_err(|_| bad())?;
            let den: f64 = den.parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            Ok(num / den)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

/// Reads tables in the `tensor,p,i,j,coefficient` format.
pub fn parse_tables(text: &str) -> Result<Vec<ExpansionTable>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let expected = ["tensor", "p", "i", "j", "coefficient"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Config(format!("expansion table header must be {}", expected.join(","))));
    }
    let mut tables: BTreeMap<Tensor, ExpansionTable> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let ctx = |what: &str| Error::Config(format!("row {}: bad {what}", line + 2));
        let tensor = Tensor::parse(&rec[0]).ok_or_else(|| ctx("tensor name"))?;
        let p: i32 = rec[1].parse().map_err(|_| ctx("p"))?;
        let i: usize = rec[2].parse().map_err(|_| ctx("i"))?;
        let j: usize = rec[3].parse().map_err(|_| ctx("j"))?;
        if i > MAX_INDEX || j > MAX_INDEX {
            return Err(ctx("index (must be <= 5)"));
        }
        let value = parse_coefficient(&rec[4])?;
        let table = tables.entry(tensor).or_insert_with(|| ExpansionTable::new(tensor, p));
        if table.p != p {
            return Err(ctx("p (inconsistent within tensor)"));
        }
        table.coeffs[i][j] = value;
        table.printed.insert((i, j), rec[4].to_string());
    }
    let mut out: Vec<ExpansionTable> = tables.into_values().collect();
    for t in &mut out {
        t.free_constants = paper_constants(t.tensor);
    }
    Ok(out)
}

/// The fourteen tables shipped with the crate.
pub fn load_paper_tables() -> Result<Vec<ExpansionTable>> {
    parse_tables(BUNDLED_TABLES)
}

pub fn load_tables_from_path(path: &Path) -> Result<Vec<ExpansionTable>> {
    parse_tables(&std::fs::read_to_string(path)?)
}

pub fn find_table(tables: &[ExpansionTable], tensor: Tensor) -> Option<&ExpansionTable> {
    tables.iter().find(|t| t.tensor == tensor)
}

/// Free constants as quoted alongside the tables.
fn paper_constants(tensor: Tensor) -> BTreeMap<String, f64> {
    let pairs: &[(&str, f64)] = match tensor {
        Tensor::K => &[("log_l0", -2.74141)],
        Tensor::Theta => &[("c_1_0", 0.829493)],
        Tensor::V4 => &[("c_2_0", 0.861763)],
        Tensor::D => &[("c_1_0", 4.0 / 3.0)],
        Tensor::F => &[("c_3_0", 6.49751)],
        Tensor::A => &[("c_1_0", -16.0 / 3.0)],
        Tensor::B => &[("c_1_0", 7.19961)],
        Tensor::P => &[("c_3_0", 39.7952)],
        Tensor::Q => &[("c_3_0", 47.0357)],
        Tensor::R => &[("c_3_0", -49.1347)],
        Tensor::S => &[("c_3_0", -16.4737)],
        Tensor::T => &[("c_3_0", -372.59)],
        Tensor::U => &[("c_2_0", -196.103)],
        Tensor::V6 => &[],
    };
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

/// `ℓ^{-p} Σ_{i,j} c_{ij} (log ℓ)^j / ℓ^i`.
pub fn eval_expansion(table: &ExpansionTable, ell: f64) -> f64 {
    let log = ell.ln();
    let mut sum = 0.0;
    for (i, row) in table.coeffs.iter().enumerate() {
        let mut inner = 0.0;
        for &c in row.iter().rev() {
            inner = inner * log + c;
        }
        sum += inner / ell.powi(i as i32);
    }
    sum * ell.powi(-table.p)
}

/// `K(ℓ)` as a function of the scale `log ℓ0`.
pub fn kernel_series(ell: f64, l0: f64) -> f64 {
    let l = ell.ln();
    let (l0_2, l0_3, l0_4) = (l0 * l0, l0.powi(3), l0.powi(4));
    let t1 = 0.5;
    let t2 = 5.0 * l / 24.0 - 5.0 * l0 / 24.0;
    let t3 = 25.0 * l * l / 288.0 + 5.0 * l * (-5.0 - 10.0 * l0) / 288.0 + (53.0 + 25.0 * l0 + 25.0 * l0_2) / 288.0;
    let t4 = 125.0 * l.powi(3) / 3456.0
        + 25.0 * l * l * (-25.0 - 30.0 * l0) / 6912.0
        + 5.0 * l * (23.0 + 125.0 / 8.0 * l0 + 75.0 / 8.0 * l0_2) / 432.0
        + (-8597.0 - 9200.0 * l0 - 3125.0 * l0_2 - 1250.0 * l0_3) / 34560.0;
    let t5 = 625.0 * l.powi(4) / 41472.0
        + 125.0 * l.powi(3) * (-65.0 - 60.0 * l0) / 124416.0
        + 25.0 * l * l * (287.0 + 650.0 / 3.0 * l0 + 100.0 * l0_2) / 27648.0
        + l * (-10897.0 - 21525.0 / 2.0 * l0 - 8125.0 / 2.0 * l0_2 - 1250.0 * l0_3) / 20736.0
        + (-2479663.0 + 653820.0 * l0 + 322875.0 * l0_2 + 81250.0 * l0_3 + 18750.0 * l0_4) / 1244160.0;
    t1 / ell + t2 / ell.powi(2) + t3 / ell.powi(3) + t4 / ell.powi(4) + t5 / ell.powi(5)
}

/// `Θ(ℓ)` as a function of `log ℓ0` and `c^Θ_{1,0}`.
pub fn ntk_series(ell: f64, l0: f64, c: f64) -> f64 {
    let l = ell.ln();
    let (l0_2, l0_3, l0_4) = (l0 * l0, l0.powi(3), l0.powi(4));
    let t1 = -5.0 / 24.0 * l * l + l * (27.0 + 10.0 * l0) / 24.0 + c;
    let t2 = -25.0 / 288.0 * l.powi(3)
        + 5.0 / 288.0 * l * l * (31.0 + 15.0 * l0)
        + (447.0 + 205.0 * l0) / 288.0
        + l * (-313.0 - 175.0 * l0 - 50.0 * l0_2) / 288.0
        + l * 5.0 / 12.0 * c
        - (4.0 + 5.0 * l0) * c / 12.0;
    let t3 = -125.0 / 3456.0 * l.powi(4)
        + 125.0 / 864.0 * l.powi(3) * (2.0 + l0)
        + (-183829.0 - 116850.0 * l0 - 26500.0 * l0_2) / 69120.0
        - l * l * 25.0 * (143.0 + 93.0 * l0 + 25.0 * l0_2) / 3456.0
        + l * l * 25.0 / 144.0 * c
        + (99.0 + 65.0 * l0 + 25.0 * l0_2) / 144.0 * c
        + l * (17031.0 + 10790.0 * l0 + 2650.0 * l0_2 + 500.0 * l0_3) / 6912.0
        - l * 5.0 / 144.0 * (13.0 + 10.0 * l0) * c;
    let t4 = -625.0 / 41472.0 * l.powi(5)
        + 125.0 * l.powi(4) * (103.0 + 50.0 * l0) / 82944.0
        + (287109682.0 + 282873525.0 * l0 + 85689000.0 * l0_2 + 12240000.0 * l0_3) / 67184640.0
        - l.powi(3) * 25.0 * (23863.0 + 16110.0 * l0 + 4050.0 * l0_2) / 746496.0
        + l.powi(3) * 125.0 / 1728.0 * c
        - (21949.0 + 18100.0 * l0 + 6125.0 * l0_2 + 1250.0 * l0_3) / 17280.0 * c
        + l * l * (2029301.0 + 1492050.0 * l0 + 457875.0 * l0_2 + 78750.0 * l0_3) / 746496.0
        - l * l * 25.0 * (49.0 + 30.0 * l0) / 3456.0 * c
        + l * (-126292817.0 - 95368260.0 * l0 - 30944250.0 * l0_2 - 5130000.0 * l0_3 - 675000.0 * l0_4)
            / 22394880.0
        + l * 5.0 * (362.0 + 245.0 * l0 + 75.0 * l0_2) / 1728.0 * c;
    1.5 + t1 / ell + t2 / ell.powi(2) + t3 / ell.powi(3) + t4 / ell.powi(4)
}

/// `V4(ℓ)` as a function of `log ℓ0` and `c^V_{2,0}`.
pub fn vertex_series(ell: f64, l0: f64, c: f64) -> f64 {
    let l = ell.ln();
    let t3 = -5.0 / 12.0 * l + (8.0 + 5.0 * l0) / 12.0;
    let t4 = -25.0 / 96.0 * l * l + l * (-167.0 + 75.0 * l0) / 144.0 + c;
    -0.5 / ell.powi(2) + t3 / ell.powi(3) + t4 / ell.powi(4)
}

/// Finds a root of `f` in `[lo, hi]` by bisection to width `tol`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.signum() != fhi.signum()) || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::Calibration(format!("no sign change on [{lo}, {hi}]")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Root-finding tolerance on each constant.
pub const CALIBRATION_TOL: f64 = 1e-10;

/// Brackets used by [`calibrate_constants`]. `log ℓ0` has two real roots for
/// typical kernels; the default bracket selects the negative one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Brackets {
    pub log_l0: (f64, f64),
    pub c_theta: (f64, f64),
    pub c_v: (f64, f64),
}

impl Default for Brackets {
    fn default() -> Self {
        Brackets { log_l0: (-5.0, 0.0), c_theta: (-100.0, 100.0), c_v: (-100.0, 100.0) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub log_l0: f64,
    pub c_theta_1_0: f64,
    pub c_v_2_0: f64,
}

/// Fixes `log ℓ0`, then `c^Θ_{1,0}` and `c^V_{2,0}`, so the series equal the layer-1 values.
pub fn calibrate_constants(k1: f64, theta1: f64, v1: f64, brackets: &Brackets) -> Result<Calibration> {
    let (a, b) = brackets.log_l0;
    let log_l0 = bisect(|l0| kernel_series(1.0, l0) - k1, a, b, CALIBRATION_TOL)?;
    let (a, b) = brackets.c_theta;
    let c_theta_1_0 = bisect(|c| ntk_series(1.0, log_l0, c) - theta1, a, b, CALIBRATION_TOL)?;
    let (a, b) = brackets.c_v;
    let c_v_2_0 = bisect(|c| vertex_series(1.0, log_l0, c) - v1, a, b, CALIBRATION_TOL)?;
    Ok(Calibration { log_l0, c_theta_1_0, c_v_2_0 })
}

/// Discrepancy between a trajectory and a series at one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub ell: usize,
    /// `|rec − exp| / |rec|`, or `|rec − exp|` when `absolute` is set.
    pub value: f64,
    /// The recursion value was zero so the error is absolute.
    pub absolute: bool,
}

pub fn residual(traj: &Trajectory, table: &ExpansionTable) -> Vec<Residual> {
    traj.states
        .iter()
        .map(|s| {
            let rec = s.get(table.tensor);
            let diff = (rec - eval_expansion(table, s.ell as f64)).abs();
            if rec == 0.0 {
                Residual { ell: s.ell, value: diff, absolute: true }
            } else {
                Residual { ell: s.ell, value: diff / rec.abs(), absolute: false }
            }
        })
        .collect()
}
