//! Matrix exponential via scaling-and-squaring with Padé approximants
//! (Higham 2005 degree selection), used as the propagator of constant-rate
//! systems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17_297_280.0, 8_648_640.0, 1_995_840.0, 277_200.0, 25_200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Form the [m/m] Padé numerator/denominator pair (U, V) given the even
/// powers of `a`, then solve (V - U) X = (V + U).
fn pade_solve(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = &v + &u;
    let q = &v - &u;
    q.lu()
        .solve(&p)
        .ok_or_else(|| Error::InvalidInput("singular Pade denominator in expm".into()))
}

fn pade_low(a: &DMatrix<f64>, coeffs: &[f64]) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    // U = A * sum_{odd} b_k A^{k-1}, V = sum_{even} b_k A^k, in powers of A^2.
    let mut u_poly = DMatrix::zeros(n, n);
    let mut v_poly = DMatrix::zeros(n, n);
    let mut a2k = id.clone();
    for k in 0..=(coeffs.len() - 1) / 2 {
        if 2 * k + 1 < coeffs.len() {
            u_poly += coeffs[2 * k + 1] * &a2k;
        }
        v_poly += coeffs[2 * k] * &a2k;
        if 2 * (k + 1) < coeffs.len() {
            a2k = &a2k * &a2;
        }
    }
    pade_solve(a * u_poly, v_poly)
}

fn pade_13(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let b = &B13;
    let u = a * (&a6 * (b[13] * &a6 + b[11] * &a4 + b[9] * &a2)
        + b[7] * &a6
        + b[5] * &a4
        + b[3] * &a2
        + b[1] * &id);
    let v = &a6 * (b[12] * &a6 + b[10] * &a4 + b[8] * &a2)
        + b[6] * &a6
        + b[4] * &a4
        + b[2] * &a2
        + b[0] * &id;
    pade_solve(u, v)
}

/// `exp(a)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: a.ncols() });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in expm input".into()));
    }
    let norm = one_norm(a);
    if norm <= THETA_3 {
        return pade_low(a, &B3);
    }
    if norm <= THETA_5 {
        return pade_low(a, &B5);
    }
    if norm <= THETA_7 {
        return pade_low(a, &B7);
    }
    if norm <= THETA_9 {
        return pade_low(a, &B9);
    }
    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as u32;
    let scaled = a / 2f64.powi(s as i32);
    let mut x = pade_13(&scaled)?;
    for _ in 0..s {
        x = &x * &x;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite entry in expm result".into()));
    }
    Ok(x)
}

/// Propagator `exp(dt * m)` of the constant-rate linear system.
pub fn propagator(m: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    if dt < 0.0 {
        return Err(Error::InvalidInput(format!("propagator needs dt >= 0, got {dt}")));
    }
    expm(&(m * dt))
}
