//! Pairwise similarity kernel: banded DTW, correntropy, Euclidean distance.
//!
//! One C-ABI entry point fills an N x N matrix over the rows of a series
//! block.  Results must match the host package's reference implementation
//! within 1e-9 per entry: 64-bit floats end to end, compensated
//! (Neumaier) accumulation for the long sums, and no reassociation across
//! pair boundaries.  Pairs are computed in parallel but written in a fixed
//! order, so output is bit-stable regardless of thread count.
//!
//! Error codes: 0 ok, 1 non-finite input (row/col reported), 2 unknown
//! measure, 3 bad descriptor (dims or ABI version), 4 invalid band.

use std::os::raw::c_char;

use rayon::prelude::*;

pub const ABI_VERSION: u32 = 1;
pub const VERSION: &str = "0.1.0";

/// Canonical contract string; the host hashes the same bytes and refuses a
/// mismatch during the load handshake.
pub const ABI_SIGNATURE: &str = "stlf-kernel-abi-v1|desc{abi:u32,measure:u32,n:u64,t:u64,band:i64,sigma:f64}|pairwise(desc,data,out,err)->i32|codes{ok:0,nonfinite:1,measure:2,dims:3,band:4}";

const MEASURE_EUCLIDEAN: u32 = 1;
const MEASURE_DTW: u32 = 2;
const MEASURE_CORRENTROPY: u32 = 3;

#[repr(C)]
pub struct JobDesc {
    pub abi_version: u32,
    pub measure: u32,
    pub n: u64,
    pub t: u64,
    pub band: i64,
    pub sigma: f64,
}

#[repr(C)]
#[derive(Default)]
pub struct ErrorInfo {
    pub code: i32,
    pub row: u64,
    pub col: u64,
}

pub const fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
        i += 1;
    }
    h
}

pub const ABI_HASH: u64 = fnv1a64(ABI_SIGNATURE.as_bytes());

#[no_mangle]
pub extern "C" fn stlf_kernel_version() -> *const c_char {
    concat!("0.1.0", "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn stlf_kernel_abi_hash() -> u64 {
    ABI_HASH
}

/// Neumaier-compensated sum; exact enough that accumulation order cannot
/// move the rounded result at the tolerances we promise.
#[derive(Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc.add(d * d);
    }
    acc.value().sqrt()
}

pub fn correntropy(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut acc = Neumaier::default();
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc.add((-(d * d) * inv).exp());
    }
    acc.value() / a.len() as f64
}

/// Classic dynamic-programming DTW with |a_i - b_j| local cost and steps
/// {match, insert, delete}, constrained to |i - j| <= band when band >= 0.
pub fn dtw(a: &[f64], b: &[f64], band: i64) -> f64 {
    let (la, lb) = (a.len(), b.len());
    let bw = if band < 0 { (la + lb) as i64 } else { band };
    let mut prev = vec![f64::INFINITY; lb];
    let mut cur = vec![f64::INFINITY; lb];
    for i in 0..la {
        let lo = ((i as i64) - bw).max(0) as usize;
        let hi = ((i as i64) + bw).min(lb as i64 - 1) as usize;
        for c in cur[lo..=hi].iter_mut() {
            *c = f64::INFINITY;
        }
        for j in lo..=hi {
            let cost = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut m = f64::INFINITY;
                if i > 0 {
                    m = m.min(prev[j]); // (i-1, j)
                    if j > 0 {
                        m = m.min(prev[j - 1]); // (i-1, j-1)
                    }
                }
                if j > lo {
                    m = m.min(cur[j - 1]); // (i, j-1)
                }
                m
            };
            cur[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[lb - 1]
}

fn find_nonfinite(data: &[f64], t: usize) -> Option<(u64, u64)> {
    data.iter()
        .position(|v| !v.is_finite())
        .map(|p| ((p / t) as u64, (p % t) as u64))
}

/// # Safety
/// `desc` must point to a valid descriptor; `data` must hold n*t doubles in
/// row-major order; `out` must hold n*n writable doubles; `err` (optional)
/// receives details when the return code is nonzero.
#[no_mangle]
pub unsafe extern "C" fn stlf_pairwise(
    desc: *const JobDesc,
    data: *const f64,
    out: *mut f64,
    err: *mut ErrorInfo,
) -> i32 {
    let set_err = |code: i32, row: u64, col: u64| {
        if !err.is_null() {
            *err = ErrorInfo { code, row, col };
        }
        code
    };
    if desc.is_null() || data.is_null() || out.is_null() {
        return set_err(3, 0, 0);
    }
    let d = &*desc;
    if d.abi_version != ABI_VERSION || d.n < 2 || d.t < 1 {
        return set_err(3, 0, 0);
    }
    let (n, t) = (d.n as usize, d.t as usize);
    let series = std::slice::from_raw_parts(data, n * t);
    let out = std::slice::from_raw_parts_mut(out, n * n);
    if let Some((row, col)) = find_nonfinite(series, t) {
        return set_err(1, row, col);
    }
    let compute: Box<dyn Fn(&[f64], &[f64]) -> f64 + Sync> = match d.measure {
        MEASURE_EUCLIDEAN => Box::new(|a, b| euclidean(a, b)),
        MEASURE_DTW => {
            if d.band < -1 {
                return set_err(4, 0, 0);
            }
            let band = d.band;
            Box::new(move |a, b| dtw(a, b, band))
        }
        MEASURE_CORRENTROPY => {
            if !(d.sigma > 0.0) {
                return set_err(2, 0, 0);
            }
            let sigma = d.sigma;
            Box::new(move |a, b| correntropy(a, b, sigma))
        }
        _ => return set_err(2, 0, 0),
    };

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    // parallel over the upper triangle; results land in pair order, so the
    // output does not depend on scheduling
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| compute(&series[i * t..(i + 1) * t], &series[j * t..(j + 1) * t]))
        .collect();
    out.fill(0.0);
    for (&(i, j), &v) in pairs.iter().zip(values.iter()) {
        out[i * n + j] = v;
        out[j * n + i] = v;
    }
    if d.measure == MEASURE_CORRENTROPY {
        for i in 0..n {
            out[i * n + i] = 1.0;
        }
    }
    set_err(0, 0, 0);
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dtw_loops(a: &[f64], b: &[f64]) -> f64 {
        let (la, lb) = (a.len(), b.len());
        let mut d = vec![vec![f64::INFINITY; lb]; la];
        for i in 0..la {
            for j in 0..lb {
                let cost = (a[i] - b[j]).abs();
                let prev = if i == 0 && j == 0 {
                    0.0
                } else {
                    let mut m = f64::INFINITY;
                    if i > 0 {
                        m = m.min(d[i - 1][j]);
                        if j > 0 {
                            m = m.min(d[i - 1][j - 1]);
                        }
                    }
                    if j > 0 {
                        m = m.min(d[i][j - 1]);
                    }
                    m
                };
                d[i][j] = cost + prev;
            }
        }
        d[la - 1][lb - 1]
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn dtw_matches_plain_dp_unbanded() {
        let mut seed = 7u64;
        for _ in 0..50 {
            let a: Vec<f64> = (0..17).map(|_| lcg(&mut seed)).collect();
            let b: Vec<f64> = (0..23).map(|_| lcg(&mut seed)).collect();
            assert!((dtw(&a, &b, -1) - dtw_loops(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn dtw_band_saturation() {
        let mut seed = 11u64;
        let a: Vec<f64> = (0..30).map(|_| lcg(&mut seed)).collect();
        let b: Vec<f64> = (0..30).map(|_| lcg(&mut seed)).collect();
        assert_eq!(dtw(&a, &b, 30), dtw(&a, &b, -1));
    }

    #[test]
    fn dtw_identity_and_spec_alignments() {
        let x = [1.0, 4.0, 2.0];
        assert_eq!(dtw(&x, &x, -1), 0.0);
        assert_eq!(dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0], -1), 0.0);
        assert_eq!(dtw(&[1.0, 3.0], &[1.0, 1.0, 3.0], -1), 0.0);
    }

    #[test]
    fn euclidean_hand_case() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
    }

    #[test]
    fn correntropy_hand_case() {
        let v = correntropy(&[0.0], &[1.0], 1.0);
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn neumaier_compensates() {
        let mut acc = Neumaier::default();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 1000.0);
    }

    #[test]
    fn pairwise_entry_point_roundtrip() {
        let n = 4usize;
        let t = 16usize;
        let mut seed = 3u64;
        let data: Vec<f64> = (0..n * t).map(|_| lcg(&mut seed)).collect();
        let mut out = vec![0.0; n * n];
        let mut err = ErrorInfo::default();
        let desc = JobDesc {
            abi_version: ABI_VERSION,
            measure: MEASURE_DTW,
            n: n as u64,
            t: t as u64,
            band: 5,
            sigma: 0.0,
        };
        let rc = unsafe {
            stlf_pairwise(&desc, data.as_ptr(), out.as_mut_ptr(), &mut err)
        };
        assert_eq!(rc, 0);
        for i in 0..n {
            assert_eq!(out[i * n + i], 0.0);
            for j in 0..n {
                assert_eq!(out[i * n + j], out[j * n + i]);
            }
        }
    }

    #[test]
    fn nonfinite_input_located() {
        let n = 3usize;
        let t = 5usize;
        let mut data = vec![0.5; n * t];
        data[1 * t + 3] = f64::NAN;
        let mut out = vec![0.0; n * n];
        let mut err = ErrorInfo::default();
        let desc = JobDesc {
            abi_version: ABI_VERSION,
            measure: MEASURE_EUCLIDEAN,
            n: n as u64,
            t: t as u64,
            band: -1,
            sigma: 0.0,
        };
        let rc = unsafe {
            stlf_pairwise(&desc, data.as_ptr(), out.as_mut_ptr(), &mut err)
        };
        assert_eq!(rc, 1);
        assert_eq!((err.row, err.col), (1, 3));
    }
}
