//! Arithmetic over GF(2^8) with reduction polynomial x^8+x^4+x^3+x^2+1 (0x11D),
//! and the deterministic coefficient generator shared by encoder and decoder.
//!
//! Coefficients are part of the wire contract. For a session seed `s`, repair id
//! `k` and source id `i`:
//!
//! ```text
//! x = s ^ rotl(k, 32) ^ rotl(i, 7)
//! z = x + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z = z ^ (z >> 31)
//! coefficient = z & 0xFF
//! ```
//!
//! All arithmetic is wrapping 64-bit.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};

use thiserror::Error;

/// Reduction polynomial, including the x^8 term.
pub const POLY: u16 = 0x11D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GaloisError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

const fn clmul_reduce(a: u8, b: u8) -> u8 {
    let mut a = a as u16;
    let mut b = b;
    let mut r: u16 = 0;
    while b != 0 {
        if b & 1 != 0 {
            r ^= a;
        }
        a <<= 1;
        if a & 0x100 != 0 {
            a ^= POLY;
        }
        b >>= 1;
    }
    r as u8
}

const fn build_mul_table() -> [[u8; 256]; 256] {
    let mut t = [[0u8; 256]; 256];
    let mut a = 0;
    while a < 256 {
        let mut b = a;
        while b < 256 {
            let p = clmul_reduce(a as u8, b as u8);
            t[a][b] = p;
            t[b][a] = p;
            b += 1;
        }
        a += 1;
    }
    t
}

const fn build_inv_table() -> [u8; 256] {
    let mut inv = [0u8; 256];
    let mut a = 1;
    while a < 256 {
        let mut b = 1;
        while b < 256 {
            if clmul_reduce(a as u8, b as u8) == 1 {
                inv[a] = b as u8;
                break;
            }
            b += 1;
        }
        a += 1;
    }
    inv
}

static MUL: [[u8; 256]; 256] = build_mul_table();
static INV: [u8; 256] = build_inv_table();

#[inline]
pub fn gf_add(a: u8, b: u8) -> u8 {
    a ^ b
}

#[inline]
pub fn gf_mul(a: u8, b: u8) -> u8 {
    MUL[a as usize][b as usize]
}

pub fn gf_inv(a: u8) -> Result<u8, GaloisError> {
    if a == 0 {
        return Err(GaloisError::ZeroInverse);
    }
    Ok(INV[a as usize])
}

/// `dst[j] ^= c * src[j]` for every j. The slices must have equal length.
pub fn mul_acc(dst: &mut [u8], src: &[u8], c: u8) {
    assert_eq!(dst.len(), src.len(), "mul_acc length mismatch");
    match c {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        _ => {
            let row = &MUL[c as usize];
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= row[*s as usize];
            }
        }
    }
}

/// `buf[j] = c * buf[j]` for every j.
pub fn mul_in_place(buf: &mut [u8], c: u8) {
    match c {
        1 => {}
        0 => buf.fill(0),
        _ => {
            let row = &MUL[c as usize];
            for b in buf.iter_mut() {
                *b = row[*b as usize];
            }
        }
    }
}

/// A field element with operator overloads. Subtraction equals addition.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(transparent)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    pub fn inv(self) -> Result<FieldElement, GaloisError> {
        gf_inv(self.0).map(FieldElement)
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        FieldElement(v)
    }
}

impl Add for FieldElement {
    type Output = FieldElement;
    fn add(self, rhs: FieldElement) -> FieldElement {
        FieldElement(self.0 ^ rhs.0)
    }
}

impl AddAssign for FieldElement {
    fn add_assign(&mut self, rhs: FieldElement) {
        self.0 ^= rhs.0;
    }
}

impl Sub for FieldElement {
    type Output = FieldElement;
    fn sub(self, rhs: FieldElement) -> FieldElement {
        self + rhs
    }
}

impl Mul for FieldElement {
    type Output = FieldElement;
    fn mul(self, rhs: FieldElement) -> FieldElement {
        FieldElement(gf_mul(self.0, rhs.0))
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: FieldElement) {
        *self = *self * rhs;
    }
}

impl Div for FieldElement {
    type Output = FieldElement;

    /// Panics on division by zero.
    fn div(self, rhs: FieldElement) -> FieldElement {
        self * rhs.inv().expect("division by zero in GF(256)")
    }
}

#[inline]
fn splitmix_finalize(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Coefficient a_{k,i} for repair `k` over source `i`.
#[inline]
pub fn coefficient(seed: u64, k: u64, i: u64) -> u8 {
    (splitmix_finalize(seed ^ k.rotate_left(32) ^ i.rotate_left(7)) & 0xFF) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientGenerator {
    pub seed: u64,
}

impl CoefficientGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn coefficient(&self, k: u64, i: u64) -> u8 {
        coefficient(self.seed, k, i)
    }

    /// Coefficients for sources `low..=high` of repair `k`.
    pub fn row(&self, k: u64, low: u64, high: u64) -> Vec<u8> {
        (low..=high).map(|i| coefficient(self.seed, k, i)).collect()
    }
}

/// One record of the golden-vector file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldenVector {
    pub seed: u64,
    pub k: u64,
    pub i: u64,
    pub coefficient: u8,
}

/// Golden vectors shipped with the crate.
pub const GOLDEN_VECTORS_CSV: &str = include_str!("../vectors/galois_vectors.csv");

/// Parses `seed,k,i,coefficient` CSV with a header line. Numbers may be decimal
/// or `0x`-prefixed hex.
pub fn parse_golden_vectors(text: &str) -> Result<Vec<GoldenVector>, String> {
    fn num(s: &str) -> Result<u64, String> {
        let s = s.trim();
        let r = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            Some(h) => u64::from_str_radix(h, 16),
            None => s.parse(),
        };
        r.map_err(|e| format!("bad number {s:?}: {e}"))
    }
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("seed")) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(format!("line {}: expected 4 columns", n + 1));
        }
        let c = num(cols[3])?;
        if c > 255 {
            return Err(format!("line {}: coefficient out of range", n + 1));
        }
        out.push(GoldenVector { seed: num(cols[0])?, k: num(cols[1])?, i: num(cols[2])?, coefficient: c as u8 });
    }
    Ok(out)
}

/// Returns the vectors whose recorded coefficient disagrees with [`coefficient`].
pub fn check_golden_vectors(vectors: &[GoldenVector]) -> Vec<(GoldenVector, u8)> {
    vectors
        .iter()
        .filter_map(|v| {
            let got = coefficient(v.seed, v.k, v.i);
            (got != v.coefficient).then_some((*v, got))
        })
        .collect()
}
