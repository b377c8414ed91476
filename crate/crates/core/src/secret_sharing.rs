//! (T, N) threshold secret sharing over GF(256).
//!
//! Every byte of the secret is the constant term of its own polynomial of
//! degree `t - 1`. Share `i` carries the evaluations of all those polynomials
//! at `x = i`, for `i = 1..=n`. Any `t` shares recover the secret by Lagrange
//! interpolation at `x = 0`; fewer reveal nothing about it.

use rand::RngCore;
use thiserror::Error;

use crate::gf256::{gf_mul, Gf256};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SharingError {
    #[error("invalid share policy: {0}")]
    Policy(String),
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("duplicate share index {0}")]
    DuplicateIndex(u8),
    #[error("share index 0 is reserved for the secret")]
    ZeroIndex,
    #[error("share payload lengths differ ({expected} vs {found})")]
    Shape { expected: usize, found: usize },
}

/// Threshold `t` out of `n` shares, `1 <= t <= n <= 255`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SharePolicy {
    threshold: u8,
    shares: u8,
}

impl SharePolicy {
    pub fn new(threshold: usize, shares: usize) -> Result<Self, SharingError> {
        if threshold == 0 {
            return Err(SharingError::Policy("t must be at least 1".into()));
        }
        if threshold > shares {
            return Err(SharingError::Policy(format!(
                "t exceeds n ({threshold} > {shares})"
            )));
        }
        if shares > 255 {
            return Err(SharingError::Policy(format!(
                "n must be at most 255, got {shares}"
            )));
        }
        Ok(SharePolicy {
            threshold: threshold as u8,
            shares: shares as u8,
        })
    }

    pub fn threshold(&self) -> usize {
        self.threshold as usize
    }

    pub fn shares(&self) -> usize {
        self.shares as usize
    }
}

/// One share: evaluation point and the evaluations for every secret byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Share {
    pub index: u8,
    pub payload: Vec<u8>,
}

impl Share {
    pub fn new(index: u8, payload: Vec<u8>) -> Self {
        Share { index, payload }
    }
}

/// Splits `secret` into `policy.shares()` shares.
///
/// Draws exactly `(t - 1) * secret.len()` bytes from `randomness`. Coefficient
/// `j` (degree `j + 1`) of byte position `p` is stream byte `p * (t - 1) + j`.
pub fn split<R: RngCore + ?Sized>(
    secret: &[u8],
    policy: SharePolicy,
    randomness: &mut R,
) -> Vec<Share> {
    let t = policy.threshold();
    let n = policy.shares();
    let degree = t - 1;
    let mut coefficients = vec![0u8; degree * secret.len()];
    randomness.fill_bytes(&mut coefficients);

    let mut shares: Vec<Share> = (1..=n)
        .map(|x| Share::new(x as u8, Vec::with_capacity(secret.len())))
        .collect();

    for (pos, &byte) in secret.iter().enumerate() {
        let coeffs = &coefficients[pos * degree..(pos + 1) * degree];
        for share in shares.iter_mut() {
            share.payload.push(evaluate(byte, coeffs, share.index));
        }
    }
    shares
}

/// Horner evaluation of `constant + c1 x + c2 x^2 + ...` at `x`.
fn evaluate(constant: u8, higher: &[u8], x: u8) -> u8 {
    let mut acc = 0u8;
    for &c in higher.iter().rev() {
        acc = gf_mul(acc, x) ^ c;
    }
    gf_mul(acc, x) ^ constant
}

/// Recovers the secret from at least `threshold` shares.
///
/// All supplied shares are validated; the first `threshold` of them are
/// interpolated.
pub fn reconstruct(shares: &[Share], threshold: usize) -> Result<Vec<u8>, SharingError> {
    if threshold == 0 {
        return Err(SharingError::Policy("t must be at least 1".into()));
    }
    if shares.len() < threshold {
        return Err(SharingError::InsufficientShares {
            have: shares.len(),
            need: threshold,
        });
    }
    let mut seen = [false; 256];
    for share in shares {
        if share.index == 0 {
            return Err(SharingError::ZeroIndex);
        }
        if std::mem::replace(&mut seen[share.index as usize], true) {
            return Err(SharingError::DuplicateIndex(share.index));
        }
    }
    let len = shares[0].payload.len();
    if let Some(bad) = shares.iter().find(|s| s.payload.len() != len) {
        return Err(SharingError::Shape {
            expected: len,
            found: bad.payload.len(),
        });
    }

    let used = &shares[..threshold];
    let weights = lagrange_at_zero(used);
    let mut secret = vec![0u8; len];
    for (share, weight) in used.iter().zip(weights) {
        for (out, &y) in secret.iter_mut().zip(&share.payload) {
            *out ^= gf_mul(y, weight.value());
        }
    }
    Ok(secret)
}

/// Lagrange basis values `l_i(0) = prod_{j != i} x_j / (x_j - x_i)`.
fn lagrange_at_zero(shares: &[Share]) -> Vec<Gf256> {
    shares
        .iter()
        .map(|si| {
            let xi = Gf256(si.index);
            let mut num = Gf256::ONE;
            let mut den = Gf256::ONE;
            for sj in shares.iter().filter(|sj| sj.index != si.index) {
                let xj = Gf256(sj.index);
                num *= xj;
                den *= xj + xi;
            }
            // Indices are distinct and nonzero, so den is nonzero.
            num * den.inverse().expect("distinct evaluation points")
        })
        .collect()
}
