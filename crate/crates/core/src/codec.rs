//! The SDMP message transform.
//!
//! A message is framed (8-byte big-endian length header plus zero padding),
//! then turned into shares in one of two modes:
//!
//! * **Chain**: the frame is cut into `k` equal parts, each part is
//!   encrypted with its own keystream slice `E_i`, and adjacent encrypted
//!   parts are combined pairwise: `D_1 = E_1`, `D_i = E_{i-1} ^ E_i`.
//!   Recovering `E_i` needs the prefix XOR `D_1 ^ ... ^ D_i`, so every share
//!   is required.
//! * **Threshold**: the whole frame is encrypted and then split with
//!   (t, n) secret sharing, which tolerates the loss of `n - t` shares.
//!
//! [`redundancy_policy`] picks between the two from path count, per-path hop
//! counts and link churn.

use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::secret_sharing::{self, Share, SharePolicy, SharingError};

/// Length of the frame header carrying the payload length.
pub const FRAME_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid policy: {0}")]
    Policy(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("missing share {0}")]
    MissingShare(u8),
    #[error("insufficient shares: have {have}, need {need}")]
    InsufficientShares { have: usize, need: usize },
    #[error("integrity check failed: {0}")]
    Integrity(String),
    #[error(transparent)]
    Sharing(SharingError),
}

impl From<SharingError> for CodecError {
    fn from(err: SharingError) -> Self {
        match err {
            SharingError::Policy(msg) => CodecError::Policy(msg),
            SharingError::InsufficientShares { have, need } => {
                CodecError::InsufficientShares { have, need }
            }
            SharingError::Shape { expected, found } => CodecError::Shape(format!(
                "share payload lengths differ ({expected} vs {found})"
            )),
            other => CodecError::Sharing(other),
        }
    }
}

/// 256-bit symmetric key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Key(pub [u8; 32]);

impl Key {
    pub const ZERO: Key = Key([0; 32]);

    /// Parses exactly 64 hex characters.
    pub fn from_hex(text: &str) -> Result<Key, CodecError> {
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(text.trim(), &mut bytes)
            .map_err(|e| CodecError::Policy(format!("key must be 64 hex characters: {e}")))?;
        Ok(Key(bytes))
    }
}

impl std::fmt::Debug for Key {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Key(..)")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MessageId(pub [u8; 16]);

impl std::fmt::Display for MessageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: MessageId,
    pub payload: Vec<u8>,
}

impl Message {
    pub fn new(id: MessageId, payload: Vec<u8>) -> Self {
        Message { id, payload }
    }
}

/// SHA-256 of the plaintext payload. The only digest used anywhere in the crate.
pub fn payload_digest(payload: &[u8]) -> [u8; 32] {
    Sha256::digest(payload).into()
}

/// Deterministic keystream standing in for the link-layer cipher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Keystream {
    /// All zero bytes. Encryption is the identity; for tests only.
    Zero,
    /// Block `b` (from 0) is
    /// `SHA-256("SDMP-KS" || key || message_id || fragment as u32 BE || b as u64 BE)`;
    /// the stream is the concatenation of blocks truncated to the requested length.
    #[default]
    Counter,
}

impl Keystream {
    const DOMAIN: &'static [u8] = b"SDMP-KS";

    pub fn generate(self, key: &Key, id: &MessageId, fragment: u32, len: usize) -> Vec<u8> {
        match self {
            Keystream::Zero => vec![0; len],
            Keystream::Counter => {
                let mut out = Vec::with_capacity(len + 32);
                let mut prefix = Sha256::new();
                prefix.update(Self::DOMAIN);
                prefix.update(key.0);
                prefix.update(id.0);
                prefix.update(fragment.to_be_bytes());
                let mut block = 0u64;
                while out.len() < len {
                    let mut hasher = prefix.clone();
                    hasher.update(block.to_be_bytes());
                    out.extend_from_slice(&hasher.finalize());
                    block += 1;
                }
                out.truncate(len);
                out
            }
        }
    }

    /// XORs the keystream for `fragment` into `data` in place.
    pub fn apply(self, key: &Key, id: &MessageId, fragment: u32, data: &mut [u8]) {
        if self == Keystream::Zero {
            return;
        }
        let stream = self.generate(key, id, fragment, data.len());
        xor_into(data, &stream);
    }
}

fn xor_into(dst: &mut [u8], src: &[u8]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d ^= s;
    }
}

/// How a message is turned into shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncodingPolicy {
    Chain { k: u8 },
    Threshold(SharePolicy),
}

impl EncodingPolicy {
    pub fn chain(k: usize) -> Result<Self, CodecError> {
        match k {
            1..=255 => Ok(EncodingPolicy::Chain { k: k as u8 }),
            _ => Err(CodecError::Policy(format!("k must be in 1..=255, got {k}"))),
        }
    }

    pub fn threshold(t: usize, n: usize) -> Result<Self, CodecError> {
        Ok(EncodingPolicy::Threshold(SharePolicy::new(t, n)?))
    }

    /// Number of shares produced.
    pub fn share_count(&self) -> usize {
        match self {
            EncodingPolicy::Chain { k } => *k as usize,
            EncodingPolicy::Threshold(p) => p.shares(),
        }
    }

    /// Number of shares a holder of the key needs.
    pub fn required(&self) -> usize {
        match self {
            EncodingPolicy::Chain { k } => *k as usize,
            EncodingPolicy::Threshold(p) => p.threshold(),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            EncodingPolicy::Chain { .. } => "chain",
            EncodingPolicy::Threshold(_) => "threshold",
        }
    }
}

impl std::fmt::Display for EncodingPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EncodingPolicy::Chain { k } => write!(f, "chain k={k}"),
            EncodingPolicy::Threshold(p) => {
                write!(f, "threshold t={} n={}", p.threshold(), p.shares())
            }
        }
    }
}

/// Everything about a bundle except the share payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BundleMeta {
    pub policy: EncodingPolicy,
    pub message_id: MessageId,
    pub digest: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareBundle {
    pub meta: BundleMeta,
    pub shares: Vec<Share>,
}

/// Frames `payload` and cuts the frame into `k` contiguous equal-length parts.
pub fn fragment(payload: &[u8], k: usize) -> Result<Vec<Vec<u8>>, CodecError> {
    if k == 0 {
        return Err(CodecError::Policy(
            "fragment count must be at least 1".into(),
        ));
    }
    let framed_len = FRAME_HEADER_LEN + payload.len();
    let part_len = framed_len.div_ceil(k);
    let mut frame = Vec::with_capacity(part_len * k);
    frame.extend_from_slice(&(payload.len() as u64).to_be_bytes());
    frame.extend_from_slice(payload);
    frame.resize(part_len * k, 0);
    Ok(frame.chunks(part_len).map(<[u8]>::to_vec).collect())
}

/// Inverse of [`fragment`]. Rejects a header that overruns the frame and
/// nonzero padding.
pub fn defragment(parts: &[Vec<u8>]) -> Result<Vec<u8>, CodecError> {
    let frame: Vec<u8> = parts.concat();
    if frame.len() < FRAME_HEADER_LEN {
        return Err(CodecError::Shape(format!(
            "frame of {} bytes is shorter than its header",
            frame.len()
        )));
    }
    let (header, body) = frame.split_at(FRAME_HEADER_LEN);
    let declared = u64::from_be_bytes(header.try_into().expect("8-byte header"));
    if declared > body.len() as u64 {
        return Err(CodecError::Shape(format!(
            "frame declares {declared} bytes but carries {}",
            body.len()
        )));
    }
    let (payload, padding) = body.split_at(declared as usize);
    if padding.iter().any(|&b| b != 0) {
        return Err(CodecError::Shape("nonzero frame padding".into()));
    }
    Ok(payload.to_vec())
}

/// Encrypts each part and combines adjacent encrypted parts pairwise.
pub fn chain_encode(
    parts: &[Vec<u8>],
    keystream: Keystream,
    key: &Key,
    id: &MessageId,
) -> Result<Vec<Share>, CodecError> {
    if parts.is_empty() || parts.len() > 255 {
        return Err(CodecError::Policy(format!(
            "chain needs 1..=255 parts, got {}",
            parts.len()
        )));
    }
    let len = parts[0].len();
    if parts.iter().any(|p| p.len() != len) {
        return Err(CodecError::Shape("chain parts differ in length".into()));
    }
    let mut shares = Vec::with_capacity(parts.len());
    let mut previous: Option<Vec<u8>> = None;
    for (i, part) in parts.iter().enumerate() {
        let index = (i + 1) as u8;
        let mut encrypted = part.clone();
        keystream.apply(key, id, index as u32, &mut encrypted);
        let mut combined = encrypted.clone();
        if let Some(prev) = &previous {
            xor_into(&mut combined, prev);
        }
        shares.push(Share::new(index, combined));
        previous = Some(encrypted);
    }
    Ok(shares)
}

/// Orders shares `1..=k` and reports the lowest missing index.
fn chain_slots(shares: &[Share], k: usize) -> Result<Vec<Option<&Share>>, CodecError> {
    let mut slots: Vec<Option<&Share>> = vec![None; k];
    for share in shares {
        let index = share.index as usize;
        if index == 0 || index > k {
            return Err(CodecError::Shape(format!(
                "share index {index} outside 1..={k}"
            )));
        }
        match slots[index - 1] {
            Some(existing) if existing.payload != share.payload => {
                return Err(CodecError::Sharing(SharingError::DuplicateIndex(
                    share.index,
                )));
            }
            _ => slots[index - 1] = Some(share),
        }
    }
    let len = shares.first().map(|s| s.payload.len()).unwrap_or(0);
    if shares.iter().any(|s| s.payload.len() != len) {
        return Err(CodecError::Shape("chain shares differ in length".into()));
    }
    Ok(slots)
}

/// Inverts [`chain_encode`]. Every index in `1..=k` must be present.
pub fn chain_decode(
    shares: &[Share],
    k: usize,
    keystream: Keystream,
    key: &Key,
    id: &MessageId,
) -> Result<Vec<Vec<u8>>, CodecError> {
    let slots = chain_slots(shares, k)?;
    if let Some(gap) = slots.iter().position(Option::is_none) {
        return Err(CodecError::MissingShare((gap + 1) as u8));
    }
    Ok(prefix_decode(&slots, keystream, key, id))
}

/// Best-effort decode with missing shares treated as all-zero payloads.
///
/// Parts before the first gap come out right; every part from the gap on
/// is off by the missing combination.
pub fn chain_decode_partial(
    shares: &[Share],
    k: usize,
    keystream: Keystream,
    key: &Key,
    id: &MessageId,
) -> Result<Vec<Vec<u8>>, CodecError> {
    let slots = chain_slots(shares, k)?;
    Ok(prefix_decode(&slots, keystream, key, id))
}

fn prefix_decode(
    slots: &[Option<&Share>],
    keystream: Keystream,
    key: &Key,
    id: &MessageId,
) -> Vec<Vec<u8>> {
    let len = slots
        .iter()
        .flatten()
        .map(|s| s.payload.len())
        .next()
        .unwrap_or(0);
    let mut running = vec![0u8; len];
    slots
        .iter()
        .enumerate()
        .map(|(i, slot)| {
            if let Some(share) = slot {
                xor_into(&mut running, &share.payload);
            }
            let mut part = running.clone();
            keystream.apply(key, id, (i + 1) as u32, &mut part);
            part
        })
        .collect()
}

/// Turns a message into a share bundle.
///
/// Threshold mode encrypts the whole frame with fragment index 1, so a
/// chain with `k = 1` and a threshold bundle with `t = 1` carry the same
/// ciphertext.
pub fn encode_message<R: RngCore + ?Sized>(
    message: &Message,
    policy: EncodingPolicy,
    key: &Key,
    keystream: Keystream,
    randomness: &mut R,
) -> Result<ShareBundle, CodecError> {
    let shares = match policy {
        EncodingPolicy::Chain { k } => {
            let parts = fragment(&message.payload, k as usize)?;
            chain_encode(&parts, keystream, key, &message.id)?
        }
        EncodingPolicy::Threshold(share_policy) => {
            let mut frame = fragment(&message.payload, 1)?.remove(0);
            keystream.apply(key, &message.id, 1, &mut frame);
            secret_sharing::split(&frame, share_policy, randomness)
        }
    };
    Ok(ShareBundle {
        meta: BundleMeta {
            policy,
            message_id: message.id,
            digest: payload_digest(&message.payload),
        },
        shares,
    })
}

/// Recovers the message from whatever shares the bundle holds and checks the digest.
pub fn decode_bundle(
    bundle: &ShareBundle,
    key: &Key,
    keystream: Keystream,
) -> Result<Message, CodecError> {
    let meta = &bundle.meta;
    let id = &meta.message_id;
    let parts = match meta.policy {
        EncodingPolicy::Chain { k } => {
            chain_decode(&bundle.shares, k as usize, keystream, key, id)?
        }
        EncodingPolicy::Threshold(share_policy) => {
            if let Some(bad) = bundle
                .shares
                .iter()
                .find(|s| s.index == 0 || s.index as usize > share_policy.shares())
            {
                return Err(CodecError::Shape(format!(
                    "share index {} outside 1..={}",
                    bad.index,
                    share_policy.shares()
                )));
            }
            let mut frame = secret_sharing::reconstruct(&bundle.shares, share_policy.threshold())?;
            keystream.apply(key, id, 1, &mut frame);
            vec![frame]
        }
    };
    let payload =
        defragment(&parts).map_err(|e| CodecError::Integrity(format!("bad frame: {e}")))?;
    if payload_digest(&payload) != meta.digest {
        return Err(CodecError::Integrity("payload digest mismatch".into()));
    }
    Ok(Message::new(*id, payload))
}

/// Picks the encoding for `n_paths` disjoint paths under link churn.
///
/// A path with `h` links delivers its share with probability `(1 - mobility)^h`.
/// Without churn every share arrives and the all-or-nothing chain is used.
/// Otherwise the result is a threshold policy over `n_paths` shares with the
/// largest `t` such that `P(at least t shares delivered) >= 1 - delta`,
/// falling back to `t = 1`.
pub fn redundancy_policy(
    n_paths: usize,
    mobility: f64,
    path_hop_counts: &[usize],
    delta: f64,
) -> Result<EncodingPolicy, CodecError> {
    if n_paths == 0 || n_paths > 255 {
        return Err(CodecError::Policy(format!(
            "path count must be in 1..=255, got {n_paths}"
        )));
    }
    if !(0.0..1.0).contains(&mobility) {
        return Err(CodecError::Policy(format!(
            "mobility must be in [0, 1), got {mobility}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(CodecError::Policy(format!(
            "delta must be in (0, 1), got {delta}"
        )));
    }
    if path_hop_counts.len() != n_paths {
        return Err(CodecError::Policy(format!(
            "{} hop counts for {n_paths} paths",
            path_hop_counts.len()
        )));
    }
    if mobility == 0.0 {
        return EncodingPolicy::chain(n_paths);
    }
    let delivery: Vec<f64> = path_hop_counts
        .iter()
        .map(|&hops| (1.0 - mobility).powi(hops as i32))
        .collect();
    let tail = delivery_tail(&delivery);
    let t = (1..=n_paths)
        .rev()
        .find(|&t| tail[t] >= 1.0 - delta)
        .unwrap_or(1);
    EncodingPolicy::threshold(t, n_paths)
}

/// `tail[j] = P(at least j of the independent events occur)`, exact over all
/// outcomes via the Poisson-binomial recurrence.
pub fn delivery_tail(probabilities: &[f64]) -> Vec<f64> {
    let n = probabilities.len();
    let mut exact = vec![0.0f64; n + 1];
    exact[0] = 1.0;
    for (i, &p) in probabilities.iter().enumerate() {
        for j in (0..=i + 1).rev() {
            let keep = exact[j] * (1.0 - p);
            let gain = if j > 0 { exact[j - 1] * p } else { 0.0 };
            exact[j] = keep + gain;
        }
    }
    let mut tail = vec![0.0f64; n + 2];
    for j in (0..=n).rev() {
        tail[j] = tail[j + 1] + exact[j];
    }
    tail.truncate(n + 1);
    tail
}
