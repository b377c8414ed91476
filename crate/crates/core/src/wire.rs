//! On-disk share file: one share plus the bundle metadata needed to rejoin it.
//!
//! ```text
//! "SDMP" | 0x01 | mode | params | message_id (16) | digest (32) | index (1) | len (4, BE) | payload
//! ```
//!
//! `mode` is 0x01 for chain (params: `k`, one byte) or 0x02 for threshold
//! (params: `t`, `n`, one byte each).

use thiserror::Error;

use crate::codec::{BundleMeta, EncodingPolicy, MessageId};
use crate::secret_sharing::{Share, SharePolicy};

pub const MAGIC: &[u8; 4] = b"SDMP";
pub const VERSION: u8 = 0x01;
pub const MODE_CHAIN: u8 = 0x01;
pub const MODE_THRESHOLD: u8 = 0x02;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("not a share file (bad magic)")]
    BadMagic,
    #[error("unsupported version {0:#04x}")]
    UnsupportedVersion(u8),
    #[error("unknown mode byte {0:#04x}")]
    UnknownMode(u8),
    #[error("invalid parameters: {0}")]
    BadParameters(String),
    #[error("truncated share file")]
    Truncated,
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShareFile {
    pub meta: BundleMeta,
    pub share: Share,
}

impl ShareFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = &self.share.payload;
        let mut out = Vec::with_capacity(64 + payload.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        match self.meta.policy {
            EncodingPolicy::Chain { k } => {
                out.push(MODE_CHAIN);
                out.push(k);
            }
            EncodingPolicy::Threshold(p) => {
                out.push(MODE_THRESHOLD);
                out.push(p.threshold() as u8);
                out.push(p.shares() as u8);
            }
        }
        out.extend_from_slice(&self.meta.message_id.0);
        out.extend_from_slice(&self.meta.digest);
        out.push(self.share.index);
        out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
        out.extend_from_slice(payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ShareFile, WireError> {
        let mut reader = Reader(bytes);
        if reader.take(4)? != MAGIC {
            return Err(WireError::BadMagic);
        }
        let version = reader.byte()?;
        if version != VERSION {
            return Err(WireError::UnsupportedVersion(version));
        }
        let policy = match reader.byte()? {
            MODE_CHAIN => EncodingPolicy::chain(reader.byte()? as usize)
                .map_err(|e| WireError::BadParameters(e.to_string()))?,
            MODE_THRESHOLD => {
                let t = reader.byte()? as usize;
                let n = reader.byte()? as usize;
                EncodingPolicy::Threshold(
                    SharePolicy::new(t, n).map_err(|e| WireError::BadParameters(e.to_string()))?,
                )
            }
            other => return Err(WireError::UnknownMode(other)),
        };
        let message_id = MessageId(reader.take(16)?.try_into().expect("16 bytes"));
        let digest: [u8; 32] = reader.take(32)?.try_into().expect("32 bytes");
        let index = reader.byte()?;
        if index == 0 || index as usize > policy.share_count() {
            return Err(WireError::BadParameters(format!(
                "share index {index} outside 1..={}",
                policy.share_count()
            )));
        }
        let len = u32::from_be_bytes(reader.take(4)?.try_into().expect("4 bytes")) as usize;
        let payload = reader.take(len)?.to_vec();
        if !reader.0.is_empty() {
            return Err(WireError::TrailingBytes(reader.0.len()));
        }
        Ok(ShareFile {
            meta: BundleMeta {
                policy,
                message_id,
                digest,
            },
            share: Share::new(index, payload),
        })
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.0.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn byte(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
}
