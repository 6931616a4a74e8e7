use serde::{Deserialize, Serialize};

use super::keys::{secret_cargo_key, sub_sequence, Direction, METADATA_SUBINDEX, SECRET_SUBINDEX};
use crate::crypto::{open, pad, seal, unpad, CryptoError, SessionKeys};
use crate::wire::{b64_decode, b64_encode, names, AttestHeaderLine, Item, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    /// Replaced by its ciphertext.
    Encrypted,
    /// Left readable; the tag travels in the metadata.
    Signed,
}

/// A protected span of the plaintext body. `key_index` −1 is the session
/// write key; `k ≥ 0` names provisioned secret `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub offset: usize,
    pub length: usize,
    #[serde(default = "session_key_index")]
    pub key_index: i64,
    #[serde(default = "encrypted")]
    pub kind: RegionKind,
}

fn session_key_index() -> i64 {
    -1
}

fn encrypted() -> RegionKind {
    RegionKind::Encrypted
}

impl Region {
    pub fn encrypted(offset: usize, length: usize, key_index: i64) -> Self {
        Region {
            offset,
            length,
            key_index,
            kind: RegionKind::Encrypted,
        }
    }

    pub fn signed(offset: usize, length: usize, key_index: i64) -> Self {
        Region {
            offset,
            length,
            key_index,
            kind: RegionKind::Signed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct MetaEntry {
    ki: i64,
    off: usize,
    len: usize,
    kind: RegionKind,
    ct: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    tag: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pad: Option<usize>,
}

const CONTENT_TYPE: &str = "application/octet-stream";
const META_AAD: &[u8] = b"httpa2 cargo meta";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CargoError {
    #[error("cargo regions overlap")]
    OverlappingRegions,
    #[error("cargo region outside the body")]
    RegionOutOfBounds,
    #[error("too many cargo regions")]
    TooManyRegions,
    #[error("no secret at key index {0}")]
    UnknownKeyIndex(i64),
    #[error("cargo authentication failed")]
    AuthenticationFailure,
    #[error("malformed cargo: {0}")]
    Malformed(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Everything that selects keys and nonces for one message's cargo.
pub struct CargoContext<'a, S: AsRef<[u8]>> {
    pub keys: &'a SessionKeys,
    pub dir: Direction,
    pub seq: u64,
    pub secrets: &'a [S],
    /// Pads encrypted regions to a multiple of this many bytes (0 = off).
    pub padding_block: usize,
}

impl<S: AsRef<[u8]>> CargoContext<'_, S> {
    fn key_for(&self, ki: i64) -> Result<zeroize::Zeroizing<Vec<u8>>, CargoError> {
        if ki == -1 {
            return Ok(zeroize::Zeroizing::new(self.dir.write_key(self.keys).to_vec()));
        }
        let secret = usize::try_from(ki)
            .ok()
            .and_then(|k| self.secrets.get(k))
            .ok_or(CargoError::UnknownKeyIndex(ki))?;
        Ok(zeroize::Zeroizing::new(secret_cargo_key(
            self.keys,
            secret.as_ref(),
            self.dir,
        )))
    }

    fn region_aad(i: usize, e: &MetaEntry) -> Vec<u8> {
        let mut aad = b"httpa2 cargo ".to_vec();
        aad.extend_from_slice(&(i as u32).to_be_bytes());
        aad.extend_from_slice(&e.ki.to_be_bytes());
        aad.push(match e.kind {
            RegionKind::Encrypted => b'e',
            RegionKind::Signed => b's',
        });
        aad
    }
}

fn check_layout(spans: impl Iterator<Item = (usize, usize)>, body_len: usize) -> Result<(), CargoError> {
    let mut end = 0usize;
    for (i, (off, len)) in spans.enumerate() {
        let stop = off.checked_add(len).ok_or(CargoError::RegionOutOfBounds)?;
        if stop > body_len {
            return Err(CargoError::RegionOutOfBounds);
        }
        if i > 0 && off < end {
            return Err(CargoError::OverlappingRegions);
        }
        end = stop;
    }
    Ok(())
}

/// Protects `regions` of `body` in place. Unprotected bytes are copied
/// through verbatim.
pub fn seal_cargo<S: AsRef<[u8]>>(
    ctx: &CargoContext<'_, S>,
    body: &[u8],
    regions: &[Region],
) -> Result<(Vec<u8>, AttestHeaderLine), CargoError> {
    let mut sorted = regions.to_vec();
    sorted.sort_by_key(|r| r.offset);
    check_layout(sorted.iter().map(|r| (r.offset, r.length)), body.len())?;
    if sorted.len() as u64 >= SECRET_SUBINDEX {
        return Err(CargoError::TooManyRegions);
    }
    let suite = ctx.keys.suite;
    let iv = ctx.dir.iv(ctx.keys);
    let mut out = Vec::with_capacity(body.len() + 32 * sorted.len());
    let mut meta = Vec::with_capacity(sorted.len());
    let mut cursor = 0;
    for (i, r) in sorted.iter().enumerate() {
        out.extend_from_slice(&body[cursor..r.offset]);
        let plain = &body[r.offset..r.offset + r.length];
        let key = ctx.key_for(r.key_index)?;
        let nonce_seq = sub_sequence(ctx.seq, i as u64)?;
        let mut entry = MetaEntry {
            ki: r.key_index,
            off: out.len(),
            len: 0,
            kind: r.kind,
            ct: CONTENT_TYPE.into(),
            tag: None,
            pad: None,
        };
        let aad = CargoContext::<S>::region_aad(i, &entry);
        match r.kind {
            RegionKind::Encrypted => {
                let data = if ctx.padding_block > 0 {
                    entry.pad = Some(ctx.padding_block);
                    pad(plain, ctx.padding_block)?
                } else {
                    plain.to_vec()
                };
                let ct = seal(suite, &key, iv, nonce_seq, &data, &aad)?;
                entry.len = ct.len();
                out.extend_from_slice(&ct);
            }
            RegionKind::Signed => {
                let mut signed_aad = aad;
                signed_aad.extend_from_slice(plain);
                let tag = seal(suite, &key, iv, nonce_seq, b"", &signed_aad)?;
                entry.tag = Some(b64_encode(&tag));
                entry.len = plain.len();
                out.extend_from_slice(plain);
            }
        }
        meta.push(entry);
        cursor = r.offset + r.length;
    }
    out.extend_from_slice(&body[cursor..]);
    let json = serde_json::to_vec(&meta).expect("metadata serializes");
    let sealed = seal(
        suite,
        ctx.dir.write_key(ctx.keys),
        iv,
        sub_sequence(ctx.seq, METADATA_SUBINDEX)?,
        &json,
        META_AAD,
    )?;
    let line = AttestHeaderLine::new(names::CARGO, Value::Item(Item::bytes(sealed)))
        .expect("cargo shape");
    Ok((out, line))
}

/// Inverse of `seal_cargo`: returns the plaintext body and the regions in
/// plaintext coordinates.
pub fn open_cargo<S: AsRef<[u8]>>(
    ctx: &CargoContext<'_, S>,
    body: &[u8],
    cargo: &AttestHeaderLine,
) -> Result<(Vec<u8>, Vec<Region>), CargoError> {
    let sealed = cargo
        .value()
        .as_item()
        .filter(|i| i.params.is_empty())
        .and_then(|i| i.bare.as_bytes())
        .ok_or_else(|| CargoError::Malformed("Attest-Cargo is not a byte sequence".into()))?;
    let suite = ctx.keys.suite;
    let iv = ctx.dir.iv(ctx.keys);
    let meta = open_meta(ctx, sealed)?;
    check_layout(meta.iter().map(|e| (e.off, e.len)), body.len())?;
    let mut out = Vec::with_capacity(body.len());
    let mut regions = Vec::with_capacity(meta.len());
    let mut cursor = 0;
    for (i, e) in meta.iter().enumerate() {
        out.extend_from_slice(&body[cursor..e.off]);
        let chunk = &body[e.off..e.off + e.len];
        let key = ctx.key_for(e.ki)?;
        let nonce_seq = sub_sequence(ctx.seq, i as u64)?;
        let aad = CargoContext::<S>::region_aad(i, e);
        let offset = out.len();
        match e.kind {
            RegionKind::Encrypted => {
                if e.tag.is_some() {
                    return Err(CargoError::Malformed("tag on encrypted region".into()));
                }
                let data = open(suite, &key, iv, nonce_seq, chunk, &aad)
                    .map_err(|_| CargoError::AuthenticationFailure)?;
                let plain = match e.pad {
                    Some(_) => unpad(&data).map_err(|_| CargoError::AuthenticationFailure)?,
                    None => data,
                };
                out.extend_from_slice(&plain);
            }
            RegionKind::Signed => {
                let tag = e
                    .tag
                    .as_deref()
                    .and_then(|t| b64_decode(t).ok())
                    .ok_or_else(|| CargoError::Malformed("signed region without tag".into()))?;
                let mut signed_aad = aad;
                signed_aad.extend_from_slice(chunk);
                open(suite, &key, iv, nonce_seq, &tag, &signed_aad)
                    .map_err(|_| CargoError::AuthenticationFailure)?;
                out.extend_from_slice(chunk);
            }
        }
        regions.push(Region {
            offset,
            length: out.len() - offset,
            key_index: e.ki,
            kind: e.kind,
        });
        cursor = e.off + e.len;
    }
    out.extend_from_slice(&body[cursor..]);
    Ok((out, regions))
}

fn open_meta<S: AsRef<[u8]>>(
    ctx: &CargoContext<'_, S>,
    sealed: &[u8],
) -> Result<Vec<MetaEntry>, CargoError> {
    let json = open(
        ctx.keys.suite,
        ctx.dir.write_key(ctx.keys),
        ctx.dir.iv(ctx.keys),
        sub_sequence(ctx.seq, METADATA_SUBINDEX)?,
        sealed,
        META_AAD,
    )
    .map_err(|_| CargoError::AuthenticationFailure)?;
    serde_json::from_slice(&json).map_err(|e| CargoError::Malformed(e.to_string()))
}
