use zeroize::Zeroizing;

use super::keys::{sub_sequence, Direction, METADATA_SUBINDEX, SECRET_SUBINDEX};
use crate::crypto::{open, seal, CryptoError, SessionKeys};

fn aad(index: usize) -> Vec<u8> {
    let mut a = b"httpa2 secret ".to_vec();
    a.extend_from_slice(&(index as u32).to_be_bytes());
    a
}

fn seq_for(seq: u64, index: usize) -> Result<u64, CryptoError> {
    if index as u64 >= METADATA_SUBINDEX - SECRET_SUBINDEX {
        return Err(CryptoError::NonceExhausted);
    }
    sub_sequence(seq, SECRET_SUBINDEX | index as u64)
}

/// Wraps an ordered secret list for the message with sequence `seq`. Each
/// ciphertext is bound to its index.
pub fn wrap_secrets<S: AsRef<[u8]>>(
    keys: &SessionKeys,
    dir: Direction,
    seq: u64,
    secrets: &[S],
) -> Result<Vec<Vec<u8>>, CryptoError> {
    secrets
        .iter()
        .enumerate()
        .map(|(i, s)| {
            seal(
                keys.suite,
                dir.write_key(keys),
                dir.iv(keys),
                seq_for(seq, i)?,
                s.as_ref(),
                &aad(i),
            )
        })
        .collect()
}

/// Unwraps in order; the error carries the first failing index.
pub fn unwrap_secrets(
    keys: &SessionKeys,
    dir: Direction,
    seq: u64,
    wrapped: &[Vec<u8>],
) -> Result<Vec<Zeroizing<Vec<u8>>>, usize> {
    wrapped
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let s = seq_for(seq, i).map_err(|_| i)?;
            open(keys.suite, dir.write_key(keys), dir.iv(keys), s, w, &aad(i))
                .map(Zeroizing::new)
                .map_err(|_| i)
        })
        .collect()
}
