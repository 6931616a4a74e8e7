use super::CryptoError;

/// Appends `0x80` then zeros up to the smallest multiple of `block` strictly
/// greater than the input length.
pub fn pad(body: &[u8], block: usize) -> Result<Vec<u8>, CryptoError> {
    if block == 0 {
        return Err(CryptoError::InvalidPaddingBlock);
    }
    let target = (body.len() / block + 1) * block;
    let mut out = Vec::with_capacity(target);
    out.extend_from_slice(body);
    out.push(0x80);
    out.resize(target, 0);
    Ok(out)
}

pub fn unpad(padded: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let end = padded
        .iter()
        .rposition(|&b| b != 0)
        .ok_or(CryptoError::MalformedPadding)?;
    if padded[end] != 0x80 {
        return Err(CryptoError::MalformedPadding);
    }
    Ok(padded[..end].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_input() {
        let p = pad(b"", 256).unwrap();
        assert_eq!(p.len(), 256);
        assert_eq!(p[0], 0x80);
        assert!(p[1..].iter().all(|&b| b == 0));
    }

    #[test]
    fn boundary_lengths() {
        // 255 + marker fills exactly one block; 256 needs a second block
        assert_eq!(pad(&[1; 255], 256).unwrap().len(), 256);
        assert_eq!(pad(&[1; 256], 256).unwrap().len(), 512);
        assert_eq!(pad(&[1; 3], 1).unwrap().len(), 4);
        assert_eq!(pad(b"", 0), Err(CryptoError::InvalidPaddingBlock));
    }

    #[test]
    fn malformed() {
        assert_eq!(unpad(&[0, 0, 0]), Err(CryptoError::MalformedPadding));
        assert_eq!(unpad(&[1, 2, 0]), Err(CryptoError::MalformedPadding));
        assert_eq!(unpad(&[]), Err(CryptoError::MalformedPadding));
    }

    proptest! {
        #[test]
        fn round_trip(body in proptest::collection::vec(any::<u8>(), 0..600), block in 1usize..300) {
            let p = pad(&body, block).unwrap();
            prop_assert_eq!(p.len() % block, 0);
            prop_assert!(p.len() > body.len());
            prop_assert!(p.len() <= body.len() + block);
            prop_assert_eq!(unpad(&p).unwrap(), body);
        }
    }
}
