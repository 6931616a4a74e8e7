use super::CryptoError;

/// Monotone per-direction sequence state. For a receiver it holds the last
/// accepted value, for a sender the last value sent; both start at 0 so the
/// first protected message carries 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SequenceCounter {
    value: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplayVerdict {
    Accept,
    Reject,
}

impl SequenceCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last(&self) -> u64 {
        self.value
    }

    /// Advances and returns the next value to send.
    pub fn next_to_send(&mut self) -> Result<u64, CryptoError> {
        if self.value >= u64::MAX - 1 {
            return Err(CryptoError::NonceExhausted);
        }
        self.value += 1;
        Ok(self.value)
    }

    /// Value the next call to `next_to_send` would return, without advancing.
    pub fn peek_next(&self) -> Result<u64, CryptoError> {
        if self.value >= u64::MAX - 1 {
            return Err(CryptoError::NonceExhausted);
        }
        Ok(self.value + 1)
    }

    pub fn reset(&mut self) {
        self.value = 0;
    }
}

/// Strict: accept only `last + 1`. Lenient: accept anything above `last`.
/// The counter moves only on acceptance.
pub fn accept_sequential_nonce(
    counter: &mut SequenceCounter,
    received: u64,
    strict: bool,
) -> ReplayVerdict {
    let ok = if strict {
        counter.value.checked_add(1) == Some(received)
    } else {
        received > counter.value
    };
    if ok && received != u64::MAX {
        counter.value = received;
        ReplayVerdict::Accept
    } else {
        ReplayVerdict::Reject
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(v: u64) -> SequenceCounter {
        SequenceCounter { value: v }
    }

    #[test]
    fn strict_rules() {
        let mut c = at(5);
        assert_eq!(accept_sequential_nonce(&mut c, 6, true), ReplayVerdict::Accept);
        assert_eq!(c.last(), 6);
        let mut c = at(5);
        assert_eq!(accept_sequential_nonce(&mut c, 5, true), ReplayVerdict::Reject);
        assert_eq!(accept_sequential_nonce(&mut c, 7, true), ReplayVerdict::Reject);
        assert_eq!(c.last(), 5);
    }

    #[test]
    fn lenient_rules() {
        let mut c = at(5);
        assert_eq!(accept_sequential_nonce(&mut c, 9, false), ReplayVerdict::Accept);
        assert_eq!(accept_sequential_nonce(&mut c, 7, false), ReplayVerdict::Reject);
        assert_eq!(accept_sequential_nonce(&mut c, 9, false), ReplayVerdict::Reject);
        assert_eq!(c.last(), 9);
    }

    #[test]
    fn sender_never_wraps() {
        let mut c = at(u64::MAX - 2);
        assert_eq!(c.next_to_send(), Ok(u64::MAX - 1));
        assert_eq!(c.next_to_send(), Err(CryptoError::NonceExhausted));
        let mut r = at(u64::MAX - 1);
        assert_eq!(accept_sequential_nonce(&mut r, u64::MAX, true), ReplayVerdict::Reject);
    }

    proptest! {
        #[test]
        fn receiver_never_decreases(seq in proptest::collection::vec(0u64..50, 0..60), strict: bool) {
            let mut c = SequenceCounter::new();
            let mut prev = 0;
            for s in seq {
                accept_sequential_nonce(&mut c, s, strict);
                prop_assert!(c.last() >= prev);
                prev = c.last();
            }
        }
    }
}
