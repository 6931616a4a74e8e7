use zeroize::Zeroizing;

use super::{CryptoError, NamedGroup, ProtocolRng};

/// An ephemeral (EC)DHE key pair. The private half is wiped on drop and has
/// no serialized form.
pub struct KeyShare {
    group: NamedGroup,
    public: Vec<u8>,
    private: Zeroizing<Vec<u8>>,
}

/// The transmittable half of a key share.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PublicKeyShare {
    pub group: String,
    pub public: Vec<u8>,
}

impl KeyShare {
    pub fn group(&self) -> NamedGroup {
        self.group
    }

    pub fn public(&self) -> &[u8] {
        &self.public
    }

    /// Rebuilds a share from a known private key, e.g. for test vectors.
    pub fn from_private(group: NamedGroup, private: &[u8]) -> Result<KeyShare, CryptoError> {
        let public = match group {
            NamedGroup::X25519 => {
                let sk: [u8; 32] = private.try_into().map_err(|_| CryptoError::BadLength {
                    what: "x25519 private key",
                    expected: 32,
                    got: private.len(),
                })?;
                let secret = x25519_dalek::StaticSecret::from(sk);
                x25519_dalek::PublicKey::from(&secret).as_bytes().to_vec()
            }
            NamedGroup::Secp256r1 => {
                let secret = p256::SecretKey::from_slice(private)
                    .map_err(|_| CryptoError::InvalidPeerShare("private scalar out of range"))?;
                p256::elliptic_curve::sec1::ToEncodedPoint::to_encoded_point(&secret.public_key(), false)
                    .as_bytes()
                    .to_vec()
            }
        };
        Ok(KeyShare {
            group,
            public,
            private: Zeroizing::new(private.to_vec()),
        })
    }

    pub fn public_share(&self) -> PublicKeyShare {
        PublicKeyShare {
            group: self.group.id().to_string(),
            public: self.public.clone(),
        }
    }
}

impl std::fmt::Debug for KeyShare {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyShare")
            .field("group", &self.group)
            .field("public", &self.public.len())
            .finish_non_exhaustive()
    }
}

pub fn generate_key_share(group: NamedGroup, rng: &ProtocolRng) -> KeyShare {
    match group {
        NamedGroup::X25519 => {
            let seed = Zeroizing::new(rng.array::<32>());
            let secret = x25519_dalek::StaticSecret::from(*seed);
            let public = x25519_dalek::PublicKey::from(&secret);
            KeyShare {
                group,
                public: public.as_bytes().to_vec(),
                private: Zeroizing::new(secret.to_bytes().to_vec()),
            }
        }
        NamedGroup::Secp256r1 => loop {
            let seed = Zeroizing::new(rng.array::<32>());
            // rejection-sample scalars outside [1, n)
            if let Ok(secret) = p256::SecretKey::from_slice(&seed[..]) {
                let point = p256::elliptic_curve::sec1::ToEncodedPoint::to_encoded_point(
                    &secret.public_key(),
                    false,
                );
                break KeyShare {
                    group,
                    public: point.as_bytes().to_vec(),
                    private: Zeroizing::new(secret.to_bytes().to_vec()),
                };
            }
        },
    }
}

/// Generates from a group token, failing on unregistered groups.
pub fn generate_key_share_for(group: &str, rng: &ProtocolRng) -> Result<KeyShare, CryptoError> {
    NamedGroup::from_id(group)
        .map(|g| generate_key_share(g, rng))
        .ok_or_else(|| CryptoError::UnsupportedGroup(group.to_string()))
}

pub fn derive_shared_secret(
    own: &KeyShare,
    peer_public: &[u8],
) -> Result<Zeroizing<Vec<u8>>, CryptoError> {
    if peer_public.len() != own.group.share_len() {
        return Err(CryptoError::InvalidPeerShare("wrong length for group"));
    }
    match own.group {
        NamedGroup::X25519 => {
            let mut sk = [0u8; 32];
            sk.copy_from_slice(&own.private);
            let secret = x25519_dalek::StaticSecret::from(sk);
            zeroize::Zeroize::zeroize(&mut sk);
            let mut pk = [0u8; 32];
            pk.copy_from_slice(peer_public);
            let shared = secret.diffie_hellman(&x25519_dalek::PublicKey::from(pk));
            if !shared.was_contributory() {
                return Err(CryptoError::InvalidPeerShare("low-order point"));
            }
            Ok(Zeroizing::new(shared.as_bytes().to_vec()))
        }
        NamedGroup::Secp256r1 => {
            let secret = p256::SecretKey::from_slice(&own.private)
                .map_err(|_| CryptoError::InvalidPeerShare("corrupt private share"))?;
            if peer_public[0] != 0x04 {
                return Err(CryptoError::InvalidPeerShare("not an uncompressed point"));
            }
            let peer = p256::PublicKey::from_sec1_bytes(peer_public)
                .map_err(|_| CryptoError::InvalidPeerShare("point not on curve"))?;
            let shared = p256::ecdh::diffie_hellman(secret.to_nonzero_scalar(), peer.as_affine());
            Ok(Zeroizing::new(shared.raw_secret_bytes().to_vec()))
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn unhex(s: &str) -> Vec<u8> {
        (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap())
            .collect()
    }

    #[test]
    fn share_lengths() {
        let rng = ProtocolRng::seeded(1);
        assert_eq!(generate_key_share(NamedGroup::X25519, &rng).public().len(), 32);
        let p = generate_key_share(NamedGroup::Secp256r1, &rng);
        assert_eq!(p.public().len(), 65);
        assert_eq!(p.public()[0], 0x04);
        assert!(matches!(
            generate_key_share_for("x448", &rng),
            Err(CryptoError::UnsupportedGroup(_))
        ));
    }

    #[test]
    fn fresh_privates() {
        let rng = ProtocolRng::seeded(2);
        for g in NamedGroup::ALL {
            let a = generate_key_share(g, &rng);
            let b = generate_key_share(g, &rng);
            assert_ne!(*a.private, *b.private);
            assert_ne!(a.public, b.public);
        }
    }

    #[test]
    fn dh_symmetry() {
        let rng = ProtocolRng::seeded(3);
        for g in NamedGroup::ALL {
            let a = generate_key_share(g, &rng);
            let b = generate_key_share(g, &rng);
            let ab = derive_shared_secret(&a, b.public()).unwrap();
            let ba = derive_shared_secret(&b, a.public()).unwrap();
            assert_eq!(*ab, *ba);
            assert_eq!(ab.len(), 32);
        }
    }

    #[test]
    fn rfc7748_vector() {
        let alice = KeyShare::from_private(
            NamedGroup::X25519,
            &unhex("77076d0a7318a57d3c16c17251b26645df4c2f87ebc0992ab177fba51db92c2a"),
        )
        .unwrap();
        assert_eq!(
            alice.public(),
            unhex("8520f0098930a754748b7ddcb43ef75a0dbf3a0d26381af4eba4a98eaa9b4e6a")
        );
        let bob_pub = unhex("de9edb7d7b7dc1b4d35b61c2ece435373f8343c85b78674dadfc7e146f882b4f");
        let shared = derive_shared_secret(&alice, &bob_pub).unwrap();
        assert_eq!(
            *shared,
            unhex("4a5d9d5ba4ce2de1728e3bf480350f25e07e21c947d19e3376f09b3c1e161742")
        );
    }

    #[test]
    fn invalid_peer_shares() {
        let rng = ProtocolRng::seeded(4);
        let x = generate_key_share(NamedGroup::X25519, &rng);
        assert!(matches!(
            derive_shared_secret(&x, &[0u8; 32]),
            Err(CryptoError::InvalidPeerShare(_))
        ));
        assert!(matches!(
            derive_shared_secret(&x, &[9u8; 31]),
            Err(CryptoError::InvalidPeerShare(_))
        ));
        let p = generate_key_share(NamedGroup::Secp256r1, &rng);
        let mut off_curve = p.public().to_vec();
        off_curve[64] ^= 1;
        assert!(matches!(
            derive_shared_secret(&p, &off_curve),
            Err(CryptoError::InvalidPeerShare(_))
        ));
        let mut compressed_tag = p.public().to_vec();
        compressed_tag[0] = 0x02;
        assert!(derive_shared_secret(&p, &compressed_tag).is_err());
    }

    #[test]
    fn debug_hides_private() {
        let rng = ProtocolRng::seeded(5);
        let k = generate_key_share(NamedGroup::X25519, &rng);
        let text = format!("{k:?}");
        let hex: String = k.private.iter().map(|b| format!("{b:02x}")).collect();
        assert!(!text.contains(&hex));
        assert!(!text.contains(&format!("{:?}", &k.private[..4])));
    }
}
