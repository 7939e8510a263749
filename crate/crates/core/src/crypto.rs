//! Hashing, key generation, address derivation and signatures.
//!
//! Signatures use ECDSA over secp256k1 with RFC 6979 deterministic nonces, so
//! signing the same message with the same key always yields the same bytes.
//! Nothing in this module touches ambient randomness or the clock.

use std::fmt;

use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{SigningKey, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Length in bytes of a derived [`Address`].
pub const ADDRESS_LEN: usize = 20;
/// Length in bytes of a compressed SEC1 public key.
pub const PUBLIC_KEY_LEN: usize = 33;
/// Length in bytes of a fixed-width `r ‖ s` signature.
pub const SIGNATURE_LEN: usize = 64;

/// Comparable key lengths in bits, `(rsa, ecc, rsa:ecc ratio)`.
///
/// Reference data only; nothing benchmarks these. The 256-bit row is the
/// class used by [`KeyPair`].
pub const RSA_ECC_KEY_LENGTHS: [(u32, u32, u32); 5] = [
    (1024, 160, 6),
    (2048, 224, 9),
    (3072, 256, 12),
    (7680, 384, 20),
    (15360, 512, 30),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    /// The seed maps to a scalar outside `[1, n)`; retry with the next seed.
    #[error("degenerate key seed, retry with the next seed")]
    DegenerateSeed,
    #[error("malformed public key: {0}")]
    MalformedPublicKey(String),
    #[error("malformed private key")]
    MalformedPrivateKey,
    #[error("invalid hex: {0}")]
    Hex(String),
}

/// SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CryptoError::Hex(format!("digest must be 32 bytes: {s}")))?;
        Ok(Digest(arr))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// SHA-256 of `data`.
pub fn hash256(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// SHA-256 over the concatenation of `parts` without allocating.
pub fn hash256_concat(parts: &[&[u8]]) -> Digest {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    Digest(hasher.finalize().into())
}

/// First [`ADDRESS_LEN`] bytes of the SHA-256 of a public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; ADDRESS_LEN]);

impl Address {
    pub const ZERO: Address = Address([0u8; ADDRESS_LEN]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
        let arr: [u8; ADDRESS_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::Hex(format!("address must be {ADDRESS_LEN} bytes: {s}")))?;
        Ok(Address(arr))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address({})", self.to_hex())
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Compressed SEC1 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    /// Parses and curve-checks a compressed or uncompressed SEC1 encoding.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let vk = VerifyingKey::from_sec1_bytes(bytes)
            .map_err(|e| CryptoError::MalformedPublicKey(e.to_string()))?;
        Ok(Self::from_verifying_key(&vk))
    }

    fn from_verifying_key(vk: &VerifyingKey) -> Self {
        let point = vk.to_encoded_point(true);
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out.copy_from_slice(point.as_bytes());
        PublicKey(out)
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = hex::decode(s).map_err(|e| CryptoError::Hex(e.to_string()))?;
        Self::from_bytes(&bytes)
    }

    pub fn address(&self) -> Address {
        address_of(&self.0)
    }

    fn verifying_key(&self) -> Option<VerifyingKey> {
        VerifyingKey::from_sec1_bytes(&self.0).ok()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

/// Opaque signature bytes. Any length is representable so that malformed
/// input can flow through [`verify`], which simply returns `false`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Signature(pub Vec<u8>);

impl Signature {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        hex::decode(s).map(Signature).map_err(|e| CryptoError::Hex(e.to_string()))
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.to_hex();
        write!(f, "Signature({}…)", &h[..h.len().min(16)])
    }
}

/// A signing keypair. Deliberately not `Serialize`: the private half can
/// only leave the process through [`KeyPair::private_key_bytes`].
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn address(&self) -> Address {
        self.public.address()
    }

    /// Raw scalar, for local safe-store persistence and containment checks.
    pub fn private_key_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes().into()
    }

    /// Draws seeds from `rng` until one yields a valid scalar.
    pub fn from_rng<R: RngCore>(rng: &mut R) -> KeyPair {
        loop {
            let mut seed = [0u8; 32];
            rng.fill_bytes(&mut seed);
            if let Ok(kp) = generate_keypair(&seed) {
                return kp;
            }
        }
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .field("private", &"<redacted>")
            .finish()
    }
}

/// Interprets the 32-byte seed as a secp256k1 scalar.
pub fn generate_keypair(seed: &[u8; 32]) -> Result<KeyPair, CryptoError> {
    let signing = SigningKey::from_slice(seed).map_err(|_| CryptoError::DegenerateSeed)?;
    let public = PublicKey::from_verifying_key(signing.verifying_key());
    Ok(KeyPair { signing, public })
}

/// Derives the address for raw public key bytes, rejecting bytes that are
/// not a point on the curve.
pub fn derive_address(public_key: &[u8]) -> Result<Address, CryptoError> {
    Ok(PublicKey::from_bytes(public_key)?.address())
}

fn address_of(public_key: &[u8]) -> Address {
    let digest = hash256(public_key);
    let mut out = [0u8; ADDRESS_LEN];
    out.copy_from_slice(&digest.0[..ADDRESS_LEN]);
    Address(out)
}

pub fn sign(keypair: &KeyPair, message: &[u8]) -> Signature {
    let sig: k256::ecdsa::Signature = keypair.signing.sign(message);
    Signature(sig.to_bytes().to_vec())
}

/// Signs with a raw private scalar.
pub fn sign_with_private_key(private_key: &[u8], message: &[u8]) -> Result<Signature, CryptoError> {
    let signing = SigningKey::from_slice(private_key).map_err(|_| CryptoError::MalformedPrivateKey)?;
    let sig: k256::ecdsa::Signature = signing.sign(message);
    Ok(Signature(sig.to_bytes().to_vec()))
}

/// Total: malformed signatures or keys yield `false`.
pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    if signature.0.len() != SIGNATURE_LEN {
        return false;
    }
    let Ok(sig) = k256::ecdsa::Signature::from_slice(&signature.0) else {
        return false;
    };
    match public_key.verifying_key() {
        Some(vk) => vk.verify(message, &sig).is_ok(),
        None => false,
    }
}

macro_rules! hex_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                <$ty>::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_serde!(Digest);
hex_serde!(Address);
hex_serde!(PublicKey);
hex_serde!(Signature);

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::collections::HashSet;

    fn keypair(n: u64) -> KeyPair {
        KeyPair::from_rng(&mut ChaCha20Rng::seed_from_u64(n))
    }

    #[test]
    fn sha256_vectors() {
        assert_eq!(
            hash256(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash256(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(hash256_concat(&[b"a", b"bc"]), hash256(b"abc"));
    }

    #[test]
    fn degenerate_seeds_rejected() {
        assert_eq!(generate_keypair(&[0u8; 32]).unwrap_err(), CryptoError::DegenerateSeed);
        assert_eq!(generate_keypair(&[0xff; 32]).unwrap_err(), CryptoError::DegenerateSeed);
        let mut one = [0u8; 32];
        one[31] = 1;
        assert!(generate_keypair(&one).is_ok());
    }

    #[test]
    fn same_seed_same_keypair() {
        let a = keypair(7);
        let b = keypair(7);
        assert_eq!(a.public_key(), b.public_key());
        assert_eq!(a.private_key_bytes(), b.private_key_bytes());
    }

    #[test]
    fn thousand_seeds_thousand_keys_and_addresses() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut keys = HashSet::new();
        let mut addrs = HashSet::new();
        for _ in 0..1000 {
            let kp = KeyPair::from_rng(&mut rng);
            assert!(keys.insert(kp.public_key()));
            assert!(addrs.insert(derive_address(kp.public_key().as_bytes()).unwrap()));
        }
    }

    #[test]
    fn address_is_prefix_of_key_hash() {
        let kp = keypair(3);
        let addr = kp.address();
        assert_eq!(addr.0[..], hash256(kp.public_key().as_bytes()).0[..ADDRESS_LEN]);
        assert_eq!(addr, derive_address(kp.public_key().as_bytes()).unwrap());
        assert_eq!(addr.to_hex().len(), ADDRESS_LEN * 2);
    }

    #[test]
    fn malformed_public_key() {
        assert!(matches!(derive_address(&[2u8; 5]), Err(CryptoError::MalformedPublicKey(_))));
        assert!(matches!(derive_address(&[9u8; 33]), Err(CryptoError::MalformedPublicKey(_))));
    }

    #[test]
    fn sign_verify_round_trip_and_bit_flips() {
        let kp = keypair(11);
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..100 {
            let len = rng.gen_range(1..64);
            let mut m: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let sig = sign(&kp, &m);
            assert!(verify(&kp.public_key(), &m, &sig));
            let bit = rng.gen_range(0..len * 8);
            m[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&kp.public_key(), &m, &sig));
        }
    }

    #[test]
    fn signature_bit_flips_fail() {
        let kp = keypair(12);
        let sig = sign(&kp, b"record");
        for bit in 0..SIGNATURE_LEN * 8 {
            let mut s = sig.clone();
            s.0[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify(&kp.public_key(), b"record", &s), "bit {bit}");
        }
    }

    #[test]
    fn deterministic_signing() {
        let kp = keypair(5);
        assert_eq!(sign(&kp, b"x"), sign(&kp, b"x"));
        let raw = sign_with_private_key(&kp.private_key_bytes(), b"x").unwrap();
        assert_eq!(raw, sign(&kp, b"x"));
    }

    #[test]
    fn wrong_key_and_malformed_signatures() {
        let a = keypair(1);
        let b = keypair(2);
        let sig = sign(&a, b"m");
        assert!(!verify(&b.public_key(), b"m", &sig));
        assert!(!verify(&a.public_key(), b"m", &Signature(vec![0u8; SIGNATURE_LEN])));
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let len = rng.gen_range(0..130);
            let junk = Signature((0..len).map(|_| rng.gen()).collect());
            assert!(!verify(&a.public_key(), b"m", &junk));
        }
        let mut truncated = sig.clone();
        truncated.0.truncate(40);
        assert!(!verify(&a.public_key(), b"m", &truncated));
    }

    #[test]
    fn hex_round_trips() {
        let kp = keypair(8);
        let json = serde_json::to_string(&kp.address()).unwrap();
        assert_eq!(serde_json::from_str::<Address>(&json).unwrap(), kp.address());
        let pk = PublicKey::from_hex(&kp.public_key().to_hex()).unwrap();
        assert_eq!(pk, kp.public_key());
        assert!(Digest::from_hex("abcd").is_err());
    }

    #[test]
    fn debug_redacts_private_key() {
        let kp = keypair(9);
        let dbg = format!("{kp:?}");
        assert!(!dbg.contains(&hex::encode(kp.private_key_bytes())));
    }
}
