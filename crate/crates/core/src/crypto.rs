//! Pairing-group algebra, hash oracles and the symmetric cipher.
//!
//! The protocol equations are written for a symmetric (Type-1) pairing
//! `e: G1 x G1 -> G2`. The backend curve (BLS12-381) only offers an
//! asymmetric map, so every logical source-group element carries a matched
//! pair of components, one in each backend source group, produced by the
//! same hashing/multiplication trail. `pairing(a, b)` evaluates the backend
//! map on `(a.left, b.right)`, which is argument-order independent because
//! both components of every element share the same discrete log.

use ark_bls12_381::{Bls12_381, Fr, G1Affine, G1Projective, G2Affine, G2Projective};
use ark_ec::pairing::{Pairing, PairingOutput};
use ark_ec::{AffineRepr, CurveGroup, Group};
use ark_ff::{BigInteger, Field, PrimeField, UniformRand, Zero};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256, Sha512};
use std::cell::Cell;
use thiserror::Error;

/// Serialized width of a logical source-group element (both components).
pub const G1_BYTES: usize = 48 + 96;
/// Serialized width of a target-group element.
pub const G2_BYTES: usize = 576;
/// Serialized width of a scalar.
pub const SCALAR_BYTES: usize = 32;

const DOMAIN_H1: &[u8] = b"ztuav/h1";
const DOMAIN_H2: &[u8] = b"ztuav/h2";
const DOMAIN_H3: &[u8] = b"ztuav/h3";
const DOMAIN_STREAM: &[u8] = b"ztuav/stream";

#[derive(Debug, Error)]
pub enum CryptoError {
    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),
    #[error("invalid encoding for {0}")]
    InvalidEncoding(&'static str),
    #[error("element components are not a matched pair")]
    MismatchedPair,
    #[error("zero element rejected")]
    ZeroElement,
}

// ---------------------------------------------------------------------------
// Operation counter
// ---------------------------------------------------------------------------

/// Exact counts of the algebraic operations performed inside a measurement
/// scope. Maps onto the usual T_bp / T_mu1 / T_ad1 / T_ex / T_mu2 / T_h
/// cost notation.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounter {
    pub n_pairing: u64,
    pub n_mul_g1: u64,
    pub n_add_g1: u64,
    pub n_exp_g2: u64,
    pub n_mul_g2: u64,
    pub n_hash: u64,
}

impl OpCounter {
    fn delta(after: OpCounter, before: OpCounter) -> OpCounter {
        OpCounter {
            n_pairing: after.n_pairing - before.n_pairing,
            n_mul_g1: after.n_mul_g1 - before.n_mul_g1,
            n_add_g1: after.n_add_g1 - before.n_add_g1,
            n_exp_g2: after.n_exp_g2 - before.n_exp_g2,
            n_mul_g2: after.n_mul_g2 - before.n_mul_g2,
            n_hash: after.n_hash - before.n_hash,
        }
    }
}

thread_local! {
    static COUNTS: Cell<OpCounter> = Cell::new(OpCounter::default());
}

fn bump(f: impl FnOnce(&mut OpCounter)) {
    COUNTS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

/// Runs `f` and returns its result together with the exact operation counts
/// it performed on the current thread.
pub fn count_ops<R>(f: impl FnOnce() -> R) -> (R, OpCounter) {
    let before = COUNTS.with(|c| c.get());
    let out = f();
    let after = COUNTS.with(|c| c.get());
    (out, OpCounter::delta(after, before))
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Element of Z_q, the shared order of both groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scalar(Fr);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(Fr::zero())
    }

    pub fn one() -> Self {
        Scalar(Fr::ONE)
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(Fr::from(v))
    }

    /// Uniform sample from Z_q^*; the zero residue is rejected at sampling
    /// time.
    pub fn random_nonzero<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        loop {
            let v = Fr::rand(rng);
            if !v.is_zero() {
                return Scalar(v);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn add(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 + other.0)
    }

    pub fn sub(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 - other.0)
    }

    pub fn mul(&self, other: &Scalar) -> Scalar {
        Scalar(self.0 * other.0)
    }

    pub fn inverse(&self) -> Option<Scalar> {
        self.0.inverse().map(Scalar)
    }

    /// Fixed-width big-endian encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_BYTES] {
        let mut out = [0u8; SCALAR_BYTES];
        let bytes = self.0.into_bigint().to_bytes_be();
        out[SCALAR_BYTES - bytes.len()..].copy_from_slice(&bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Scalar, CryptoError> {
        if bytes.len() != SCALAR_BYTES {
            return Err(CryptoError::InvalidEncoding("Scalar"));
        }
        // reject non-canonical residues
        let v = Fr::from_be_bytes_mod_order(bytes);
        if Scalar(v).to_bytes() != bytes {
            return Err(CryptoError::InvalidEncoding("Scalar"));
        }
        Ok(Scalar(v))
    }
}

/// Logical element of the (emulated Type-1) source group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct G1Elem {
    left: G1Projective,
    right: G2Projective,
}

impl G1Elem {
    pub fn identity() -> Self {
        G1Elem {
            left: G1Projective::zero(),
            right: G2Projective::zero(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.left.is_zero()
    }

    pub fn to_bytes(&self) -> [u8; G1_BYTES] {
        let mut out = [0u8; G1_BYTES];
        let mut buf = Vec::with_capacity(48);
        self.left
            .into_affine()
            .serialize_compressed(&mut buf)
            .expect("G1 serialization");
        out[..48].copy_from_slice(&buf);
        buf.clear();
        self.right
            .into_affine()
            .serialize_compressed(&mut buf)
            .expect("G2 serialization");
        out[48..].copy_from_slice(&buf);
        out
    }

    /// Deserializes with on-curve/subgroup validation and a pairing check
    /// that both components share the same discrete log.
    pub fn from_bytes(bytes: &[u8]) -> Result<G1Elem, CryptoError> {
        if bytes.len() != G1_BYTES {
            return Err(CryptoError::InvalidEncoding("G1Elem"));
        }
        let left = G1Affine::deserialize_compressed(&bytes[..48])
            .map_err(|_| CryptoError::InvalidEncoding("G1Elem"))?;
        let right = G2Affine::deserialize_compressed(&bytes[48..])
            .map_err(|_| CryptoError::InvalidEncoding("G1Elem"))?;
        // e(left, G2) == e(G1, right) iff the discrete logs match
        let lhs = Bls12_381::pairing(left, G2Affine::generator());
        let rhs = Bls12_381::pairing(G1Affine::generator(), right);
        if lhs != rhs {
            return Err(CryptoError::MismatchedPair);
        }
        Ok(G1Elem {
            left: left.into(),
            right: right.into(),
        })
    }
}

/// Element of the target group (multiplicative notation in the protocol).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct G2Elem(PairingOutput<Bls12_381>);

impl G2Elem {
    pub fn identity() -> Self {
        G2Elem(PairingOutput::zero())
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(G2_BYTES);
        self.0
            .serialize_compressed(&mut buf)
            .expect("G2 serialization");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<G2Elem, CryptoError> {
        if bytes.len() != G2_BYTES {
            return Err(CryptoError::InvalidEncoding("G2Elem"));
        }
        PairingOutput::deserialize_compressed(bytes)
            .map(G2Elem)
            .map_err(|_| CryptoError::InvalidEncoding("G2Elem"))
    }
}

/// Symmetric key of exactly `l/8` bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymKey(Vec<u8>);

impl SymKey {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

// hex-string serde for the group types, used by the JSON debug dumps
macro_rules! hex_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&hex::encode(self.to_bytes()))
            }
        }
        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
                <$ty>::from_bytes(&bytes).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_serde!(Scalar);
hex_serde!(G1Elem);
hex_serde!(G2Elem);

// ---------------------------------------------------------------------------
// System parameters
// ---------------------------------------------------------------------------

/// Public system parameters fixed at setup: group descriptors, the shared
/// generator, the scalar-field bit length and the symmetric key length.
#[derive(Debug, Clone)]
pub struct SystemParams {
    pub curve: &'static str,
    pub generator: G1Elem,
    /// Bit length of the group order q.
    pub k: u32,
    /// Symmetric key / H2 output length in bits.
    pub l: u32,
}

/// Maximum k the configured backend can provide (bits of the BLS12-381
/// scalar field order).
pub const BACKEND_K: u32 = 255;

/// Generates system parameters and the KGC master key pair. `ssk` is
/// returned once, to the KGC constructor, and is never serialized.
pub fn setup<R: RngCore + CryptoRng>(
    k: u32,
    l: u32,
    rng: &mut R,
) -> Result<(SystemParams, G1Elem, Scalar), CryptoError> {
    if k == 0 || k > BACKEND_K {
        return Err(CryptoError::UnsupportedParameter(format!(
            "k = {k} not supported; backend provides up to {BACKEND_K} bits"
        )));
    }
    if l == 0 || l % 8 != 0 || l > 256 {
        return Err(CryptoError::UnsupportedParameter(format!(
            "l = {l} must be a positive multiple of 8, at most 256"
        )));
    }
    let params = SystemParams {
        curve: "bls12-381",
        generator: generator(),
        k: BACKEND_K,
        l,
    };
    let ssk = Scalar::random_nonzero(rng);
    let spk = scalar_mul(&ssk, &params.generator);
    Ok((params, spk, ssk))
}

/// The shared generator G (matched pair of backend generators).
pub fn generator() -> G1Elem {
    G1Elem {
        left: G1Projective::generator(),
        right: G2Projective::generator(),
    }
}

impl SystemParams {
    /// H1: {0,1}* -> G1. Hashes to a scalar and walks both generator
    /// components by it, which keeps the pair matched.
    pub fn h1(&self, input: &[u8]) -> G1Elem {
        bump(|c| c.n_hash += 1);
        let mut hasher = Sha512::new();
        hasher.update(DOMAIN_H1);
        hasher.update((input.len() as u64).to_be_bytes());
        hasher.update(input);
        let digest = hasher.finalize();
        let mut t = Fr::from_be_bytes_mod_order(&digest);
        if t.is_zero() {
            t = Fr::ONE;
        }
        G1Elem {
            left: G1Projective::generator() * t,
            right: G2Projective::generator() * t,
        }
    }

    /// H2: G2 -> {0,1}^l. The zero element is rejected.
    pub fn h2(&self, z: &G2Elem) -> Result<SymKey, CryptoError> {
        if z.is_identity() {
            return Err(CryptoError::ZeroElement);
        }
        bump(|c| c.n_hash += 1);
        let mut hasher = Sha256::new();
        hasher.update(DOMAIN_H2);
        hasher.update(z.to_bytes());
        let digest = hasher.finalize();
        Ok(SymKey(digest[..(self.l / 8) as usize].to_vec()))
    }

    /// H3: {0,1}* x G2 -> Z_q^*. Arbitrary-length data is accepted with
    /// length-prefixing.
    pub fn h3(&self, data: &[u8], r: &G2Elem) -> Scalar {
        bump(|c| c.n_hash += 1);
        let mut hasher = Sha512::new();
        hasher.update(DOMAIN_H3);
        hasher.update((data.len() as u64).to_be_bytes());
        hasher.update(data);
        hasher.update(r.to_bytes());
        let digest = hasher.finalize();
        let mut t = Fr::from_be_bytes_mod_order(&digest);
        if t.is_zero() {
            t = Fr::ONE;
        }
        Scalar(t)
    }
}

// ---------------------------------------------------------------------------
// Group operations
// ---------------------------------------------------------------------------

/// Bilinear map. Both logical arguments come from the emulated Type-1 source
/// group, so argument order does not matter.
pub fn pairing(a: &G1Elem, b: &G1Elem) -> G2Elem {
    bump(|c| c.n_pairing += 1);
    G2Elem(Bls12_381::pairing(a.left, b.right))
}

pub fn scalar_mul(s: &Scalar, p: &G1Elem) -> G1Elem {
    bump(|c| c.n_mul_g1 += 1);
    G1Elem {
        left: p.left * s.0,
        right: p.right * s.0,
    }
}

pub fn g1_add(p: &G1Elem, q: &G1Elem) -> G1Elem {
    bump(|c| c.n_add_g1 += 1);
    G1Elem {
        left: p.left + q.left,
        right: p.right + q.right,
    }
}

pub fn g2_exp(z: &G2Elem, s: &Scalar) -> G2Elem {
    bump(|c| c.n_exp_g2 += 1);
    G2Elem(z.0 * s.0)
}

pub fn g2_mul(z1: &G2Elem, z2: &G2Elem) -> G2Elem {
    bump(|c| c.n_mul_g2 += 1);
    G2Elem(z1.0 + z2.0)
}

// ---------------------------------------------------------------------------
// Symmetric cipher
// ---------------------------------------------------------------------------

fn keystream(key: &SymKey, len: usize) -> Vec<u8> {
    // ChaCha20 keystream keyed from the session key; fixed zero nonce is
    // sound here because every session derives a fresh key.
    use rand::SeedableRng;
    let mut seed = [0u8; 32];
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN_STREAM);
    hasher.update(key.as_bytes());
    seed.copy_from_slice(&hasher.finalize());
    let mut rng = rand_chacha::ChaCha20Rng::from_seed(seed);
    let mut out = vec![0u8; len];
    rng.fill_bytes(&mut out);
    out
}

/// Stream encryption; ciphertext length equals plaintext length. Integrity
/// is carried by the protocol's v-check, not by the cipher.
pub fn sym_encrypt(key: &SymKey, plaintext: &[u8]) -> Vec<u8> {
    let ks = keystream(key, plaintext.len());
    plaintext.iter().zip(ks).map(|(p, k)| p ^ k).collect()
}

pub fn sym_decrypt(key: &SymKey, ciphertext: &[u8]) -> Vec<u8> {
    sym_encrypt(key, ciphertext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn rng() -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(7)
    }

    fn params() -> SystemParams {
        let (p, _, _) = setup(255, 256, &mut rng()).unwrap();
        p
    }

    #[test]
    fn setup_distinct_master_keys() {
        let mut r = rng();
        let (_, spk1, ssk1) = setup(255, 256, &mut r).unwrap();
        let (_, spk2, ssk2) = setup(255, 256, &mut r).unwrap();
        assert_ne!(ssk1.to_bytes(), ssk2.to_bytes());
        assert_ne!(spk1.to_bytes(), spk2.to_bytes());
    }

    #[test]
    fn setup_spk_is_ssk_times_generator() {
        let (params, spk, ssk) = setup(255, 256, &mut rng()).unwrap();
        assert_eq!(spk, scalar_mul(&ssk, &params.generator));
    }

    #[test]
    fn setup_rejects_unsupported_params() {
        assert!(setup(256, 256, &mut rng()).is_err());
        assert!(setup(0, 256, &mut rng()).is_err());
        assert!(setup(255, 257, &mut rng()).is_err());
        assert!(setup(255, 0, &mut rng()).is_err());
    }

    #[test]
    fn pairing_bilinearity_on_spk() {
        let mut r = rng();
        let (params, spk, ssk) = setup(255, 256, &mut r).unwrap();
        let p = scalar_mul(&Scalar::random_nonzero(&mut r), &params.generator);
        assert_eq!(pairing(&spk, &p), g2_exp(&pairing(&params.generator, &p), &ssk));
    }

    #[test]
    fn pairing_bilinearity_small_exponents() {
        let params = params();
        let g = &params.generator;
        let base = pairing(g, g);
        for a in 0..16u64 {
            for b in 0..16u64 {
                let lhs = pairing(
                    &scalar_mul(&Scalar::from_u64(a), g),
                    &scalar_mul(&Scalar::from_u64(b), g),
                );
                assert_eq!(lhs, g2_exp(&base, &Scalar::from_u64(a * b)));
            }
        }
    }

    #[test]
    fn pairing_non_degenerate() {
        let g = generator();
        assert!(!pairing(&g, &g).is_identity());
    }

    #[test]
    fn pairing_exponent_oracle_random() {
        let mut r = rng();
        let params = params();
        let g = &params.generator;
        let base = pairing(g, g);
        for _ in 0..100 {
            let a = Scalar::random_nonzero(&mut r);
            let b = Scalar::random_nonzero(&mut r);
            let lhs = pairing(&scalar_mul(&a, g), &scalar_mul(&b, g));
            assert_eq!(lhs, g2_exp(&base, &a.mul(&b)));
        }
    }

    #[test]
    fn pairing_argument_order_irrelevant() {
        let mut r = rng();
        let params = params();
        let a = scalar_mul(&Scalar::random_nonzero(&mut r), &params.generator);
        let b = params.h1(b"other trail");
        assert_eq!(pairing(&a, &b), pairing(&b, &a));
    }

    #[test]
    fn h1_deterministic_and_total() {
        let params = params();
        assert_eq!(params.h1(b"abc"), params.h1(b"abc"));
        assert!(!params.h1(b"").is_identity());
    }

    #[test]
    fn h1_collision_scan() {
        let params = params();
        let mut seen = std::collections::HashSet::new();
        for i in 0..10_000u32 {
            let e = params.h1(&i.to_be_bytes());
            assert!(seen.insert(e.to_bytes().to_vec()), "collision at {i}");
        }
    }

    #[test]
    fn h2_length_and_determinism() {
        let mut r = rng();
        let params = params();
        let z = g2_exp(
            &pairing(&params.generator, &params.generator),
            &Scalar::random_nonzero(&mut r),
        );
        let k1 = params.h2(&z).unwrap();
        assert_eq!(k1.len(), 32);
        assert_eq!(k1, params.h2(&z).unwrap());
    }

    #[test]
    fn h2_rejects_identity() {
        let params = params();
        assert!(params.h2(&G2Elem::identity()).is_err());
    }

    #[test]
    fn h2_collision_scan() {
        let mut r = rng();
        let params = params();
        let base = pairing(&params.generator, &params.generator);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..10_000 {
            let z = g2_exp(&base, &Scalar::random_nonzero(&mut r));
            assert!(seen.insert(params.h2(&z).unwrap()));
        }
    }

    #[test]
    fn h3_range_and_collisions() {
        let mut r = rng();
        let params = params();
        let base = pairing(&params.generator, &params.generator);
        let z1 = g2_exp(&base, &Scalar::random_nonzero(&mut r));
        assert_eq!(params.h3(b"d", &z1), params.h3(b"d", &z1));
        for i in 0..10_000u32 {
            let v = params.h3(&i.to_be_bytes(), &z1);
            assert!(!v.is_zero());
        }
        let z2 = g2_exp(&base, &Scalar::random_nonzero(&mut r));
        assert_ne!(params.h3(b"d", &z1).to_bytes(), params.h3(b"d", &z2).to_bytes());
    }

    #[test]
    fn group_identities() {
        let mut r = rng();
        let params = params();
        let p = scalar_mul(&Scalar::random_nonzero(&mut r), &params.generator);
        assert_eq!(scalar_mul(&Scalar::one(), &p), p);
        let z = pairing(&p, &params.generator);
        assert_eq!(g2_exp(&z, &Scalar::zero()), G2Elem::identity());
        // q*P = identity, exercised as P + (q-1)P
        let q_minus_1 = Scalar::zero().sub(&Scalar::one());
        assert!(g1_add(&p, &scalar_mul(&q_minus_1, &p)).is_identity());
    }

    #[test]
    fn op_counter_exact_deltas() {
        let params = params();
        let g = params.generator;
        let ((), counts) = count_ops(|| {
            let _ = pairing(&g, &g);
        });
        assert_eq!(counts.n_pairing, 1);
        assert_eq!(counts.n_mul_g1, 0);
        let ((), counts) = count_ops(|| {
            let _ = scalar_mul(&Scalar::from_u64(3), &g);
            let _ = g1_add(&g, &g);
            let _ = params.h1(b"x");
        });
        assert_eq!(counts.n_mul_g1, 1);
        assert_eq!(counts.n_add_g1, 1);
        assert_eq!(counts.n_hash, 1);
        assert_eq!(counts.n_pairing, 0);
    }

    #[test]
    fn serialization_round_trips() {
        let mut r = rng();
        let params = params();
        let s = Scalar::random_nonzero(&mut r);
        assert_eq!(Scalar::from_bytes(&s.to_bytes()).unwrap(), s);
        let p = scalar_mul(&s, &params.generator);
        assert_eq!(G1Elem::from_bytes(&p.to_bytes()).unwrap(), p);
        let z = pairing(&p, &params.generator);
        assert_eq!(G2Elem::from_bytes(&z.to_bytes()).unwrap(), z);
    }

    #[test]
    fn deserialize_rejects_mismatched_pair() {
        let mut r = rng();
        let params = params();
        let a = scalar_mul(&Scalar::random_nonzero(&mut r), &params.generator);
        let b = scalar_mul(&Scalar::random_nonzero(&mut r), &params.generator);
        let mut bytes = a.to_bytes();
        bytes[48..].copy_from_slice(&b.to_bytes()[48..]);
        assert!(matches!(
            G1Elem::from_bytes(&bytes),
            Err(CryptoError::MismatchedPair)
        ));
    }

    #[test]
    fn sym_cipher_round_trip_and_length() {
        let mut r = rng();
        let params = params();
        let base = pairing(&params.generator, &params.generator);
        for _ in 0..100 {
            let k = params
                .h2(&g2_exp(&base, &Scalar::random_nonzero(&mut r)))
                .unwrap();
            let k2 = params
                .h2(&g2_exp(&base, &Scalar::random_nonzero(&mut r)))
                .unwrap();
            let mut m = vec![0u8; 57];
            r.fill_bytes(&mut m);
            let c = sym_encrypt(&k, &m);
            assert_eq!(c.len(), m.len());
            assert_eq!(sym_decrypt(&k, &c), m);
            assert_ne!(sym_decrypt(&k2, &c), m);
        }
    }
}
