//! Actor state machines (KGC, UAV, SDP controller, SDP gateway) and the
//! message flows between them: controller registration, reputation-gated
//! UAV registration, SPA signcryption/verification, policy checks, grant
//! issuance and reputation updates.

use crate::crypto::{
    g2_exp, g2_mul, pairing, scalar_mul, sym_decrypt, sym_encrypt, CryptoError, G1Elem, Scalar,
    SymKey, SystemParams, G1_BYTES, SCALAR_BYTES,
};
use crate::ledger::{Chain, LedgerError, UavId, UAV_ID_BYTES};
use crate::puf::PufDevice;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const NONCE_BYTES: usize = 16;
pub const CHALLENGE_BYTES: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    /// No on-chain record for the claimed identity.
    #[error("unknown UAV: no ledger record")]
    UnknownUav,
    /// The v-check failed: the ciphertext was tampered with, or was not
    /// produced under the claimed identity's key.
    #[error("integrity check failed")]
    IntegrityFailure,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("password mismatch")]
    BadPassword,
    #[error("timestamp outside the acceptance window")]
    StaleTimestamp,
    #[error("nonce/timestamp pair already seen")]
    ReplayedNonce,
    #[error("no unsigncrypted packet pending for this UAV")]
    NoPendingSession,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("controller id already registered")]
    DuplicateController,
    #[error("challenge is unknown or stale for this UAV")]
    UnknownChallenge,
    #[error("UAV is not registered")]
    NotRegistered,
    #[error("grant requires a passed policy check")]
    GrantWithoutPolicyCheck,
    #[error("malformed {0} encoding")]
    Malformed(&'static str),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

// ---------------------------------------------------------------------------
// Wire formats
// ---------------------------------------------------------------------------

/// Single-packet-authorization request plaintext.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaPacket {
    pub nonce: [u8; NONCE_BYTES],
    pub uav_id: UavId,
    pub pwd: Vec<u8>,
    pub ts: u64,
    pub ver: u8,
    pub addr1: [u8; 4],
    pub port1: u16,
}

fn put(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

impl SpaPacket {
    /// Canonical encoding: ordered, length-prefixed concatenation of the
    /// seven fields, integers big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put(&mut out, &self.nonce);
        put(&mut out, self.uav_id.as_bytes());
        put(&mut out, &self.pwd);
        put(&mut out, &self.ts.to_be_bytes());
        put(&mut out, &[self.ver]);
        put(&mut out, &self.addr1);
        put(&mut out, &self.port1.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<SpaPacket, ProtocolError> {
        let field = |pos: &mut usize, want: Option<usize>| -> Result<Vec<u8>, ProtocolError> {
            if *pos + 4 > bytes.len() {
                return Err(ProtocolError::Malformed("SpaPacket"));
            }
            let len = u32::from_be_bytes(bytes[*pos..*pos + 4].try_into().unwrap()) as usize;
            *pos += 4;
            if let Some(w) = want {
                if len != w {
                    return Err(ProtocolError::Malformed("SpaPacket"));
                }
            }
            if *pos + len > bytes.len() {
                return Err(ProtocolError::Malformed("SpaPacket"));
            }
            let out = bytes[*pos..*pos + len].to_vec();
            *pos += len;
            Ok(out)
        };
        let mut pos = 0;
        let nonce: [u8; NONCE_BYTES] = field(&mut pos, Some(NONCE_BYTES))?.try_into().unwrap();
        let uav_id: [u8; UAV_ID_BYTES] = field(&mut pos, Some(UAV_ID_BYTES))?.try_into().unwrap();
        let pwd = field(&mut pos, None)?;
        let ts = u64::from_be_bytes(field(&mut pos, Some(8))?.try_into().unwrap());
        let ver = field(&mut pos, Some(1))?[0];
        let addr1: [u8; 4] = field(&mut pos, Some(4))?.try_into().unwrap();
        let port1 = u16::from_be_bytes(field(&mut pos, Some(2))?.try_into().unwrap());
        if pos != bytes.len() {
            return Err(ProtocolError::Malformed("SpaPacket"));
        }
        Ok(SpaPacket {
            nonce,
            uav_id: UavId(uav_id),
            pwd,
            ts,
            ver,
            addr1,
            port1,
        })
    }
}

/// Signcrypted authentication request sigma = (E_pac, v, W).
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaCiphertext {
    pub e_pac: Vec<u8>,
    pub v: Scalar,
    pub w: G1Elem,
}

impl SigmaCiphertext {
    /// Fixed wire layout: u32 length of e_pac, e_pac, v, W.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + self.e_pac.len() + SCALAR_BYTES + G1_BYTES);
        out.extend_from_slice(&(self.e_pac.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.e_pac);
        out.extend_from_slice(&self.v.to_bytes());
        out.extend_from_slice(&self.w.to_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<SigmaCiphertext, ProtocolError> {
        if bytes.len() < 4 {
            return Err(ProtocolError::Malformed("SigmaCiphertext"));
        }
        let e_len = u32::from_be_bytes(bytes[..4].try_into().unwrap()) as usize;
        if bytes.len() != 4 + e_len + SCALAR_BYTES + G1_BYTES {
            return Err(ProtocolError::Malformed("SigmaCiphertext"));
        }
        let e_pac = bytes[4..4 + e_len].to_vec();
        let v = Scalar::from_bytes(&bytes[4 + e_len..4 + e_len + SCALAR_BYTES])
            .map_err(|_| ProtocolError::Malformed("SigmaCiphertext"))?;
        let w = G1Elem::from_bytes(&bytes[4 + e_len + SCALAR_BYTES..])
            .map_err(|_| ProtocolError::Malformed("SigmaCiphertext"))?;
        Ok(SigmaCiphertext { e_pac, v, w })
    }
}

// ---------------------------------------------------------------------------
// KGC
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ControllerKeys {
    pub pk_c: G1Elem,
    pub sk_c: G1Elem,
}

#[derive(Debug, Clone)]
pub struct UavCredentials {
    pub pk_u: G1Elem,
    pub sk_u: G1Elem,
    pub pk_c: G1Elem,
}

/// Key generation center. Holds the master key; it never leaves this struct.
pub struct Kgc {
    params: SystemParams,
    spk: G1Elem,
    ssk: Scalar,
    ssk_inv: Scalar,
    controllers: BTreeMap<Vec<u8>, G1Elem>,
    pending: BTreeMap<UavId, [u8; CHALLENGE_BYTES]>,
}

impl Kgc {
    pub fn new(params: SystemParams, spk: G1Elem, ssk: Scalar) -> Self {
        let ssk_inv = ssk.inverse().expect("ssk sampled from Z_q^*");
        Kgc {
            params,
            spk,
            ssk,
            ssk_inv,
            controllers: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn spk(&self) -> &G1Elem {
        &self.spk
    }

    /// PK_C = H1(ID_C), SK_C = ssk * PK_C. Delivered over a secure channel.
    pub fn register_controller(&mut self, id_c: &[u8]) -> Result<ControllerKeys, ProtocolError> {
        if self.controllers.contains_key(id_c) {
            return Err(ProtocolError::DuplicateController);
        }
        let pk_c = self.params.h1(id_c);
        let sk_c = scalar_mul(&self.ssk, &pk_c);
        self.controllers.insert(id_c.to_vec(), pk_c);
        Ok(ControllerKeys { pk_c, sk_c })
    }

    /// Fresh random challenge, kept pending until the PUF response arrives.
    pub fn issue_challenge<R: RngCore + CryptoRng>(
        &mut self,
        uav_id: UavId,
        rng: &mut R,
    ) -> [u8; CHALLENGE_BYTES] {
        let mut challenge = [0u8; CHALLENGE_BYTES];
        rng.fill_bytes(&mut challenge);
        self.pending.insert(uav_id, challenge);
        challenge
    }

    /// PK_U = H1(ID_U || R_i), SK_U = ssk^-1 * PK_U. Appends the tuple on
    /// chain; reputation starts at zero for a first registration and is
    /// carried forward unchanged otherwise.
    pub fn register_uav(
        &mut self,
        chain: &mut Chain,
        uav_id: UavId,
        controller_pk: &G1Elem,
        challenge: &[u8; CHALLENGE_BYTES],
        response: &[u8],
        now_ms: u64,
    ) -> Result<UavCredentials, ProtocolError> {
        match self.pending.get(&uav_id) {
            Some(pending) if pending == challenge => {}
            _ => return Err(ProtocolError::UnknownChallenge),
        }
        self.pending.remove(&uav_id);
        let mut input = Vec::with_capacity(UAV_ID_BYTES + response.len());
        input.extend_from_slice(uav_id.as_bytes());
        input.extend_from_slice(response);
        let pk_u = self.params.h1(&input);
        let sk_u = scalar_mul(&self.ssk_inv, &pk_u);
        chain.record_registration(uav_id, pk_u, now_ms)?;
        Ok(UavCredentials {
            pk_u,
            sk_u,
            pk_c: *controller_pk,
        })
    }
}

// ---------------------------------------------------------------------------
// UAV
// ---------------------------------------------------------------------------

struct StoredCredentials {
    pk_u: G1Elem,
    sk_u: G1Elem,
    pk_c: G1Elem,
}

/// One UAV: its PUF, and after registration the stored credential set
/// {ID_U, PK_U, SK_U, PK_C}.
pub struct UavState {
    pub uav_id: UavId,
    puf: PufDevice,
    params: SystemParams,
    spk: G1Elem,
    cred: Option<StoredCredentials>,
    last_session_key: Option<SymKey>,
}

/// A captured UAV's stored state: exactly what physical capture yields.
/// Never contains the master key.
#[derive(Debug, Clone)]
pub struct CapturedUavState {
    pub uav_id: UavId,
    pub pk_u: G1Elem,
    pub sk_u: G1Elem,
    pub pk_c: G1Elem,
}

impl UavState {
    pub fn new(uav_id: UavId, puf: PufDevice, params: SystemParams, spk: G1Elem) -> Self {
        UavState {
            uav_id,
            puf,
            params,
            spk,
            cred: None,
            last_session_key: None,
        }
    }

    pub fn is_registered(&self) -> bool {
        self.cred.is_some()
    }

    /// System public key held alongside the credential set. Not counted in
    /// the per-UAV storage figure, which covers {ID, PK_U, SK_U, PK_C}.
    pub fn spk(&self) -> &G1Elem {
        &self.spk
    }

    pub fn respond_challenge<R: RngCore + CryptoRng>(
        &self,
        challenge: &[u8],
        rng: &mut R,
    ) -> Result<[u8; 32], crate::puf::PufError> {
        self.puf.evaluate(challenge, rng)
    }

    pub fn install_credentials(&mut self, cred: UavCredentials) {
        self.cred = Some(StoredCredentials {
            pk_u: cred.pk_u,
            sk_u: cred.sk_u,
            pk_c: cred.pk_c,
        });
    }

    pub fn public_key(&self) -> Option<&G1Elem> {
        self.cred.as_ref().map(|c| &c.pk_u)
    }

    /// Session key derived by the most recent signcryption, if any.
    pub fn last_session_key(&self) -> Option<&SymKey> {
        self.last_session_key.as_ref()
    }

    /// Dump of the stored state, as a physical-capture adversary would see it.
    pub fn capture(&self) -> Result<CapturedUavState, ProtocolError> {
        let cred = self.cred.as_ref().ok_or(ProtocolError::NotRegistered)?;
        Ok(CapturedUavState {
            uav_id: self.uav_id,
            pk_u: cred.pk_u,
            sk_u: cred.sk_u,
            pk_c: cred.pk_c,
        })
    }

    pub fn build_packet<R: RngCore + CryptoRng>(
        &self,
        pwd: &[u8],
        ver: u8,
        addr1: [u8; 4],
        port1: u16,
        now_ms: u64,
        rng: &mut R,
    ) -> Result<SpaPacket, ProtocolError> {
        if self.cred.is_none() {
            return Err(ProtocolError::NotRegistered);
        }
        let mut nonce = [0u8; NONCE_BYTES];
        rng.fill_bytes(&mut nonce);
        Ok(SpaPacket {
            nonce,
            uav_id: self.uav_id,
            pwd: pwd.to_vec(),
            ts: now_ms,
            ver,
            addr1,
            port1,
        })
    }

    /// Signcrypts a packet under a fresh exponent h; keeps the derived
    /// session key so the grant message can be opened later.
    pub fn signcrypt<R: RngCore + CryptoRng>(
        &mut self,
        pac: &SpaPacket,
        rng: &mut R,
    ) -> Result<SigmaCiphertext, ProtocolError> {
        let cred = self.cred.as_ref().ok_or(ProtocolError::NotRegistered)?;
        let (sigma, session_key) = signcrypt_raw(
            &self.params,
            &cred.pk_u,
            &cred.sk_u,
            &cred.pk_c,
            &pac.encode(),
            rng,
        );
        self.last_session_key = Some(session_key);
        Ok(sigma)
    }

    /// Decrypts the gateway-coordinates message with the session key from
    /// the most recent signcryption.
    pub fn open_grant(&self, m: &[u8]) -> Result<([u8; 4], u16, UavId), ProtocolError> {
        let key = self
            .last_session_key
            .as_ref()
            .ok_or(ProtocolError::NotRegistered)?;
        decode_grant_message(&sym_decrypt(key, m))
    }
}

/// The signcryption equations, usable with any key material. The honest UAV
/// passes its own keys; the adversary harness feeds mismatched ones.
///
/// r1 = e(G, PK_U)^h, r2 = H2(e(PK_U, PK_C)^h), E_pac = Enc_r2(pac),
/// v = H3(E_pac, r1), W = (h - v) SK_U.
pub fn signcrypt_raw<R: RngCore + CryptoRng>(
    params: &SystemParams,
    pk_u: &G1Elem,
    sk_u: &G1Elem,
    pk_c: &G1Elem,
    pac_bytes: &[u8],
    rng: &mut R,
) -> (SigmaCiphertext, SymKey) {
    let h = Scalar::random_nonzero(rng);
    let r1 = g2_exp(&pairing(&params.generator, pk_u), &h);
    let session_key = params
        .h2(&g2_exp(&pairing(pk_u, pk_c), &h))
        .expect("nonzero: h != 0 and pk_u, pk_c are non-identity");
    let e_pac = sym_encrypt(&session_key, pac_bytes);
    let v = params.h3(&e_pac, &r1);
    let w = scalar_mul(&h.sub(&v), sk_u);
    (SigmaCiphertext { e_pac, v, w }, session_key)
}

// ---------------------------------------------------------------------------
// SDP controller
// ---------------------------------------------------------------------------

/// Registration-gate outcome driven by on-chain reputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Reject,
    SkipRegistration,
    ForwardToKgc,
}

#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub r_l: i64,
    pub r_h: i64,
    pub ts_window_ms: u64,
    pub policy_ttl_ms: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        // r_l / r_h / window are deployment knobs; these are the shipped
        // defaults, not normative values
        ControllerConfig {
            r_l: -3,
            r_h: 5,
            ts_window_ms: 30_000,
            policy_ttl_ms: 60_000,
        }
    }
}

struct PasswordEntry {
    salt: [u8; 16],
    digest: [u8; 32],
}

fn password_digest(salt: &[u8; 16], pwd: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"ztuav/pwd");
    hasher.update(salt);
    hasher.update(pwd);
    hasher.finalize().into()
}

enum AuthStage {
    Unsigncrypted { pac: SpaPacket, session_key: SymKey },
    PolicyPassed { session_key: SymKey },
}

/// Authorization policy pushed to the gateway on a successful grant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayPolicy {
    pub uav_id: UavId,
    pub addr2: [u8; 4],
    pub port2: u16,
    pub expires_at_ms: u64,
}

/// Grant outcome: the encrypted gateway coordinates for the UAV and the
/// matching policy for the gateway.
#[derive(Debug, Clone)]
pub struct PolicyGrant {
    pub m: Vec<u8>,
    pub policy: GatewayPolicy,
}

fn encode_grant_message(addr2: [u8; 4], port2: u16, uav_id: &UavId) -> Vec<u8> {
    let mut out = Vec::new();
    put(&mut out, &addr2);
    put(&mut out, &port2.to_be_bytes());
    put(&mut out, uav_id.as_bytes());
    out
}

fn decode_grant_message(bytes: &[u8]) -> Result<([u8; 4], u16, UavId), ProtocolError> {
    let expect = 4 + 4 + 4 + 2 + 4 + UAV_ID_BYTES;
    if bytes.len() != expect
        || bytes[..4] != 4u32.to_be_bytes()
        || bytes[8..12] != 2u32.to_be_bytes()
        || bytes[14..18] != (UAV_ID_BYTES as u32).to_be_bytes()
    {
        return Err(ProtocolError::Malformed("grant message"));
    }
    let addr2: [u8; 4] = bytes[4..8].try_into().unwrap();
    let port2 = u16::from_be_bytes(bytes[12..14].try_into().unwrap());
    let uav_id: [u8; UAV_ID_BYTES] = bytes[18..].try_into().unwrap();
    Ok((addr2, port2, UavId(uav_id)))
}

/// SDP controller: verifies signcrypted SPA packets, enforces password and
/// replay policy, gates registration on reputation, and issues grants.
pub struct Controller {
    pub id_c: Vec<u8>,
    params: SystemParams,
    spk: G1Elem,
    pk_c: G1Elem,
    sk_c: G1Elem,
    cfg: ControllerConfig,
    password_table: BTreeMap<UavId, PasswordEntry>,
    nonce_cache: BTreeSet<([u8; NONCE_BYTES], u64)>,
    sessions: BTreeMap<UavId, AuthStage>,
}

impl Controller {
    pub fn new(
        id_c: Vec<u8>,
        params: SystemParams,
        spk: G1Elem,
        keys: ControllerKeys,
        cfg: ControllerConfig,
    ) -> Self {
        assert!(cfg.r_l < cfg.r_h, "thresholds must satisfy r_l < r_h");
        Controller {
            id_c,
            params,
            spk,
            pk_c: keys.pk_c,
            sk_c: keys.sk_c,
            cfg,
            password_table: BTreeMap::new(),
            nonce_cache: BTreeSet::new(),
            sessions: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn public_key(&self) -> &G1Elem {
        &self.pk_c
    }

    /// Provisioned during UAV registration over the secure channel; only a
    /// salted digest is kept.
    pub fn set_password<R: RngCore + CryptoRng>(&mut self, uav_id: UavId, pwd: &[u8], rng: &mut R) {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        let digest = password_digest(&salt, pwd);
        self.password_table.insert(uav_id, PasswordEntry { salt, digest });
    }

    /// Reputation gate for registration requests. A UAV with no record yet
    /// counts as reputation zero and is forwarded.
    pub fn gate_registration(&self, chain: &Chain, uav_id: &UavId) -> Decision {
        let rep = chain.latest_record(uav_id).map(|r| r.rep).unwrap_or(0);
        if rep < self.cfg.r_l {
            Decision::Reject
        } else if rep > self.cfg.r_h {
            Decision::SkipRegistration
        } else {
            Decision::ForwardToKgc
        }
    }

    /// Verifies sigma against the on-chain public key:
    /// r1' = e(spk, W) * e(G, PK_U)^v, r2' = H2(e(W, SK_C) * e(PK_U, PK_C)^v),
    /// accept iff v = H3(E_pac, r1'). A failed check costs the UAV one
    /// reputation unit, recorded on chain.
    pub fn unsigncrypt(
        &mut self,
        chain: &mut Chain,
        uav_id: UavId,
        sigma: &SigmaCiphertext,
        now_ms: u64,
    ) -> Result<SpaPacket, AuthError> {
        let record = chain.latest_record(&uav_id).ok_or(AuthError::UnknownUav)?;
        let pk_u = record.pk_u;
        let r1 = g2_mul(
            &pairing(&self.spk, &sigma.w),
            &g2_exp(&pairing(&self.params.generator, &pk_u), &sigma.v),
        );
        let key_point = g2_mul(
            &pairing(&sigma.w, &self.sk_c),
            &g2_exp(&pairing(&pk_u, &self.pk_c), &sigma.v),
        );
        let session_key = match self.params.h2(&key_point) {
            Ok(k) => k,
            Err(_) => return self.fail_auth(chain, uav_id, pk_u, now_ms),
        };
        let plaintext = sym_decrypt(&session_key, &sigma.e_pac);
        let expected_v = self.params.h3(&sigma.e_pac, &r1);
        if expected_v.to_bytes() != sigma.v.to_bytes() {
            return self.fail_auth(chain, uav_id, pk_u, now_ms);
        }
        let pac = match SpaPacket::decode(&plaintext) {
            Ok(p) if p.uav_id == uav_id => p,
            _ => return self.fail_auth(chain, uav_id, pk_u, now_ms),
        };
        self.sessions.insert(
            uav_id,
            AuthStage::Unsigncrypted {
                pac: pac.clone(),
                session_key,
            },
        );
        Ok(pac)
    }

    fn fail_auth(
        &mut self,
        chain: &mut Chain,
        uav_id: UavId,
        pk_u: G1Elem,
        now_ms: u64,
    ) -> Result<SpaPacket, AuthError> {
        self.sessions.remove(&uav_id);
        self.decrement_reputation(chain, uav_id, pk_u, now_ms);
        Err(AuthError::IntegrityFailure)
    }

    /// Charges an integrity failure detected before unsigncryption could
    /// run, e.g. a sigma that does not even decode. Same cost as a failed
    /// v-check: one reputation unit.
    pub fn note_integrity_failure(
        &mut self,
        chain: &mut Chain,
        uav_id: UavId,
        pk_u: G1Elem,
        now_ms: u64,
    ) {
        self.sessions.remove(&uav_id);
        self.decrement_reputation(chain, uav_id, pk_u, now_ms);
    }

    fn decrement_reputation(&self, chain: &mut Chain, uav_id: UavId, pk_u: G1Elem, now_ms: u64) {
        let rep = chain.latest_record(&uav_id).map(|r| r.rep).unwrap_or(0);
        chain
            .record_reputation(uav_id, pk_u, rep - 1, now_ms)
            .expect("unit decrement always satisfies the delta rule");
    }

    /// Password, timestamp-window and nonce checks on an unsigncrypted
    /// packet. Any failure costs one reputation unit and drops the session.
    pub fn policy_check(
        &mut self,
        chain: &mut Chain,
        pac: &SpaPacket,
        now_ms: u64,
    ) -> Result<(), PolicyError> {
        let uav_id = pac.uav_id;
        match self.sessions.get(&uav_id) {
            Some(AuthStage::Unsigncrypted { pac: staged, .. }) if staged == pac => {}
            _ => return Err(PolicyError::NoPendingSession),
        }
        let outcome = self.run_policy_checks(pac, now_ms);
        match outcome {
            Ok(()) => {
                self.nonce_cache.insert((pac.nonce, pac.ts));
                self.evict_stale_nonces(now_ms);
                let stage = self.sessions.remove(&uav_id).expect("checked above");
                if let AuthStage::Unsigncrypted { session_key, .. } = stage {
                    self.sessions
                        .insert(uav_id, AuthStage::PolicyPassed { session_key });
                }
                Ok(())
            }
            Err(e) => {
                self.sessions.remove(&uav_id);
                if let Some(rec) = chain.latest_record(&uav_id) {
                    let pk_u = rec.pk_u;
                    self.decrement_reputation(chain, uav_id, pk_u, now_ms);
                }
                Err(e)
            }
        }
    }

    fn run_policy_checks(&self, pac: &SpaPacket, now_ms: u64) -> Result<(), PolicyError> {
        let entry = self
            .password_table
            .get(&pac.uav_id)
            .ok_or(PolicyError::BadPassword)?;
        if password_digest(&entry.salt, &pac.pwd) != entry.digest {
            return Err(PolicyError::BadPassword);
        }
        if now_ms.abs_diff(pac.ts) > self.cfg.ts_window_ms {
            return Err(PolicyError::StaleTimestamp);
        }
        if self.nonce_cache.contains(&(pac.nonce, pac.ts)) {
            return Err(PolicyError::ReplayedNonce);
        }
        Ok(())
    }

    fn evict_stale_nonces(&mut self, now_ms: u64) {
        let window = self.cfg.ts_window_ms;
        self.nonce_cache
            .retain(|(_, ts)| now_ms.saturating_sub(*ts) <= window);
    }

    /// Issues the grant: m = Enc_{r2'}(Ad_2 || Pt_2 || ID_U) under the
    /// session key just established, bumps reputation by one on chain, and
    /// returns the policy for the gateway. Refused unless the policy check
    /// passed for this UAV.
    pub fn grant(
        &mut self,
        chain: &mut Chain,
        uav_id: UavId,
        addr2: [u8; 4],
        port2: u16,
        now_ms: u64,
    ) -> Result<PolicyGrant, ProtocolError> {
        let session_key = match self.sessions.remove(&uav_id) {
            Some(AuthStage::PolicyPassed { session_key }) => session_key,
            other => {
                if let Some(stage) = other {
                    self.sessions.insert(uav_id, stage);
                }
                return Err(ProtocolError::GrantWithoutPolicyCheck);
            }
        };
        let record = chain
            .latest_record(&uav_id)
            .ok_or(ProtocolError::NotRegistered)?;
        let (pk_u, rep) = (record.pk_u, record.rep);
        chain.record_reputation(uav_id, pk_u, rep + 1, now_ms)?;
        let m = sym_encrypt(&session_key, &encode_grant_message(addr2, port2, &uav_id));
        Ok(PolicyGrant {
            m,
            policy: GatewayPolicy {
                uav_id,
                addr2,
                port2,
                expires_at_ms: now_ms + self.cfg.policy_ttl_ms,
            },
        })
    }
}

// ---------------------------------------------------------------------------
// SDP gateway
// ---------------------------------------------------------------------------

/// Connection attempt outcome. `Denied` is a value, not an error: the
/// gateway answers every caller, it just defaults to no.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectOutcome {
    Session { session_id: u64 },
    Denied,
}

/// Default-deny gateway: a connection succeeds only against a matching,
/// unexpired policy.
#[derive(Default)]
pub struct Gateway {
    policies: Vec<GatewayPolicy>,
    next_session_id: u64,
}

impl Gateway {
    pub fn new() -> Self {
        Gateway::default()
    }

    pub fn install_policy(&mut self, policy: GatewayPolicy) {
        self.policies.push(policy);
    }

    pub fn connect(
        &mut self,
        uav_id: &UavId,
        addr2: [u8; 4],
        port2: u16,
        now_ms: u64,
    ) -> ConnectOutcome {
        let matched = self.policies.iter().any(|p| {
            &p.uav_id == uav_id && p.addr2 == addr2 && p.port2 == port2 && now_ms < p.expires_at_ms
        });
        if matched {
            let session_id = self.next_session_id;
            self.next_session_id += 1;
            ConnectOutcome::Session { session_id }
        } else {
            ConnectOutcome::Denied
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{self, setup};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    struct Fixture {
        kgc: Kgc,
        controller: Controller,
        gateway: Gateway,
        chain: Chain,
        rng: ChaCha20Rng,
    }

    fn fixture() -> Fixture {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let (params, spk, ssk) = setup(255, 256, &mut rng).unwrap();
        let mut kgc = Kgc::new(params.clone(), spk, ssk);
        let keys = kgc.register_controller(b"controller-1").unwrap();
        let controller = Controller::new(
            b"controller-1".to_vec(),
            params,
            spk,
            keys,
            ControllerConfig::default(),
        );
        Fixture {
            kgc,
            controller,
            gateway: Gateway::new(),
            chain: Chain::new(),
            rng,
        }
    }

    fn register(fx: &mut Fixture, label: &str, pwd: &[u8]) -> UavState {
        let uav_id = UavId::from_label(label);
        let puf = PufDevice::new(&mut fx.rng);
        let mut uav = UavState::new(
            uav_id,
            puf,
            fx.kgc.params().clone(),
            *fx.kgc.spk(),
        );
        let challenge = fx.kgc.issue_challenge(uav_id, &mut fx.rng);
        let response = uav.respond_challenge(&challenge, &mut fx.rng).unwrap();
        let pk_c = *fx.controller.public_key();
        let cred = fx
            .kgc
            .register_uav(&mut fx.chain, uav_id, &pk_c, &challenge, &response, 0)
            .unwrap();
        uav.install_credentials(cred);
        fx.controller.set_password(uav_id, pwd, &mut fx.rng);
        uav
    }

    fn auth_once(fx: &mut Fixture, uav: &mut UavState, pwd: &[u8], now: u64) -> SpaPacket {
        let pac = uav
            .build_packet(pwd, 1, [10, 0, 0, 1], 62201, now, &mut fx.rng)
            .unwrap();
        let sigma = uav.signcrypt(&pac, &mut fx.rng).unwrap();
        let decoded = fx
            .controller
            .unsigncrypt(&mut fx.chain, uav.uav_id, &sigma, now)
            .unwrap();
        assert_eq!(decoded, pac);
        fx.controller.policy_check(&mut fx.chain, &decoded, now).unwrap();
        decoded
    }

    #[test]
    fn controller_key_identity() {
        let mut fx = fixture();
        let keys = fx.kgc.register_controller(b"controller-2").unwrap();
        let g = &fx.kgc.params().generator;
        assert_eq!(
            crypto::pairing(g, &keys.sk_c),
            crypto::pairing(fx.kgc.spk(), &keys.pk_c)
        );
    }

    #[test]
    fn duplicate_controller_rejected() {
        let mut fx = fixture();
        assert!(matches!(
            fx.kgc.register_controller(b"controller-1"),
            Err(ProtocolError::DuplicateController)
        ));
    }

    #[test]
    fn distinct_controller_ids_distinct_keys() {
        let mut fx = fixture();
        let k2 = fx.kgc.register_controller(b"controller-2").unwrap();
        let k3 = fx.kgc.register_controller(b"controller-3").unwrap();
        assert_ne!(k2.pk_c, k3.pk_c);
    }

    #[test]
    fn uav_key_identity() {
        let mut fx = fixture();
        let uav = register(&mut fx, "uav-1", b"pw");
        let cred = uav.capture().unwrap();
        let g = &fx.kgc.params().generator;
        // e(spk, SK_U) = e(G, PK_U) since ssk * ssk^-1 = 1
        assert_eq!(
            crypto::pairing(fx.kgc.spk(), &cred.sk_u),
            crypto::pairing(g, &cred.pk_u)
        );
    }

    #[test]
    fn registration_initializes_reputation_zero() {
        let mut fx = fixture();
        let uav = register(&mut fx, "uav-1", b"pw");
        assert_eq!(fx.chain.latest_record(&uav.uav_id).unwrap().rep, 0);
    }

    #[test]
    fn reregistration_keeps_reputation() {
        let mut fx = fixture();
        let mut uav = register(&mut fx, "uav-1", b"pw");
        auth_once(&mut fx, &mut uav, b"pw", 1_000);
        let grant = fx
            .controller
            .grant(&mut fx.chain, uav.uav_id, [10, 0, 0, 2], 443, 1_000)
            .unwrap();
        let _ = grant;
        assert_eq!(fx.chain.latest_record(&uav.uav_id).unwrap().rep, 1);
        // register again: rep carries forward
        let challenge = fx.kgc.issue_challenge(uav.uav_id, &mut fx.rng);
        let response = uav.respond_challenge(&challenge, &mut fx.rng).unwrap();
        let pk_c = *fx.controller.public_key();
        fx.kgc
            .register_uav(&mut fx.chain, uav.uav_id, &pk_c, &challenge, &response, 2_000)
            .unwrap();
        assert_eq!(fx.chain.latest_record(&uav.uav_id).unwrap().rep, 1);
    }

    #[test]
    fn stale_challenge_rejected() {
        let mut fx = fixture();
        let uav_id = UavId::from_label("uav-x");
        let pk_c = *fx.controller.public_key();
        let never_issued = [7u8; CHALLENGE_BYTES];
        assert!(matches!(
            fx.kgc
                .register_uav(&mut fx.chain, uav_id, &pk_c, &never_issued, b"resp", 0),
            Err(ProtocolError::UnknownChallenge)
        ));
    }

    #[test]
    fn same_id_different_response_different_pk() {
        let mut fx = fixture();
        let uav_id = UavId::from_label("uav-1");
        let pk_c = *fx.controller.public_key();
        let c1 = fx.kgc.issue_challenge(uav_id, &mut fx.rng);
        let cred1 = fx
            .kgc
            .register_uav(&mut fx.chain, uav_id, &pk_c, &c1, b"response-a", 0)
            .unwrap();
        let c2 = fx.kgc.issue_challenge(uav_id, &mut fx.rng);
        let cred2 = fx
            .kgc
            .register_uav(&mut fx.chain, uav_id, &pk_c, &c2, b"response-b", 1)
            .unwrap();
        assert_ne!(cred1.pk_u, cred2.pk_u);
    }

    #[test]
    fn gate_thresholds() {
        let mut fx = fixture();
        let uav = register(&mut fx, "uav-1", b"pw");
        let id = uav.uav_id;
        let pk = *uav.public_key().unwrap();
        let cfg = fx.controller.config().clone();
        // fresh identity: no record -> forward
        assert_eq!(
            fx.controller.gate_registration(&fx.chain, &UavId::from_label("new")),
            Decision::ForwardToKgc
        );
        // drive rep to r_l - 1
        let mut rep = 0;
        while rep > cfg.r_l - 1 {
            rep -= 1;
            fx.chain.record_reputation(id, pk, rep, 10).unwrap();
        }
        assert_eq!(fx.controller.gate_registration(&fx.chain, &id), Decision::Reject);
        // back up to r_h + 1
        while rep < cfg.r_h + 1 {
            rep += 1;
            fx.chain.record_reputation(id, pk, rep, 11).unwrap();
        }
        assert_eq!(
            fx.controller.gate_registration(&fx.chain, &id),
            Decision::SkipRegistration
        );
        // boundary values stay in the forward band
        while rep > cfg.r_h {
            rep -= 1;
            fx.chain.record_reputation(id, pk, rep, 12).unwrap();
        }
        assert_eq!(fx.controller.gate_registration(&fx.chain, &id), Decision::ForwardToKgc);
    }

    #[test]
    fn packet_codec_round_trip() {
        let mut fx = fixture();
        let uav = register(&mut fx, "uav-1", b"pw");
        let pac = uav
            .build_packet(b"pw", 2, [192, 168, 1, 9], 4433, 777, &mut fx.rng)
            .unwrap();
        assert_eq!(pac.ts, 777);
        assert_eq!(SpaPacket::decode(&pac.encode()).unwrap(), pac);
        let pac2 = uav
            .build_packet(b"pw", 2, [192, 168, 1, 9], 4433, 777, &mut fx.rng)
            .unwrap();
        assert_ne!(pac.nonce, pac2.nonce);
    }

    #[test]
    fn sigma_codec_and_wire_size() {
        let mut fx = fixture();
        let mut uav = register(&mut fx, "uav-1", b"pw");
        let pac = uav
            .build_packet(b"pw", 1, [10, 0, 0, 1], 62201, 0, &mut fx.rng)
            .unwrap();
        let sigma = uav.signcrypt(&pac, &mut fx.rng).unwrap();
        let wire = sigma.encode();
        assert_eq!(wire.len(), 4 + pac.encode().len() + SCALAR_BYTES + G1_BYTES);
        assert_eq!(SigmaCiphertext::decode(&wire).unwrap(), sigma);
        // randomized encryption: same pac, fresh sigma
        let sigma2 = uav.signcrypt(&pac, &mut fx.rng).unwrap();
        assert_ne!(sigma, sigma2);
    }

    #[test]
    fn round_trip_and_grant_flow() {
        let mut fx = fixture();
        let mut uav = register(&mut fx, "uav-1", b"hunter2");
        let pac = auth_once(&mut fx, &mut uav, b"hunter2", 5_000);
        let grant = fx
            .controller
            .grant(&mut fx.chain, pac.uav_id, [172, 16, 0, 9], 8443, 5_000)
            .unwrap();
        assert_eq!(fx.chain.latest_record(&pac.uav_id).unwrap().rep, 1);
        let (addr2, port2, id) = uav.open_grant(&grant.m).unwrap();
        assert_eq!((addr2, port2, id), ([172, 16, 0, 9], 8443, pac.uav_id));
        fx.gateway.install_policy(grant.policy);
        assert!(matches!(
            fx.gateway.connect(&pac.uav_id, [172, 16, 0, 9], 8443, 6_000),
            ConnectOutcome::Session { .. }
        ));
    }

    #[test]
    fn grant_refused_without_policy_check() {
        let mut fx = fixture();
        let mut uav = register(&mut fx, "uav-1", b"pw");
        let pac = uav
            .build_packet(b"pw", 1, [10, 0, 0, 1], 62201, 0, &mut fx.rng)
            .unwrap();
        let sigma = uav.signcrypt(&pac, &mut fx.rng).unwrap();
        fx.controller
            .unsigncrypt(&mut fx.chain, uav.uav_id, &sigma, 0)
            .unwrap();
        // policy check skipped
        assert!(matches!(
            fx.controller.grant(&mut fx.chain, uav.uav_id, [1, 1, 1, 1], 1, 0),
            Err(ProtocolError::GrantWithoutPolicyCheck)
        ));
    }

    #[test]
    fn unknown_uav_distinguished_from_tamper() {
        let mut fx = fixture();
        let mut uav = register(&mut fx, "uav-1", b"pw");
        let pac = uav
            .build_packet(b"pw", 1, [10, 0, 0, 1], 62201, 0, &mut fx.rng)
            .unwrap();
        let sigma = uav.signcrypt(&pac, &mut fx.rng).unwrap();
        assert_eq!(
            fx.controller
                .unsigncrypt(&mut fx.chain, UavId::from_label("ghost"), &sigma, 0)
                .unwrap_err(),
            AuthError::UnknownUav
        );
        let mut tampered = sigma.clone();
        tampered.e_pac[0] ^= 0xff;
        assert_eq!(
            fx.controller
                .unsigncrypt(&mut fx.chain, uav.uav_id, &tampered, 0)
                .unwrap_err(),
            AuthError::IntegrityFailure
        );
        // tamper cost exactly one reputation unit
        assert_eq!(fx.chain.latest_record(&uav.uav_id).unwrap().rep, -1);
    }

    #[test]
    fn cross_key_signature_rejected() {
        let mut fx = fixture();
        let mut uav_a = register(&mut fx, "uav-a", b"pw");
        let _uav_b = register(&mut fx, "uav-b", b"pw");
        let id_b = UavId::from_label("uav-b");
        let pac = uav_a
            .build_packet(b"pw", 1, [10, 0, 0, 1], 62201, 0, &mut fx.rng)
            .unwrap();
        let sigma = uav_a.signcrypt(&pac, &mut fx.rng).unwrap();
        assert_eq!(
            fx.controller
                .unsigncrypt(&mut fx.chain, id_b, &sigma, 0)
                .unwrap_err(),
            AuthError::IntegrityFailure
        );
    }

    #[test]
    fn replay_and_stale_and_bad_password() {
        let mut fx = fixture();
        let mut uav = register(&mut fx, "uav-1", b"pw");
        let pac = auth_once(&mut fx, &mut uav, b"pw", 10_000);
        // verbatim replay of the accepted packet
        let sigma = uav.signcrypt(&pac, &mut fx.rng).unwrap();
        let decoded = fx
            .controller
            .unsigncrypt(&mut fx.chain, uav.uav_id, &sigma, 10_001)
            .unwrap();
        assert_eq!(
            fx.controller
                .policy_check(&mut fx.chain, &decoded, 10_001)
                .unwrap_err(),
            PolicyError::ReplayedNonce
        );
        // stale timestamp
        let old = uav
            .build_packet(b"pw", 1, [10, 0, 0, 1], 62201, 1_000, &mut fx.rng)
            .unwrap();
        let sigma = uav.signcrypt(&old, &mut fx.rng).unwrap();
        let decoded = fx
            .controller
            .unsigncrypt(&mut fx.chain, uav.uav_id, &sigma, 50_000)
            .unwrap();
        assert_eq!(
            fx.controller
                .policy_check(&mut fx.chain, &decoded, 50_000)
                .unwrap_err(),
            PolicyError::StaleTimestamp
        );
        // wrong password costs one reputation unit
        let rep_before = fx.chain.latest_record(&uav.uav_id).unwrap().rep;
        let bad = uav
            .build_packet(b"wrong", 1, [10, 0, 0, 1], 62201, 50_000, &mut fx.rng)
            .unwrap();
        let sigma = uav.signcrypt(&bad, &mut fx.rng).unwrap();
        let decoded = fx
            .controller
            .unsigncrypt(&mut fx.chain, uav.uav_id, &sigma, 50_000)
            .unwrap();
        assert_eq!(
            fx.controller
                .policy_check(&mut fx.chain, &decoded, 50_000)
                .unwrap_err(),
            PolicyError::BadPassword
        );
        assert_eq!(
            fx.chain.latest_record(&uav.uav_id).unwrap().rep,
            rep_before - 1
        );
    }

    #[test]
    fn gateway_default_deny_and_expiry() {
        let mut fx = fixture();
        let id = UavId::from_label("uav-1");
        assert_eq!(
            fx.gateway.connect(&id, [1, 2, 3, 4], 80, 0),
            ConnectOutcome::Denied
        );
        fx.gateway.install_policy(GatewayPolicy {
            uav_id: id,
            addr2: [1, 2, 3, 4],
            port2: 80,
            expires_at_ms: 1_000,
        });
        assert!(matches!(
            fx.gateway.connect(&id, [1, 2, 3, 4], 80, 999),
            ConnectOutcome::Session { .. }
        ));
        assert_eq!(
            fx.gateway.connect(&id, [1, 2, 3, 4], 80, 1_000),
            ConnectOutcome::Denied
        );
    }

    #[test]
    fn correctness_identity_holds_for_fixed_h() {
        // r1' and r2' reduce to the sender's r1/r2 for honest keys, checked
        // here against an independently evaluated right-hand side
        let mut fx = fixture();
        let uav = register(&mut fx, "uav-1", b"pw");
        let cred = uav.capture().unwrap();
        let params = fx.kgc.params().clone();
        let g = &params.generator;
        let h = Scalar::random_nonzero(&mut fx.rng);
        let v = Scalar::random_nonzero(&mut fx.rng);
        let w = scalar_mul(&h.sub(&v), &cred.sk_u);
        let spk = *fx.kgc.spk();
        let sk_c = fx.controller.sk_c;
        let lhs1 = g2_mul(
            &pairing(&spk, &w),
            &g2_exp(&pairing(g, &cred.pk_u), &v),
        );
        assert_eq!(lhs1, g2_exp(&pairing(g, &cred.pk_u), &h));
        let lhs2 = g2_mul(
            &pairing(&w, &sk_c),
            &g2_exp(&pairing(&cred.pk_u, &cred.pk_c), &v),
        );
        assert_eq!(lhs2, g2_exp(&pairing(&cred.pk_u, &cred.pk_c), &h));
    }

    #[test]
    fn signcrypt_survives_h_equals_v() {
        // forcing W to the identity still verifies; exercised by replaying
        // the verifier equations with w = 0
        let mut fx = fixture();
        let uav = register(&mut fx, "uav-1", b"pw");
        let cred = uav.capture().unwrap();
        let params = fx.kgc.params().clone();
        let g = &params.generator;
        let h = Scalar::random_nonzero(&mut fx.rng);
        let r1 = g2_exp(&pairing(g, &cred.pk_u), &h);
        let w = scalar_mul(&h.sub(&h), &cred.sk_u); // h == v case
        assert!(w.is_identity());
        let spk = *fx.kgc.spk();
        let r1p = g2_mul(&pairing(&spk, &w), &g2_exp(&pairing(g, &cred.pk_u), &h));
        assert_eq!(r1p, r1);
    }
}
