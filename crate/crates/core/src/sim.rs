//! In-memory network simulation: wires the actors together over secure and
//! open channels, drives scripted adversary actions (eavesdrop, replay,
//! tamper, inject, capture) against them, and emits deterministic scenario
//! reports.

use crate::crypto::{setup, G1Elem, Scalar, SystemParams};
use crate::ledger::{Chain, UavId, UAV_ID_BYTES};
use crate::protocol::{
    signcrypt_raw, AuthError, CapturedUavState, ConnectOutcome, Controller, ControllerConfig,
    Decision, Gateway, Kgc, PolicyError, SigmaCiphertext, UavState,
};
use crate::puf::PufDevice;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("malformed script: {0}")]
    MalformedScript(String),
    #[error("unknown UAV label: {0}")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    Secure,
    Open,
}

/// One framed message. The adversary sees only `Open` frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Frame {
    pub sender: String,
    pub receiver: String,
    pub channel: ChannelKind,
    #[serde(with = "hex_bytes")]
    pub payload: Vec<u8>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        hex::decode(&text).map_err(serde::de::Error::custom)
    }
}

/// Dolev-Yao capabilities. Frame indices refer to the adversary's own
/// observation log (it can only act on what it saw on open channels).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AdversaryAction {
    Eavesdrop,
    Replay {
        frame: usize,
    },
    Tamper {
        frame: usize,
        byte_index: usize,
        new_byte: u8,
    },
    Inject {
        #[serde(with = "hex_bytes")]
        payload: Vec<u8>,
    },
    CaptureUav {
        uav_label: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdversaryScript {
    pub actions: Vec<AdversaryAction>,
}

impl AdversaryScript {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::MalformedScript(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script JSON")
    }
}

/// Outcome of one delivered authentication frame, end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthOutcome {
    Success,
    UnknownUav,
    IntegrityFailure,
    BadPassword,
    StaleTimestamp,
    ReplayedNonce,
    MalformedFrame,
}

impl From<AuthError> for AuthOutcome {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::UnknownUav => AuthOutcome::UnknownUav,
            AuthError::IntegrityFailure => AuthOutcome::IntegrityFailure,
        }
    }
}

impl From<PolicyError> for AuthOutcome {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::BadPassword => AuthOutcome::BadPassword,
            PolicyError::StaleTimestamp => AuthOutcome::StaleTimestamp,
            PolicyError::ReplayedNonce => AuthOutcome::ReplayedNonce,
            PolicyError::NoPendingSession => AuthOutcome::MalformedFrame,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub step: usize,
    pub kind: String,
    pub outcome: String,
    pub rep_after: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub seed: u64,
    pub events: Vec<ScenarioEvent>,
    pub reputations: BTreeMap<String, i64>,
    pub chain_blocks: u64,
    pub chain_valid: bool,
}

impl ScenarioReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report JSON")
    }
}

const GATEWAY_ADDR: [u8; 4] = [10, 30, 0, 1];
const GATEWAY_PORT: u16 = 8443;

/// All actors plus channel transcripts, driven by a logical clock and a
/// seeded randomness source.
pub struct World {
    pub kgc: Kgc,
    pub controller: Controller,
    pub gateway: Gateway,
    pub chain: Chain,
    pub clock_ms: u64,
    uavs: BTreeMap<String, UavState>,
    passwords: BTreeMap<String, Vec<u8>>,
    rng: ChaCha20Rng,
    transcript: Vec<Frame>,
    /// Open-channel frames, in order of observation.
    adversary_log: Vec<Frame>,
    captured: BTreeMap<String, CapturedUavState>,
}

impl World {
    /// Sets up the system and registers the controller; registration
    /// traffic runs on the secure channel.
    pub fn new(seed: u64) -> Self {
        Self::with_config(seed, ControllerConfig::default())
    }

    pub fn with_config(seed: u64, cfg: ControllerConfig) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (params, spk, ssk) = setup(255, 256, &mut rng).expect("default parameters");
        let mut kgc = Kgc::new(params.clone(), spk, ssk);
        let keys = kgc
            .register_controller(b"sdp-controller")
            .expect("fresh KGC");
        let controller = Controller::new(b"sdp-controller".to_vec(), params, spk, keys, cfg);
        World {
            kgc,
            controller,
            gateway: Gateway::new(),
            chain: Chain::new(),
            clock_ms: 0,
            uavs: BTreeMap::new(),
            passwords: BTreeMap::new(),
            rng,
            transcript: Vec::new(),
            adversary_log: Vec::new(),
            captured: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &SystemParams {
        self.kgc.params()
    }

    pub fn transcript(&self) -> &[Frame] {
        &self.transcript
    }

    pub fn adversary_log(&self) -> &[Frame] {
        &self.adversary_log
    }

    pub fn uav(&self, label: &str) -> Option<&UavState> {
        self.uavs.get(label)
    }

    pub fn uav_id(&self, label: &str) -> UavId {
        UavId::from_label(label)
    }

    pub fn advance_clock(&mut self, ms: u64) {
        self.clock_ms += ms;
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    fn record_frame(&mut self, sender: &str, receiver: &str, channel: ChannelKind, payload: Vec<u8>) {
        let frame = Frame {
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            channel,
            payload,
        };
        if channel == ChannelKind::Open {
            self.adversary_log.push(frame.clone());
        }
        self.transcript.push(frame);
    }

    /// Full registration flow over the secure channel, including gate check
    /// and password provisioning. Returns the gate decision actually taken.
    pub fn register_uav(&mut self, label: &str, pwd: &[u8]) -> Decision {
        let uav_id = UavId::from_label(label);
        self.record_frame(label, "controller", ChannelKind::Secure, uav_id.as_bytes().to_vec());
        let decision = self.controller.gate_registration(&self.chain, &uav_id);
        if decision != Decision::ForwardToKgc {
            return decision;
        }
        let challenge = self.kgc.issue_challenge(uav_id, &mut self.rng);
        self.record_frame("kgc", label, ChannelKind::Secure, challenge.to_vec());
        let uav = self.uavs.entry(label.to_string()).or_insert_with(|| {
            UavState::new(
                uav_id,
                PufDevice::new(&mut self.rng),
                self.kgc.params().clone(),
                *self.kgc.spk(),
            )
        });
        let response = uav
            .respond_challenge(&challenge, &mut self.rng)
            .expect("32-byte challenge");
        self.record_frame(label, "kgc", ChannelKind::Secure, response.to_vec());
        let pk_c = *self.controller.public_key();
        let cred = self
            .kgc
            .register_uav(&mut self.chain, uav_id, &pk_c, &challenge, &response, self.clock_ms)
            .expect("challenge just issued");
        self.record_frame("kgc", label, ChannelKind::Secure, cred.pk_u.to_bytes().to_vec());
        self.uavs
            .get_mut(label)
            .expect("inserted above")
            .install_credentials(cred);
        self.controller.set_password(uav_id, pwd, &mut self.rng);
        self.passwords.insert(label.to_string(), pwd.to_vec());
        decision
    }

    /// Builds, signcrypts and delivers one authentication request as the
    /// named UAV, then walks the grant and gateway-connect steps on success.
    pub fn honest_auth(&mut self, label: &str) -> Result<AuthOutcome, SimError> {
        let payload = self.build_auth_payload(label, None)?;
        self.record_frame(label, "controller", ChannelKind::Open, payload.clone());
        let outcome = self.deliver_auth_payload(&payload);
        Ok(outcome)
    }

    /// Builds and signcrypts one request without delivering it; the
    /// instrumentation uses this to measure the UAV half on its own.
    pub fn honest_auth_signcrypt_only(&mut self, label: &str) -> Result<Vec<u8>, SimError> {
        let payload = self.build_auth_payload(label, None)?;
        self.record_frame(label, "controller", ChannelKind::Open, payload.clone());
        Ok(payload)
    }

    /// Same as `honest_auth` but the frame is intercepted in flight and one
    /// payload byte is rewritten before delivery.
    pub fn tampered_auth(&mut self, label: &str, byte_index: usize) -> Result<AuthOutcome, SimError> {
        let mut payload = self.build_auth_payload(label, None)?;
        let idx = UAV_ID_BYTES + byte_index % (payload.len() - UAV_ID_BYTES);
        payload[idx] ^= 0x5a;
        self.record_frame(label, "controller", ChannelKind::Open, payload.clone());
        Ok(self.deliver_auth_payload(&payload))
    }

    fn build_auth_payload(
        &mut self,
        label: &str,
        pwd_override: Option<&[u8]>,
    ) -> Result<Vec<u8>, SimError> {
        let pwd = pwd_override
            .map(|p| p.to_vec())
            .or_else(|| self.passwords.get(label).cloned())
            .ok_or_else(|| SimError::UnknownLabel(label.to_string()))?;
        let clock = self.clock_ms;
        let uav = self
            .uavs
            .get_mut(label)
            .ok_or_else(|| SimError::UnknownLabel(label.to_string()))?;
        let pac = uav
            .build_packet(&pwd, 1, [10, 0, 0, 2], 62201, clock, &mut self.rng)
            .map_err(|e| SimError::UnknownLabel(format!("{label}: {e}")))?;
        let sigma = uav
            .signcrypt(&pac, &mut self.rng)
            .map_err(|e| SimError::UnknownLabel(format!("{label}: {e}")))?;
        let mut payload = uav.uav_id.as_bytes().to_vec();
        payload.extend_from_slice(&sigma.encode());
        Ok(payload)
    }

    /// Controller-side handling of one open-channel authentication frame:
    /// unsigncrypt, policy check, grant, policy push, gateway connect.
    pub fn deliver_auth_payload(&mut self, payload: &[u8]) -> AuthOutcome {
        if payload.len() <= UAV_ID_BYTES {
            return AuthOutcome::MalformedFrame;
        }
        let uav_id = UavId(payload[..UAV_ID_BYTES].try_into().expect("fixed width"));
        // a malformed sigma from a registered UAV is a tampered ciphertext:
        // integrity failure, one reputation unit
        let sigma = match SigmaCiphertext::decode(&payload[UAV_ID_BYTES..]) {
            Ok(s) => s,
            Err(_) => {
                let now = self.clock_ms;
                return match self.chain.latest_record(&uav_id).map(|r| r.pk_u) {
                    None => AuthOutcome::UnknownUav,
                    Some(pk_u) => {
                        self.controller
                            .note_integrity_failure(&mut self.chain, uav_id, pk_u, now);
                        AuthOutcome::IntegrityFailure
                    }
                };
            }
        };
        let now = self.clock_ms;
        let pac = match self
            .controller
            .unsigncrypt(&mut self.chain, uav_id, &sigma, now)
        {
            Ok(p) => p,
            Err(e) => return e.into(),
        };
        if let Err(e) = self.controller.policy_check(&mut self.chain, &pac, now) {
            return e.into();
        }
        let grant = match self
            .controller
            .grant(&mut self.chain, uav_id, GATEWAY_ADDR, GATEWAY_PORT, now)
        {
            Ok(g) => g,
            Err(_) => return AuthOutcome::MalformedFrame,
        };
        self.record_frame("controller", "uav", ChannelKind::Open, grant.m.clone());
        // policy push to the gateway stays on the secure channel
        self.record_frame(
            "controller",
            "gateway",
            ChannelKind::Secure,
            serde_json::to_vec(&grant.policy).expect("policy JSON"),
        );
        self.gateway.install_policy(grant.policy);
        let connected = self
            .gateway
            .connect(&uav_id, GATEWAY_ADDR, GATEWAY_PORT, now);
        match connected {
            ConnectOutcome::Session { .. } => AuthOutcome::Success,
            ConnectOutcome::Denied => AuthOutcome::MalformedFrame,
        }
    }

    /// Physical capture: yields exactly the UAV's stored state, never the
    /// master key.
    pub fn capture_uav(&mut self, label: &str) -> Result<CapturedUavState, SimError> {
        let uav = self
            .uavs
            .get(label)
            .ok_or_else(|| SimError::UnknownLabel(label.to_string()))?;
        let state = uav
            .capture()
            .map_err(|e| SimError::UnknownLabel(format!("{label}: {e}")))?;
        self.captured.insert(label.to_string(), state.clone());
        Ok(state)
    }

    /// Forges an authentication request for `target_label` using previously
    /// captured key material (or random keys when `captured_label` is None).
    pub fn forge_auth(
        &mut self,
        captured_label: Option<&str>,
        target_label: &str,
    ) -> Result<AuthOutcome, SimError> {
        let target_id = UavId::from_label(target_label);
        let (sk, pk_c) = match captured_label {
            Some(label) => {
                let cap = self
                    .captured
                    .get(label)
                    .ok_or_else(|| SimError::MalformedScript(format!("{label} not captured")))?;
                (cap.sk_u, cap.pk_c)
            }
            None => {
                let params = self.kgc.params().clone();
                let s = Scalar::random_nonzero(&mut self.rng);
                let sk: G1Elem = crate::crypto::scalar_mul(&s, &params.generator);
                (sk, *self.controller.public_key())
            }
        };
        // target's public key is on the public ledger
        let pk_target = match self.chain.latest_record(&target_id) {
            Some(r) => r.pk_u,
            None => return Ok(AuthOutcome::UnknownUav),
        };
        let pac = crate::protocol::SpaPacket {
            nonce: {
                let mut n = [0u8; 16];
                rand::RngCore::fill_bytes(&mut self.rng, &mut n);
                n
            },
            uav_id: target_id,
            pwd: b"guessed".to_vec(),
            ts: self.clock_ms,
            ver: 1,
            addr1: [10, 0, 0, 99],
            port1: 62201,
        };
        let params = self.kgc.params().clone();
        let (sigma, _) = signcrypt_raw(&params, &pk_target, &sk, &pk_c, &pac.encode(), &mut self.rng);
        let mut payload = target_id.as_bytes().to_vec();
        payload.extend_from_slice(&sigma.encode());
        self.record_frame("adversary", "controller", ChannelKind::Open, payload.clone());
        Ok(self.deliver_auth_payload(&payload))
    }

    fn rep_of(&self, label: &str) -> Option<i64> {
        self.chain
            .latest_record(&UavId::from_label(label))
            .map(|r| r.rep)
    }

    fn reputations(&self) -> BTreeMap<String, i64> {
        self.uavs
            .keys()
            .filter_map(|label| self.rep_of(label).map(|rep| (label.clone(), rep)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Scenario runner
// ---------------------------------------------------------------------------

/// One scripted simulation: named, seeded, and built from explicit steps so
/// honest traffic and adversary actions interleave deterministically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub steps: Vec<ScenarioStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum ScenarioStep {
    RegisterUav { label: String, pwd: String },
    HonestAuth { label: String },
    /// Honest request intercepted in flight with one byte rewritten.
    TamperedAuth { label: String, byte_index: usize },
    AdvanceClock { ms: u64 },
    GateCheck { label: String },
    Adversary(AdversaryAction),
    /// Forge as `target` using captured keys (`captured` label) or random
    /// keys when absent.
    Forge {
        captured: Option<String>,
        target: String,
    },
}

/// Runs one honest registration + authentication, then the adversary script.
/// This is the entry point for externally supplied JSON scripts.
pub fn run_scenario(world: &mut World, script: &AdversaryScript) -> Result<ScenarioReport, SimError> {
    let mut steps = vec![
        ScenarioStep::RegisterUav {
            label: "uav-1".into(),
            pwd: "pwd-1".into(),
        },
        ScenarioStep::HonestAuth { label: "uav-1".into() },
    ];
    steps.extend(script.actions.iter().cloned().map(ScenarioStep::Adversary));
    run_steps(world, "adversary-script", &steps, 0)
}

/// Runs a named scenario in a fresh world seeded with `seed`.
pub fn run_named_scenario(scenario: &Scenario, seed: u64) -> Result<ScenarioReport, SimError> {
    let mut world = World::new(seed);
    run_steps(&mut world, &scenario.name, &scenario.steps, seed)
}

fn run_steps(
    world: &mut World,
    name: &str,
    steps: &[ScenarioStep],
    seed: u64,
) -> Result<ScenarioReport, SimError> {
    let mut events = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        // each step gets its own tick so timestamps are distinct
        world.advance_clock(1_000);
        let (kind, outcome, label) = apply_step(world, step)?;
        let rep_after = label.as_deref().and_then(|l| world.rep_of(l));
        events.push(ScenarioEvent {
            step: i,
            kind,
            outcome,
            rep_after,
        });
    }
    Ok(ScenarioReport {
        name: name.to_string(),
        seed,
        events,
        reputations: world.reputations(),
        chain_blocks: world.chain.blocks().len() as u64,
        chain_valid: world.chain.validate_chain(),
    })
}

fn apply_step(
    world: &mut World,
    step: &ScenarioStep,
) -> Result<(String, String, Option<String>), SimError> {
    match step {
        ScenarioStep::RegisterUav { label, pwd } => {
            let decision = world.register_uav(label, pwd.as_bytes());
            Ok(("register".into(), format!("{decision:?}"), Some(label.clone())))
        }
        ScenarioStep::HonestAuth { label } => {
            let outcome = world.honest_auth(label)?;
            Ok(("honest_auth".into(), format!("{outcome:?}"), Some(label.clone())))
        }
        ScenarioStep::TamperedAuth { label, byte_index } => {
            let outcome = world.tampered_auth(label, *byte_index)?;
            Ok(("tampered_auth".into(), format!("{outcome:?}"), Some(label.clone())))
        }
        ScenarioStep::AdvanceClock { ms } => {
            world.advance_clock(*ms);
            Ok(("advance_clock".into(), format!("+{ms}ms"), None))
        }
        ScenarioStep::GateCheck { label } => {
            let id = UavId::from_label(label);
            let decision = world.controller.gate_registration(&world.chain, &id);
            Ok(("gate_check".into(), format!("{decision:?}"), Some(label.clone())))
        }
        ScenarioStep::Forge { captured, target } => {
            let outcome = world.forge_auth(captured.as_deref(), target)?;
            Ok(("forge".into(), format!("{outcome:?}"), Some(target.clone())))
        }
        ScenarioStep::Adversary(action) => apply_adversary_action(world, action),
    }
}

fn apply_adversary_action(
    world: &mut World,
    action: &AdversaryAction,
) -> Result<(String, String, Option<String>), SimError> {
    match action {
        AdversaryAction::Eavesdrop => Ok((
            "eavesdrop".into(),
            format!("{} open frames observed", world.adversary_log.len()),
            None,
        )),
        AdversaryAction::Replay { frame } => {
            let payload = world
                .adversary_log
                .get(*frame)
                .ok_or_else(|| SimError::MalformedScript(format!("no observed frame {frame}")))?
                .payload
                .clone();
            let outcome = world.deliver_auth_payload(&payload);
            Ok(("replay".into(), format!("{outcome:?}"), None))
        }
        AdversaryAction::Tamper {
            frame,
            byte_index,
            new_byte,
        } => {
            let mut payload = world
                .adversary_log
                .get(*frame)
                .ok_or_else(|| SimError::MalformedScript(format!("no observed frame {frame}")))?
                .payload
                .clone();
            if *byte_index >= payload.len() {
                return Err(SimError::MalformedScript(format!(
                    "byte index {byte_index} out of range"
                )));
            }
            payload[*byte_index] = *new_byte;
            let outcome = world.deliver_auth_payload(&payload);
            Ok(("tamper".into(), format!("{outcome:?}"), None))
        }
        AdversaryAction::Inject { payload } => {
            let outcome = world.deliver_auth_payload(payload);
            Ok(("inject".into(), format!("{outcome:?}"), None))
        }
        AdversaryAction::CaptureUav { uav_label } => {
            world.capture_uav(uav_label)?;
            Ok(("capture".into(), "captured stored state".into(), Some(uav_label.clone())))
        }
    }
}

/// The shipped scenario set exercising the protocol's attack-resistance
/// claims at the observable level.
pub fn scenario_suite() -> Vec<Scenario> {
    use ScenarioStep::*;
    let reg = |label: &str| RegisterUav {
        label: label.into(),
        pwd: format!("pwd-{label}"),
    };
    vec![
        Scenario {
            name: "honest-auth".into(),
            steps: vec![reg("uav-1"), HonestAuth { label: "uav-1".into() }],
        },
        Scenario {
            name: "replay".into(),
            steps: vec![
                reg("uav-1"),
                HonestAuth { label: "uav-1".into() },
                // frame 0 is the accepted authentication request
                Adversary(AdversaryAction::Replay { frame: 0 }),
            ],
        },
        Scenario {
            name: "tamper-each-field".into(),
            steps: vec![
                reg("uav-1"),
                HonestAuth { label: "uav-1".into() },
                // frame 0 layout: uav_id(20) | len(4) | e_pac | v(32) | w(144)
                Adversary(AdversaryAction::Tamper { frame: 0, byte_index: 30, new_byte: 0xaa }),
                Adversary(AdversaryAction::Tamper { frame: 0, byte_index: 120, new_byte: 0xbb }),
                Adversary(AdversaryAction::Tamper { frame: 0, byte_index: 200, new_byte: 0xcc }),
            ],
        },
        Scenario {
            name: "impersonation-with-random-keys".into(),
            steps: vec![
                reg("uav-1"),
                Forge { captured: None, target: "uav-1".into() },
            ],
        },
        Scenario {
            name: "capture-and-cross-forge".into(),
            steps: vec![
                reg("uav-a"),
                reg("uav-b"),
                Adversary(AdversaryAction::CaptureUav { uav_label: "uav-a".into() }),
                Forge { captured: Some("uav-a".into()), target: "uav-b".into() },
            ],
        },
        Scenario {
            name: "low-reputation-lockout".into(),
            steps: vec![
                reg("uav-1"),
                TamperedAuth { label: "uav-1".into(), byte_index: 9 },
                TamperedAuth { label: "uav-1".into(), byte_index: 17 },
                TamperedAuth { label: "uav-1".into(), byte_index: 33 },
                TamperedAuth { label: "uav-1".into(), byte_index: 41 },
                GateCheck { label: "uav-1".into() },
            ],
        },
        Scenario {
            name: "high-reputation-skip".into(),
            steps: vec![
                reg("uav-1"),
                HonestAuth { label: "uav-1".into() },
                HonestAuth { label: "uav-1".into() },
                HonestAuth { label: "uav-1".into() },
                HonestAuth { label: "uav-1".into() },
                HonestAuth { label: "uav-1".into() },
                HonestAuth { label: "uav-1".into() },
                GateCheck { label: "uav-1".into() },
            ],
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn suite_report(name: &str, seed: u64) -> ScenarioReport {
        let scenario = scenario_suite()
            .into_iter()
            .find(|s| s.name == name)
            .expect("scenario exists");
        run_named_scenario(&scenario, seed).unwrap()
    }

    #[test]
    fn honest_flow_single_success() {
        let report = suite_report("honest-auth", 1);
        assert_eq!(report.events[1].outcome, "Success");
        assert_eq!(report.reputations["uav-1"], 1);
        assert!(report.chain_valid);
    }

    #[test]
    fn replay_detected() {
        let report = suite_report("replay", 2);
        assert_eq!(report.events[1].outcome, "Success");
        assert_eq!(report.events[2].outcome, "ReplayedNonce");
        // +1 then -1
        assert_eq!(report.reputations["uav-1"], 0);
    }

    #[test]
    fn tampering_rejected_in_every_field() {
        let report = suite_report("tamper-each-field", 3);
        for event in &report.events[2..] {
            assert_eq!(event.outcome, "IntegrityFailure");
        }
    }

    #[test]
    fn impersonation_and_cross_forge_fail() {
        let report = suite_report("impersonation-with-random-keys", 4);
        assert_eq!(report.events.last().unwrap().outcome, "IntegrityFailure");
        let report = suite_report("capture-and-cross-forge", 5);
        assert_eq!(report.events.last().unwrap().outcome, "IntegrityFailure");
    }

    #[test]
    fn lockout_and_skip_thresholds() {
        let report = suite_report("low-reputation-lockout", 6);
        let reps: Vec<i64> = report.events[1..5]
            .iter()
            .map(|e| e.rep_after.unwrap())
            .collect();
        assert_eq!(reps, vec![-1, -2, -3, -4]);
        assert_eq!(report.events.last().unwrap().outcome, "Reject");
        let report = suite_report("high-reputation-skip", 7);
        assert_eq!(report.reputations["uav-1"], 6);
        assert_eq!(report.events.last().unwrap().outcome, "SkipRegistration");
    }

    #[test]
    fn deterministic_reports() {
        for scenario in scenario_suite() {
            let a = run_named_scenario(&scenario, 99).unwrap().to_json();
            let b = run_named_scenario(&scenario, 99).unwrap().to_json();
            assert_eq!(a, b, "{} not deterministic", scenario.name);
        }
    }

    #[test]
    fn adversary_sees_all_open_frames_and_no_secure_ones() {
        let mut world = World::new(11);
        world.register_uav("uav-1", b"pw");
        world.advance_clock(10);
        world.honest_auth("uav-1").unwrap();
        let open_count = world
            .transcript()
            .iter()
            .filter(|f| f.channel == ChannelKind::Open)
            .count();
        assert_eq!(world.adversary_log().len(), open_count);
        assert!(world
            .adversary_log()
            .iter()
            .all(|f| f.channel == ChannelKind::Open));
        // registration ran entirely on the secure channel: id, challenge,
        // response, credential
        assert!(world
            .transcript()
            .iter()
            .take(4)
            .all(|f| f.channel == ChannelKind::Secure));
        assert_eq!(world.transcript()[4].channel, ChannelKind::Open);
    }

    #[test]
    fn script_json_round_trip() {
        let script = AdversaryScript {
            actions: vec![
                AdversaryAction::Eavesdrop,
                AdversaryAction::Replay { frame: 0 },
                AdversaryAction::Tamper { frame: 0, byte_index: 25, new_byte: 1 },
                AdversaryAction::Inject { payload: vec![1, 2, 3] },
                AdversaryAction::CaptureUav { uav_label: "uav-1".into() },
            ],
        };
        let text = script.to_json();
        let parsed = AdversaryScript::from_json(&text).unwrap();
        assert_eq!(parsed.to_json(), text);
    }

    #[test]
    fn run_scenario_convenience_entry() {
        let mut world = World::new(21);
        let script = AdversaryScript {
            actions: vec![AdversaryAction::Replay { frame: 0 }],
        };
        let report = run_scenario(&mut world, &script).unwrap();
        assert_eq!(report.events[1].outcome, "Success");
        assert_eq!(report.events[2].outcome, "ReplayedNonce");
    }

    #[test]
    fn malformed_script_errors() {
        let mut world = World::new(22);
        let script = AdversaryScript {
            actions: vec![AdversaryAction::Replay { frame: 404 }],
        };
        assert!(run_scenario(&mut world, &script).is_err());
    }
}
