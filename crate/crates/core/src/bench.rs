//! Benchmark and accounting: primitive timings, per-phase operation counts,
//! message byte sizes and storage footprints, exportable as JSON or CSV.
//!
//! Absolute millisecond values are reported for orientation only and never
//! compared against anyone else's hardware. The reproducible quantities are
//! the operation counts and the byte arithmetic.

use crate::crypto::{
    self, count_ops, g2_exp, g2_mul, pairing, scalar_mul, OpCounter, Scalar, G1_BYTES, G2_BYTES,
    SCALAR_BYTES,
};
use crate::ledger::UAV_ID_BYTES;
use crate::sim::World;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Size constants used for the byte-accounting reports. The defaults match
/// the reference accounting (|G1| = |G2| = 128, |Zp| = |ID| = |T| = 20,
/// |H| = 32 bytes); `backend_constants` gives the real widths instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeConstants {
    pub size_g1: usize,
    pub size_g2: usize,
    pub size_zp: usize,
    pub size_id: usize,
    pub size_hash: usize,
    pub size_ts: usize,
}

impl SizeConstants {
    pub fn paper_constants() -> Self {
        SizeConstants {
            size_g1: 128,
            size_g2: 128,
            size_zp: 20,
            size_id: 20,
            size_hash: 32,
            size_ts: 20,
        }
    }

    pub fn backend_constants() -> Self {
        SizeConstants {
            size_g1: G1_BYTES,
            size_g2: G2_BYTES,
            size_zp: SCALAR_BYTES,
            size_id: UAV_ID_BYTES,
            size_hash: 32,
            size_ts: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub iterations: u32,
    pub warmup: u32,
    pub seed: u64,
    pub sizes: SizeConstants,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            iterations: 1000,
            warmup: 10,
            seed: 1,
            sizes: SizeConstants::paper_constants(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimitiveTiming {
    pub name: String,
    pub iterations: u32,
    pub mean_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseCost {
    pub phase: String,
    pub actor: String,
    pub counts: OpCounter,
    pub wall_ms: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeRow {
    pub item: String,
    pub formula: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CostReport {
    pub primitives: Vec<PrimitiveTiming>,
    pub phases: Vec<PhaseCost>,
    pub sizes: Vec<SizeRow>,
}

impl CostReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report JSON")
    }

    /// Flat CSV with a section column; field-for-field with the JSON output.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,name,detail,value\n");
        for p in &self.primitives {
            out.push_str(&format!(
                "primitive,{},mean_ms over {} iters,{}\n",
                p.name, p.iterations, p.mean_ms
            ));
        }
        for p in &self.phases {
            let c = &p.counts;
            out.push_str(&format!(
                "phase,{}/{},\"pairing={} mul_g1={} add_g1={} exp_g2={} mul_g2={} hash={}\",{}\n",
                p.phase, p.actor, c.n_pairing, c.n_mul_g1, c.n_add_g1, c.n_exp_g2, c.n_mul_g2,
                c.n_hash, p.wall_ms
            ));
        }
        for s in &self.sizes {
            out.push_str(&format!("size,{},\"{}\",{}\n", s.item, s.formula, s.bytes));
        }
        out
    }
}

fn time_loop<F: FnMut()>(iterations: u32, warmup: u32, mut f: F) -> f64 {
    for _ in 0..warmup {
        f();
    }
    let start = Instant::now();
    for _ in 0..iterations {
        f();
    }
    start.elapsed().as_secs_f64() * 1000.0 / iterations as f64
}

/// Mean wall time for the six primitives: G1 addition, G1 multiplication,
/// G2 multiplication, G2 exponentiation, pairing, hash.
pub fn bench_primitives(cfg: &BenchConfig) -> Vec<PrimitiveTiming> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed);
    let (params, _, _) = crypto::setup(255, 256, &mut rng).expect("default parameters");
    let g = params.generator;
    let a = Scalar::random_nonzero(&mut rng);
    let b = Scalar::random_nonzero(&mut rng);
    let p = scalar_mul(&a, &g);
    let q = scalar_mul(&b, &g);
    let z1 = pairing(&p, &g);
    let z2 = pairing(&q, &g);

    let rows: Vec<(&str, Box<dyn FnMut()>)> = vec![
        ("g1_add", Box::new(move || {
            let _ = crypto::g1_add(&p, &q);
        })),
        ("g1_mul", Box::new(move || {
            let _ = scalar_mul(&a, &q);
        })),
        ("g2_mul", Box::new(move || {
            let _ = g2_mul(&z1, &z2);
        })),
        ("g2_exp", Box::new(move || {
            let _ = g2_exp(&z1, &b);
        })),
        ("pairing", Box::new(move || {
            let _ = pairing(&p, &q);
        })),
        ("hash", Box::new({
            let params = params.clone();
            let mut i: u64 = 0;
            move || {
                i += 1;
                let _ = params.h1(&i.to_be_bytes());
            }
        })),
    ];

    rows.into_iter()
        .map(|(name, mut f)| PrimitiveTiming {
            name: name.to_string(),
            iterations: cfg.iterations,
            mean_ms: time_loop(cfg.iterations, cfg.warmup, &mut f),
        })
        .collect()
}

/// Per-actor operation counts and wall times for one registration followed
/// by one authentication, instrumented with `OpCounter` scopes.
pub fn bench_phases(cfg: &BenchConfig) -> Vec<PhaseCost> {
    let mut world = World::new(cfg.seed);
    let mut phases = Vec::new();

    let start = Instant::now();
    let (_, reg_counts) = count_ops(|| {
        world.register_uav("bench-uav", b"bench-pwd");
    });
    phases.push(PhaseCost {
        phase: "registration".into(),
        actor: "kgc+uav".into(),
        counts: reg_counts,
        wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        note: None,
    });

    // the two authentication halves, measured separately
    world.advance_clock(1_000);
    let uav_id = world.uav_id("bench-uav");
    let clock = world.clock_ms;

    let start = Instant::now();
    let (payload, uav_counts) = count_ops(|| {
        world
            .honest_auth_signcrypt_only("bench-uav")
            .expect("registered above")
    });
    let uav_ms = start.elapsed().as_secs_f64() * 1000.0;
    phases.push(PhaseCost {
        phase: "authentication".into(),
        actor: "uav".into(),
        counts: uav_counts,
        wall_ms: uav_ms,
        note: Some(
            "reference row lists 3 pairings for the UAV and omits the G1 multiplication for W; \
             the implemented formulas cost 2 pairings + 2 exps + 2 hashes + 1 G1 multiplication"
                .into(),
        ),
    });

    let sigma = crate::protocol::SigmaCiphertext::decode(&payload[UAV_ID_BYTES..])
        .expect("payload built above");
    let start = Instant::now();
    let (result, controller_counts) = count_ops(|| {
        world
            .controller
            .unsigncrypt(&mut world.chain, uav_id, &sigma, clock)
    });
    result.expect("honest authentication verifies");
    phases.push(PhaseCost {
        phase: "authentication".into(),
        actor: "controller".into(),
        counts: controller_counts,
        wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        note: Some("matches the reference controller row: 4 pairings + 2 hashes + 2 exps".into()),
    });

    phases
}

/// Message and storage byte accounting under the configured size constants,
/// plus the fleet-storage growth table.
pub fn report_sizes(sizes: &SizeConstants, pac_len: usize, fleet: &[usize]) -> Vec<SizeRow> {
    let mut rows = Vec::new();
    let sigma = 4 + pac_len + sizes.size_zp + sizes.size_g1;
    rows.push(SizeRow {
        item: "sigma_wire".into(),
        formula: format!(
            "4 + |pac| + |Zp| + |G1| = 4 + {} + {} + {}",
            pac_len, sizes.size_zp, sizes.size_g1
        ),
        bytes: sigma,
    });
    let grant = 4 + 4 + 4 + 2 + 4 + sizes.size_id;
    rows.push(SizeRow {
        item: "grant_m".into(),
        formula: format!("3 length prefixes + Ad_2 + Pt_2 + |ID| = 12 + 4 + 2 + {}", sizes.size_id),
        bytes: grant,
    });
    let per_uav = sizes.size_id + 3 * sizes.size_g1;
    rows.push(SizeRow {
        item: "uav_storage".into(),
        formula: format!("|ID| + 3|G1| = {} + 3*{}", sizes.size_id, sizes.size_g1),
        bytes: per_uav,
    });
    for n in fleet {
        rows.push(SizeRow {
            item: format!("fleet_storage_{n}"),
            formula: format!("{n} * per-UAV bytes"),
            bytes: n * per_uav,
        });
    }
    rows
}

/// Convenience: the full report for a config, sizes under both the
/// 128-byte-G1 reference constants and the backend widths.
pub fn full_report(cfg: &BenchConfig) -> CostReport {
    let mut report = CostReport {
        primitives: bench_primitives(cfg),
        phases: bench_phases(cfg),
        sizes: Vec::new(),
    };
    let mut paper = report_sizes(&SizeConstants::paper_constants(), 32, &[1, 10, 100]);
    for row in &mut paper {
        row.item = format!("paper/{}", row.item);
    }
    let mut backend = report_sizes(&SizeConstants::backend_constants(), 32, &[1, 10, 100]);
    for row in &mut backend {
        row.item = format!("backend/{}", row.item);
    }
    report.sizes.extend(paper);
    report.sizes.extend(backend);
    report
}
