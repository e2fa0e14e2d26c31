//! Python bindings: a seeded simulation world plus the scenario and cost
//! report entry points, all reports as JSON strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ztuav_core::bench::{full_report, report_sizes, BenchConfig, CostReport, SizeConstants};
use ztuav_core::ledger::UavId;
use ztuav_core::sim;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Seeded simulation of the whole fleet: KGC, controller, gateway, ledger,
/// UAVs and a Dolev-Yao adversary on the open channel.
#[pyclass]
struct World {
    inner: sim::World,
}

#[pymethods]
impl World {
    #[new]
    fn new(seed: u64) -> Self {
        World {
            inner: sim::World::new(seed),
        }
    }

    /// Registration gate decision: "ForwardToKgc", "SkipRegistration" or
    /// "Reject"; on forward the UAV is enrolled via its PUF.
    fn register_uav(&mut self, label: &str, pwd: &[u8]) -> String {
        format!("{:?}", self.inner.register_uav(label, pwd))
    }

    fn honest_auth(&mut self, label: &str) -> PyResult<String> {
        self.inner
            .honest_auth(label)
            .map(|o| format!("{o:?}"))
            .map_err(value_err)
    }

    /// Honest request with one payload byte rewritten in flight.
    fn tampered_auth(&mut self, label: &str, byte_index: usize) -> PyResult<String> {
        self.inner
            .tampered_auth(label, byte_index)
            .map(|o| format!("{o:?}"))
            .map_err(value_err)
    }

    fn capture_uav(&mut self, label: &str) -> PyResult<()> {
        self.inner.capture_uav(label).map(|_| ()).map_err(value_err)
    }

    /// Forge as `target` with keys captured from `captured`, or random
    /// keys when `captured` is None.
    #[pyo3(signature = (target, captured=None))]
    fn forge_auth(&mut self, target: &str, captured: Option<&str>) -> PyResult<String> {
        self.inner
            .forge_auth(captured, target)
            .map(|o| format!("{o:?}"))
            .map_err(value_err)
    }

    fn advance_clock(&mut self, ms: u64) {
        self.inner.advance_clock(ms);
    }

    fn clock_ms(&self) -> u64 {
        self.inner.clock_ms
    }

    /// Latest on-chain reputation, or None before registration.
    fn reputation(&self, label: &str) -> Option<i64> {
        self.inner
            .chain
            .latest_record(&UavId::from_label(label))
            .map(|r| r.rep)
    }

    fn reputation_history(&self, label: &str) -> Vec<i64> {
        self.inner.chain.reputation_history(&UavId::from_label(label))
    }

    fn gate_check(&self, label: &str) -> String {
        let id = UavId::from_label(label);
        format!("{:?}", self.inner.controller.gate_registration(&self.inner.chain, &id))
    }

    fn chain_blocks(&self) -> usize {
        self.inner.chain.blocks().len()
    }

    fn chain_valid(&self) -> bool {
        self.inner.chain.validate_chain()
    }

    fn chain_json(&self) -> String {
        self.inner.chain.to_json()
    }

    fn open_frames(&self) -> usize {
        self.inner.adversary_log().len()
    }
}

/// Names of the shipped attack/defense scenarios.
#[pyfunction]
fn scenario_names() -> Vec<String> {
    sim::scenario_suite().into_iter().map(|s| s.name).collect()
}

/// Runs one shipped scenario in a fresh world; returns the report as JSON.
#[pyfunction]
fn run_scenario(name: &str, seed: u64) -> PyResult<String> {
    let scenario = sim::scenario_suite()
        .into_iter()
        .find(|s| s.name == name)
        .ok_or_else(|| value_err(format!("unknown scenario: {name}")))?;
    sim::run_named_scenario(&scenario, seed)
        .map(|r| r.to_json())
        .map_err(value_err)
}

/// Runs an adversary script (JSON) after one honest registration and
/// authentication; returns the report as JSON.
#[pyfunction]
fn run_script(script_json: &str, seed: u64) -> PyResult<String> {
    let script = sim::AdversaryScript::from_json(script_json).map_err(value_err)?;
    let mut world = sim::World::new(seed);
    sim::run_scenario(&mut world, &script)
        .map(|r| r.to_json())
        .map_err(value_err)
}

/// Full cost report (primitive timings, phase operation counts, sizes) as
/// JSON.
#[pyfunction]
#[pyo3(signature = (iterations=100, seed=1))]
fn cost_report(iterations: u32, seed: u64) -> String {
    full_report(&BenchConfig {
        iterations,
        seed,
        ..BenchConfig::default()
    })
    .to_json()
}

/// Byte-accounting report only, as JSON. `backend=True` uses the real
/// serialized widths instead of the 128-byte-G1 reference constants.
#[pyfunction]
#[pyo3(signature = (backend=false, pac_len=32))]
fn size_report(backend: bool, pac_len: usize) -> String {
    let sizes = if backend {
        SizeConstants::backend_constants()
    } else {
        SizeConstants::paper_constants()
    };
    CostReport {
        sizes: report_sizes(&sizes, pac_len, &[1, 10, 100, 1000]),
        ..CostReport::default()
    }
    .to_json()
}

#[pymodule]
fn ztuav(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<World>()?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_script, m)?)?;
    m.add_function(wrap_pyfunction!(cost_report, m)?)?;
    m.add_function(wrap_pyfunction!(size_report, m)?)?;
    Ok(())
}
