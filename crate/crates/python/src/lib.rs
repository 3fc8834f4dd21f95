//! Python bindings: the simulator, ECC helpers, kernels and campaigns.
//! Structured results cross the boundary as JSON and come back as dicts.

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use lockstep_sim::asm::assemble_source;
use lockstep_sim::campaign::{self, CampaignSpec, FaultEvent};
use lockstep_sim::ecc::{self, Codeword39, EccStatus};
use lockstep_sim::kernels;
use lockstep_sim::soc::{map, RunMode, Soc, SocConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn to_json<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    from_json(py, &serde_json::to_string(v).map_err(value_err)?)
}

/// One simulated chip.
#[pyclass(name = "Simulator")]
struct PySimulator {
    soc: Soc,
}

#[pymethods]
impl PySimulator {
    #[new]
    #[pyo3(signature = (kernel=None, mode="lockstep", scrub=true, scrub_interval=64, trace=false))]
    fn new(kernel: Option<&str>, mode: &str, scrub: bool, scrub_interval: u64, trace: bool) -> PyResult<Self> {
        let mode: RunMode = mode.parse().map_err(PyValueError::new_err)?;
        if scrub_interval == 0 {
            return Err(PyValueError::new_err("scrub_interval must be positive"));
        }
        let mut sim = PySimulator {
            soc: Soc::new(SocConfig {
                mode,
                scrub_enabled: scrub,
                scrub_interval,
                trace,
            }),
        };
        if let Some(k) = kernel {
            sim.load_kernel(k)?;
        }
        Ok(sim)
    }

    fn load_kernel(&mut self, name: &str) -> PyResult<()> {
        let p = kernels::build(name).ok_or_else(|| PyKeyError::new_err(name.to_owned()))?;
        let image = kernels::assemble_at_sram(&p).map_err(value_err)?;
        self.soc.load_image(name, &image).map_err(value_err)
    }

    /// Loads raw bytes at the start of SRAM.
    #[pyo3(signature = (data, entry=None, name="binary"))]
    fn load_binary(&mut self, data: &[u8], entry: Option<u32>, name: &str) -> PyResult<()> {
        self.soc
            .load_bytes(name, map::SRAM_BASE, data, entry.unwrap_or(map::SRAM_BASE))
            .map_err(value_err)
    }

    /// Advances up to `n` cycles; stops early when the run ends.
    #[pyo3(signature = (n=1))]
    fn step(&mut self, n: u64) {
        self.soc.run_until(self.soc.cycle() + n);
    }

    /// Runs to completion or `max_cycles` and returns the report dict.
    #[pyo3(signature = (max_cycles=10_000_000))]
    fn run<'py>(&mut self, py: Python<'py>, max_cycles: u64) -> PyResult<Bound<'py, PyAny>> {
        let r = self.soc.run(max_cycles);
        from_json(py, &r.to_json())
    }

    fn result<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        from_json(py, &self.soc.result().to_json())
    }

    /// Applies a fault such as `"core:1:x10:3@0"` now; the cycle part is ignored.
    fn inject(&mut self, fault: &str) -> PyResult<()> {
        let f: FaultEvent = fault.parse().map_err(PyValueError::new_err)?;
        campaign::inject(&mut self.soc, &f.target);
        Ok(())
    }

    fn core_state<'py>(&self, py: Python<'py>, hart: usize) -> PyResult<Bound<'py, PyAny>> {
        if hart >= 3 {
            return Err(PyValueError::new_err("hart must be 0, 1 or 2"));
        }
        to_json(py, &self.soc.core(hart).dump_state())
    }

    fn reg(&self, hart: usize, r: u8) -> PyResult<u32> {
        if hart >= 3 || r >= 32 {
            return Err(PyValueError::new_err("hart or register out of range"));
        }
        Ok(self.soc.core(hart).reg(r))
    }

    /// Reads a decoded SRAM word by byte address.
    fn peek(&self, addr: u32) -> PyResult<u32> {
        if !(map::SRAM_BASE..map::STACK_TOP).contains(&addr) {
            return Err(PyValueError::new_err("address outside SRAM"));
        }
        Ok(self.soc.memory().peek(((addr - map::SRAM_BASE) / 4) as usize))
    }

    #[getter]
    fn cycle(&self) -> u64 {
        self.soc.cycle()
    }

    #[getter]
    fn running(&self) -> bool {
        self.soc.is_running()
    }

    #[getter]
    fn uart(&self) -> String {
        String::from_utf8_lossy(self.soc.uart()).into_owned()
    }

    #[getter]
    fn trace_hash(&self) -> String {
        format!("{:016x}", self.soc.trace_hash())
    }

    fn trace_lines(&self) -> Vec<String> {
        self.soc.trace().iter().map(ToString::to_string).collect()
    }
}

#[pyfunction]
fn ecc_encode(word: u32) -> u64 {
    ecc::encode(word).bits()
}

/// Returns `(data, status, corrected_bit)`.
#[pyfunction]
fn ecc_decode(codeword: u64) -> PyResult<(u32, &'static str, Option<u8>)> {
    if codeword >> ecc::CODE_BITS != 0 {
        return Err(PyValueError::new_err("codeword wider than 39 bits"));
    }
    let r = ecc::decode(Codeword39::from_bits(codeword));
    Ok(match r.status {
        EccStatus::Clean => (r.data, "clean", None),
        EccStatus::Corrected(b) => (r.data, "corrected", Some(b)),
        EccStatus::Uncorrectable => (r.data, "uncorrectable", None),
    })
}

#[pyfunction]
fn kernel_catalog<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    to_json(py, &kernels::CATALOG)
}

#[pyfunction]
fn expected_checksum(n: usize) -> PyResult<u32> {
    if n < 3 {
        return Err(PyValueError::new_err("n must be at least 3"));
    }
    Ok(kernels::expected_checksum(n))
}

/// Assembles source text at `base` and returns the image bytes.
#[pyfunction]
#[pyo3(signature = (source, base=map::SRAM_BASE))]
fn assemble<'py>(py: Python<'py>, source: &str, base: u32) -> PyResult<Bound<'py, PyBytes>> {
    let image = assemble_source(source, base).map_err(value_err)?;
    Ok(PyBytes::new(py, &image.bytes))
}

/// Runs a campaign from its JSON spec and returns the report dict.
#[pyfunction]
#[pyo3(signature = (spec_json, jobs=1))]
fn run_campaign<'py>(py: Python<'py>, spec_json: &str, jobs: usize) -> PyResult<Bound<'py, PyAny>> {
    let spec = CampaignSpec::from_json(spec_json).map_err(value_err)?;
    let report = py
        .detach(|| campaign::run_campaign(&spec, jobs))
        .map_err(value_err)?;
    from_json(py, &report.to_json())
}

#[pymodule]
#[pyo3(name = "lockstep_sim")]
fn lockstep_sim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimulator>()?;
    m.add_function(wrap_pyfunction!(ecc_encode, m)?)?;
    m.add_function(wrap_pyfunction!(ecc_decode, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(expected_checksum, m)?)?;
    m.add_function(wrap_pyfunction!(assemble, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add("SRAM_BASE", map::SRAM_BASE)?;
    m.add("SCHEMA_VERSION", campaign::SCHEMA_VERSION)?;
    Ok(())
}
