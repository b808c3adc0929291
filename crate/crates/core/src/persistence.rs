//! Session configuration files and results bundles.
//!
//! A config is a JSON document with `res`, `sim` and optional `solver`
//! sections. Greek parameter names (`γ`, `δω_init`, `μ_sim`, ...) and their
//! Latin spellings are interchangeable.
//!
//! A results bundle is an uncompressed zip archive holding `manifest.json` and
//! one `data/<name>.bin` file per dataset. Datasets are raw little-endian
//! arrays whose dtype and shape are declared in the manifest; complex arrays
//! carry a trailing axis of length 2 for `(re, im)`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Read, Seek, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use crate::dispersion::{DispersionProfile, ModeWindow};
use crate::lle::{DetuningRamp, EvolutionRecord, PlanError, ResonatorSpec, SimulationPlan, SimulationSpec, StepControls};
use crate::steady::SteadySolution;

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

const RES_KEYS: &[&str] = &["R", "Qi", "Qc", "gamma", "dispfile"];
const SIM_KEYS: &[&str] = &[
    "Pin",
    "Tscan",
    "f_pmp",
    "domega_init",
    "domega_end",
    "domega_stop",
    "domega",
    "mu_sim",
    "mu_fit",
    "num_probe",
    "seed",
];
const SOLVER_KEYS: &[&str] = &["tol", "maxiter", "step_factor"];
const RES_REQUIRED: &[&str] = &["R", "Qi", "Qc", "gamma", "dispfile"];
const SIM_REQUIRED: &[&str] = &["Pin", "Tscan", "f_pmp", "domega_init", "domega_end", "mu_sim", "mu_fit"];

/// Greek spelling and Latin alias.
const ALIASES: &[(&str, &str)] = &[
    ("γ", "gamma"),
    ("δω_init", "domega_init"),
    ("δω_end", "domega_end"),
    ("δω_stop", "domega_stop"),
    ("δω", "domega"),
    ("μ_sim", "mu_sim"),
    ("μ_fit", "mu_fit"),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown key '{key}' in section '{section}'")]
    UnknownKey { section: String, key: String },
    #[error("'{greek}' and '{latin}' are both given with different values in section '{section}'")]
    ConflictingAlias {
        section: String,
        greek: String,
        latin: String,
    },
    #[error("missing required key '{key}' in section '{section}'")]
    MissingRequired { section: String, key: String },
    #[error("invalid value in section '{section}': {reason}")]
    Invalid { section: String, reason: String },
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub res: ResonatorSpec,
    pub sim: SimulationSpec,
    pub solver: StepControls,
}

impl SessionConfig {
    /// Location of the dispersion table. Relative paths are taken relative
    /// to the directory holding the config file.
    pub fn dispfile_path(&self, config_path: &Path) -> PathBuf {
        if self.res.dispfile.is_absolute() {
            return self.res.dispfile.clone();
        }
        match config_path.parent() {
            Some(dir) => dir.join(&self.res.dispfile),
            None => self.res.dispfile.clone(),
        }
    }
}

fn values_agree(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(x), Some(y)) => x == y,
            _ => x == y,
        },
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(a, b)| values_agree(a, b)),
        _ => a == b,
    }
}

/// Folds Greek keys onto their Latin names and rejects anything unknown.
fn canonical_section(
    section: &str,
    raw: &Value,
    known: &[&str],
    required: &[&str],
) -> Result<Map<String, Value>, ConfigError> {
    let obj = raw.as_object().ok_or_else(|| ConfigError::Invalid {
        section: section.into(),
        reason: "expected an object".into(),
    })?;
    let mut out = Map::new();
    for (key, value) in obj {
        let latin = ALIASES
            .iter()
            .find(|(greek, _)| greek == key)
            .map(|(_, latin)| *latin)
            .unwrap_or(key.as_str());
        if !known.contains(&latin) {
            return Err(ConfigError::UnknownKey {
                section: section.into(),
                key: key.clone(),
            });
        }
        if let Some(prev) = out.get(latin) {
            if !values_agree(prev, value) {
                let greek = ALIASES.iter().find(|(_, l)| *l == latin).map_or(latin, |(g, _)| *g);
                return Err(ConfigError::ConflictingAlias {
                    section: section.into(),
                    greek: greek.into(),
                    latin: latin.into(),
                });
            }
            continue;
        }
        out.insert(latin.to_string(), value.clone());
    }
    for key in required {
        if !out.contains_key(*key) {
            return Err(ConfigError::MissingRequired {
                section: section.into(),
                key: (*key).into(),
            });
        }
    }
    Ok(out)
}

fn typed<T: serde::de::DeserializeOwned>(section: &str, map: Map<String, Value>) -> Result<T, ConfigError> {
    serde_json::from_value(Value::Object(map)).map_err(|e| ConfigError::Invalid {
        section: section.into(),
        reason: e.to_string(),
    })
}

fn invalid(section: &str) -> impl Fn(PlanError) -> ConfigError + '_ {
    move |e| ConfigError::Invalid {
        section: section.into(),
        reason: e.to_string(),
    }
}

/// Parses a config document.
pub fn parse_config(text: &str) -> Result<SessionConfig, ConfigError> {
    let doc: Value = serde_json::from_str(text)?;
    let top = doc.as_object().ok_or_else(|| ConfigError::Invalid {
        section: "<root>".into(),
        reason: "expected an object".into(),
    })?;
    for key in top.keys() {
        if !["res", "sim", "solver"].contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                section: "<root>".into(),
                key: key.clone(),
            });
        }
    }
    let section = |name: &str| {
        top.get(name).ok_or_else(|| ConfigError::MissingRequired {
            section: "<root>".into(),
            key: name.into(),
        })
    };

    let res: ResonatorSpec = typed("res", canonical_section("res", section("res")?, RES_KEYS, RES_REQUIRED)?)?;
    let sim: SimulationSpec = typed("sim", canonical_section("sim", section("sim")?, SIM_KEYS, SIM_REQUIRED)?)?;
    let mut solver = StepControls::default();
    if let Some(raw) = top.get("solver") {
        let map = canonical_section("solver", raw, SOLVER_KEYS, &[])?;
        let mut merged = match serde_json::to_value(solver)? {
            Value::Object(m) => m,
            _ => unreachable!("StepControls serializes to an object"),
        };
        merged.extend(map);
        solver = typed("solver", merged)?;
    }

    res.validate().map_err(invalid("res"))?;
    sim.validate().map_err(invalid("sim"))?;
    solver.validate().map_err(invalid("solver"))?;
    Ok(SessionConfig { res, sim, solver })
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SessionConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Serializes a config with Latin key names.
pub fn config_to_string(config: &SessionConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config is always serializable");
    text.push('\n');
    text
}

pub fn save_config(config: &SessionConfig, path: impl AsRef<Path>) -> Result<(), ConfigError> {
    let path = path.as_ref();
    fs::write(path, config_to_string(config)).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt bundle, {item}: {reason}")]
    CorruptBundle { item: String, reason: String },
    #[error("unsupported bundle format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u64 },
}

fn corrupt(item: &str, reason: impl ToString) -> BundleError {
    BundleError::CorruptBundle {
        item: item.into(),
        reason: reason.to_string(),
    }
}

/// What a bundle holds besides its config echo.
#[derive(Debug, Clone, PartialEq)]
pub enum BundleContent {
    Temporal(EvolutionRecord),
    Steady {
        plan: SimulationPlan,
        solution: SteadySolution,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsBundle {
    pub config: Option<SessionConfig>,
    pub content: BundleContent,
}

impl ResultsBundle {
    pub fn temporal(record: EvolutionRecord, config: Option<SessionConfig>) -> Self {
        Self {
            config,
            content: BundleContent::Temporal(record),
        }
    }

    pub fn steady(plan: SimulationPlan, solution: SteadySolution, config: Option<SessionConfig>) -> Self {
        Self {
            config,
            content: BundleContent::Steady { plan, solution },
        }
    }

    pub fn plan(&self) -> &SimulationPlan {
        match &self.content {
            BundleContent::Temporal(r) => &r.plan,
            BundleContent::Steady { plan, .. } => plan,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.content {
            BundleContent::Temporal(_) => "temporal",
            BundleContent::Steady { .. } => "steady",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    I64,
    U64,
    U8,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::F64 | Dtype::I64 | Dtype::U64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub byte_length: usize,
}

/// Scalars of a [`SimulationPlan`]; its arrays live in datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlanHeader {
    n_modes: usize,
    t_r: f64,
    alpha_prime: f64,
    intrinsic_loss: f64,
    theta: f64,
    kerr_coeff: f64,
    pump_amp: f64,
    d1: f64,
    omega0: f64,
    m0: i64,
    neff_pmp: f64,
    ng_pmp: f64,
    fit_window: ModeWindow,
    ramp: DetuningRamp,
    controls: StepControls,
    num_probe: usize,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Summary {
    Steady {
        residual_norm: f64,
        iterations: usize,
        detuning: f64,
        converged: bool,
    },
    Temporal {
        snapshots: usize,
        diagnostic: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u64,
    kind: String,
    config: Option<SessionConfig>,
    plan: PlanHeader,
    summary: Summary,
    datasets: BTreeMap<String, DatasetInfo>,
}

#[derive(Default)]
struct Datasets {
    info: BTreeMap<String, DatasetInfo>,
    bytes: BTreeMap<String, Vec<u8>>,
}

impl Datasets {
    fn put(&mut self, name: &str, dtype: Dtype, shape: Vec<usize>, bytes: Vec<u8>) {
        debug_assert_eq!(bytes.len(), shape.iter().product::<usize>() * dtype.size());
        self.info.insert(
            name.into(),
            DatasetInfo {
                dtype,
                shape,
                byte_length: bytes.len(),
            },
        );
        self.bytes.insert(name.into(), bytes);
    }

    fn f64s(&mut self, name: &str, v: &[f64]) {
        self.put(name, Dtype::F64, vec![v.len()], v.iter().flat_map(|x| x.to_le_bytes()).collect());
    }

    fn complex(&mut self, name: &str, rows: &[&[Complex64]]) {
        let n = rows.first().map_or(0, |r| r.len());
        let bytes = rows
            .iter()
            .flat_map(|r| r.iter())
            .flat_map(|c| c.re.to_le_bytes().into_iter().chain(c.im.to_le_bytes()))
            .collect();
        self.put(name, Dtype::F64, vec![rows.len(), n, 2], bytes);
    }
}

fn plan_datasets(plan: &SimulationPlan, out: &mut Datasets) {
    let p = &plan.profile;
    out.put(
        "mu_grid",
        Dtype::I64,
        vec![p.mu_grid.len()],
        p.mu_grid.iter().flat_map(|x| x.to_le_bytes()).collect(),
    );
    out.f64s("dint", &p.dint);
    out.put(
        "extrapolated_mask",
        Dtype::U8,
        vec![p.extrapolated_mask.len()],
        p.extrapolated_mask.iter().map(|&b| b as u8).collect(),
    );
    out.f64s("linear_phase", &plan.linear_phase);
}

fn plan_header(plan: &SimulationPlan) -> PlanHeader {
    let p = &plan.profile;
    PlanHeader {
        n_modes: plan.n_modes,
        t_r: plan.t_r,
        alpha_prime: plan.alpha_prime,
        intrinsic_loss: plan.intrinsic_loss,
        theta: plan.theta,
        kerr_coeff: plan.kerr_coeff,
        pump_amp: plan.pump_amp,
        d1: p.d1,
        omega0: p.omega0,
        m0: p.m0,
        neff_pmp: p.neff_pmp,
        ng_pmp: p.ng_pmp,
        fit_window: p.fit_window,
        ramp: plan.ramp,
        controls: plan.controls,
        num_probe: plan.num_probe,
        seed: plan.seed,
    }
}

fn encode(bundle: &ResultsBundle) -> (Manifest, Datasets) {
    let mut data = Datasets::default();
    plan_datasets(bundle.plan(), &mut data);
    let summary = match &bundle.content {
        BundleContent::Temporal(record) => {
            data.put(
                "snapshot_steps",
                Dtype::U64,
                vec![record.steps.len()],
                record.steps.iter().flat_map(|x| x.to_le_bytes()).collect(),
            );
            let rows: Vec<&[Complex64]> = record.snapshots.iter().map(Vec::as_slice).collect();
            data.complex("snapshots", &rows);
            // an empty record still declares its mode count
            data.info.get_mut("snapshots").expect("just inserted").shape[1] = record.plan.n_modes;
            data.f64s("detuning_trace", &record.detuning_trace);
            data.f64s("comb_power_trace", &record.comb_power_trace);
            Summary::Temporal {
                snapshots: record.snapshots.len(),
                diagnostic: record.diagnostic.clone(),
            }
        }
        BundleContent::Steady { solution, .. } => {
            data.complex("steady_modal", &[&solution.modal]);
            let info = data.info.get_mut("steady_modal").expect("just inserted");
            info.shape.remove(0);
            Summary::Steady {
                residual_norm: solution.residual_norm,
                iterations: solution.iterations,
                detuning: solution.detuning,
                converged: solution.converged,
            }
        }
    };
    let manifest = Manifest {
        format_version: FORMAT_VERSION as u64,
        kind: bundle.kind().into(),
        config: bundle.config.clone(),
        plan: plan_header(bundle.plan()),
        summary,
        datasets: data.info.clone(),
    };
    (manifest, data)
}

fn write_zip<W: Write + Seek>(sink: W, manifest: &Manifest, data: &Datasets) -> zip::result::ZipResult<W> {
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let mut zip = ZipWriter::new(sink);
    zip.start_file(MANIFEST, options)?;
    let mut text = serde_json::to_vec_pretty(manifest).expect("manifest is always serializable");
    text.push(b'\n');
    zip.write_all(&text)?;
    for (name, bytes) in &data.bytes {
        zip.start_file(format!("data/{name}.bin"), options)?;
        zip.write_all(bytes)?;
    }
    zip.finish()
}

/// Writes a bundle atomically: the archive goes to a sibling temp file that
/// is renamed over `path` once complete.
pub fn save_results(bundle: &ResultsBundle, path: impl AsRef<Path>) -> Result<(), BundleError> {
    let path = path.as_ref();
    let io_err = |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    };
    let (manifest, data) = encode(bundle);
    let file_name = path
        .file_name()
        .ok_or_else(|| io_err(io::Error::new(io::ErrorKind::InvalidInput, "bundle path has no file name")))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);

    let result = (|| {
        let file = File::create(&tmp)?;
        let file = write_zip(io::BufWriter::new(file), &manifest, &data).map_err(io::Error::other)?;
        file.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err)
}

fn read_entry<R: Read + Seek>(zip: &mut ZipArchive<R>, name: &str, item: &str) -> Result<Vec<u8>, BundleError> {
    let mut entry = zip.by_name(name).map_err(|e| corrupt(item, e))?;
    let mut buf = Vec::with_capacity(entry.size() as usize);
    entry.read_to_end(&mut buf).map_err(|e| corrupt(item, e))?;
    Ok(buf)
}

struct Loaded {
    info: BTreeMap<String, DatasetInfo>,
    bytes: BTreeMap<String, Vec<u8>>,
}

impl Loaded {
    fn raw(&self, name: &str, dtype: Dtype, shape: &[usize]) -> Result<&[u8], BundleError> {
        let info = self.info.get(name).ok_or_else(|| corrupt(name, "dataset missing from manifest"))?;
        if info.dtype != dtype {
            return Err(corrupt(name, format!("dtype {:?}, expected {dtype:?}", info.dtype)));
        }
        if info.shape != shape {
            return Err(corrupt(name, format!("shape {:?}, expected {shape:?}", info.shape)));
        }
        Ok(&self.bytes[name])
    }

    fn f64s(&self, name: &str, len: usize) -> Result<Vec<f64>, BundleError> {
        let raw = self.raw(name, Dtype::F64, &[len])?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn complex_rows(&self, name: &str, shape: &[usize]) -> Result<Vec<Vec<Complex64>>, BundleError> {
        let raw = self.raw(name, Dtype::F64, shape)?;
        let n = shape[shape.len() - 2];
        let values: Vec<Complex64> = raw
            .chunks_exact(16)
            .map(|c| {
                Complex64::new(
                    f64::from_le_bytes(c[..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..].try_into().unwrap()),
                )
            })
            .collect();
        if n == 0 {
            let rows = if shape.len() == 3 { shape[0] } else { 1 };
            return Ok(vec![Vec::new(); rows]);
        }
        Ok(values.chunks(n).map(<[Complex64]>::to_vec).collect())
    }
}

fn decode_plan(header: &PlanHeader, data: &Loaded) -> Result<SimulationPlan, BundleError> {
    let n = header.n_modes;
    let raw = data.raw("mu_grid", Dtype::I64, &[n])?;
    let mu_grid: Vec<i64> = raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect();
    if mu_grid.windows(2).any(|w| w[1] != w[0] + 1) || !mu_grid.contains(&0) {
        return Err(corrupt("mu_grid", "not a contiguous grid containing the pump mode"));
    }
    let extrapolated_mask = data
        .raw("extrapolated_mask", Dtype::U8, &[n])?
        .iter()
        .map(|&b| b != 0)
        .collect();
    Ok(SimulationPlan {
        profile: DispersionProfile {
            mu_grid,
            dint: data.f64s("dint", n)?,
            d1: header.d1,
            omega0: header.omega0,
            m0: header.m0,
            neff_pmp: header.neff_pmp,
            ng_pmp: header.ng_pmp,
            fit_window: header.fit_window,
            extrapolated_mask,
        },
        n_modes: n,
        t_r: header.t_r,
        alpha_prime: header.alpha_prime,
        intrinsic_loss: header.intrinsic_loss,
        theta: header.theta,
        kerr_coeff: header.kerr_coeff,
        pump_amp: header.pump_amp,
        linear_phase: data.f64s("linear_phase", n)?,
        ramp: header.ramp,
        controls: header.controls,
        num_probe: header.num_probe,
        seed: header.seed,
    })
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ResultsBundle, BundleError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut zip = ZipArchive::new(io::BufReader::new(file)).map_err(|e| corrupt("archive", e))?;

    let text = read_entry(&mut zip, MANIFEST, MANIFEST)?;
    let doc: Value = serde_json::from_slice(&text).map_err(|e| corrupt(MANIFEST, e))?;
    match doc.get("format_version").and_then(Value::as_u64) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(found) => return Err(BundleError::VersionMismatch { found }),
        None => return Err(corrupt(MANIFEST, "format_version missing")),
    }
    let manifest: Manifest = serde_json::from_value(doc).map_err(|e| corrupt(MANIFEST, e))?;

    let mut bytes = BTreeMap::new();
    for (name, info) in &manifest.datasets {
        let buf = read_entry(&mut zip, &format!("data/{name}.bin"), name)?;
        let declared = info.shape.iter().product::<usize>() * info.dtype.size();
        if info.byte_length != declared {
            return Err(corrupt(name, format!("byte_length {} disagrees with shape", info.byte_length)));
        }
        if buf.len() != info.byte_length {
            return Err(corrupt(
                name,
                format!("{} bytes on disk, manifest declares {}", buf.len(), info.byte_length),
            ));
        }
        bytes.insert(name.clone(), buf);
    }
    let data = Loaded {
        info: manifest.datasets,
        bytes,
    };
    let plan = decode_plan(&manifest.plan, &data)?;
    let n = plan.n_modes;

    let content = match (manifest.kind.as_str(), manifest.summary) {
        ("temporal", Summary::Temporal { snapshots, diagnostic }) => {
            let raw = data.raw("snapshot_steps", Dtype::U64, &[snapshots])?;
            let steps = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
            BundleContent::Temporal(EvolutionRecord {
                steps,
                snapshots: data.complex_rows("snapshots", &[snapshots, n, 2])?,
                detuning_trace: data.f64s("detuning_trace", snapshots)?,
                comb_power_trace: data.f64s("comb_power_trace", snapshots)?,
                plan,
                diagnostic,
            })
        }
        (
            "steady",
            Summary::Steady {
                residual_norm,
                iterations,
                detuning,
                converged,
            },
        ) => {
            let modal = data.complex_rows("steady_modal", &[n, 2])?.concat();
            BundleContent::Steady {
                plan,
                solution: SteadySolution {
                    modal,
                    residual_norm,
                    iterations,
                    detuning,
                    converged,
                },
            }
        }
        (kind, _) => return Err(corrupt(MANIFEST, format!("summary does not match kind '{kind}'"))),
    };
    Ok(ResultsBundle {
        config: manifest.config,
        content,
    })
}
