//! Replicated benchmark sweeps.
//!
//! Each (m, p, rep) cell samples m columns of a zero-free count matrix, inserts
//! zeros by column quantile, runs every configured method on the same input and
//! scores the raw and ceiled imputations against the untouched columns.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::countlab::{insert_zeros, make_zero_free, quantile_sorted, simulate_dm, ColumnRule, DmSpec};
use crate::data::CountMatrix;
use crate::error::{contract, domain, CodaError, Result};
use crate::impute::{apply_ceiling, run_method, ImputationOutcome, Method, MethodParams, Status, Variant};
use crate::io::ingest_csv;
use crate::metrics::{adcs, ced_with, failure_accounting, stable_sum, CedReference, MetricRecord};

/// Where the zero-free truth comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    Csv {
        path: PathBuf,
    },
    /// Dirichlet–multinomial sample with explicit α, made zero-free.
    Dm {
        dm: DmSpec,
        depth_full: u64,
        seed: u64,
    },
    /// Dirichlet–multinomial sample with log-normally spread α, made zero-free.
    Synthetic {
        n: usize,
        parts: usize,
        spread: f64,
        concentration: f64,
        depth: u64,
        depth_full: u64,
        seed: u64,
    },
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec::Synthetic {
            n: 89,
            parts: 600,
            spread: 1.5,
            concentration: 1e7,
            depth: 10_000_000,
            depth_full: 20_000,
            seed: 1,
        }
    }
}

/// α_j = concentration · π_j with π ∝ exp(spread · z_j), z standard normal.
pub fn lognormal_alpha<R: Rng + ?Sized>(parts: usize, spread: f64, concentration: f64, rng: &mut R) -> Result<Vec<f64>> {
    if parts < 2 || !(spread >= 0.0) || !(concentration > 0.0) {
        return contract("need parts >= 2, spread >= 0 and concentration > 0");
    }
    let w: Vec<f64> = (0..parts)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (spread * z).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| concentration * v / total).collect())
}

impl InputSpec {
    /// Loads or generates the count matrix. Benchmarks need it zero-free.
    pub fn load(&self) -> Result<CountMatrix> {
        let counts = match self {
            InputSpec::Csv { path } => ingest_csv(path)?,
            InputSpec::Dm { dm, depth_full, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let raw = simulate_dm(dm, &mut rng)?;
                make_zero_free(&raw, *depth_full, &mut rng)?.counts
            }
            InputSpec::Synthetic { n, parts, spread, concentration, depth, depth_full, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let alpha = lognormal_alpha(*parts, *spread, *concentration, &mut rng)?;
                let dm = DmSpec { alpha, depth: *depth, n: *n };
                let raw = simulate_dm(&dm, &mut rng)?;
                make_zero_free(&raw, *depth_full, &mut rng)?.counts
            }
        };
        if counts.counts().iter().any(|c| *c == 0) {
            return domain("benchmark input must be zero-free (see gen-nozero)");
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    SparsitySweep { m_list: Vec<usize>, p_list: Vec<f64> },
    DimensionSweep { p_fixed: Vec<f64>, m_list: Vec<usize> },
}

impl Design {
    pub fn default_sparsity() -> Self {
        Design::SparsitySweep { m_list: vec![50, 200, 500], p_list: vec![0.05, 0.2, 0.4, 0.6, 0.8] }
    }

    pub fn default_dimension() -> Self {
        Design::DimensionSweep { p_fixed: vec![0.2, 0.5], m_list: vec![50, 200, 500] }
    }

    /// (m, p) cells in sweep order.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        match self {
            Design::SparsitySweep { m_list, p_list } => {
                m_list.iter().flat_map(|&m| p_list.iter().map(move |&p| (m, p))).collect()
            }
            Design::DimensionSweep { p_fixed, m_list } => {
                p_fixed.iter().flat_map(|&p| m_list.iter().map(move |&m| (m, p))).collect()
            }
        }
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: InputSpec,
    pub design: Design,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub base_seed: u64,
    pub variants: Vec<Variant>,
    pub out_dir: Option<PathBuf>,
    pub jobs: usize,
    pub timeout_s: f64,
    pub ced_reference: CedReference,
    #[serde(skip)]
    pub params: MethodParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            input: InputSpec::default(),
            design: Design::default_sparsity(),
            methods: Method::ALL.to_vec(),
            reps: 50,
            base_seed: 42,
            variants: vec![Variant::Raw, Variant::Ceil],
            out_dir: None,
            jobs: default_jobs(),
            timeout_s: 600.0,
            ced_reference: CedReference::AllRows,
            params: MethodParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CodaError::Parse {
            location: format!("{}: line {}, column {}", path.display(), e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// Checks everything that does not need the data; `ncols` adds the m bound.
    pub fn validate(&self, ncols: Option<usize>) -> Result<()> {
        if self.reps == 0 {
            return contract("reps must be at least 1");
        }
        if self.methods.is_empty() {
            return contract("no methods selected");
        }
        if self.variants.is_empty() {
            return contract("no variants selected");
        }
        if self.methods.iter().collect::<BTreeSet<_>>().len() != self.methods.len() {
            return contract("duplicate method in list");
        }
        if self.jobs == 0 {
            return contract("jobs must be at least 1");
        }
        if !(self.timeout_s > 0.0) {
            return contract("timeout must be positive");
        }
        let cells = self.design.cells();
        if cells.is_empty() {
            return contract("design has no (m, p) cells");
        }
        for (m, p) in cells {
            if !(p > 0.0 && p < 1.0) {
                return contract(format!("p = {p} outside (0, 1)"));
            }
            if m < 2 {
                return contract(format!("m = {m} below 2"));
            }
            if let Some(d) = ncols {
                if m > d {
                    return contract(format!("m = {m} exceeds the {d} input columns"));
                }
            }
        }
        Ok(())
    }

    /// Everything that can change a results byte.
    fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.jobs = 0;
        serde_json::to_string(&c).unwrap_or_default()
    }

    fn variant_list(&self) -> Vec<Variant> {
        self.variants.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Replicate seed base_seed ⊕ rep; the key picks an independent ChaCha stream.
pub fn cell_rng(base_seed: u64, rep: usize, key: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ rep as u64);
    let stream = key.iter().fold(0u64, |h, k| splitmix64(h ^ k));
    rng.set_stream(stream);
    rng
}

/// Sorted column sample for (m, rep); shared by every method and every p.
pub fn sample_columns(base_seed: u64, rep: usize, ncols: usize, m: usize) -> Vec<usize> {
    let mut rng = cell_rng(base_seed, rep, &[0, m as u64]);
    let mut cols = sample(&mut rng, ncols, m).into_vec();
    cols.sort_unstable();
    cols
}

fn method_rng(base_seed: u64, rep: usize, m: usize, p: f64, method: Method) -> ChaCha8Rng {
    let slot = Method::ALL.iter().position(|x| *x == method).unwrap_or(0) as u64;
    cell_rng(base_seed, rep, &[1, m as u64, p.to_bits(), slot])
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

/// Runs `f` on its own thread. A panic or an overrun becomes `Err(reason)`.
/// An overrunning thread is left detached.
pub fn isolate<T, F>(timeout: Option<Duration>, f: F) -> std::result::Result<T, String>
where
    T: Send + 'static,
    F: FnOnce() -> T + Send + 'static,
{
    let (tx, rx) = mpsc::channel();
    let handle = std::thread::Builder::new()
        .name("imputation".into())
        .spawn(move || {
            let _ = tx.send(f());
        })
        .map_err(|e| format!("cannot spawn worker: {e}"))?;
    let got = match timeout {
        Some(t) => rx.recv_timeout(t),
        None => rx.recv().map_err(|_| RecvTimeoutError::Disconnected),
    };
    match got {
        Ok(v) => {
            let _ = handle.join();
            Ok(v)
        }
        Err(RecvTimeoutError::Timeout) => Err(format!("timeout after {} s", timeout.unwrap_or_default().as_secs_f64())),
        Err(RecvTimeoutError::Disconnected) => match handle.join() {
            Err(payload) => Err(format!("panic: {}", panic_message(payload))),
            Ok(()) => Err("worker exited without a result".into()),
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cell {
    m: usize,
    p: f64,
    rep: usize,
}

type CellKey = (usize, u64, usize);

impl Cell {
    fn key(&self) -> CellKey {
        (self.m, self.p.to_bits(), self.rep)
    }
}

struct Prepared {
    truth: DMatrix<f64>,
    x: Arc<DMatrix<f64>>,
    dl: Arc<crate::data::DetectionLimits>,
    mask: DMatrix<bool>,
    row_totals: Vec<f64>,
}

fn prepare(data: &CountMatrix, cfg: &ExperimentConfig, cell: Cell) -> Result<Prepared> {
    let cols = sample_columns(cfg.base_seed, cell.rep, data.ncols(), cell.m);
    let truth_counts = data.select_columns(&cols);
    let (zeroed, plan) = insert_zeros(&truth_counts, cell.p, &ColumnRule::EverySecond)?;
    let x = zeroed.to_real();
    let row_totals = (0..x.nrows()).map(|i| x.row(i).sum()).collect();
    Ok(Prepared {
        truth: truth_counts.to_real(),
        x: Arc::new(x),
        dl: Arc::new(plan.realized_dl),
        mask: plan.realized_mask,
        row_totals,
    })
}

fn failed_record(method: Method, variant: Variant, cell: Cell, runtime_s: Option<f64>) -> MetricRecord {
    MetricRecord {
        method: method.id().to_string(),
        variant,
        m: cell.m,
        p: cell.p,
        rep: cell.rep,
        status: "failed".into(),
        ced: None,
        adcs: None,
        runtime_s,
        neg_rows: 0,
    }
}

fn score(prep: &Prepared, cfg: &ExperimentConfig, out: &ImputationOutcome) -> (String, Option<f64>, Option<f64>) {
    if !out.status.is_ok() {
        return (out.status.label().to_string(), None, None);
    }
    let metrics = ced_with(&prep.truth, &out.imputed, &prep.mask, cfg.ced_reference)
        .and_then(|c| adcs(&prep.truth, &out.imputed).map(|a| (c, a)));
    match metrics {
        Ok((c, a)) if c.is_finite() && a.is_finite() => ("ok".into(), Some(c), Some(a)),
        Ok(_) => ("failed".into(), None, None),
        Err(CodaError::Degenerate(_)) => ("degenerate".into(), None, None),
        Err(e) => {
            log::debug!("metric error: {e}");
            ("failed".into(), None, None)
        }
    }
}

/// GBM returns proportions; scale them to the observed row totals before ceiling.
fn ceil_variant(method: Method, out: &ImputationOutcome, row_totals: &[f64]) -> Result<ImputationOutcome> {
    if method == Method::Gbm {
        let mut scaled = out.clone();
        for (i, total) in row_totals.iter().enumerate() {
            let s: f64 = out.imputed.row(i).sum();
            scaled.imputed.row_mut(i).scale_mut(total / s);
        }
        apply_ceiling(&scaled)
    } else {
        apply_ceiling(out)
    }
}

fn run_cell(data: &CountMatrix, cfg: &ExperimentConfig, cell: Cell) -> Vec<MetricRecord> {
    let variants = cfg.variant_list();
    let prep = match prepare(data, cfg, cell) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("cell m={} p={} rep={}: {e}", cell.m, cell.p, cell.rep);
            return cfg
                .methods
                .iter()
                .flat_map(|&m| variants.iter().map(move |&v| failed_record(m, v, cell, None)))
                .collect();
        }
    };
    let timeout = Duration::from_secs_f64(cfg.timeout_s);
    let mut records = Vec::new();
    for &method in &cfg.methods {
        let (x, dl, params) = (Arc::clone(&prep.x), Arc::clone(&prep.dl), cfg.params.clone());
        let mut rng = method_rng(cfg.base_seed, cell.rep, cell.m, cell.p, method);
        let start = Instant::now();
        let result = isolate(Some(timeout), move || run_method(method, &x, &dl, &params, &mut rng));
        let wall = start.elapsed().as_secs_f64();
        let outcome = match result {
            Ok(Ok(out)) => out,
            Ok(Err(e)) => ImputationOutcome::failed(&prep.x, e.to_string()),
            Err(reason) => ImputationOutcome::failed(&prep.x, reason),
        };
        if let Status::Failed(reason) | Status::Degenerate(reason) = &outcome.status {
            log::debug!("{method} m={} p={} rep={}: {reason}", cell.m, cell.p, cell.rep);
        }
        let runtime = if outcome.status.is_ok() { outcome.diagnostics.runtime_s } else { wall };
        let neg_rows = outcome.diagnostics.negative_row_count();
        for &variant in &variants {
            let evaluated = match variant {
                Variant::Raw => Ok(outcome.clone()),
                Variant::Ceil => ceil_variant(method, &outcome, &prep.row_totals),
            };
            let (status, ced, adcs) = match &evaluated {
                Ok(out) => score(&prep, cfg, out),
                Err(_) => ("failed".into(), None, None),
            };
            records.push(MetricRecord {
                method: method.id().to_string(),
                variant,
                m: cell.m,
                p: cell.p,
                rep: cell.rep,
                status,
                ced,
                adcs,
                runtime_s: Some(runtime),
                neg_rows,
            });
        }
    }
    records
}

const RESULT_HEADER: [&str; 10] = ["method", "variant", "m", "p", "rep", "status", "ced", "adcs", "runtime_s", "neg_rows"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_row(r: &MetricRecord, with_runtime: bool) -> [String; 10] {
    [
        r.method.clone(),
        r.variant.as_str().to_string(),
        r.m.to_string(),
        r.p.to_string(),
        r.rep.to_string(),
        r.status.clone(),
        opt(r.ced),
        opt(r.adcs),
        if with_runtime { opt(r.runtime_s) } else { String::new() },
        r.neg_rows.to_string(),
    ]
}

/// Writes records in the given order. Runtimes are left blank unless asked for,
/// since they are the only bytes a fixed seed cannot pin.
pub fn write_records<W: Write>(w: W, records: &[MetricRecord], with_runtime: bool) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RESULT_HEADER)?;
    for r in records {
        wr.write_record(record_row(r, with_runtime))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CodaError::Parse {
            location: format!("{}: record {}", path.display(), k + 1),
            message: format!("bad {what}"),
        };
        let num = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(RESULT_HEADER[i]))
            }
        };
        if rec.len() != RESULT_HEADER.len() {
            return Err(bad("field count"));
        }
        out.push(MetricRecord {
            method: rec[0].to_string(),
            variant: rec[1].parse().map_err(|_| bad("variant"))?,
            m: rec[2].parse().map_err(|_| bad("m"))?,
            p: rec[3].parse().map_err(|_| bad("p"))?,
            rep: rec[4].parse().map_err(|_| bad("rep"))?,
            status: rec[5].to_string(),
            ced: num(6)?,
            adcs: num(7)?,
            runtime_s: num(8)?,
            neg_rows: rec[9].parse().map_err(|_| bad("neg_rows"))?,
        });
    }
    Ok(out)
}

fn sort_records(records: &mut [MetricRecord], methods: &[Method]) {
    let rank: HashMap<&str, usize> = methods.iter().enumerate().map(|(i, m)| (m.id(), i)).collect();
    records.sort_by(|a, b| {
        a.m.cmp(&b.m)
            .then(a.p.total_cmp(&b.p))
            .then(a.rep.cmp(&b.rep))
            .then(rank.get(a.method.as_str()).cmp(&rank.get(b.method.as_str())))
            .then(a.variant.cmp(&b.variant))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub state: String,
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub input_shape: (usize, usize),
    pub cells: usize,
    pub resumed_cells: usize,
    pub records: usize,
    pub status_counts: BTreeMap<String, usize>,
}

const PARTIAL: &str = "results.partial.csv";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Records of fully finished cells from an interrupted run with the same fingerprint.
fn load_resumable(dir: &Path, cfg: &ExperimentConfig, per_cell: usize) -> Result<Vec<MetricRecord>> {
    let (manifest, partial) = (dir.join("manifest.json"), dir.join(PARTIAL));
    if !manifest.exists() || !partial.exists() {
        return Ok(Vec::new());
    }
    let old: Manifest = match serde_json::from_str(&fs::read_to_string(&manifest)?) {
        Ok(m) => m,
        Err(_) => return Ok(Vec::new()),
    };
    if old.fingerprint != cfg.fingerprint() {
        log::warn!("{} belongs to a different configuration; starting over", partial.display());
        return Ok(Vec::new());
    }
    let records = read_records(&partial)?;
    let mut counts: HashMap<CellKey, usize> = HashMap::new();
    for r in &records {
        *counts.entry((r.m, r.p.to_bits(), r.rep)).or_default() += 1;
    }
    Ok(records
        .into_iter()
        .filter(|r| counts[&(r.m, r.p.to_bits(), r.rep)] == per_cell)
        .collect())
}

pub struct SweepOutput {
    pub records: Vec<MetricRecord>,
    pub resumed_cells: usize,
}

impl SweepOutput {
    pub fn all_failed(&self) -> bool {
        self.records.iter().all(|r| r.status != "ok")
    }
}

/// Runs every (m, p, rep) cell of the design. With an output directory the
/// records are appended as cells finish, an interrupted run resumes by cell,
/// and results, timings, manifest and aggregates are written at the end.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate(None)?;
    let data = cfg.input.load()?;
    cfg.validate(Some(data.ncols()))?;
    let per_cell = cfg.methods.len() * cfg.variant_list().len();
    let cells: Vec<Cell> = cfg
        .design
        .cells()
        .into_iter()
        .flat_map(|(m, p)| (0..cfg.reps).map(move |rep| Cell { m, p, rep }))
        .collect();

    let mut done = Vec::new();
    let mut writer = None;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        done = load_resumable(dir, cfg, per_cell)?;
        let mut file = File::create(dir.join(PARTIAL))?;
        write_records(&mut file, &done, true)?;
        let file = OpenOptions::new().append(true).open(dir.join(PARTIAL))?;
        writer = Some(Mutex::new(csv::WriterBuilder::new().has_headers(false).from_writer(file)));
        let manifest = manifest_for(cfg, &data, cells.len(), 0, &[], "running");
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    let finished: BTreeSet<CellKey> = done.iter().map(|r| (r.m, r.p.to_bits(), r.rep)).collect();
    let resumed_cells = finished.len();
    let todo: Vec<Cell> = cells.iter().copied().filter(|c| !finished.contains(&c.key())).collect();
    if resumed_cells > 0 {
        log::info!("resuming: {resumed_cells} cells already done, {} to go", todo.len());
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| CodaError::Contract(format!("cannot build worker pool: {e}")))?;
    let total = todo.len();
    let progress = Mutex::new(0usize);
    let fresh: Vec<Result<Vec<MetricRecord>>> = pool.install(|| {
        todo.par_iter()
            .map(|&cell| {
                let recs = run_cell(&data, cfg, cell);
                if let Some(w) = &writer {
                    let mut w = w.lock().map_err(|_| CodaError::Contract("writer lock poisoned".into()))?;
                    for r in &recs {
                        w.write_record(record_row(r, true))?;
                    }
                    w.flush()?;
                }
                let mut k = progress.lock().map_err(|_| CodaError::Contract("progress lock poisoned".into()))?;
                *k += 1;
                log::info!("cell {}/{total}: m={} p={} rep={}", *k, cell.m, cell.p, cell.rep);
                Ok(recs)
            })
            .collect()
    });
    let mut records = done;
    for r in fresh {
        records.extend(r?);
    }
    sort_records(&mut records, &cfg.methods);

    if let Some(dir) = &cfg.out_dir {
        drop(writer);
        write_records(File::create(dir.join("results.csv"))?, &records, false)?;
        write_timings(File::create(dir.join("timings.csv"))?, &records)?;
        emit_plot_data(&records, dir)?;
        let manifest = manifest_for(cfg, &data, cells.len(), resumed_cells, &records, "complete");
        write_json(&dir.join("manifest.json"), &manifest)?;
        fs::remove_file(dir.join(PARTIAL))?;
    }
    Ok(SweepOutput { records, resumed_cells })
}

fn manifest_for(
    cfg: &ExperimentConfig,
    data: &CountMatrix,
    cells: usize,
    resumed_cells: usize,
    records: &[MetricRecord],
    state: &str,
) -> Manifest {
    let mut status_counts = BTreeMap::new();
    for r in records {
        *status_counts.entry(r.status.clone()).or_insert(0) += 1;
    }
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        state: state.into(),
        fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        input_shape: (data.nrows(), data.ncols()),
        cells,
        resumed_cells,
        records: records.len(),
        status_counts,
    }
}

fn write_timings<W: Write>(w: W, records: &[MetricRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["method", "variant", "m", "p", "rep", "status", "runtime_s"])?;
    for r in records {
        wr.write_record([
            r.method.clone(),
            r.variant.as_str().into(),
            r.m.to_string(),
            r.p.to_string(),
            r.rep.to_string(),
            r.status.clone(),
            opt(r.runtime_s),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn run_sparsity_sweep(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    if !matches!(cfg.design, Design::SparsitySweep { .. }) {
        return contract("configuration does not hold a sparsity sweep");
    }
    Ok(run_sweep(cfg)?.records)
}

pub fn run_dimension_sweep(cfg: &ExperimentConfig) -> Result<Vec<MetricRecord>> {
    if !matches!(cfg.design, Design::DimensionSweep { .. }) {
        return contract("configuration does not hold a dimension sweep");
    }
    Ok(run_sweep(cfg)?.records)
}

/// Mean and type-7 quartiles (q1, median, q3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let mean = stable_sum(&mut v) / v.len() as f64;
    Some(Summary {
        mean,
        q1: quantile_sorted(&v, 0.25),
        median: quantile_sorted(&v, 0.5),
        q3: quantile_sorted(&v, 0.75),
    })
}

fn summary_cells(s: Option<Summary>) -> [String; 4] {
    match s {
        Some(s) => [s.mean.to_string(), s.q1.to_string(), s.median.to_string(), s.q3.to_string()],
        None => Default::default(),
    }
}

type GroupKey = (String, Variant, usize, u64);

fn grouped(records: &[MetricRecord]) -> BTreeMap<GroupKey, Vec<&MetricRecord>> {
    let mut g: BTreeMap<GroupKey, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        g.entry((r.method.clone(), r.variant, r.m, r.p.to_bits())).or_default().push(r);
    }
    g
}

/// Writes aggregates/{metrics,metrics_by_m,runtime,failures}.csv.
pub fn emit_plot_data(records: &[MetricRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return contract("no records to aggregate");
    }
    let dir = out_dir.join("aggregates");
    fs::create_dir_all(&dir)?;
    let groups = grouped(records);

    let metrics_path = dir.join("metrics.csv");
    let mut wr = csv::Writer::from_path(&metrics_path)?;
    wr.write_record([
        "method", "variant", "m", "p", "records", "ok", "ced_mean", "ced_q1", "ced_median", "ced_q3", "adcs_mean",
        "adcs_q1", "adcs_median", "adcs_q3",
    ])?;
    type PerM = BTreeMap<(String, Variant, usize), (Vec<f64>, Vec<f64>)>;
    let mut by_m: PerM = BTreeMap::new();
    for ((method, variant, m, p_bits), group) in &groups {
        let ced: Vec<f64> = group.iter().filter_map(|r| r.ced).collect();
        let adc: Vec<f64> = group.iter().filter_map(|r| r.adcs).collect();
        let (sc, sa) = (summarize(&ced), summarize(&adc));
        let entry = by_m.entry((method.clone(), *variant, *m)).or_default();
        if let (Some(c), Some(a)) = (sc, sa) {
            entry.0.push(c.mean);
            entry.1.push(a.mean);
        }
        let mut row = vec![
            method.clone(),
            variant.as_str().into(),
            m.to_string(),
            f64::from_bits(*p_bits).to_string(),
            group.len().to_string(),
            ced.len().to_string(),
        ];
        row.extend(summary_cells(sc));
        row.extend(summary_cells(sa));
        wr.write_record(&row)?;
    }
    wr.flush()?;

    let by_m_path = dir.join("metrics_by_m.csv");
    let mut wr = csv::Writer::from_path(&by_m_path)?;
    wr.write_record(["method", "variant", "m", "p_levels", "ced_mean", "adcs_mean"])?;
    for ((method, variant, m), (mut c, mut a)) in by_m {
        let k = c.len();
        let mean = |v: &mut Vec<f64>| if k == 0 { String::new() } else { (stable_sum(v) / k as f64).to_string() };
        wr.write_record([method, variant.as_str().into(), m.to_string(), k.to_string(), mean(&mut c), mean(&mut a)])?;
    }
    wr.flush()?;

    let runtime_path = dir.join("runtime.csv");
    let mut wr = csv::Writer::from_path(&runtime_path)?;
    wr.write_record(["method", "m", "p", "runs", "runtime_mean", "runtime_q1", "runtime_median", "runtime_q3"])?;
    let has_raw = records.iter().any(|r| r.variant == Variant::Raw);
    for ((method, variant, m, p_bits), group) in &groups {
        if has_raw && *variant != Variant::Raw {
            continue;
        }
        let times: Vec<f64> = group.iter().filter_map(|r| r.runtime_s).collect();
        let mut row = vec![method.clone(), m.to_string(), f64::from_bits(*p_bits).to_string(), times.len().to_string()];
        row.extend(summary_cells(summarize(&times)));
        wr.write_record(&row)?;
    }
    wr.flush()?;

    let failures_path = dir.join("failures.csv");
    let mut wr = csv::Writer::from_path(&failures_path)?;
    wr.write_record([
        "method",
        "m",
        "p",
        "records",
        "failure_rate",
        "degenerate_rate",
        "negative_row_incidence",
        "mean_runtime_ok",
    ])?;
    for s in failure_accounting(records) {
        wr.write_record([
            s.method,
            s.m.to_string(),
            s.p.to_string(),
            s.records.to_string(),
            s.failure_rate.to_string(),
            s.degenerate_rate.to_string(),
            s.negative_row_incidence.to_string(),
            opt(s.mean_runtime_ok),
        ])?;
    }
    wr.flush()?;
    Ok(vec![metrics_path, by_m_path, runtime_path, failures_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_one_to_four() {
        let s = summarize(&[4.0, 2.0, 1.0, 3.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        assert_eq!(s.mean, 2.5);
    }

    #[test]
    fn isolate_reports_panics_and_overruns() {
        assert_eq!(isolate(None, || 3), Ok(3));
        let e = isolate(None, || -> i32 { panic!("boom") }).unwrap_err();
        assert!(e.contains("boom"), "{e}");
        let e = isolate(Some(Duration::from_millis(20)), || std::thread::sleep(Duration::from_secs(2))).unwrap_err();
        assert!(e.contains("timeout"), "{e}");
    }

    #[test]
    fn streams_depend_on_key_and_rep() {
        let draw = |seed, rep, key: &[u64]| cell_rng(seed, rep, key).random::<u64>();
        assert_eq!(draw(1, 2, &[3]), draw(1, 2, &[3]));
        assert_ne!(draw(1, 2, &[3]), draw(1, 2, &[4]));
        assert_ne!(draw(1, 2, &[3]), draw(1, 3, &[3]));
        let cols = sample_columns(5, 0, 100, 10);
        assert_eq!(cols.len(), 10);
        assert!(cols.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig {
            methods: vec![Method::LrEm, Method::Add1],
            design: Design::default_dimension(),
            ..ExperimentConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"methods": ["add1"], "reps": 3, "design": {"kind": "sparsity_sweep", "m_list": [10], "p_list": [0.5]}}"#)
                .unwrap();
        assert_eq!(partial.reps, 3);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"methods": ["nope"]}"#).is_err());
    }
}
