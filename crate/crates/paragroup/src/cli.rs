//! Batch front end: `paragroup <subcommand> [--config PATH] [--seed N]
//! [--deterministic] [--print-config]`.
//!
//! Each subcommand reads one JSON object (unknown keys are rejected) and
//! writes CSV or JSON. Errors go to stderr as `{"error": kind, "message": ..}`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::diffops::{d_block, TaylorOps};
use crate::dno::{
    build_factorization, good_unknown, para_dn_from_parts, BSource, ParaDnConfig, TrefftzOracle,
};
use crate::error::{Error, Result};
use crate::linalg::{hs_norm, CMat, C64};
use crate::lp::{phi, psi, TCells};
use crate::paradiff::{paraproduct, ParaOptions};
use crate::repr::{frame_symbol, sigma_mat, PiTag, RepLabel};
use crate::symcalc::{symbol_of, Symbol};
use crate::transform::{EulerGrid, Grid, HopfGrid, SpectralFn, SphFn};
use crate::waves::{dispersion_run, DispersionFit, WaveConfig, WaveSolver, WaveState};

#[derive(Parser, Debug)]
#[command(name = "paragroup", version, about = "Para-differential calculus on SU(2)/S^2 and spherical capillary waves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config for the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single worker thread, so floating-point reductions are reproducible.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Print the effective config as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Forward/inverse round trip and Plancherel report.
    Transform,
    /// Invariant suites of repr, transform, diffops, lp, symcalc, paradiff.
    Check,
    /// Oracle against para-linearized DN, one row per mode.
    DnCompare,
    /// Time evolution with conserved-quantity series.
    Simulate,
    /// Dispersion fit of single-mode runs.
    Spectrum,
}

/// `amp` times the real harmonic of degree `n`, order `m`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub n: usize,
    #[serde(default)]
    pub m: i32,
    pub amp: f64,
}

pub fn modes_to_sph(l_max: usize, modes: &[ModeSpec]) -> Result<SphFn> {
    let mut s = SphFn::zeros(l_max);
    for md in modes {
        if md.n > l_max || md.m.unsigned_abs() as usize > md.n {
            return Err(Error::Config(format!("mode ({}, {}) outside l_max = {l_max}", md.n, md.m)));
        }
        s.axpy(md.amp, &SphFn::real_mode(l_max, md.n, md.m));
    }
    Ok(s)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    /// Band `2 l` of the random test function.
    pub twice_l_max: u32,
    pub seed: u64,
    /// JSON report path; stdout when absent.
    pub output: Option<PathBuf>,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            twice_l_max: 8,
            seed: 1,
            output: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub seed: u64,
    /// `2 l` bound of the representation identities.
    pub twice_l_max: u32,
    pub output: Option<PathBuf>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            seed: 1,
            twice_l_max: 8,
            output: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnCompareConfig {
    pub l_max: usize,
    pub zeta: Vec<ModeSpec>,
    /// Degrees of the probes `Y_n^m`; all of `1..=l_max` when empty.
    pub degrees: Vec<usize>,
    pub order: i32,
    pub para: ParaDnConfig,
    pub output: Option<PathBuf>,
}

impl Default for DnCompareConfig {
    fn default() -> Self {
        DnCompareConfig {
            l_max: 12,
            zeta: Vec::new(),
            degrees: Vec::new(),
            order: 0,
            para: ParaDnConfig::default(),
            output: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub wave: WaveConfig,
    pub zeta: Vec<ModeSpec>,
    pub phi: Vec<ModeSpec>,
    pub t_end: f64,
    /// Row cadence of the time series, in steps.
    pub output_every: usize,
    /// Snapshot cadence in steps; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Coefficients `(n, m)` of `zeta` written to the series.
    pub track: Vec<(usize, i32)>,
    pub out_dir: PathBuf,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            wave: WaveConfig::default(),
            zeta: vec![ModeSpec { n: 2, m: 0, amp: 0.01 }],
            phi: Vec::new(),
            t_end: 0.5,
            output_every: 10,
            snapshot_every: 0,
            track: vec![(2, 0), (4, 0)],
            out_dir: PathBuf::from("simulate-out"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub wave: WaveConfig,
    pub degrees: Vec<usize>,
    pub amplitude: f64,
    pub dt: f64,
    pub periods: usize,
    pub t_max: f64,
    pub output: Option<PathBuf>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            wave: WaveConfig::default(),
            degrees: vec![2, 3, 4],
            amplitude: 1e-3,
            dt: 0.02,
            periods: 3,
            t_max: 30.0,
            output: None,
        }
    }
}

// ---------------------------------------------------------------------------
// Invariant suites

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

fn result(suite: &str, name: &str, value: f64, tol: f64) -> CheckResult {
    CheckResult {
        suite: suite.into(),
        name: name.into(),
        value,
        tol,
        pass: value <= tol,
    }
}

fn check_repr(twice_l_max: u32) -> Vec<CheckResult> {
    let (mut comm, mut cas, mut kron) = (0.0_f64, 0.0_f64, 0.0_f64);
    let sig: Vec<[CMat; 3]> = (0..=twice_l_max + 1)
        .map(|t| PiTag::ALL.map(|tag| sigma_mat(tag, RepLabel::new(t))))
        .collect();
    for t in 0..=twice_l_max {
        let l = RepLabel::new(t);
        let s = |j| frame_symbol(j, l);
        for (i, j, k) in [(1, 2, 3), (2, 3, 1), (3, 1, 2)] {
            comm = comm.max(hs_norm(&(s(i) * s(j) - s(j) * s(i) - s(k))));
        }
        let c = s(1) * s(1) + s(2) * s(2) + s(3) * s(3);
        cas = cas.max(hs_norm(&(c + CMat::identity(l.dim(), l.dim()) * C64::from(l.casimir()))));
        for (mu, &tm) in PiTag::ALL.iter().enumerate() {
            for nu in 0..3 {
                let get = |k: u32| sig.get(k as usize).map(|b| &b[nu]);
                let want = if mu == nu { CMat::identity(l.dim(), l.dim()) } else { CMat::zeros(l.dim(), l.dim()) };
                kron = kron.max(hs_norm(&(d_block(tm, &get, l) - want)));
            }
        }
    }
    vec![
        result("repr", "commutator_table", comm, 1e-12),
        result("repr", "casimir", cas, 1e-12),
        result("repr", "difference_of_sigma", kron, 1e-12),
    ]
}

fn check_transform(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lm = RepLabel::new(8);
    let a = SpectralFn::random(lm, 0, 8, &mut rng);
    let g = EulerGrid::for_degree(16);
    let vals = g.inverse(&a);
    let b = g.forward(&vals, lm)?;
    let l2: f64 = (0..g.len()).map(|i| vals[i].norm_sqr() * g.weight(i)).sum();
    let mut out = vec![
        result("transform", "round_trip", a.max_abs_diff(&b), 1e-10),
        result("transform", "plancherel", (l2 - a.plancherel_sq()).abs() / l2, 1e-10),
    ];
    // products of harmonics stay in degrees |p - q| ..= p + q
    let hg = HopfGrid::padded(12);
    let mut leak: f64 = 0.0;
    for p in 0..=6 {
        for q in 0..=6 {
            let vp = hg.synth(&SphFn::real_mode(6, p, 0));
            let vq = hg.synth(&SphFn::real_mode(6, q, q.min(1) as i32));
            let prod: Vec<f64> = vp.iter().zip(&vq).map(|(x, y)| x * y).collect();
            let c = hg.analyze(&prod, 12);
            for n in (0..p.abs_diff(q)).chain(p + q + 1..=12) {
                leak = leak.max(c.degree_norm(n));
            }
        }
    }
    out.push(result("transform", "product_localization", leak, 1e-10));
    Ok(out)
}

fn check_diffops() -> Vec<CheckResult> {
    vec![result("diffops", "taylor_moments", TaylorOps::new(2).moment_residual(), 1e-10)]
}

fn check_lp() -> Vec<CheckResult> {
    let cells = TCells::default();
    let mut err: f64 = 0.0;
    for lam in [0.0, 0.3, 0.9, 1.7, 5.0, 13.2, 40.0] {
        err = err.max((phi(lam) + cells.integrate(4.0 * f64::max(lam, 1.0), |t| psi(lam / t)) - 1.0).abs());
    }
    vec![result("lp", "continuous_partition", err, 1e-8)]
}

fn check_symcalc(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Arc<dyn Grid> = Arc::new(EulerGrid::for_degree(12));
    let f = SpectralFn::random(RepLabel::new(4), 0, 4, &mut rng);
    let id = Symbol::identity(g.clone(), 0, 4, false);
    let v = id.quantize(&f)?;
    let want = g.inverse(&f);
    let q = v.values.iter().zip(&want).fold(0.0_f64, |m, (a, b)| m.max((a - b).norm()));
    let gg = g.clone();
    let s = symbol_of(g.clone(), 0, 4, move |f| Ok(gg.inverse(&crate::diffops::apply_pi(PiTag::Plus, f))))?;
    let mut e: f64 = 0.0;
    for l in s.labels() {
        let w = sigma_mat(PiTag::Plus, l);
        for b in s.label_blocks(l)? {
            e = e.max(hs_norm(&(b - &w)));
        }
    }
    Ok(vec![
        result("symcalc", "identity_quantization", q, 1e-12),
        result("symcalc", "symbol_of_pi_plus", e, 1e-10),
    ])
}

fn check_paradiff(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = EulerGrid::for_degree(16);
    let u = SpectralFn::random(RepLabel::new(8), 0, 8, &mut rng);
    let c0 = C64::new(1.5, -0.5);
    let c = SpectralFn::single(RepLabel::new(8), RepLabel::new(0), CMat::from_element(1, 1, c0));
    let t = paraproduct(&c, &u, &g, RepLabel::new(8), &ParaOptions::default())?;
    let want = u.sub(&u.scale_blocks(|l| phi(l.freq()))).scale(c0);
    Ok(vec![result("paradiff", "paraproduct_of_constant", t.max_abs_diff(&want), 1e-10)])
}

/// All invariant suites; the first argument bounds the label range of the
/// representation identities.
pub fn run_checks(twice_l_max: u32, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = check_repr(twice_l_max);
    out.extend(check_transform(seed)?);
    out.extend(check_diffops());
    out.extend(check_lp());
    out.extend(check_symcalc(seed)?);
    out.extend(check_paradiff(seed)?);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Commands

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransformReport {
    pub twice_l_max: u32,
    pub grid: String,
    pub round_trip_defect: f64,
    pub plancherel_defect: f64,
}

pub fn cmd_transform(cfg: &TransformConfig) -> Result<TransformReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lm = RepLabel::new(cfg.twice_l_max);
    let a = SpectralFn::random(lm, 0, cfg.twice_l_max, &mut rng);
    let g = EulerGrid::for_degree(2 * cfg.twice_l_max);
    let vals = g.inverse(&a);
    let b = g.forward(&vals, lm)?;
    let l2: f64 = (0..g.len()).map(|i| vals[i].norm_sqr() * g.weight(i)).sum();
    let p = a.plancherel_sq();
    Ok(TransformReport {
        twice_l_max: cfg.twice_l_max,
        grid: g.id(),
        round_trip_defect: a.max_abs_diff(&b),
        plancherel_defect: if p > 0.0 { (l2 - p).abs() / p } else { l2 },
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DnRow {
    pub n: usize,
    pub m: i32,
    /// `<D phi, phi>` for the oracle and the para-linearized operator.
    pub oracle: f64,
    pub para: f64,
    pub abs_para_minus_n: f64,
    pub remainder_hs: f64,
    pub remainder_hs_half: f64,
    pub oracle_hs_half: f64,
}

fn inner(a: &SphFn, b: &SphFn) -> f64 {
    let top = a.l_max.min(b.l_max);
    let mut s = 0.0;
    for n in 0..=top {
        for m in -(n as i32)..=(n as i32) {
            s += (a.get(n, m).conj() * b.get(n, m)).re;
        }
    }
    s
}

pub fn cmd_dn_compare(cfg: &DnCompareConfig) -> Result<Vec<DnRow>> {
    let l = cfg.l_max;
    let zeta = modes_to_sph(l, &cfg.zeta)?;
    let syms = build_factorization(&zeta, l, &cfg.para.factorization)?;
    let oracle = TrefftzOracle::new(cfg.para.oracle.clone())?;
    let out = Arc::new(HopfGrid::padded(l));
    let degrees: Vec<usize> = if cfg.degrees.is_empty() { (1..=l).collect() } else { cfg.degrees.clone() };
    let mut rows = Vec::new();
    for n in degrees {
        if n > l || cfg.order.unsigned_abs() as usize > n {
            return Err(Error::Config(format!("probe ({n}, {}) outside l_max = {l}", cfg.order)));
        }
        let phi = SphFn::real_mode(l, n, cfg.order);
        let od = oracle.dn(&zeta, &phi, l)?;
        let b_src = match cfg.para.b_source {
            BSource::Oracle => od.value.clone(),
            BSource::FixedPoint(_) => crate::dno::apply_para_symbol(&syms.lambda, &cfg.para.cutoff, syms.x_band, &phi, &out, l)?.real_part(),
        };
        let gu = good_unknown(&zeta, &phi, &b_src, &out, l, &cfg.para.para);
        let para = para_dn_from_parts(&syms, &gu, &zeta, &out, l, &cfg.para)?;
        let rem = od.value.sub(&para);
        let pv = inner(&phi, &para.real_part());
        rows.push(DnRow {
            n,
            m: cfg.order,
            oracle: inner(&phi, &od.value),
            para: pv,
            abs_para_minus_n: (pv - n as f64).abs(),
            remainder_hs: rem.sobolev_norm(cfg.para.sobolev_s),
            remainder_hs_half: rem.sobolev_norm(cfg.para.sobolev_s + 0.5),
            oracle_hs_half: od.value.sobolev_norm(cfg.para.sobolev_s + 0.5),
        });
    }
    Ok(rows)
}

/// Runs the simulation, writing `timeseries.csv` (and snapshots) into
/// `out_dir`. Returns the number of rows written.
pub fn cmd_simulate(cfg: &SimulateConfig) -> Result<usize> {
    let l = cfg.wave.l_max;
    let solver = WaveSolver::new(cfg.wave.clone())?;
    let st = WaveState::new(modes_to_sph(l, &cfg.zeta)?, modes_to_sph(l, &cfg.phi)?).without_phi_mean();
    fs::create_dir_all(&cfg.out_dir)?;
    let mut w = csv::Writer::from_path(cfg.out_dir.join("timeseries.csv"))?;
    let mut header: Vec<String> = [
        "t", "volume", "area", "kinetic", "hamiltonian", "momentum_x", "momentum_y", "momentum_z", "center_x", "center_y", "center_z",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for &(n, m) in &cfg.track {
        header.push(format!("zeta_{n}_{m}"));
    }
    w.write_record(&header)?;
    let mut rows = 0;
    let mut step = 0usize;
    let every = cfg.output_every.max(1);
    let dir = cfg.out_dir.clone();
    solver.run(st, cfg.t_end, cfg.wave.dt, 1, |s| {
        if step % every == 0 || s.t >= cfg.t_end - 1e-12 {
            let c = solver.conserved(s)?;
            let mut rec = vec![c.t, c.volume, c.area, c.kinetic, c.hamiltonian];
            rec.extend(c.momentum);
            rec.extend(c.center);
            for &(n, m) in &cfg.track {
                rec.push(s.zeta.get(n, m).re);
            }
            w.write_record(rec.iter().map(|v| v.to_string()))?;
            rows += 1;
        }
        if cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0 {
            let snap = serde_json::json!({ "t": s.t, "zeta": s.zeta.to_json(), "phi": s.phi.to_json() });
            fs::write(dir.join(format!("snapshot_{step:06}.json")), serde_json::to_string_pretty(&snap)?)?;
        }
        step += 1;
        Ok(())
    })?;
    w.flush()?;
    Ok(rows)
}

pub fn cmd_spectrum(cfg: &SpectrumConfig) -> Result<Vec<DispersionFit>> {
    let solver = WaveSolver::new(cfg.wave.clone())?;
    cfg.degrees
        .iter()
        .map(|&n| dispersion_run(&solver, n, cfg.amplitude, cfg.dt, cfg.periods, cfg.t_max))
        .collect()
}

// ---------------------------------------------------------------------------
// Plumbing

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => r?,
            }
        }
    }
    Ok(())
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Evaluation(e.to_string()))
}

fn print_config<T: Serialize>(cfg: &T) -> Result<()> {
    write_text(None, &(serde_json::to_string_pretty(cfg)? + "\n"))
}

/// Worker count from `--deterministic` and `PARAGROUP_THREADS`.
pub fn thread_count(deterministic: bool) -> Option<usize> {
    if deterministic {
        return Some(1);
    }
    std::env::var("PARAGROUP_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

fn dispatch(cli: &Cli) -> Result<bool> {
    let path = cli.config.as_deref();
    match cli.command {
        Command::Transform => {
            let mut cfg: TransformConfig = load(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if cli.print_config {
                print_config(&cfg)?;
                return Ok(true);
            }
            let rep = cmd_transform(&cfg)?;
            write_text(cfg.output.as_deref(), &(serde_json::to_string_pretty(&rep)? + "\n"))?;
            Ok(rep.round_trip_defect <= 1e-10 && rep.plancherel_defect <= 1e-10)
        }
        Command::Check => {
            let mut cfg: CheckConfig = load(path)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            if cli.print_config {
                print_config(&cfg)?;
                return Ok(true);
            }
            let res = run_checks(cfg.twice_l_max, cfg.seed)?;
            write_text(cfg.output.as_deref(), &to_csv(&res)?)?;
            Ok(res.iter().all(|r| r.pass))
        }
        Command::DnCompare => {
            let cfg: DnCompareConfig = load(path)?;
            if cli.print_config {
                print_config(&cfg)?;
                return Ok(true);
            }
            let rows = cmd_dn_compare(&cfg)?;
            write_text(cfg.output.as_deref(), &to_csv(&rows)?)?;
            Ok(true)
        }
        Command::Simulate => {
            let cfg: SimulateConfig = load(path)?;
            if cli.print_config {
                print_config(&cfg)?;
                return Ok(true);
            }
            cmd_simulate(&cfg)?;
            Ok(true)
        }
        Command::Spectrum => {
            let cfg: SpectrumConfig = load(path)?;
            if cli.print_config {
                print_config(&cfg)?;
                return Ok(true);
            }
            let fits = cmd_spectrum(&cfg)?;
            write_text(cfg.output.as_deref(), &to_csv(&fits)?)?;
            Ok(true)
        }
    }
}

/// Entry point of the binary. Exit codes: 0 success, 1 failed checks,
/// 2 errors (usage errors keep clap's own code).
pub fn main_with(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(n) = thread_count(cli.deterministic) {
        // a pool may already exist when embedded; the cap is best effort then
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
