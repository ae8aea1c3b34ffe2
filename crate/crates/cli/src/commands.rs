use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{info, warn};
use mdk_core::{
    analyze, analyze_observables, optimize_intensities, prepare_observables,
    restrict_to_single_basis, run_monte_carlo, x_flip_probabilities, Analysis, Channel,
    Observables, SourcePair,
};

use crate::config::{RunConfig, RunMode};
use crate::csvio::{append_row, csv_line, emit, fmt_f64, read_observables, write_observables};
use crate::error::CliError;

pub const KEYRATE_COLUMNS: [&str; 20] = [
    "rate",
    "rate_per_pulse",
    "zeroed_reason",
    "s11_z",
    "s11_z_raw",
    "branch",
    "s11_clamped",
    "worst_case",
    "s11_x",
    "e11_x",
    "e11_x_raw",
    "delta2_z",
    "delta2_x",
    "frac_z",
    "frac_x",
    "phase_flip",
    "delta11_z",
    "gain",
    "cost",
    "baseline_rate",
];

fn analysis_fields(cfg: &RunConfig, a: &Analysis<f64>) -> Vec<String> {
    let r = &a.report;
    let e11 = a
        .e11_x
        .map(|e| (fmt_f64(e.value), fmt_f64(e.raw)))
        .unwrap_or_default();
    vec![
        fmt_f64(r.rate),
        fmt_f64(r.rate * cfg.signal_pair_probability()),
        r.zeroed_reason.map_or("", |z| z.name()).to_string(),
        fmt_f64(a.s11_z.value),
        fmt_f64(a.s11_z.raw),
        a.s11_z.branch.name().to_string(),
        a.s11_z.clamped.to_string(),
        a.worst_case_corner.is_some().to_string(),
        fmt_f64(a.s11_x),
        e11.0,
        e11.1,
        fmt_f64(a.deltas.delta2_z),
        fmt_f64(a.deltas.delta2_x),
        fmt_f64(a.deltas.frac_z),
        fmt_f64(a.deltas.frac_x),
        fmt_f64(r.phase_flip_used),
        fmt_f64(r.delta11_z),
        fmt_f64(r.components.gain),
        fmt_f64(r.components.cost),
        fmt_f64(a.baseline.rate),
    ]
}

/// Recorded observables `(Z, X)` for the configured mode.
fn observe(
    cfg: &RunConfig,
    channel: &Channel<f64>,
    sources: &SourcePair<f64>,
) -> Result<(Observables<f64>, Observables<f64>), CliError> {
    let coding = cfg.coding.model();
    let opts = cfg.pipeline_options()?;
    match cfg.mode {
        RunMode::Asymptotic => Ok(prepare_observables(channel, sources, &coding, &opts)?),
        RunMode::Montecarlo => {
            let (pa, pb) = x_flip_probabilities(&coding, opts.mode);
            let run = run_monte_carlo(channel, sources, &cfg.sim_run_config(pa, pb))?;
            let x = if opts.single_basis_decoy {
                restrict_to_single_basis(&run.x)
            } else {
                run.x
            };
            Ok((run.z, x))
        }
    }
}

pub fn simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let channel = cfg.channel()?;
    let sources = cfg.simulation_sources()?;
    info!("simulating {:?} observables", cfg.mode);
    let (z, x) = observe(cfg, &channel, &sources)?;
    let mut bytes = cfg.header()?.into_bytes();
    write_observables(&mut bytes, &z, &x)?;
    emit(out, &bytes)
}

pub fn report_text(a: &Analysis<f64>) -> String {
    let r = &a.report;
    let mut s = String::new();
    let mut line = |k: &str, v: String| writeln!(s, "{k:<14}{v}").unwrap();
    line(
        "s11_z",
        format!(
            "{} (branch {}, clamped {}{})",
            fmt_f64(a.s11_z.value),
            a.s11_z.branch.name(),
            a.s11_z.clamped,
            if a.worst_case_corner.is_some() {
                ", worst case over fluctuations"
            } else {
                ""
            }
        ),
    );
    line("s11_x", fmt_f64(a.s11_x));
    line(
        "e11_x",
        a.e11_x
            .map_or("undefined (s11_x is zero)".to_string(), |e| {
                format!("{} (clamped {})", fmt_f64(e.value), e.clamped)
            }),
    );
    line("delta2_z", fmt_f64(a.deltas.delta2_z));
    line("delta2_x", fmt_f64(a.deltas.delta2_x));
    line("frac_z", fmt_f64(a.deltas.frac_z));
    line("frac_x", fmt_f64(a.deltas.frac_x));
    line("phase_flip", fmt_f64(r.phase_flip_used));
    line("delta11_z", fmt_f64(r.delta11_z));
    line("gain", fmt_f64(r.components.gain));
    line("cost", fmt_f64(r.components.cost));
    line("rate", fmt_f64(r.rate));
    line(
        "zeroed_reason",
        r.zeroed_reason.map_or("none", |z| z.name()).to_string(),
    );
    line("baseline_rate", fmt_f64(a.baseline.rate));
    s
}

pub fn keyrate(
    cfg: &RunConfig,
    observables: &Path,
    out: Option<&Path>,
) -> Result<Analysis<f64>, CliError> {
    let sources = cfg.source_pair()?;
    let (z, x) = read_observables(observables)?;
    let analysis = analyze_observables(
        &z,
        &x,
        &sources,
        &cfg.coding.model(),
        &cfg.pipeline_options()?,
    )?;
    print!("{}", report_text(&analysis));
    if let Some(path) = out {
        let mut preamble = cfg.header()?;
        preamble.push_str(&csv_line(
            std::iter::once("observables").chain(KEYRATE_COLUMNS),
        ));
        let mut fields = vec![observables.display().to_string()];
        fields.extend(analysis_fields(cfg, &analysis));
        append_row(path, &preamble, &csv_line(fields))?;
    }
    Ok(analysis)
}

pub fn scan(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let sources = cfg.source_pair()?;
    let coding = cfg.coding.model();
    let opts = cfg.pipeline_options()?;
    let mut bytes = cfg.header()?;
    bytes.push_str(&csv_line(
        ["distance_km", "eta"]
            .into_iter()
            .chain(KEYRATE_COLUMNS)
            .chain(["error"]),
    ));
    for (km, eta) in cfg.scan_points()? {
        let row = cfg.channel_at(eta, eta).and_then(|ch| match cfg.mode {
            RunMode::Asymptotic => Ok(analyze(&ch, &sources, &coding, &opts)?),
            RunMode::Montecarlo => {
                let (z, x) = observe(cfg, &ch, &sources)?;
                Ok(analyze_observables(&z, &x, &sources, &coding, &opts)?)
            }
        });
        let mut fields = vec![km.map(fmt_f64).unwrap_or_default(), fmt_f64(eta)];
        match row {
            Ok(a) => {
                fields.extend(analysis_fields(cfg, &a));
                fields.push(String::new());
            }
            Err(e) => {
                warn!("scan point eta={eta}: {e}");
                fields.extend(std::iter::repeat_n(String::new(), KEYRATE_COLUMNS.len()));
                fields.push(e.to_string());
            }
        }
        bytes.push_str(&csv_line(fields));
    }
    emit(out, bytes.as_bytes())
}

pub fn optimize(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    if cfg.mode != RunMode::Asymptotic {
        return Err(CliError::Config(
            "optimize: runs on exact observables; set mode = \"asymptotic\"".into(),
        ));
    }
    let channel = cfg.channel()?;
    let (grid, family) = cfg.intensity_grid()?;
    let outcome = optimize_intensities(
        &channel,
        &cfg.coding.model(),
        &grid,
        family,
        cfg.sources.k_max,
        &cfg.pipeline_options()?,
    )?;
    let best = &outcome.best;
    println!(
        "best mu_x={} mu_y={} rate={}",
        fmt_f64(best.mu_x),
        fmt_f64(best.mu_y),
        fmt_f64(best.rate())
    );
    let mut bytes = cfg.header()?;
    bytes.push_str(&csv_line([
        "mu_x",
        "mu_y",
        "rate",
        "zeroed_reason",
        "best",
        "error",
    ]));
    for p in &outcome.points {
        let is_best = p.mu_x == best.mu_x && p.mu_y == best.mu_y;
        bytes.push_str(&csv_line([
            fmt_f64(p.mu_x),
            fmt_f64(p.mu_y),
            fmt_f64(p.rate()),
            p.report
                .and_then(|r| r.zeroed_reason)
                .map_or("", |z| z.name())
                .to_string(),
            u8::from(is_best).to_string(),
            p.error.clone().unwrap_or_default(),
        ]));
    }
    emit(out, bytes.as_bytes())
}

/// Output path: the flag wins over the config key.
pub fn output_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    flag.or_else(|| cfg.output.as_ref().map(|o| o.path.clone()))
}
