use std::io::Write;
use std::path::PathBuf;

use qtomo::harness::{find_floor, FloorPoint, FloorStatus};
use qtomo::{fidelity, fixtures, purity, run_campaign, CampaignResult, ProtocolSpec, TomoError};

use crate::config::{
    AlphaSweepConfig, CampaignConfig, FitConfig, NoiseSweepConfig, RunConfig, Task,
};
use crate::output::{self, NoiseRow, Provenance};
use crate::CliError;

/// Runs the configured task, writes its result files into the output
/// directory and prints one summary line per result row to `out`. Returns
/// the written paths.
pub fn execute(config: &RunConfig, out: &mut (dyn Write + Send)) -> Result<Vec<PathBuf>, CliError> {
    match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))?
            .install(|| dispatch(config, out)),
        None => dispatch(config, out),
    }
}

fn dispatch(config: &RunConfig, out: &mut (dyn Write + Send)) -> Result<Vec<PathBuf>, CliError> {
    match &config.task {
        Task::Run(c) => run(config, c, out),
        Task::SweepAlpha(c) => sweep_alpha(config, c, out),
        Task::SweepNoise(c) => sweep_noise(config, c, out),
        Task::Fit(c) => fit(config, c, out),
        Task::Fixtures => fixtures_report(out).map(|_| Vec::new()),
    }
}

fn say(out: &mut (dyn Write + Send), line: String) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|e| CliError::Runtime(format!("cannot write to stdout: {e}")))
}

fn harness_error(protocol: &ProtocolSpec, n: &str, e: f64, err: TomoError) -> CliError {
    CliError::Runtime(format!("protocol {protocol}, N {n}, E {e}: {err}"))
}

/// The `N` a campaign failed at: the one named by a budget error, else the
/// first grid point whose budget is infeasible, else the whole grid.
fn failing_n(protocol: &ProtocolSpec, grid: &[u64], err: &TomoError) -> String {
    if let TomoError::Budget { n, .. } = err {
        return n.to_string();
    }
    match grid.iter().find(|&&n| protocol.check_budget(n).is_err()) {
        Some(n) => n.to_string(),
        None => format!("{}..{}", grid[0], grid[grid.len() - 1]),
    }
}

fn campaign(c: &CampaignConfig, out: &mut (dyn Write + Send)) -> Result<CampaignResult, CliError> {
    let result = run_campaign(&c.spec()).map_err(|err| {
        let n = failing_n(&c.protocol, &c.n_grid, &err);
        harness_error(&c.protocol, &n, c.error_model.magnitude(), err)
    })?;
    for row in &result.rows {
        say(
            out,
            format!(
                "{} N={} reps={} mean_infidelity={:.6e} stderr={:.3e}",
                result.protocol, row.n, row.reps, row.mean_infidelity, row.stderr
            ),
        )?;
    }
    Ok(result)
}

/// Writes a CSV table with its fit, provenance record and optional plot.
fn write_table(
    config: &RunConfig,
    csv_name: &str,
    csv: Vec<u8>,
    spec_hashes: Vec<String>,
    plot_columns: ((usize, &str), (usize, &str), usize),
) -> Result<Vec<PathBuf>, CliError> {
    let dir = &config.out_dir;
    let report = output::fit_csv(&csv)?;
    let mut written = vec![
        output::write_atomic(dir, csv_name, &csv)?,
        output::write_atomic(dir, output::FIT_JSON, &report.to_json())?,
        output::write_atomic(
            dir,
            output::PROVENANCE_JSON,
            &Provenance::new(config, spec_hashes).to_json(),
        )?,
    ];
    if config.gnuplot {
        let protocols: Vec<String> = report.fits.iter().map(|f| f.protocol.clone()).collect();
        let (x, y, err) = plot_columns;
        let script = output::gnuplot_script(csv_name, &protocols, x, y, err);
        written.push(output::write_atomic(
            dir,
            output::GNUPLOT_SCRIPT,
            script.as_bytes(),
        )?);
    }
    Ok(written)
}

const CAMPAIGN_PLOT: ((usize, &str), (usize, &str), usize) = ((2, "N"), (4, "mean infidelity"), 5);
const NOISE_PLOT: ((usize, &str), (usize, &str), usize) = ((2, "E (rad)"), (6, "noise floor"), 7);

fn run(
    config: &RunConfig,
    c: &CampaignConfig,
    out: &mut (dyn Write + Send),
) -> Result<Vec<PathBuf>, CliError> {
    let result = campaign(c, out)?;
    let hashes = vec![result.spec_hash.clone()];
    write_table(
        config,
        output::CAMPAIGN_CSV,
        output::campaign_csv(&[result]),
        hashes,
        CAMPAIGN_PLOT,
    )
}

fn sweep_alpha(
    config: &RunConfig,
    c: &AlphaSweepConfig,
    out: &mut (dyn Write + Send),
) -> Result<Vec<PathBuf>, CliError> {
    let results = c
        .alphas
        .iter()
        .map(|&alpha| campaign(&c.campaign(alpha), out))
        .collect::<Result<Vec<_>, _>>()?;
    let hashes = results.iter().map(|r| r.spec_hash.clone()).collect();
    write_table(
        config,
        output::CAMPAIGN_CSV,
        output::campaign_csv(&results),
        hashes,
        CAMPAIGN_PLOT,
    )
}

fn sweep_noise(
    config: &RunConfig,
    c: &NoiseSweepConfig,
    out: &mut (dyn Write + Send),
) -> Result<Vec<PathBuf>, CliError> {
    let state = c.state.density();
    let mut rows = Vec::new();
    for protocol in &c.protocols {
        for &e in &c.e_grid {
            let status = find_floor(
                *protocol,
                state,
                c.family.with_magnitude(e),
                c.start_n,
                c.n_cap,
                c.reps,
                c.seed,
            )
            .map_err(|err| {
                let n = match err {
                    TomoError::Budget { n, .. } => n,
                    _ => c.start_n,
                };
                harness_error(protocol, &n.to_string(), e, err)
            })?;
            let line = match status {
                FloorStatus::Converged { n, floor, stderr } => {
                    format!("{protocol} E={e:.4e} floor={floor:.6e} stderr={stderr:.3e} N={n}")
                }
                FloorStatus::NotConverged { n, mean_infidelity } => {
                    format!("{protocol} E={e:.4e} no floor up to N={n} mean_infidelity={mean_infidelity:.6e}")
                }
            };
            say(out, line)?;
            rows.push(NoiseRow {
                protocol: protocol.to_string(),
                point: FloorPoint { e, status },
                reps: c.reps,
                seed: c.seed,
            });
        }
    }
    write_table(
        config,
        output::NOISE_CSV,
        output::noise_csv(&rows),
        Vec::new(),
        NOISE_PLOT,
    )
}

fn fit(
    config: &RunConfig,
    c: &FitConfig,
    out: &mut (dyn Write + Send),
) -> Result<Vec<PathBuf>, CliError> {
    let bytes = std::fs::read(&c.input)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", c.input.display())))?;
    let report = output::fit_csv(&bytes)?;
    for entry in &report.fits {
        let line = match entry.fit {
            Some(f) => format!(
                "{} beta={:.6e} p={:.4} sigma_p={:.4} points={}",
                entry.protocol, f.beta, f.p, f.sigma_p, entry.points
            ),
            None => format!(
                "{} points={} (too few to fit)",
                entry.protocol, entry.points
            ),
        };
        say(out, line)?;
    }
    Ok(vec![output::write_atomic(
        &config.out_dir,
        output::FIT_JSON,
        &report.to_json(),
    )?])
}

fn fixtures_report(out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let (eq7, eq10) = (fixtures::target_state(), fixtures::measured_state());
    for (name, rho) in [("eq7", eq7), ("eq10", eq10)] {
        let m = rho.matrix().0;
        let r = rho.bloch();
        say(
            out,
            format!(
                "{name}: rho = [[{:.4}, {:.4}{:+.4}i], [{:.4}{:+.4}i, {:.4}]] bloch = ({:.4}, {:.4}, {:.4})",
                m[0][0].re, m[0][1].re, m[0][1].im, m[1][0].re, m[1][0].im, m[1][1].re, r.x, r.y, r.z
            ),
        )?;
    }
    say(out, format!("purity(eq7) = {:.4}", purity(&eq7)))?;
    say(out, format!("purity(eq10) = {:.4}", purity(&eq10)))?;
    say(out, format!("F(eq10, eq7) = {:.4}", fidelity(&eq10, &eq7)))
}
