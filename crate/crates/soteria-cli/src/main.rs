//! `soteria` command line: run TOML experiment specs, inspect emitted
//! JSON artifacts, and list the built-in calibration profiles.
//!
//! Exit codes: 0 success, 1 bad input (spec validation, malformed
//! arguments, structural errors), 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use soteria::engine::RunReport;
use soteria::error::{Error, Result};
use soteria::experiment::{run_experiment, ExperimentSpec};
use soteria::fabric::Fabric;
use soteria::keyforge::KeyStoreSet;
use soteria::photonics::{builtin_profiles, profile_by_name, worst_case_loss};
use soteria::pvmap::PvMap;

#[derive(Parser)]
#[command(name = "soteria", version, about = "Photonic NoC security simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment spec and write runs.csv, aggregate.json and
    /// manifest.json under <out>/<experiment name>/.
    Run {
        /// TOML experiment spec.
        spec: PathBuf,
        /// Output root directory.
        #[arg(long, env = "SOTERIA_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Pretty-print a JSON artifact; the dump format follows the
    /// artifact's embedded "kind" (fabric, pvmap, keystores, report,
    /// aggregate, manifest).
    Inspect {
        /// Artifact file emitted by `run` or by the library savers.
        artifact: PathBuf,
    },
    /// Calibration profile helpers.
    Profiles {
        #[command(subcommand)]
        action: ProfilesAction,
    },
}

#[derive(Subcommand)]
enum ProfilesAction {
    /// List built-in loss/energy profiles selectable from specs.
    List,
}

/// Dumps are made to be piped; die quietly when the reader hangs up
/// instead of panicking on EPIPE.
#[cfg(unix)]
fn reset_sigpipe() {
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
}

#[cfg(not(unix))]
fn reset_sigpipe() {}

fn main() -> ExitCode {
    reset_sigpipe();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            // clap renders help/version to stdout and errors to stderr.
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run { spec, out } => run_spec(&spec, &out),
        Command::Inspect { artifact } => inspect(&artifact),
        Command::Profiles {
            action: ProfilesAction::List,
        } => {
            list_profiles();
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_spec(spec_path: &Path, out_root: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)?;
    let spec: ExperimentSpec = toml::from_str(&text)
        .map_err(|e| Error::InvalidSpec(format!("{}: {e}", spec_path.display())))?;
    let out_dir = out_root.join(&spec.name);
    let summary = run_experiment(&spec, &out_dir)?;

    println!(
        "experiment {}: {} runs -> {}",
        summary.experiment,
        summary.rows.len(),
        out_dir.display()
    );
    for g in &summary.groups {
        println!(
            "  {} / {}: latency {:.2} cycles [{:.2}, {:.2}], edp {:.3e} J*s [{:.3e}, {:.3e}], decipher {:.3}",
            g.sweep_label,
            g.scenario,
            g.avg_latency_cycles.mean,
            g.avg_latency_cycles.min,
            g.avg_latency_cycles.max,
            g.edp_js.mean,
            g.edp_js.min,
            g.edp_js.max,
            g.decipher_rate.mean,
        );
    }
    Ok(())
}

fn list_profiles() {
    for p in builtin_profiles() {
        println!("{}", p.name);
        println!("  {}", p.description);
        println!(
            "  per-bit dynamic {:.3} pJ, cipher adder {:.3} pJ/packet, wall-plug {:.0}%",
            p.energy.photonic_pj_per_bit(),
            2.0 * p.energy.xor_pj_per_op,
            p.loss.wallplug_efficiency * 100.0
        );
    }
}

fn inspect(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "{} has no \"kind\" field; not a recognized artifact",
                path.display()
            ))
        })?
        .to_owned();
    match kind.as_str() {
        "fabric" => inspect_fabric(&Fabric::load_json(path)?),
        "pvmap" => inspect_pvmap(&PvMap::load_json(path)?),
        "keystores" => inspect_keystores(&KeyStoreSet::load_json(path)?),
        "report" => inspect_report(&RunReport::load_json(path)?),
        // Aggregates and manifests are already plain summaries.
        "aggregate" | "manifest" => {
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown artifact kind {other:?}"
        ))),
    }
}

fn inspect_fabric(fabric: &Fabric) -> Result<()> {
    let audit = fabric.structural_audit();
    println!(
        "{} fabric: {} gateways, {} wavelengths, {} data waveguides",
        audit.arch, audit.gateways, audit.n_wavelengths, audit.total_data_waveguides
    );
    println!(
        "  modulator/detector banks sized to comb: {}",
        audit.banks_sized_to_comb
    );
    for c in &audit.channels {
        let ramps = match (c.metadata_detectors, c.double_mrs) {
            (Some(md), Some(dm)) => {
                format!(", reservation wg: {md} metadata detector MRs, {dm} double MRs")
            }
            _ => String::new(),
        };
        println!(
            "  channel {}: {:?}, {} waveguides, {} destinations, secured {}, ROM rows {} (source) / {} (destination){}",
            c.channel.0,
            c.kind,
            c.waveguides,
            c.destinations,
            c.secured,
            c.source_rom_entries,
            c.destination_rom_entries,
            ramps
        );
    }
    let profile = profile_by_name("table3_default").expect("built-in profile");
    let (node, loss_db) = worst_case_loss(fabric, &profile.loss)?;
    println!(
        "  worst-case loss (profile table3_default): {loss_db:.3} dB at gateway {}",
        node.0
    );
    Ok(())
}

fn inspect_pvmap(map: &PvMap) -> Result<()> {
    let stats = map.stats();
    println!(
        "pv map seed {}: {}x{} grid over {} mm die",
        map.seed,
        map.grid_n(),
        map.grid_n(),
        map.die.edge_mm
    );
    println!(
        "  resonance shift nm: min {:.4}, max {:.4}, mean {:.4}, std {:.4} (model {:.4})",
        stats.min_nm,
        stats.max_nm,
        stats.mean_nm,
        stats.std_nm,
        map.params.marginal_std_nm()
    );
    Ok(())
}

fn inspect_keystores(stores: &KeyStoreSet) -> Result<()> {
    println!("keystore set: {} ROMs", stores.entries.len());
    for ((gateway, channel, role), store) in &stores.entries {
        println!(
            "  gateway {} channel {} {:?}: {} rows",
            gateway.0,
            channel.0,
            role,
            store.entry_count()
        );
        for (target, key) in &store.unicast_entries {
            println!("    unicast -> {}: {}", target.0, key.bits.to_hex());
        }
        println!("    multicast: {}", store.multicast_entry.bits.to_hex());
    }
    Ok(())
}

fn inspect_report(report: &RunReport) -> Result<()> {
    println!(
        "run report: {} injected, {} delivered, {} measured{}",
        report.packets_injected,
        report.packets_delivered,
        report.measured_packets,
        if report.empty_measurement {
            " (empty measurement window)"
        } else {
            ""
        }
    );
    println!(
        "  latency {:.3} cycles over {} window cycles ({} run cycles)",
        report.avg_latency_cycles, report.window_cycles, report.run_cycles
    );
    println!(
        "  energy: dynamic {:.4e} J, static {:.4e} J, total {:.4e} J, edp {:.4e} J*s",
        report.dynamic_energy_j, report.static_energy_j, report.total_energy_j, report.edp_js
    );
    println!(
        "  static power {:.4} W (laser photonic {:.4} W, electrical {:.4} W, tuning {:.4} W)",
        report.static_power.total_w,
        report.static_power.photonic_laser_w,
        report.static_power.electrical_laser_w,
        report.static_power.tuning_w
    );
    println!(
        "  enciphered traversals {}, integrity violations {}",
        report.enciphered_traversals, report.integrity_violations
    );
    for (traversals, class) in &report.latency_by_traversals {
        println!(
            "  {} photonic traversal(s): {} packets, avg latency {:.3}",
            traversals, class.packets, class.avg_latency_cycles
        );
    }
    if let Some(sec) = &report.security {
        println!(
            "  attack {}: {} snooped, {} deciphered (rate {:.4}), {} metadata leaks",
            sec.strategy, sec.packets_snooped, sec.packets_deciphered, sec.decipher_rate,
            sec.metadata_leaks
        );
    }
    Ok(())
}
