use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sponge_twin::bus::{schedule, wire_count};
use sponge_twin::config::{self, fmt_num, kind_name, variant_name};
use sponge_twin::harness::{
    gravity_margin, run_airtightness, run_fatigue, run_tracking, sweep, sweep_sequential, valve_wear_hours,
    FatigueProtocol, RampSuite, Staircase, Trajectory,
};
use sponge_twin::model::{preset, validate_twin, BaseOrientation, BellowsKind, TwinConfig, ValveSpec, Variant};
use sponge_twin::{Error, Result};

/// Exit code for a run that completed but missed its pass threshold.
const THRESHOLD_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "sponge-twin", version, about = "Digital twin of pneumatic soft-robot chains")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Config file; the stock modular printed chain when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory for CSV logs and summaries.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Exit with code 3 when the run misses its pass threshold.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Leak test of the supply line with all valves closed.
    Airtight {
        #[command(flatten)]
        common: Common,
        /// Staircase increment, bar.
        #[arg(long, default_value_t = 0.25)]
        step: f64,
        /// Last staircase level, bar.
        #[arg(long, default_value_t = 1.5)]
        top: f64,
        /// Evaluated hold per level, s.
        #[arg(long, default_value_t = 20.0)]
        hold: f64,
        /// Settling time before each hold, s.
        #[arg(long, default_value_t = 5.0)]
        settle: f64,
    },
    /// Closed-loop tracking of the ramp suite.
    Track {
        #[command(flatten)]
        common: Common,
        /// Trajectory length, s.
        #[arg(long, default_value_t = 120.0)]
        duration: f64,
    },
    /// Bellows lifetime accounting under the pressurize/vent protocol.
    Fatigue {
        #[command(flatten)]
        common: Common,
        /// Report all four stock bellows instead of the configured one.
        #[arg(long)]
        all: bool,
        /// Also simulate a pressure trace of this many cycles.
        #[arg(long, value_name = "K")]
        simulate: Option<u64>,
    },
    /// Bus capacity and schedule.
    Bus {
        #[command(flatten)]
        common: Common,
        /// Number of targets; the chain length when omitted.
        #[arg(long)]
        targets: Option<u64>,
    },
    /// Torque margin against gravity with the chain straight.
    Gravity {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Orientation::Horizontal)]
        orientation: Orientation,
    },
    /// Tracking runs over a list of values of one config key.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Config key to vary, e.g. `control.kp`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 120.0)]
        duration: f64,
        /// Run on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Check a config file and write its canonical form.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Orientation {
    Horizontal,
    VerticalUp,
}

impl From<Orientation> for BaseOrientation {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::Horizontal => BaseOrientation::Horizontal,
            Orientation::VerticalUp => BaseOrientation::VerticalUp,
        }
    }
}

fn load(common: &Common) -> Result<TwinConfig> {
    match &common.config {
        Some(p) => config::load(p).map_err(|e| match e {
            Error::Io(io) => Error::config(format!("{}: {io}", p.display())),
            e => e,
        }),
        None => Ok(TwinConfig::default()),
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Runs the command; `Ok(false)` means a threshold was missed.
fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Airtight {
            common,
            step,
            top,
            hold,
            settle,
        } => {
            let cfg = load(&common)?;
            if !(step > 0.0 && top > 0.0 && hold >= 0.0 && settle >= 0.0) {
                return Err(Error::config("staircase step and top must be positive, hold and settle >= 0"));
            }
            let r = run_airtightness(&cfg, &Staircase::uniform(step, top, hold, settle))?;
            r.write(&common.out, "airtight")?;
            print!("{}", r.summary_text());
            let m = |k| r.metric(k).unwrap_or(f64::NAN);
            let ok = match cfg.robot.supply.leak_plateau() {
                Some(p) if p < top => (m("final_ps_bar") - p).abs() <= 0.02 && m("max_ps_bar") <= p + 0.02,
                _ => m("final_hold_max_dev_bar") <= 0.005,
            };
            Ok(ok)
        }
        Cmd::Track { common, duration } => {
            let cfg = load(&common)?;
            let t = Trajectory::Ramps(RampSuite {
                duration_s: duration,
                ..RampSuite::default()
            });
            let r = run_tracking(&cfg, &t)?;
            r.write(&common.out, "track")?;
            print!("{}", r.summary_text());
            let ok = r.metric("mean_rmse_deg").is_some_and(|e| e < 3.0)
                && r.metric("max_rmse_deg").is_some_and(|e| e < 4.0);
            Ok(ok)
        }
        Cmd::Fatigue { common, all, simulate } => {
            let cfg = load(&common)?;
            let protocol = FatigueProtocol {
                trace_cycles: simulate,
                ..FatigueProtocol::default()
            };
            let builds: Vec<(String, _)> = if all {
                [Variant::SemiModular, Variant::Modular]
                    .into_iter()
                    .flat_map(|v| [BellowsKind::Printed, BellowsKind::Cast].map(move |k| (v, k)))
                    .map(|(v, k)| (format!("{}_{}", variant_name(v), kind_name(k)), preset(v, k).bellows))
                    .collect()
            } else {
                let a = &cfg.robot.actuators[0];
                vec![(
                    format!("{}_{}", variant_name(a.variant), kind_name(a.bellows.kind)),
                    a.bellows.clone(),
                )]
            };
            for (name, bellows) in builds {
                let mut r = run_fatigue(&bellows, &protocol)?;
                let stem = format!("fatigue_{name}");
                if r.log.is_empty() {
                    r.log.names.clear();
                }
                r.write(&common.out, &stem)?;
                println!("{name}: {} ({} cycles)", r.meta["lifetime"], fmt_num(r.metric("cycles_to_failure").unwrap_or(0.0)));
            }
            if let ValveSpec::Binary {
                f_pwm,
                switching_life,
                degradation_threshold,
                ..
            } = ValveSpec::default_binary()
            {
                let lo = valve_wear_hours(degradation_threshold, f_pwm);
                let hi = valve_wear_hours(switching_life, f_pwm);
                let text = format!(
                    "f_pwm_hz = {}\nvalve_wear_degradation_h = {}\nvalve_wear_rated_h = {}\n",
                    fmt_num(f_pwm),
                    fmt_num(lo),
                    fmt_num(hi)
                );
                write_text(&common.out, "valve_wear_summary.txt", &text)?;
                print!("{text}");
            }
            Ok(true)
        }
        Cmd::Bus { common, targets } => {
            let cfg = load(&common)?;
            let n = targets.unwrap_or(cfg.robot.n() as u64);
            let s = schedule(n, &cfg.bus);
            let w = wire_count(n, cfg.robot.variant());
            let mut text = String::new();
            let _ = writeln!(text, "bit_rate = {}", cfg.bus.bit_rate);
            let _ = writeln!(text, "bits_per_target = {}", cfg.bus.bits_per_target);
            let _ = writeln!(text, "f_s_requested_hz = {}", fmt_num(cfg.bus.f_s));
            let _ = writeln!(text, "max_targets = {}", s.max_targets);
            let _ = writeln!(text, "targets = {n}");
            let _ = writeln!(text, "feasible = {}", s.feasible);
            let _ = writeln!(text, "f_s_hz = {}", fmt_num(s.f_s));
            let _ = writeln!(text, "utilization = {}", fmt_num(s.utilization));
            let _ = writeln!(text, "max_data_age_s = {}", fmt_num(s.data_age.last().copied().unwrap_or(0.0)));
            let _ = writeln!(text, "wires = {}", w.wires);
            let _ = writeln!(text, "tubes = {}", w.tubes);
            write_text(&common.out, "bus_summary.txt", &text)?;
            let mut csv = String::from("target,data_age_s\n");
            for (k, a) in s.data_age.iter().enumerate() {
                let _ = writeln!(csv, "{},{}", k + 1, fmt_num(*a));
            }
            write_text(&common.out, "bus.csv", &csv)?;
            print!("{text}");
            Ok(s.feasible)
        }
        Cmd::Gravity { common, orientation } => {
            let cfg = load(&common)?;
            let g = gravity_margin(&cfg, orientation.into());
            let mut csv = String::from("joint,available_nm,load_nm,margin_nm\n");
            for (i, j) in g.joints.iter().enumerate() {
                let _ = writeln!(csv, "{},{},{},{}", i + 1, fmt_num(j.available), fmt_num(j.load), fmt_num(j.margin));
            }
            let limit = g.max_stackable.map_or("unlimited".to_string(), |n| n.to_string());
            let text = format!(
                "orientation = {}\njoints = {}\nall_positive = {}\nmax_stackable = {limit}\n",
                config::orientation_name(g.orientation),
                g.joints.len(),
                g.all_positive()
            );
            write_text(&common.out, "gravity.csv", &csv)?;
            write_text(&common.out, "gravity_summary.txt", &text)?;
            print!("{csv}{text}");
            Ok(g.all_positive())
        }
        Cmd::Sweep {
            common,
            param,
            values,
            duration,
            sequential,
        } => {
            let cfg = load(&common)?;
            let t = Trajectory::Ramps(RampSuite {
                duration_s: duration,
                ..RampSuite::default()
            });
            let rows = if sequential {
                sweep_sequential(&cfg, &param, &values, &t)?
            } else {
                sweep(&cfg, &param, &values, &t)?
            };
            let n = rows.first().map_or(0, |r| r.rmse_deg.len());
            let mut csv = String::from("value,mean_rmse_deg,max_rmse_deg");
            for i in 1..=n {
                let _ = write!(csv, ",rmse_joint{i}_deg");
            }
            csv.push('\n');
            for r in &rows {
                let _ = write!(csv, "{},{},{}", r.value, fmt_num(r.mean_rmse_deg), fmt_num(r.max_rmse_deg));
                for e in &r.rmse_deg {
                    let _ = write!(csv, ",{}", fmt_num(*e));
                }
                csv.push('\n');
            }
            write_text(&common.out, "sweep.csv", &csv)?;
            print!("{csv}");
            Ok(rows.iter().all(|r| r.mean_rmse_deg < 3.0 && r.max_rmse_deg < 4.0))
        }
        Cmd::Validate { common } => {
            let cfg = load(&common)?;
            let v = validate_twin(&cfg);
            if !v.is_empty() {
                return Err(Error::Invalid(v));
            }
            write_text(&common.out, "config.conf", &config::to_string(&cfg))?;
            println!("ok");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let check = match &cli.cmd {
        Cmd::Airtight { common, .. }
        | Cmd::Track { common, .. }
        | Cmd::Fatigue { common, .. }
        | Cmd::Bus { common, .. }
        | Cmd::Gravity { common, .. }
        | Cmd::Sweep { common, .. }
        | Cmd::Validate { common } => common.check,
    };
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if check => {
            eprintln!("threshold not met");
            ExitCode::from(THRESHOLD_FAILED)
        }
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
