//! Flat `key = value` config files.
//!
//! One setting per line, `#` starts a comment. Missing keys fall back to the
//! stock preset selected by `robot.variant` and `bellows.kind`. Chains are
//! homogeneous by default; `joint.<i>.<section>.<field>` (1-based) overrides
//! a single actuator.
//!
//! The canonical form written by [`to_string`] has sorted keys and numbers
//! with 9 significant digits, and parses back to an identical config.
//!
//! ```text
//! robot.variant = modular
//! robot.n = 3
//! bellows.kind = cast
//! bellows.g_tau = calibrated
//! supply.g_leak = 2e-05
//! control.kp = 5
//! sim.dt = 0.001
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    calibrated_torque_gain, preset, ActuatorSpec, BaseOrientation, BellowsKind, ControlConfig, JointAxis,
    RobotConfig, TwinConfig, ValveSpec, Variant,
};

/// Formats a number with 9 significant digits, `%g` style.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x.abs());
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if (-4..9).contains(&exp) {
        let body = if exp >= 0 {
            let split = exp as usize + 1;
            let (int, frac) = digits.split_at(split);
            let frac = frac.trim_end_matches('0');
            if frac.is_empty() {
                int.to_string()
            } else {
                format!("{int}.{frac}")
            }
        } else {
            let lead = "0".repeat((-exp - 1) as usize);
            format!("0.{lead}{}", digits.trim_end_matches('0'))
        };
        format!("{sign}{body}")
    } else {
        let (first, rest) = digits.split_at(1);
        let rest = rest.trim_end_matches('0');
        if rest.is_empty() {
            format!("{sign}{first}e{exp}")
        } else {
            format!("{sign}{first}.{rest}e{exp}")
        }
    }
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("expected a number, got `{v}`"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite number, got `{v}`"))
    }
}

fn parse_u64(v: &str) -> std::result::Result<u64, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::SemiModular => "semi-modular",
        Variant::Modular => "modular",
    }
}

pub fn parse_variant(v: &str) -> std::result::Result<Variant, String> {
    match v {
        "semi-modular" => Ok(Variant::SemiModular),
        "modular" => Ok(Variant::Modular),
        _ => Err(format!("unknown variant `{v}` (semi-modular, modular)")),
    }
}

pub fn kind_name(k: BellowsKind) -> &'static str {
    match k {
        BellowsKind::Printed => "printed",
        BellowsKind::Cast => "cast",
    }
}

pub fn parse_kind(v: &str) -> std::result::Result<BellowsKind, String> {
    match v {
        "printed" => Ok(BellowsKind::Printed),
        "cast" => Ok(BellowsKind::Cast),
        _ => Err(format!("unknown bellows kind `{v}` (printed, cast)")),
    }
}

pub fn orientation_name(o: BaseOrientation) -> &'static str {
    match o {
        BaseOrientation::VerticalUp => "vertical-up",
        BaseOrientation::Horizontal => "horizontal",
    }
}

pub fn parse_orientation(v: &str) -> std::result::Result<BaseOrientation, String> {
    match v {
        "vertical-up" => Ok(BaseOrientation::VerticalUp),
        "horizontal" => Ok(BaseOrientation::Horizontal),
        _ => Err(format!("unknown orientation `{v}` (vertical-up, horizontal)")),
    }
}

fn axis_name(a: JointAxis) -> &'static str {
    match a {
        JointAxis::Aligned => "aligned",
        JointAxis::AlternatingOrthogonal => "alternating-orthogonal",
    }
}

fn parse_axis(v: &str) -> std::result::Result<JointAxis, String> {
    match v {
        "aligned" => Ok(JointAxis::Aligned),
        "alternating-orthogonal" => Ok(JointAxis::AlternatingOrthogonal),
        _ => Err(format!("unknown joint axis `{v}` (aligned, alternating-orthogonal)")),
    }
}

type Get = fn(&ActuatorSpec) -> Option<String>;
type Set = fn(&mut ActuatorSpec, &str) -> std::result::Result<(), String>;

/// Per-actuator settings. `get` returns `None` for fields that do not apply
/// (parameters of the other valve kind).
struct Field {
    key: &'static str,
    get: Get,
    set: Set,
}

macro_rules! num_field {
    ($key:literal, $($path:ident).+) => {
        Field {
            key: $key,
            get: |a| Some(fmt_num(a.$($path).+)),
            set: |a, v| {
                a.$($path).+ = parse_f64(v)?;
                Ok(())
            },
        }
    };
}

macro_rules! valve_field {
    ($key:literal, $variant:ident, $name:ident) => {
        Field {
            key: $key,
            get: |a| match &a.valve {
                ValveSpec::$variant { $name, .. } => Some(fmt_num(*$name)),
                _ => None,
            },
            set: |a, v| match &mut a.valve {
                ValveSpec::$variant { $name, .. } => {
                    *$name = parse_f64(v)?;
                    Ok(())
                }
                _ => Err(format!(
                    "`{}` does not apply to this valve kind",
                    stringify!($name)
                )),
            },
        }
    };
}

fn valve_kind_name(v: &ValveSpec) -> &'static str {
    match v {
        ValveSpec::Proportional { .. } => "proportional",
        ValveSpec::Binary { .. } => "binary",
    }
}

fn set_valve_kind(a: &mut ActuatorSpec, v: &str) -> std::result::Result<(), String> {
    let spec = match v {
        "proportional" => ValveSpec::default_proportional(),
        "binary" => ValveSpec::default_binary(),
        _ => return Err(format!("unknown valve kind `{v}` (proportional, binary)")),
    };
    if valve_kind_name(&a.valve) != v {
        a.valve = spec;
    }
    Ok(())
}

/// Kind selectors are applied before every other field.
const KIND_FIELDS: &[&str] = &["bellows.kind", "valve.kind"];

fn fields() -> Vec<Field> {
    vec![
        num_field!("actuator.diameter", diameter),
        num_field!("actuator.height", height),
        num_field!("actuator.mass", mass),
        num_field!("actuator.q_max", q_max),
        Field {
            key: "actuator.joint_axis",
            get: |a| Some(axis_name(a.joint_axis).into()),
            set: |a, v| {
                a.joint_axis = parse_axis(v)?;
                Ok(())
            },
        },
        Field {
            key: "bellows.kind",
            get: |a| Some(kind_name(a.bellows.kind).into()),
            set: |a, v| {
                a.bellows.kind = parse_kind(v)?;
                Ok(())
            },
        },
        num_field!("bellows.p_max", bellows.p_max),
        num_field!("bellows.k0", bellows.k0),
        num_field!("bellows.k1", bellows.k1),
        num_field!("bellows.damping", bellows.damping),
        num_field!("bellows.volume", bellows.volume),
        Field {
            key: "bellows.fatigue_cycles",
            get: |a| Some(a.bellows.fatigue.cycles.to_string()),
            set: |a, v| {
                a.bellows.fatigue.cycles = parse_u64(v)?;
                Ok(())
            },
        },
        num_field!("bellows.fatigue_partial_s", bellows.fatigue.partial_s),
        Field {
            key: "bellows.fatigue_runout",
            get: |a| Some(a.bellows.fatigue.runout.to_string()),
            set: |a, v| {
                a.bellows.fatigue.runout = parse_bool(v)?;
                Ok(())
            },
        },
        Field {
            key: "valve.kind",
            get: |a| Some(valve_kind_name(&a.valve).into()),
            set: set_valve_kind,
        },
        valve_field!("valve.tau_pv", Proportional, tau_pv),
        valve_field!("valve.resolution", Proportional, resolution),
        valve_field!("valve.dead_time_per_stage", Proportional, dead_time_per_stage),
        valve_field!("valve.conductance", Binary, conductance),
        valve_field!("valve.f_pwm", Binary, f_pwm),
        valve_field!("valve.switching_life", Binary, switching_life),
        valve_field!("valve.degradation_threshold", Binary, degradation_threshold),
    ]
}

const G_TAU: &str = "bellows.g_tau";
const CALIBRATED: &str = "calibrated";
const AUTO: &str = "auto";

fn is_calibrated(a: &ActuatorSpec) -> bool {
    a.bellows.g_tau == calibrated_torque_gain(a.bellows.k0, a.bellows.k1, a.bellows.p_max, a.q_max)
}

fn g_tau_value(a: &ActuatorSpec) -> String {
    if is_calibrated(a) {
        CALIBRATED.into()
    } else {
        fmt_num(a.bellows.g_tau)
    }
}

/// Canonical key/value map of a config.
pub fn to_map(cfg: &TwinConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        m.insert(k.to_string(), v);
    };
    let r = &cfg.robot;
    put("robot.variant", variant_name(r.variant()).into());
    put("robot.n", r.n().to_string());
    put("robot.base_orientation", orientation_name(r.base_orientation).into());
    put("sim.dt", fmt_num(r.dt));
    put("sim.gravity", fmt_num(r.gravity));
    put("supply.p_source_d", fmt_num(r.supply.p_source_d));
    put("supply.q_src_max", fmt_num(r.supply.q_src_max));
    put("supply.g_leak", fmt_num(r.supply.g_leak));
    put("supply.line_volume", fmt_num(r.supply.line_volume));
    put("supply.tau_src", fmt_num(r.supply.tau_src));

    let c = &cfg.control;
    put("control.kp", fmt_num(c.gains.kp));
    put("control.ki", fmt_num(c.gains.ki));
    put("control.out_min", fmt_num(c.gains.out_min));
    put("control.out_max", fmt_num(c.gains.out_max));
    put("control.integ_min", fmt_num(c.gains.integ_min));
    put("control.integ_max", fmt_num(c.gains.integ_max));
    put("control.p_stiff", c.p_stiff.map(fmt_num).unwrap_or_else(|| AUTO.into()));
    put("control.d_stiff", fmt_num(c.d_stiff));

    put("bus.bit_rate", cfg.bus.bit_rate.to_string());
    put("bus.bits_per_target", cfg.bus.bits_per_target.to_string());
    put("bus.f_s", fmt_num(cfg.bus.f_s));

    let fields = fields();
    if let Some(first) = r.actuators.first() {
        for f in &fields {
            if let Some(v) = (f.get)(first) {
                put(f.key, v);
            }
        }
        put(G_TAU, g_tau_value(first));
        let valve_differs = |a: &ActuatorSpec| valve_kind_name(&a.valve) != valve_kind_name(&first.valve);
        for (i, a) in r.actuators.iter().enumerate().skip(1) {
            for f in &fields {
                let (mine, shared) = ((f.get)(a), (f.get)(first));
                let differs = mine != shared || (f.key.starts_with("valve.") && valve_differs(a));
                if let (true, Some(v)) = (differs, mine) {
                    put(&format!("joint.{}.{}", i + 1, f.key), v);
                }
            }
            let (mine, shared) = (g_tau_value(a), g_tau_value(first));
            if mine != shared || (mine != CALIBRATED && a.bellows.g_tau != first.bellows.g_tau) {
                put(&format!("joint.{}.{G_TAU}", i + 1), mine);
            }
        }
    }
    m
}

/// Canonical text form: sorted `key = value` lines.
pub fn to_string(cfg: &TwinConfig) -> String {
    to_map(cfg)
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

/// Raw entries of a config file, keyed by name with their line numbers.
pub type Entries = BTreeMap<String, (usize, String)>;

pub fn parse_entries(text: &str) -> Result<Entries> {
    let mut out = Entries::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty key or value".into(),
            });
        }
        if let Some((prev, _)) = out.insert(k.to_string(), (line, v.to_string())) {
            return Err(Error::Parse {
                line,
                msg: format!("`{k}` already set on line {prev}"),
            });
        }
    }
    Ok(out)
}

pub fn parse(text: &str) -> Result<TwinConfig> {
    from_entries(&parse_entries(text)?)
}

/// Builds a config from entries; unset keys take preset defaults.
pub fn from_entries(e: &Entries) -> Result<TwinConfig> {
    let mut used: Vec<&str> = Vec::new();
    let err = |key: &str, msg: String| -> Error {
        match e.get(key) {
            Some((line, _)) => Error::Parse {
                line: *line,
                msg: format!("{key}: {msg}"),
            },
            None => Error::config(format!("{key}: {msg}")),
        }
    };
    let get = |key: &str| e.get(key).map(|(_, v)| v.as_str());

    macro_rules! take {
        ($key:expr, $parse:expr) => {{
            let key: &str = $key;
            match get(key) {
                Some(v) => Some($parse(v).map_err(|m: String| err(key, m))?),
                None => None,
            }
        }};
    }

    let variant = take!("robot.variant", parse_variant).unwrap_or(Variant::Modular);
    let kind = take!("bellows.kind", parse_kind).unwrap_or(BellowsKind::Printed);
    let n = take!("robot.n", parse_u64).unwrap_or(3) as usize;
    used.extend(["robot.variant", "robot.n"]);

    let mut robot = RobotConfig::homogeneous(variant, kind, 0);
    let mut base = preset(variant, kind);

    let fields = fields();
    let apply = |a: &mut ActuatorSpec, prefix: &str, used: &mut Vec<String>| -> Result<()> {
        let ordered = fields
            .iter()
            .filter(|f| KIND_FIELDS.contains(&f.key))
            .chain(fields.iter().filter(|f| !KIND_FIELDS.contains(&f.key)));
        for f in ordered {
            let key = format!("{prefix}{}", f.key);
            if let Some(v) = get(&key) {
                (f.set)(a, v).map_err(|m| err(&key, m))?;
                used.push(key);
            }
        }
        Ok(())
    };

    let mut used_dyn: Vec<String> = Vec::new();
    apply(&mut base, "", &mut used_dyn)?;
    let shared_g_tau = match get(G_TAU) {
        None | Some(CALIBRATED) => None,
        Some(v) => Some(parse_f64(v).map_err(|m| err(G_TAU, m))?),
    };
    used.push(G_TAU);
    let calibrate = |a: &mut ActuatorSpec, fixed: Option<f64>| {
        a.bellows.g_tau = fixed.unwrap_or_else(|| a.bellows.calibrated_gain(a.q_max));
    };
    calibrate(&mut base, shared_g_tau);

    robot.actuators = vec![base; n];
    for (i, a) in robot.actuators.iter_mut().enumerate() {
        let prefix = format!("joint.{}.", i + 1);
        apply(a, &prefix, &mut used_dyn)?;
        let key = format!("{prefix}{G_TAU}");
        let fixed = match get(&key) {
            None => shared_g_tau,
            Some(CALIBRATED) => None,
            Some(v) => Some(parse_f64(v).map_err(|m| err(&key, m))?),
        };
        calibrate(a, fixed);
        used_dyn.push(key);
    }

    if let Some(o) = take!("robot.base_orientation", parse_orientation) {
        robot.base_orientation = o;
    }
    macro_rules! num {
        ($key:literal, $target:expr) => {
            if let Some(x) = take!($key, parse_f64) {
                $target = x;
            }
            used.push($key);
        };
    }
    used.push("robot.base_orientation");
    num!("sim.dt", robot.dt);
    num!("sim.gravity", robot.gravity);
    num!("supply.p_source_d", robot.supply.p_source_d);
    num!("supply.q_src_max", robot.supply.q_src_max);
    num!("supply.g_leak", robot.supply.g_leak);
    num!("supply.line_volume", robot.supply.line_volume);
    num!("supply.tau_src", robot.supply.tau_src);

    let mut control = ControlConfig::default_for(&robot);
    num!("control.kp", control.gains.kp);
    num!("control.ki", control.gains.ki);
    num!("control.out_min", control.gains.out_min);
    num!("control.out_max", control.gains.out_max);
    num!("control.integ_min", control.gains.integ_min);
    num!("control.integ_max", control.gains.integ_max);
    num!("control.d_stiff", control.d_stiff);
    control.p_stiff = match get("control.p_stiff") {
        None | Some(AUTO) => None,
        Some(v) => Some(parse_f64(v).map_err(|m| err("control.p_stiff", m))?),
    };
    used.push("control.p_stiff");

    let mut bus = crate::bus::BusConfig::default();
    if let Some(x) = take!("bus.bit_rate", parse_u64) {
        bus.bit_rate = x;
    }
    if let Some(x) = take!("bus.bits_per_target", parse_u64) {
        bus.bits_per_target = x;
    }
    used.extend(["bus.bit_rate", "bus.bits_per_target"]);
    num!("bus.f_s", bus.f_s);

    for (key, (line, _)) in e {
        if !used.contains(&key.as_str()) && !used_dyn.contains(key) {
            return Err(Error::Parse {
                line: *line,
                msg: format!("unknown key `{key}`"),
            });
        }
    }

    Ok(TwinConfig { robot, control, bus })
}

/// Returns a copy of `cfg` with one key replaced.
pub fn with_override(cfg: &TwinConfig, key: &str, value: &str) -> Result<TwinConfig> {
    let mut e: Entries = to_map(cfg).into_iter().map(|(k, v)| (k, (0, v))).collect();
    e.insert(key.to_string(), (0, value.to_string()));
    from_entries(&e)
}

pub fn load(path: &Path) -> Result<TwinConfig> {
    parse(&fs::read_to_string(path)?)
}

pub fn save(cfg: &TwinConfig, path: &Path) -> Result<()> {
    fs::write(path, to_string(cfg))?;
    Ok(())
}
