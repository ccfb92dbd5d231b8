//! Subcommand implementations. Each validates its section of the config,
//! runs the library and returns a [`Report`].

use levy_transport::bessel_kernel::bessel_j_seq;
use levy_transport::continuum_limit::{discrete_vs_continuum_report, PdeConfig, ReportQuantity};
use levy_transport::euler_oracle::{run_strided, SchemeConfig};
use levy_transport::exact_solver::{solve, SolveOptions};
use levy_transport::levy_driver::{sample_path, uniform_grid};
use levy_transport::stationary_analysis::{
    cf_exponent, covariance_closed_form, dyadic_cutoffs, existence_check, flights_scan,
    kernel_integral_closed_form, mc_stationary_sample, moments, stationary_law, LawKind, McConfig, McSample,
};
use levy_transport::stats::{self, Estimate};
use levy_transport::{CumulantSpec, Error, SecondMoments};
use serde_json::{json, Value};
use thiserror::Error as ThisError;

use crate::config::{config_hash, ConfigError, Loaded};
use crate::output::{Block, Cell, Meta, Report};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Core(#[from] Error),
    #[error("{0}; pass --allow-divergent to report it instead")]
    NonExistent(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(Error::Divergence(_) | Error::TruncationInsufficient { .. }) => 3,
            CliError::Core(Error::NonExistentLaw(_)) | CliError::NonExistent(_) => 4,
            CliError::Core(_) => 2,
            CliError::Io(_) => 1,
        }
    }
}

/// Run-level switches that do not belong in the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunFlags {
    pub allow_divergent: bool,
}

/// Applies a core validation error to the config key it concerns.
fn at(loaded: &Loaded, key: &str, err: Error) -> CliError {
    match err {
        Error::InvalidParameter(msg) | Error::InvalidGrid(msg) => loaded.error(key, msg).into(),
        other => other.into(),
    }
}

fn check_driver(loaded: &Loaded) -> Result<(), CliError> {
    let Err(err) = loaded.config.driver.validate() else { return Ok(()) };
    let Error::InvalidParameter(msg) = &err else { return Err(err.into()) };
    let first = msg.split_whitespace().next().unwrap_or("");
    let key = match first {
        "sigma" | "drift" => format!("driver.{first}"),
        f if f.starts_with("jump.") => format!("driver.{f}"),
        f if !f.is_empty() && f.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
            format!("driver.jump.law.{f}")
        }
        _ => "driver".into(),
    };
    Err(loaded.error(&key, msg.clone()).into())
}

fn finite_nonneg(loaded: &Loaded, key: &str, v: f64) -> Result<(), ConfigError> {
    loaded.check(v.is_finite() && v >= 0.0, key, || format!("must be finite and >= 0, got {v}"))
}

fn positive(loaded: &Loaded, key: &str, v: f64) -> Result<(), ConfigError> {
    loaded.check(v.is_finite() && v > 0.0, key, || format!("must be finite and > 0, got {v}"))
}

fn require_seed(loaded: &Loaded) -> Result<u64, ConfigError> {
    loaded.config.seed.ok_or_else(|| ConfigError {
        line: None,
        key: Some("seed".into()),
        message: "seed required: set `seed` in the config or pass --seed".into(),
    })
}

fn meta(loaded: &Loaded, command: &str, section: Value) -> Meta {
    let cfg = &loaded.config;
    let effective = json!({
        "command": command,
        "seed": cfg.seed,
        "format": cfg.format,
        "params": section,
    });
    Meta {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: config_hash(&effective),
        seed: cfg.seed,
        config: effective,
    }
}

pub fn simulate(loaded: &Loaded) -> Result<Report, CliError> {
    let c = &loaded.config.simulate;
    check_driver(loaded)?;
    finite_nonneg(loaded, "simulate.nu", c.nu)?;
    loaded.check(c.shells >= 2, "simulate.shells", || format!("need at least 2 shells, got {}", c.shells))?;
    loaded.check((1..=c.shells).contains(&c.report_shells), "simulate.report_shells", || {
        format!("must lie in 1..={}, got {}", c.shells, c.report_shells)
    })?;
    positive(loaded, "simulate.horizon", c.horizon)?;
    positive(loaded, "simulate.dt", c.dt)?;
    loaded.check(c.record_every >= 1, "simulate.record_every", || "must be >= 1".into())?;
    c.init.validate().map_err(|e| at(loaded, "simulate.init", e))?;
    let scheme = SchemeConfig::new(c.dt, c.shells, c.nu).map_err(|e| at(loaded, "simulate.dt", e))?;
    let steps = (c.horizon / c.dt).round();
    loaded.check((steps * c.dt - c.horizon).abs() <= 1e-9 * c.horizon, "simulate.horizon", || {
        format!("horizon {} is not a multiple of dt {}", c.horizon, c.dt)
    })?;
    loaded.check(steps <= 1e8, "simulate.dt", || format!("{steps} steps exceed the limit of 1e8"))?;
    let seed = require_seed(loaded)?;

    let path = sample_path(&loaded.config.driver, uniform_grid(0.0, c.horizon, steps as usize), seed)?;
    let euler = run_strided(&c.init, &path, &scheme, c.record_every)?;
    let opts = SolveOptions { rule: c.rule, truncation: None };
    let exact = solve(&c.init, &path, c.nu, &euler.times, c.report_shells as u32, opts)?;
    for row in exact.values.iter().chain(&euler.values) {
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite shell value {v}")).into());
        }
    }

    let k = c.report_shells;
    let columns: Vec<String> =
        std::iter::once("time".to_string()).chain((1..=k).map(|n| format!("a_{n}"))).collect();
    let mut blocks = [
        Block::with_columns("exact", columns.clone()),
        Block::with_columns("euler", columns.clone()),
        Block::with_columns("abs_diff", columns),
    ];
    let mut worst = 0.0f64;
    for ((t, e), u) in euler.times.iter().zip(&exact.values).zip(&euler.values) {
        let row = |vals: &mut dyn Iterator<Item = f64>| std::iter::once(Cell::Num(*t)).chain(vals.map(Cell::Num)).collect();
        blocks[0].push(row(&mut e.iter().copied()));
        blocks[1].push(row(&mut u[..k].iter().copied()));
        let diff: Vec<f64> = e.iter().zip(&u[..k]).map(|(a, b)| (a - b).abs()).collect();
        worst = diff.iter().fold(worst, |m, &d| m.max(d));
        blocks[2].push(row(&mut diff.into_iter()));
    }
    let mut summary = Block::new("summary", &["shells", "report_shells", "steps", "max_abs_diff"]);
    summary.push(vec![c.shells.into(), k.into(), (steps as usize).into(), worst.into()]);

    let section = json!({ "driver": loaded.config.driver, "simulate": c });
    let mut report = Report::new(meta(loaded, "simulate", section));
    report.blocks.extend(blocks);
    report.blocks.push(summary);
    Ok(report)
}

fn mean_reference(spec: &CumulantSpec, n: u32, nu: f64) -> Option<f64> {
    match spec.second_moment_data() {
        SecondMoments::Finite { mean_rate, .. } => Some(mean_rate * kernel_integral_closed_form(n, nu)),
        SecondMoments::Infinite => None,
    }
}

fn variance_reference(spec: &CumulantSpec, n: u32, nu: f64) -> Option<f64> {
    match spec.second_moment_data() {
        SecondMoments::Finite { variance_rate, .. } if nu == 0.0 => Some(variance_rate * covariance_closed_form(n, n)),
        _ => None,
    }
}

struct LawRow<'a> {
    n: u32,
    kind: &'a str,
    param: &'a str,
    value: f64,
    err: f64,
    reference: Option<f64>,
    mc: Option<Estimate>,
}

const LAW_COLUMNS: [&str; 12] = [
    "n",
    "nu",
    "kind",
    "param",
    "analytic",
    "error_estimate",
    "reference",
    "rel_error_reference",
    "mc",
    "mc_std_error",
    "mc_z_score",
    "note",
];

fn law_row(nu: f64, r: LawRow<'_>) -> Vec<Cell> {
    let rel = r.reference.map(|x| if x == 0.0 { (r.value - x).abs() } else { ((r.value - x) / x).abs() });
    vec![
        r.n.into(),
        nu.into(),
        r.kind.into(),
        r.param.into(),
        r.value.into(),
        r.err.into(),
        r.reference.into(),
        rel.into(),
        r.mc.map(|e| e.value).into(),
        r.mc.map(|e| e.std_error).into(),
        r.mc.map(|e| e.z_score(r.value)).into(),
        Cell::Empty,
    ]
}

pub fn stationary(loaded: &Loaded, flags: RunFlags) -> Result<Report, CliError> {
    let c = &loaded.config.stationary;
    let spec = loaded.config.driver;
    check_driver(loaded)?;
    finite_nonneg(loaded, "stationary.nu", c.nu)?;
    loaded.check(!c.shells.is_empty(), "stationary.shells", || "at least one shell is required".into())?;
    loaded.check(c.shells.iter().all(|&n| n >= 1), "stationary.shells", || "shells must be >= 1".into())?;
    loaded.check(c.lambdas.iter().all(|l| l.is_finite()), "stationary.lambdas", || "must be finite".into())?;
    loaded.check(c.alphas.iter().all(|&a| a > 0.0 && a <= 2.0), "stationary.alphas", || {
        "stable indices must lie in (0, 2]".into()
    })?;
    positive(loaded, "stationary.dt", c.dt)?;
    positive(loaded, "stationary.tolerance", c.tolerance)?;
    if let Some(h) = c.horizon {
        positive(loaded, "stationary.horizon", h)?;
    }
    let seed = if c.replicas > 0 { Some(require_seed(loaded)?) } else { loaded.config.seed };

    let ex = existence_check(&spec, c.nu);
    if !ex.exists && !flags.allow_divergent {
        return Err(CliError::NonExistent(format!("stationary law does not exist: {}", ex.reason)));
    }
    let shells: Vec<u32> = if ex.exists { c.shells.clone() } else { Vec::new() };
    let mc: Option<McSample> = match seed {
        Some(seed) if c.replicas > 0 && !shells.is_empty() => {
            let cfg = McConfig { horizon: c.horizon, dt: c.dt, replicas: c.replicas, seed, tolerance: c.tolerance };
            Some(mc_stationary_sample(&spec, &shells, c.nu, &cfg).map_err(|e| at(loaded, "stationary", e))?)
        }
        _ => None,
    };

    let mut laws = Block::new("law", &LAW_COLUMNS);
    let mut cf = Block::new(
        "cf",
        &["n", "lambda", "re", "im", "error_estimate", "mc_re", "mc_re_std_error", "mc_im", "mc_im_std_error"],
    );
    let mut records = Vec::new();
    let record_base = |n: u32| {
        json!({
            "n": n,
            "nu": c.nu,
            "spec": spec,
            "T": mc.as_ref().map(|m| m.horizon),
            "replicas": mc.as_ref().map_or(0, |m| m.replicas),
            "seed": mc.as_ref().map(|m| m.seed),
        })
    };
    for &n in &c.shells {
        if !ex.exists {
            let mut row = law_row(c.nu, LawRow {
                n,
                kind: "non-existent",
                param: "",
                value: f64::NAN,
                err: f64::NAN,
                reference: None,
                mc: None,
            });
            row[4] = Cell::Empty;
            row[5] = Cell::Empty;
            row[11] = ex.reason.clone().into();
            laws.push(row);
            let mut rec = record_base(n);
            rec["kind"] = json!("non-existent");
            rec["reason"] = json!(ex.reason);
            records.push(rec);
            continue;
        }
        let law = stationary_law(&spec, n, c.nu, &c.lambdas)?;
        let xs = mc.as_ref().and_then(|m| m.shell(n));
        let mc_mean = xs.map(stats::mean);
        let mc_var = xs.map(stats::variance);
        match &law.kind {
            LawKind::Constant { value } => laws.push(law_row(c.nu, LawRow {
                n,
                kind: "constant",
                param: "value",
                value: *value,
                err: law.abs_error_estimate,
                reference: mean_reference(&spec, n, c.nu),
                mc: mc_mean,
            })),
            LawKind::Gaussian { mean, variance } => {
                laws.push(law_row(c.nu, LawRow {
                    n,
                    kind: "gaussian",
                    param: "mean",
                    value: *mean,
                    err: law.abs_error_estimate,
                    reference: mean_reference(&spec, n, c.nu),
                    mc: mc_mean,
                }));
                laws.push(law_row(c.nu, LawRow {
                    n,
                    kind: "gaussian",
                    param: "variance",
                    value: *variance,
                    err: law.abs_error_estimate,
                    reference: variance_reference(&spec, n, c.nu),
                    mc: mc_var,
                }));
            }
            LawKind::StableSymmetric { alpha, scale } => {
                for (param, value) in [("alpha", *alpha), ("scale", *scale)] {
                    laws.push(law_row(c.nu, LawRow {
                        n,
                        kind: "stable",
                        param,
                        value,
                        err: if param == "alpha" { 0.0 } else { law.abs_error_estimate },
                        reference: None,
                        mc: None,
                    }));
                }
            }
            LawKind::Empirical { .. } => {
                let m = moments(&spec, n, n, c.nu)?;
                for (param, value, reference, est) in [
                    ("mean", m.mean_n, mean_reference(&spec, n, c.nu), mc_mean),
                    ("variance", m.covariance, variance_reference(&spec, n, c.nu), mc_var),
                ] {
                    laws.push(law_row(c.nu, LawRow {
                        n,
                        kind: "cf-grid",
                        param,
                        value,
                        err: m.abs_error_estimate,
                        reference,
                        mc: est,
                    }));
                }
            }
        }
        let mc_cf = mc.as_ref().map(|m| m.empirical_cf(n, &c.lambdas));
        for (i, &l) in c.lambdas.iter().enumerate() {
            let q = cf_exponent(&spec, n, c.nu, l)?;
            let v = q.value.exp();
            let (mre, mim) = match &mc_cf {
                Some(rows) => (Some(rows[i].1), Some(rows[i].2)),
                None => (None, None),
            };
            cf.push(vec![
                n.into(),
                l.into(),
                v.re.into(),
                v.im.into(),
                (v.norm() * q.abs_error_estimate).into(),
                mre.map(|e| e.value).into(),
                mre.map(|e| e.std_error).into(),
                mim.map(|e| e.value).into(),
                mim.map(|e| e.std_error).into(),
            ]);
        }
        let mut rec = record_base(n);
        if let Value::Object(fields) = serde_json::to_value(&law.kind).expect("law serialises") {
            for (k, v) in fields {
                rec[k] = v;
            }
        }
        rec["error_estimate"] = json!(law.abs_error_estimate);
        records.push(rec);
    }

    let section = json!({ "driver": spec, "stationary": c });
    let mut report = Report::new(meta(loaded, "stationary", section));
    report.blocks.push(laws);
    if !cf.rows.is_empty() {
        report.blocks.push(cf);
    }
    if let Some(m) = &mc {
        let mut b = Block::new("monte_carlo", &["horizon", "dt", "replicas", "seed", "bias_estimate"]);
        b.push(vec![m.horizon.into(), m.dt.into(), m.replicas.into(), Cell::Text(m.seed.to_string()), m.bias_estimate.into()]);
        report.blocks.push(b);
    }
    if !c.alphas.is_empty() {
        let scale = spec.stable_part().map_or(1.0, |(_, s)| s);
        let mut b = Block::new("existence", &["alpha", "nu", "exists", "reason"]);
        for &a in &c.alphas {
            let probe = if a == 2.0 { CumulantSpec::gaussian(scale * 2f64.sqrt()) } else { CumulantSpec::stable(a, scale) };
            let e = existence_check(&probe, c.nu);
            b.push(vec![a.into(), c.nu.into(), e.exists.into(), e.reason.into()]);
        }
        report.blocks.push(b);
    }
    report.records = records;
    Ok(report)
}

pub fn flights(loaded: &Loaded) -> Result<Report, CliError> {
    let c = &loaded.config.flights;
    loaded.check(!c.alphas.is_empty(), "flights.alphas", || "at least one alpha is required".into())?;
    loaded.check(c.alphas.iter().all(|&a| a > 0.0 && a <= 2.0), "flights.alphas", || {
        "stable indices must lie in (0, 2]".into()
    })?;
    finite_nonneg(loaded, "flights.nu", c.nu)?;
    loaded.check(c.shell >= 1, "flights.shell", || "shell must be >= 1".into())?;
    positive(loaded, "flights.r_base", c.r_base)?;
    loaded.check((3..=40).contains(&c.r_count), "flights.r_count", || {
        format!("must lie in 3..=40, got {}", c.r_count)
    })?;

    let cutoffs = dyadic_cutoffs(c.r_base, c.r_count);
    let mut table = Block::new("integrals", &["alpha", "R", "integral", "increment"]);
    let mut summary =
        Block::new("summary", &["alpha", "nu", "n", "slope", "theory_slope", "verdict", "remainder_estimate"]);
    for &alpha in &c.alphas {
        let scan = flights_scan(alpha, c.nu, c.shell, &cutoffs).map_err(|e| at(loaded, "flights", e))?;
        for (k, (&r, &i)) in scan.cutoffs.iter().zip(&scan.integrals).enumerate() {
            let inc = k.checked_sub(1).map(|j| scan.increments[j]);
            table.push(vec![alpha.into(), r.into(), i.into(), inc.into()]);
        }
        let theory = (c.nu == 0.0).then(|| 1.0 - 1.5 * alpha);
        let verdict = serde_json::to_value(scan.verdict).expect("verdict serialises");
        summary.push(vec![
            alpha.into(),
            c.nu.into(),
            c.shell.into(),
            scan.slope.into(),
            theory.into(),
            verdict.as_str().unwrap_or_default().into(),
            scan.remainder_estimate.into(),
        ]);
    }
    let mut report = Report::new(meta(loaded, "flights-scan", json!({ "flights": c })));
    report.blocks.push(table);
    report.blocks.push(summary);
    Ok(report)
}

pub fn continuum(loaded: &Loaded, flags: RunFlags) -> Result<Report, CliError> {
    let c = &loaded.config.continuum;
    let spec = loaded.config.driver;
    check_driver(loaded)?;
    finite_nonneg(loaded, "continuum.nu", c.nu)?;
    positive(loaded, "continuum.x", c.x)?;
    loaded.check(!c.hs.is_empty(), "continuum.hs", || "at least one h is required".into())?;
    loaded.check(c.hs.iter().all(|&h| h.is_finite() && h > 0.0), "continuum.hs", || "h must be > 0".into())?;
    let pde = PdeConfig::new(c.nu, c.eps, c.phi, c.mollifier_width).map_err(|e| {
        let key = match &e {
            Error::InvalidParameter(m) if m.starts_with("eps") => "continuum.eps",
            Error::InvalidParameter(m) if m.starts_with("mollifier") => "continuum.mollifier_width",
            Error::InvalidParameter(m) if m.starts_with("nu") => "continuum.nu",
            _ => "continuum.phi",
        };
        at(loaded, key, e)
    })?;
    let ex = existence_check(&spec, c.nu);
    if !ex.exists && !flags.allow_divergent {
        return Err(CliError::NonExistent(format!("stationary law does not exist: {}", ex.reason)));
    }

    let rep = discrete_vs_continuum_report(&spec, c.nu, c.x, &c.hs, &pde).map_err(|e| at(loaded, "continuum", e))?;
    let quantity = match rep.quantity {
        ReportQuantity::Variance => "variance",
        ReportQuantity::StableScale => "stable-scale",
    };
    let mut info = Block::new("report", &["quantity", "nu", "x", "eps", "mollifier_width"]);
    info.push(vec![quantity.into(), rep.nu.into(), rep.x.into(), rep.eps.into(), pde.width().into()]);
    let mut table =
        Block::new("comparison", &["h", "n", "lattice_value", "continuum_value", "ratio", "regularization"]);
    let opt = |v: Option<f64>| v.map_or(Cell::Text("non-existent".into()), Cell::Num);
    for r in &rep.rows {
        table.push(vec![
            r.h.into(),
            r.n.into(),
            opt(r.lattice_value),
            r.continuum_value.into(),
            opt(r.ratio),
            r.regularization.into(),
        ]);
    }
    let section = json!({ "driver": spec, "continuum": c });
    let mut report = Report::new(meta(loaded, "continuum", section));
    report.blocks.push(info);
    report.blocks.push(table);
    Ok(report)
}

pub fn bessel_dump(loaded: &Loaded) -> Result<Report, CliError> {
    let c = &loaded.config.bessel;
    loaded.check(c.nmax <= 10_000, "bessel.nmax", || format!("must be <= 10000, got {}", c.nmax))?;
    finite_nonneg(loaded, "bessel.x_min", c.x_min)?;
    loaded.check(c.x_max.is_finite() && c.x_max >= c.x_min, "bessel.x_max", || {
        format!("must be finite and >= x_min = {}, got {}", c.x_min, c.x_max)
    })?;
    loaded.check(c.points >= 1 && (c.points >= 2 || c.x_max == c.x_min), "bessel.points", || {
        "need at least 2 points for a non-degenerate range".into()
    })?;
    loaded.check(c.points <= 1_000_000, "bessel.points", || "at most 1e6 points".into())?;

    let mut table = Block::new("bessel", &["n", "x", "j"]);
    let step = if c.points > 1 { (c.x_max - c.x_min) / (c.points - 1) as f64 } else { 0.0 };
    let xs: Vec<f64> = (0..c.points).map(|i| c.x_min + i as f64 * step).collect();
    let values: Vec<Vec<f64>> = xs.iter().map(|&x| bessel_j_seq(c.nmax, x)).collect();
    for n in 0..=c.nmax {
        for (x, js) in xs.iter().zip(&values) {
            table.push(vec![n.into(), (*x).into(), js[n as usize].into()]);
        }
    }
    let mut report = Report::new(meta(loaded, "bessel-dump", json!({ "bessel": c })));
    report.blocks.push(table);
    Ok(report)
}
