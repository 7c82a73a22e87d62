//! Subcommand bodies. Each reads its keys from [`Settings`] and writes its
//! files through [`OutputDir`].

use std::io::Write;

use serde::Serialize;
use unimodal_core::clt::{
    lipschitz_probe, modulus_experiment, run_direct_clt, run_surrogate_clt, variance_scaling,
    wild_check, CltConfig, CltRun, Tier,
};
use unimodal_core::quantities::{dyn_quantities, Observable, QuantityConfig, SigmaMode};
use unimodal_core::report::fmt17;
use unimodal_core::symbolic::{param_partition, phase_partition};
use unimodal_core::transfer::{
    build_ulam, invariant_density_with, lasota_yorke_probe, resolvent_spike_probe, PowerOptions,
};
use unimodal_core::MapFamily;

use crate::manifest::{run_id, OutputDir};
use crate::settings::Settings;
use crate::CliError;

pub fn run(name: &str, s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    match name {
        "density" => density(s, out),
        "quantities" => quantities(s, out),
        "orbit" => orbit(s, out),
        "partition" => partition(s, out),
        "wild-check" => wild(s, out),
        "clt-surrogate" => clt(s, out, name, Tier::Surrogate),
        "clt-direct" => clt(s, out, name, Tier::Direct),
        "variance-scaling" => clt(s, out, name, Tier::Surrogate),
        "modulus" => modulus(s, out),
        "lipschitz-probe" => lipschitz(s, out),
        "ly-check" => ly_check(s, out),
        other => Err(CliError::Usage(format!("unknown subcommand '{other}'"))),
    }
}

/// Families for single-parameter commands: the full parameter range.
fn family(s: &Settings) -> Result<MapFamily, CliError> {
    let name: String = s.or("family", "tent".to_string())?;
    match name.as_str() {
        "tent" => Ok(MapFamily::tent(1.0 + f64::EPSILON, 2.0)?),
        other => Err(CliError::Usage(format!("unknown family '{other}'"))),
    }
}

fn pair(s: &Settings, key: &str, default: (f64, f64)) -> Result<(f64, f64), CliError> {
    match s.list_or(key, &[default.0, default.1])?.as_slice() {
        &[a, b] => Ok((a, b)),
        other => Err(CliError::Usage(format!(
            "key '{key}' needs two values, got {}",
            other.len()
        ))),
    }
}

fn observable(s: &Settings) -> Result<Observable, CliError> {
    Ok(Observable::parse(&s.or("phi", "x".to_string())?)?)
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    command: &'a str,
    run_id: String,
    #[serde(flatten)]
    body: T,
}

fn write_summary<T: Serialize>(
    out: &mut OutputDir,
    s: &Settings,
    name: &str,
    body: T,
) -> Result<(), CliError> {
    let tagged = Tagged {
        command: name,
        run_id: run_id(name, &s.resolved()),
        body,
    };
    out.write_json("summary.json", &tagged)
}

fn density(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let fam = family(s)?;
    let t: f64 = s.require("t")?;
    let n: usize = s.or("n", 4096)?;
    let map = fam.map_at(t)?;
    let (grid, report) = invariant_density_with(&build_ulam(&map, n)?, PowerOptions::default())?;
    out.write("density.csv", &grid.to_csv())?;
    #[derive(Serialize)]
    struct Body {
        t: f64,
        n: usize,
        support: (f64, f64),
        power: unimodal_core::transfer::PowerReport,
        mass_outside_support: f64,
    }
    write_summary(
        out,
        s,
        "density",
        Body {
            t,
            n,
            support: grid.support(),
            power: report,
            mass_outside_support: grid.mass_outside_support(),
        },
    )
}

fn quantities(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let fam = family(s)?;
    let t: f64 = s.require("t")?;
    let phi = observable(s)?;
    let mode: String = s.or("sigma_mode", "green_kubo".to_string())?;
    let cfg = QuantityConfig {
        n: s.or("n", 1 << 14)?,
        j_tol: s.or("tol", 1e-12)?,
        sigma_mode: mode.parse::<SigmaMode>()?,
        ..QuantityConfig::default()
    };
    let q = dyn_quantities(&fam, t, &phi, &cfg)?;
    out.write_json("quantities.json", &q)?;
    // A closed pipe on stdout is not an error; the file is the output.
    let _ = writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(&q).unwrap_or_default()
    );
    Ok(())
}

fn orbit(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let fam = family(s)?;
    let t: f64 = s.require("t")?;
    let n: usize = s.or("n", 64)?;
    let mode: String = s.or("mode", "plain".to_string())?;
    let map = fam.map_at(t)?;
    let points = match mode.as_str() {
        "plain" => map.critical_orbit(n),
        "compensated" => map.critical_orbit_compensated(n)?,
        other => return Err(CliError::Usage(format!("unknown orbit mode '{other}'"))),
    };
    let mut csv = String::from("k,x\n");
    for (k, x) in points.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", k + 1, fmt17(*x)));
    }
    out.write("orbit.csv", &csv)
}

fn partition(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let fam = family(s)?;
    let j: usize = s.require("j")?;
    let mut csv = String::from("left,right\n");
    let push = |csv: &mut String, (a, b): (f64, f64)| {
        csv.push_str(&format!("{},{}\n", fmt17(a), fmt17(b)))
    };
    if s.get::<String>("param_window")?.is_some() {
        let window = pair(s, "param_window", (0.0, 0.0))?;
        let tol: f64 = s.or("tol", 1e-13)?;
        let p = param_partition(&fam, window, j, tol)?;
        p.cylinders.iter().for_each(|c| push(&mut csv, *c));
        out.write("partition.csv", &csv)?;
        write_summary(out, s, "partition", p)
    } else {
        let t: f64 = s.require("t")?;
        let p = phase_partition(&fam.map_at(t)?, j)?;
        p.intervals.iter().for_each(|c| push(&mut csv, *c));
        out.write("partition.csv", &csv)?;
        write_summary(out, s, "partition", p)
    }
}

fn clt_config(s: &Settings, name: &str, tier: Tier) -> Result<CltConfig, CliError> {
    let d = CltConfig::default();
    let samples = match name {
        "clt-direct" => 500,
        "variance-scaling" => 5000,
        "lipschitz-probe" => 10_000,
        "wild-check" => 1000,
        _ => d.samples,
    };
    let h = if name == "wild-check" { 1e-8 } else { d.h };
    let tier = match s.get::<String>("tier")? {
        Some(t) => t.parse()?,
        None => tier,
    };
    Ok(CltConfig {
        family: s.or("family", d.family.clone())?,
        window: pair(s, "window", d.window)?,
        observable: s.or("phi", d.observable.clone())?,
        tier,
        orbit_length: s.or("orbit_length", d.orbit_length)?,
        h: s.or("h", h)?,
        samples: s.or("samples", samples)?,
        seed: s.or("seed", d.seed)?,
        grid: s.or("grid", d.grid)?,
        direct_grid: s.or("direct_grid", d.direct_grid)?,
        neg_log_h: s.list_or("neg_log_h", &d.neg_log_h)?,
        orbit_lengths: s.list_or("orbit_lengths", &d.orbit_lengths)?,
    })
}

#[derive(Serialize)]
struct RunBody<'a> {
    config: &'a CltConfig,
    summary: &'a unimodal_core::clt::SummaryStats,
    excluded: &'a [unimodal_core::clt::Exclusion],
}

fn clt(s: &Settings, out: &mut OutputDir, name: &str, tier: Tier) -> Result<(), CliError> {
    let cfg = clt_config(s, name, tier)?;
    let run: CltRun = match (name, cfg.tier) {
        ("variance-scaling", _) => variance_scaling(&cfg)?,
        (_, Tier::Surrogate) => run_surrogate_clt(&cfg)?,
        (_, Tier::Direct) => run_direct_clt(&cfg)?,
    };
    out.write("samples.csv", &run.samples_csv())?;
    if name != "variance-scaling" {
        out.write("cdf.dat", &run.cdf_dat())?;
    }
    write_summary(
        out,
        s,
        name,
        RunBody {
            config: &run.config,
            summary: &run.summary,
            excluded: &run.excluded,
        },
    )
}

fn wild(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let cfg = clt_config(s, "wild-check", Tier::Surrogate)?;
    let w = wild_check(&cfg)?;
    let mut csv = String::from("t,wild,s1,J,n3,n_of,surrogate,residual\n");
    for r in &w.rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt17(r.t),
            fmt17(r.wild),
            fmt17(r.s1),
            fmt17(r.j),
            r.n3,
            r.n_of,
            fmt17(r.surrogate),
            fmt17(r.residual)
        ));
    }
    out.write("wild_check.csv", &csv)?;
    #[derive(Serialize)]
    struct Body<'a> {
        config: &'a CltConfig,
        h: f64,
        bound: f64,
        within_bound: f64,
        exact_zero: f64,
    }
    write_summary(
        out,
        s,
        "wild-check",
        Body {
            config: &cfg,
            h: w.h,
            bound: w.bound,
            within_bound: w.within_bound,
            exact_zero: w.exact_zero,
        },
    )
}

fn modulus(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let fam = family(s)?;
    let t: f64 = s.require("t")?;
    let steps: Vec<f64> = s.list_or("steps", &[1e-1, 3e-2, 1e-2, 3e-3, 1e-3])?;
    let n: usize = s.or("n", 1 << 16)?;
    let table = modulus_experiment(&fam, t, &steps, n)?;
    let mut csv = String::from("h,l1,ratio\n");
    for r in &table.rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt17(r.h),
            fmt17(r.l1),
            fmt17(r.ratio)
        ));
    }
    out.write("modulus.csv", &csv)?;
    write_summary(out, s, "modulus", &table)
}

fn lipschitz(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let cfg = clt_config(s, "lipschitz-probe", Tier::Surrogate)?;
    let p = lipschitz_probe(&cfg)?;
    let mut csv = String::from("orbit_length,max_abs,t\n");
    for r in &p.rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            r.orbit_length,
            fmt17(r.max_abs),
            fmt17(r.t)
        ));
    }
    out.write("lipschitz.csv", &csv)?;
    #[derive(Serialize)]
    struct Body<'a, P: Serialize> {
        config: &'a CltConfig,
        #[serde(flatten)]
        probe: P,
    }
    write_summary(
        out,
        s,
        "lipschitz-probe",
        Body {
            config: &cfg,
            probe: &p,
        },
    )
}

fn ly_check(s: &Settings, out: &mut OutputDir) -> Result<(), CliError> {
    let fam = family(s)?;
    let t: f64 = s.require("t")?;
    let n: usize = s.or("n", 4096)?;
    let trials: usize = s.or("trials", 64)?;
    let seed: u64 = s.or("seed", CltConfig::default().seed)?;
    let map = fam.map_at(t)?;
    let ly = lasota_yorke_probe(&build_ulam(&map, n)?, trials, seed)?;
    let resolvent = match s.get::<String>("sizes")? {
        None => None,
        Some(_) => {
            let sizes: Vec<u32> = s.list_or("sizes", &[])?;
            let sizes: Vec<usize> = sizes.iter().map(|p| 1usize << p).collect();
            let location: f64 = s.or("location", 0.6)?;
            let tol: f64 = s.or("tol", 1e-10)?;
            Some(resolvent_spike_probe(&map, &sizes, location, tol)?)
        }
    };
    #[derive(Serialize)]
    struct Body<'a> {
        t: f64,
        n: usize,
        lasota_yorke: &'a unimodal_core::transfer::LasotaYorkeReport,
        resolvent: Option<unimodal_core::transfer::ResolventProbe>,
    }
    write_summary(
        out,
        s,
        "ly-check",
        Body {
            t,
            n,
            lasota_yorke: &ly,
            resolvent,
        },
    )
}
