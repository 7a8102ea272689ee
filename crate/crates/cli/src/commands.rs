use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use beltrami_core::builders::{disk_indicator, half_plane_indicator, radial_stretch_mu, random_smooth, rng, smooth_bump, DiskSampling};
use beltrami_core::commutators::{noncompact_conjugate_example, smoothing_error_check, ConjugateExampleConfig, SmoothSymbol};
use beltrami_core::io::{read_field, write_csv, write_field, Precision};
use beltrami_core::qcmap::{jacobian, jacobian_ap_scan, principal_solution, radial_stretch_inverse_oracle, radial_stretch_oracle, write_mesh_csv};
use beltrami_core::solver::{apriori_ratio, neumann_solve, rn_kn_growth_diag, weighted_estimate_probe, SolveOptions};
use beltrami_core::transforms::{beurling, beurling_adjoint, beurling_conjugate, cauchy, hl_maximal, truncated_singular};
use beltrami_core::weights::{ap_report, CubeFamily};
use beltrami_core::{make_grid, power_weight, BeltramiCoefficients, BeurlingKernel, Complex64, Field, Grid, Weight};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::JobConfig;
use crate::Failure;

pub fn dispatch(name: &str, cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    match name {
        "transform" => transform(cfg, out),
        "solve" => solve(cfg, out),
        "apconst" => apconst(cfg, out),
        "commutator" => commutator(cfg, out),
        "qcmap" => qcmap(cfg, out),
        "probe" => probe(cfg, out),
        "report" => report(cfg, out),
        other => Err(Failure::Config(format!("unknown command `{other}`"))),
    }
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    experiment: &'a str,
    config_hash: String,
    config: &'a std::collections::BTreeMap<String, String>,
    result: Value,
}

fn write_report(out: &Path, command: &str, experiment: &str, cfg: &JobConfig, result: Value) -> Result<PathBuf, Failure> {
    let report = Report {
        command,
        experiment,
        config_hash: cfg.hash(),
        config: cfg.entries(),
        result,
    };
    let path = out.join(format!("{command}.json"));
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Io(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, Failure> {
    serde_json::to_value(v).map_err(|e| Failure::Numerical(format!("report is not representable: {e}")))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", path.display())))
}

fn save_field(out: &Path, name: &str, f: &Field) -> Result<(), Failure> {
    let mut w = create(&out.join(format!("{name}.bin")))?;
    write_field(f, Precision::Complex128, &mut w)?;
    w.flush().map_err(|e| Failure::Io(e.to_string()))
}

fn seed(cfg: &JobConfig) -> Result<u64, Failure> {
    cfg.get("seed", 0u64)
}

fn grid(cfg: &JobConfig) -> Result<Grid, Failure> {
    Ok(make_grid(cfg.get("n", 128usize)?, cfg.get("L", 4.0f64)?)?)
}

fn complex(cfg: &JobConfig, prefix: &str, re: f64, im: f64) -> Result<Complex64, Failure> {
    Ok(Complex64::new(cfg.get(&format!("{prefix}_re"), re)?, cfg.get(&format!("{prefix}_im"), im)?))
}

/// `smooth`, `disk`, `half_plane` or `file:PATH`.
fn field(cfg: &JobConfig, key: &str, default: &str, grid: &Grid) -> Result<Field, Failure> {
    let spec = cfg.str_or(key, default);
    if let Some(path) = spec.strip_prefix("file:") {
        let file = File::open(path).map_err(|e| Failure::Io(format!("cannot open {path}: {e}")))?;
        let f = read_field(BufReader::new(file), key)?;
        if f.grid() != grid {
            return Err(Failure::Config(format!("{path} does not live on the configured grid")));
        }
        return Ok(f);
    }
    match spec {
        "smooth" => Ok(random_smooth(&mut rng(seed(cfg)?), grid).sample(grid)?),
        "disk" => Ok(disk_indicator(grid, Complex64::new(0.0, 0.0), cfg.get("disk_radius", 1.0)?, DiskSampling::Point)?),
        "half_plane" => Ok(half_plane_indicator(grid)?),
        other => Err(Failure::Config(format!("unknown field `{other}` for `{key}`"))),
    }
}

/// `zero`, `bump`, `disk` or (for `mu`) `radial_stretch`.
fn coefficient(cfg: &JobConfig, key: &str, grid: &Grid) -> Result<Field, Failure> {
    let origin = Complex64::new(0.0, 0.0);
    let amp = complex(cfg, key, 0.3, 0.0)?;
    let radius = cfg.get(&format!("{key}_radius"), 1.0)?;
    match cfg.str_or(key, "zero") {
        "zero" => Ok(Field::zeros(grid)),
        "bump" => Ok(smooth_bump(grid, origin, radius, amp)?),
        "disk" => Ok(disk_indicator(grid, origin, radius, DiskSampling::Point)?.scale(amp)),
        "radial_stretch" if key == "mu" => Ok(radial_stretch_mu(grid, cfg.get("stretch", 2.0)?, DiskSampling::Point)?),
        other => Err(Failure::Config(format!("unknown coefficient `{other}` for `{key}`"))),
    }
}

fn coefficients(cfg: &JobConfig, grid: &Grid) -> Result<BeltramiCoefficients, Failure> {
    Ok(BeltramiCoefficients::new(coefficient(cfg, "mu", grid)?, coefficient(cfg, "nu", grid)?)?)
}

/// `unit` or `power` (with `alpha`).
fn weight(cfg: &JobConfig, grid: &Grid) -> Result<Weight, Failure> {
    match cfg.str_or("weight", "unit") {
        "unit" => Ok(Weight::unit(grid)),
        "power" => Ok(power_weight(cfg.get("alpha", 1.0)?, grid)),
        other => Err(Failure::Config(format!("unknown weight `{other}`"))),
    }
}

fn transform(cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    let g = grid(cfg)?;
    let f = field(cfg, "field", "smooth", &g)?;
    let op = cfg.str_or("op", "beurling");
    let result = match op {
        "beurling" => beurling(&f),
        "adjoint" => beurling_adjoint(&f),
        "conjugate" => beurling_conjugate(&f),
        "cauchy" => cauchy(&f),
        "truncated" => {
            let eps = cfg.get("eps", 2.0 * g.spacing())?;
            truncated_singular(&f, &BeurlingKernel::default(), eps)?
        }
        "maximal" => hl_maximal(&f)?,
        other => return Err(Failure::Config(format!("unknown op `{other}`"))),
    };
    save_field(out, "transform", &result)?;
    let mut csv = create(&out.join("transform.csv"))?;
    write_csv(&result, &mut csv)?;
    csv.flush().map_err(|e| Failure::Io(e.to_string()))?;
    let body = json!({
        "op": op,
        "n": g.n(),
        "half_side": g.half_side(),
        "input_l2": f.l2_norm(),
        "output_l2": result.l2_norm(),
        "output_sup": result.sup_norm(),
    });
    write_report(out, "transform", "singular integral and maximal operators on the grid", cfg, body)?;
    Ok(())
}

fn solve(cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    let g = grid(cfg)?;
    let coef = coefficients(cfg, &g)?;
    let rhs = field(cfg, "rhs", "smooth", &g)?;
    let w = weight(cfg, &g)?;
    let opts = SolveOptions {
        tol: cfg.get("tol", 1e-10)?,
        max_iter: cfg.get("max_iter", 500usize)?,
        p: cfg.get("p", 2.0)?,
        weight: Some(&w),
        initial: None,
    };
    let sol = neumann_solve(&coef, &rhs, &opts)?;
    save_field(out, "h", &sol.h)?;
    save_field(out, "f", &sol.f)?;
    let mut body = to_value(&sol.summary())?;
    body["k"] = json!(coef.k());
    write_report(out, "solve", "weighted a priori estimate for the Beltrami equation", cfg, body)?;
    Ok(())
}

fn apconst(cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    let g = grid(cfg)?;
    let w = weight(cfg, &g)?;
    let p = cfg.get("p", 2.0)?;
    let cubes = CubeFamily::standard(&g, seed(cfg)?);
    let r = ap_report(&w, p, &cubes)?;
    let mut body = to_value(&r)?;
    body["cubes"] = json!(cubes.len());
    write_report(out, "apconst", "Muckenhoupt constant over a finite cube family", cfg, body)?;
    Ok(())
}

fn commutator(cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    match cfg.str_or("mode", "smoothing") {
        "smoothing" => {
            let g = grid(cfg)?;
            let b = SmoothSymbol::bump(&g, cfg.get("symbol_radius", 1.5)?, cfg.get("symbol_amplitude", 1.0)?)?;
            let f = field(cfg, "field", "disk", &g)?;
            let w = weight(cfg, &g)?;
            let h = g.spacing();
            let etas: Vec<f64> = cfg.list("eta_cells", &[8.0, 16.0, 32.0])?.iter().map(|e| e * h).collect();
            let r = smoothing_error_check(&b, &etas, &f, cfg.get("p", 8.0)?, Some(&w))?;
            write_report(out, "commutator", "smoothed-kernel commutator error against the maximal function", cfg, to_value(&r)?)?;
        }
        "conjugate" => {
            let d = ConjugateExampleConfig::default();
            let c = ConjugateExampleConfig {
                n: cfg.get("n", d.n)?,
                half_side: cfg.get("L", d.half_side)?,
                p: cfg.get("p", d.p)?,
                nu0: cfg.get("nu0", d.nu0)?,
                family_size: cfg.get("family_size", d.family_size)?,
                seed: seed(cfg)?,
                shift_nodes: cfg.list("shift_nodes", &d.shift_nodes)?,
                radii: cfg.list("radii", &d.radii)?,
                eta_cells: cfg.get("eta_cells", d.eta_cells)?,
                symbol_radius: cfg.get("symbol_radius", d.symbol_radius)?,
            };
            let r = noncompact_conjugate_example(&c)?;
            write_report(out, "commutator", "compactness contrast between smooth and conjugate symbols", cfg, to_value(&r)?)?;
        }
        other => return Err(Failure::Config(format!("unknown commutator mode `{other}`"))),
    }
    Ok(())
}

fn qcmap(cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    let g = grid(cfg)?;
    let coef = coefficients(cfg, &g)?;
    let map = principal_solution(&coef, cfg.get("tol", 1e-12)?, cfg.get("max_iter", 500usize)?)?;
    let mut body = to_value(&map.summary()?)?;
    if cfg.str_or("mu", "zero") == "radial_stretch" && cfg.str_or("nu", "zero") == "zero" {
        let stretch = cfg.get("stretch", 2.0)?;
        let (mut phi_err, mut inv_err) = (0.0f64, 0.0f64);
        for i in 0..g.len() {
            let z = g.point_at(i);
            phi_err = phi_err.max((map.phi().values()[i] - radial_stretch_oracle(z, stretch).0).norm());
            inv_err = inv_err.max((map.inverse().preimages()[i] - radial_stretch_inverse_oracle(z, stretch)).norm());
        }
        body["K"] = json!(stretch);
        body["oracle_sup_error"] = json!(phi_err);
        body["oracle_inverse_sup_error"] = json!(inv_err);
    }
    let ps = cfg.list("p_list", &[1.5, 2.0, 3.0])?;
    let scan = jacobian_ap_scan(&map, &ps, &CubeFamily::standard(&g, seed(cfg)?))?;
    body["jacobian_scan"] = to_value(&scan)?;
    save_field(out, "phi", map.phi())?;
    save_field(out, "jacobian", &jacobian(&map))?;
    let mut mesh = create(&out.join("mesh.csv"))?;
    write_mesh_csv(&map, cfg.get("mesh_stride", (g.n() / 32).max(1))?, &mut mesh)?;
    mesh.flush().map_err(|e| Failure::Io(e.to_string()))?;
    write_report(out, "qcmap", "principal quasiconformal solution and Jacobian weights", cfg, body)?;
    Ok(())
}

fn probe(cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    let g = grid(cfg)?;
    let w = weight(cfg, &g)?;
    let p = cfg.get("p", 2.0)?;
    let s = seed(cfg)?;
    let ensemble = cfg.get("ensemble", 16usize)?;
    let (tag, body) = match cfg.str_or("kind", "apriori") {
        "apriori" => {
            let coef = coefficients(cfg, &g)?;
            ("a priori ratio over a random ensemble", to_value(&apriori_ratio(&coef, p, Some(&w), ensemble, s)?)?)
        }
        "im" => {
            let lambda = if cfg.str_or("nu", "zero") == "zero" {
                Field::zeros(&g)
            } else {
                principal_solution(&coefficients(cfg, &g)?, 1e-12, 500)?.lambda()?
            };
            ("best-constant probe for the Im-derivative operator", to_value(&weighted_estimate_probe(&lambda, p, Some(&w), ensemble, s)?)?)
        }
        "growth" => {
            let coef = coefficients(cfg, &g)?;
            let r = rn_kn_growth_diag(&coef, cfg.get("n_max", 12u32)?, p, Some(&w), cfg.get("trials", 6usize)?, s)?;
            ("growth of powers of the Beltrami operator", to_value(&r)?)
        }
        other => return Err(Failure::Config(format!("unknown probe kind `{other}`"))),
    };
    write_report(out, "probe", tag, cfg, body)?;
    Ok(())
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, f64)>) {
    match v {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                rows.push((prefix.to_string(), x));
            }
        }
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, rows);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, rows);
            }
        }
        _ => {}
    }
}

fn report(cfg: &JobConfig, out: &Path) -> Result<(), Failure> {
    let input = PathBuf::from(cfg.str_or("input", &out.to_string_lossy()));
    let mut files: Vec<PathBuf> = std::fs::read_dir(&input)
        .map_err(|e| Failure::Io(format!("cannot list {}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "report.json"))
        .collect();
    files.sort();
    let mut csv = create(&out.join("summary.csv"))?;
    let io = |e: std::io::Error| Failure::Io(e.to_string());
    writeln!(csv, "file,command,experiment,config_hash,metric,value").map_err(io)?;
    let mut count = 0usize;
    for path in &files {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = match serde_json::from_str(&text) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let (Some(command), Some(result)) = (v["command"].as_str(), v.get("result")) else {
            continue;
        };
        let mut rows = Vec::new();
        flatten("", result, &mut rows);
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        for (metric, value) in rows {
            writeln!(
                csv,
                "{name},{command},\"{}\",{},{metric},{value:e}",
                v["experiment"].as_str().unwrap_or(""),
                v["config_hash"].as_str().unwrap_or("")
            )
            .map_err(io)?;
        }
        count += 1;
    }
    csv.flush().map_err(io)?;
    write_report(out, "report", "aggregation of experiment reports", cfg, json!({ "reports": count }))?;
    Ok(())
}
