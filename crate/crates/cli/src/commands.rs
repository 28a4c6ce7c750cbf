use std::path::{Path, PathBuf};

use spatreg::embed::{self, Criterion, DistanceMatrix, Embedding, Spectrum};
use spatreg::quad;
use spatreg::registration::{self, Mode, RegistrationOptions, RegistrationResult, WeightSource};
use spatreg::simulation::{self, Replicate, SimConfig};
use spatreg::variogram::VariogramModel;
use spatreg::warp::{self, MonotoneMap};

use crate::io::{self, num, CliError, CliResult};
use crate::{EuclideanizeArgs, FunctionalsArgs, ModeArg, RegisterArgs, SimulateArgs};

enum Dim {
    Rss,
    Sill,
    Fixed(usize),
}

fn parse_dim(s: &str) -> CliResult<Dim> {
    match s {
        "auto-rss" => Ok(Dim::Rss),
        "auto-sill" => Ok(Dim::Sill),
        _ => match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Dim::Fixed(k)),
            _ => Err(CliError::input(format!(
                "--dim must be auto-rss, auto-sill or a positive integer, got `{s}`"
            ))),
        },
    }
}

fn read_symmetric(path: &Path) -> CliResult<DistanceMatrix> {
    let raw = io::read_distances(path)?;
    Ok(embed::symmetrize(raw.ids, &raw.entries)?)
}

fn default_report(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "embed".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_report.csv"))
}

pub fn euclideanize(a: &EuclideanizeArgs) -> CliResult<()> {
    let dim = parse_dim(&a.dim)?;
    let d = embed::metric_repair(&read_symmetric(&a.distances)?);
    let rank = Spectrum::of(&embed::double_center(&d)).positive_rank();
    let choice = match dim {
        Dim::Rss => {
            let baseline = match (&a.geodesic, &a.baseline) {
                (Some(g), _) => embed::geodesic_distances(&io::read_geo(g)?)?,
                (_, Some(b)) => read_symmetric(b)?,
                _ => return Err(CliError::input("--dim auto-rss needs a baseline: pass --geodesic or --baseline")),
            };
            embed::select_dimension(&d, Criterion::Rss, Some(&baseline), None)?
        }
        Dim::Sill => {
            let path = a
                .curves
                .as_ref()
                .ok_or_else(|| CliError::input("--dim auto-sill needs --curves"))?;
            let curves = io::read_curves(path)?.curves;
            let opts = RegistrationOptions {
                model: a.model.into(),
                align: false,
                ..RegistrationOptions::default()
            };
            let prep = registration::prepare(&curves, &opts)?;
            let mut scorer = |p: usize| -> spatreg::Result<f64> {
                let dp = embed::embedded_distances(&embed::embed(&d, p)?);
                match registration::register_prepared(&prep, Some(&dp), Mode::Spatial, &opts) {
                    Ok(r) => Ok(r
                        .variogram
                        .map_or(f64::NAN, |v| v.fit.model.sill() / v.fit.model.nugget())),
                    Err(e) if e.is_numerical() => Ok(f64::NAN),
                    Err(e) => Err(e),
                }
            };
            embed::select_dimension(&d, Criterion::SillNugget { max_p: a.max_dim }, None, Some(&mut scorer))?
        }
        Dim::Fixed(k) => embed::select_dimension(
            &d,
            Criterion::Cap {
                requested: k,
                cap: usize::MAX,
            },
            None,
            None,
        )?,
    };
    let e = embed::embed(&d, choice.dimension)?;
    let p = e.dimension();
    let mut header = vec!["location_id".to_string()];
    header.extend((1..=p).map(|j| format!("x{j}")));
    let rows: Vec<Vec<String>> = e
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let mut row = vec![id.clone()];
            row.extend((0..p).map(|j| num(e.coords[(i, j)])));
            row
        })
        .collect();
    io::write_csv(&a.out, &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;

    let mut report = vec![
        vec!["chosen".into(), p.to_string(), String::new()],
        vec!["positive_rank".into(), rank.to_string(), String::new()],
    ];
    report.extend(choice.scores.iter().map(|&(q, s)| vec!["score".into(), q.to_string(), num(s)]));
    let report_path = a.report.clone().unwrap_or_else(|| default_report(&a.out));
    io::write_csv(&report_path, &["item", "dimension", "value"], &report)?;
    eprintln!("embedded {} locations in {p} dimensions (positive rank {rank})", e.ids.len());
    Ok(())
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Spatial => "spatial",
        Mode::Nonspatial => "nonspatial",
    }
}

fn warps_rows(ids: &[String], maps: &[MonotoneMap]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (id, m) in ids.iter().zip(maps) {
        let grid = quad::uniform_grid(m.grid_size());
        for (t, v) in grid.iter().zip(m.values()) {
            rows.push(vec![id.clone(), num(*t), num(*v)]);
        }
    }
    rows
}

fn functional_rows(ids: &[String], maps: &[MonotoneMap]) -> Vec<Vec<String>> {
    ids.iter()
        .zip(maps)
        .map(|(id, m)| {
            let f = warp::phase_functionals(m);
            vec![id.clone(), num(f.displacement), num(f.stretch)]
        })
        .collect()
}

fn variogram_rows(result: &RegistrationResult) -> Option<Vec<Vec<String>>> {
    let spatial = result.variogram.as_ref()?;
    let model = spatial.fit.model;
    let param = |name: &str, v: String| vec!["param".into(), name.into(), String::new(), v];
    let mut rows = vec![
        param("nugget", num(model.nugget())),
        param("sill", num(model.sill())),
    ];
    match model {
        VariogramModel::Matern(p) => {
            rows.insert(0, param("model", "matern".into()));
            rows.push(param("nu", num(p.nu)));
            rows.push(param("range", num(p.range)));
        }
        VariogramModel::Exponential(p) => {
            rows.insert(0, param("model", "exponential".into()));
            rows.push(param("scale", num(p.scale)));
        }
    }
    let cloud = &spatial.cloud;
    for ((&(i, k), d), g) in cloud.pairs.iter().zip(&cloud.distances).zip(&cloud.semivariances) {
        let pair = format!("{}:{}", result.ids[i], result.ids[k]);
        rows.push(vec!["cloud".into(), pair, num(*d), num(*g)]);
    }
    let dmax = cloud.distances.iter().copied().fold(0.0, f64::max);
    for j in 0..=100 {
        let d = dmax * j as f64 / 100.0;
        rows.push(vec!["fitted".into(), String::new(), num(d), num(model.semivariance(d))]);
    }
    Some(rows)
}

pub fn register(a: &RegisterArgs) -> CliResult<()> {
    let io::Curves { curves, axis } = io::read_curves(&a.curves)?;
    let d = match (&a.distances, &a.embed) {
        (Some(p), _) => Some(read_symmetric(p)?),
        (_, Some(p)) => {
            let (ids, coords) = io::read_embedding(p)?;
            Some(embed::embedded_distances(&Embedding::from_coords(ids, coords)?))
        }
        _ => None,
    };
    let mode = match a.mode {
        ModeArg::Spatial => Mode::Spatial,
        ModeArg::Nonspatial => Mode::Nonspatial,
    };
    if mode == Mode::Spatial && d.is_none() {
        return Err(CliError::input("spatial mode needs --distances or --embed"));
    }
    if a.grid < 3 {
        return Err(CliError::input("--grid must be at least 3"));
    }
    if !(a.max_range_factor.is_finite() && a.max_range_factor > 0.0) {
        return Err(CliError::input("--max-range-factor must be positive"));
    }
    let mut opts = RegistrationOptions {
        grid: a.grid,
        model: a.model.into(),
        normalize: a.normalize,
        ..RegistrationOptions::default()
    };
    opts.fit.max_range_factor = a.max_range_factor;
    let result = registration::register(&curves, d.as_ref(), mode, &opts)?;
    let out = |suffix: &str| PathBuf::from(format!("{}_{suffix}.csv", a.out_prefix));

    io::write_csv(&out("warps"), &["location_id", "t", "h_inv"], &warps_rows(&result.ids, &result.warps))?;
    let grid = quad::uniform_grid(a.grid);
    let (lo, hi) = axis;
    let mut aligned = Vec::new();
    for (id, values) in result.ids.iter().zip(result.aligned.iter().flatten()) {
        for (t, v) in grid.iter().zip(values) {
            aligned.push(vec![id.clone(), num(*t), num(lo + t * (hi - lo)), num(*v)]);
        }
    }
    io::write_csv(&out("aligned"), &["location_id", "t", "time", "value"], &aligned)?;
    io::write_csv(
        &out("functionals"),
        &["location_id", "displacement", "stretch"],
        &functional_rows(&result.ids, &result.warps),
    )?;
    let weights: Vec<Vec<String>> = result
        .ids
        .iter()
        .zip(&result.weights.values)
        .map(|(id, w)| vec![id.clone(), num(*w)])
        .collect();
    io::write_csv(&out("weights"), &["location_id", "weight"], &weights)?;
    if let Some(rows) = variogram_rows(&result) {
        io::write_csv(&out("variogram"), &["record", "name", "distance", "value"], &rows)?;
    }

    let diag = &result.diagnostics;
    let source = match diag.weight_source {
        WeightSource::Uniform => "uniform",
        WeightSource::Blue => "fitted variogram",
        WeightSource::Exchangeable => "uniform (all distances equal)",
        WeightSource::NoVariation => "uniform (no phase variation)",
    };
    eprintln!("registered {} curves in {} mode; weights: {source}", result.ids.len(), mode_name(mode));
    if let Some(c) = diag.condition {
        eprintln!("covariance condition estimate {c:.3e}");
    }
    if diag.fit.is_some_and(|f| !f.converged) {
        eprintln!("warning: variogram fit did not converge");
    }
    if diag.projected {
        eprintln!("warning: an averaged warp was not monotone and was projected");
    }
    Ok(())
}

fn emit_replicate(dir: &Path, rep: &Replicate) -> CliResult<()> {
    let name = |what: &str| dir.join(format!("rep_{:05}_{what}.csv", rep.attempt));
    let mut curves = Vec::new();
    for c in &rep.curves {
        for (t, v) in c.times().iter().zip(c.values()) {
            curves.push(vec![c.location_id().to_string(), num(*t), num(*v)]);
        }
    }
    io::write_csv(&name("curves"), &["location_id", "time", "value"], &curves)?;
    io::write_square(&name("distances"), &rep.distances)?;
    let locations: Vec<Vec<String>> = rep
        .ids
        .iter()
        .zip(&rep.locations)
        .map(|(id, p)| vec![id.clone(), num(p[0]), num(p[1])])
        .collect();
    io::write_csv(&name("locations"), &["location_id", "x", "y"], &locations)?;
    let truth: Vec<Vec<String>> = rep
        .ids
        .iter()
        .zip(&rep.knots)
        .map(|(id, k)| {
            vec![id.clone(), num(k.zeta[0]), num(k.zeta[1]), num(k.zeta_star[0]), num(k.zeta_star[1])]
        })
        .collect();
    io::write_csv(&name("truth"), &["location_id", "zeta1", "zeta2", "zeta_star1", "zeta_star2"], &truth)
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let mut config = SimConfig::new(a.scheme, a.psi, a.reps, a.seed);
    config.registration.model = a.model.into();
    config.freeze_locations = a.freeze_locations;
    if let Some(v) = a.noise_var {
        config.noise_var = v;
    }
    let result = simulation::run_experiment(&config)?;
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.scheme.to_string(),
                num(r.psi),
                mode_name(r.mode).into(),
                r.replicates.to_string(),
                r.rejected.to_string(),
                num(r.avg_mse),
                num(r.ci95_halfwidth),
            ]
        })
        .collect();
    io::write_csv(
        &a.out,
        &["scheme", "psi", "mode", "replicates", "rejected", "avg_mse", "ci95_halfwidth"],
        &rows,
    )?;
    if let Some(dir) = &a.emit_data {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        let outcomes: Vec<Vec<String>> = result
            .outcomes
            .iter()
            .map(|o| vec![o.attempt.to_string(), num(o.nonspatial), num(o.spatial)])
            .collect();
        io::write_csv(&dir.join("outcomes.csv"), &["attempt", "nonspatial_mse", "spatial_mse"], &outcomes)?;
        for o in &result.outcomes {
            emit_replicate(dir, &simulation::simulate_replicate(&config, o.attempt)?)?;
        }
    }
    if result.incomplete {
        return Err(CliError {
            code: 3,
            message: format!(
                "only {} of {} replicates were accepted before the attempt cap; partial results written to {}",
                result.outcomes.len(),
                a.reps,
                a.out.display()
            ),
        });
    }
    Ok(())
}

pub fn functionals(a: &FunctionalsArgs) -> CliResult<()> {
    let warps = io::read_warps(&a.warps)?;
    let mut ids = Vec::with_capacity(warps.len());
    let mut maps = Vec::with_capacity(warps.len());
    for (id, values) in warps {
        maps.push(MonotoneMap::new(values).map_err(|e| CliError::input(format!("location {id}: {e}")))?);
        ids.push(id);
    }
    io::write_csv(&a.out, &["location_id", "displacement", "stretch"], &functional_rows(&ids, &maps))
}
