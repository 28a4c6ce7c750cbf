use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use spatreg::embed::{DistanceMatrix, GeoCoords};
use spatreg::smoothing::SampledCurve;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn output(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: 1,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<spatreg::Error> for CliError {
    fn from(e: spatreg::Error) -> Self {
        let code = if e.is_numerical() { 3 } else { 2 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Locale-independent, 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::output(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| CliError::output(path, e))?;
        w.flush().map_err(|e| CliError::output(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| CliError::output(path, e))?;
    tmp.persist(path).map_err(|e| CliError::output(path, e.error))?;
    Ok(())
}

/// Writes a header and rows of already formatted fields.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    write_atomic(path, |w| {
        writeln!(w, "{}", header.join(","))?;
        for row in rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    })
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(u64, Vec<String>)>,
}

impl Table {
    fn read(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec.iter().map(str::to_owned).collect()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    fn column(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::input(format!("{}: missing column `{name}`", self.path.display())))
    }

    fn error(&self, line: u64, msg: impl fmt::Display) -> CliError {
        CliError::input(format!("{}:{line}: {msg}", self.path.display()))
    }

    fn number(&self, line: u64, field: &str) -> CliResult<f64> {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(line, format!("`{field}` is not a finite number"))),
        }
    }
}

/// Rows grouped by id in order of first appearance.
fn grouped<T>(rows: impl IntoIterator<Item = (String, T)>) -> Vec<(String, Vec<T>)> {
    let mut index = HashMap::new();
    let mut groups: Vec<(String, Vec<T>)> = Vec::new();
    for (id, item) in rows {
        let k = *index.entry(id.clone()).or_insert_with(|| {
            groups.push((id, Vec::new()));
            groups.len() - 1
        });
        groups[k].1.push(item);
    }
    groups
}

/// Curves in long format, with their common time axis `(start, end)`.
pub struct Curves {
    pub curves: Vec<SampledCurve>,
    pub axis: (f64, f64),
}

/// Reads `location_id,time,value` and rescales time affinely to `[0, 1]`.
pub fn read_curves(path: &Path) -> CliResult<Curves> {
    let t = Table::read(path)?;
    let (ci, ct, cv) = (t.column("location_id")?, t.column("time")?, t.column("value")?);
    let mut obs = Vec::with_capacity(t.rows.len());
    for (line, row) in &t.rows {
        obs.push((row[ci].clone(), (*line, t.number(*line, &row[ct])?, t.number(*line, &row[cv])?)));
    }
    if obs.is_empty() {
        return Err(CliError::input(format!("{}: no observations", path.display())));
    }
    let lo = obs.iter().map(|o| o.1 .1).fold(f64::INFINITY, f64::min);
    let hi = obs.iter().map(|o| o.1 .1).fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(CliError::input(format!("{}: time axis has zero length", path.display())));
    }
    let span = hi - lo;
    let mut curves = Vec::new();
    for (id, mut points) in grouped(obs) {
        points.sort_by(|a, b| a.1.total_cmp(&b.1));
        if let Some(w) = points.windows(2).find(|w| w[0].1 == w[1].1) {
            return Err(t.error(w[1].0, format!("duplicate time {} for location {id}", w[1].1)));
        }
        let times = points.iter().map(|p| ((p.1 - lo) / span).clamp(0.0, 1.0)).collect();
        let values = points.iter().map(|p| p.2).collect();
        curves.push(SampledCurve::new(id, times, values)?);
    }
    Ok(Curves { curves, axis: (lo, hi) })
}

/// A possibly asymmetric labelled matrix of raw distances.
pub struct RawDistances {
    pub ids: Vec<String>,
    pub entries: DMatrix<f64>,
}

/// Square (`id,<ids...>` header) or long (`from_id,to_id,value`) distances.
/// In long format a pair given in one direction only is used for both, and
/// the diagonal defaults to zero.
pub fn read_distances(path: &Path) -> CliResult<RawDistances> {
    let t = Table::read(path)?;
    let long = ["from_id", "to_id", "value"].iter().all(|c| t.header.iter().any(|h| h == c));
    if long {
        read_long(&t)
    } else {
        read_square(&t)
    }
}

fn read_square(t: &Table) -> CliResult<RawDistances> {
    let ids: Vec<String> = t.header[1..].to_vec();
    let n = ids.len();
    if n == 0 {
        return Err(CliError::input(format!("{}: empty distance matrix", t.path.display())));
    }
    if t.rows.len() != n {
        return Err(CliError::input(format!(
            "{}: {} columns of ids but {} rows",
            t.path.display(),
            n,
            t.rows.len()
        )));
    }
    let mut entries = DMatrix::zeros(n, n);
    for (i, (line, row)) in t.rows.iter().enumerate() {
        if row[0] != ids[i] {
            return Err(t.error(*line, format!("row id `{}` does not match column id `{}`", row[0], ids[i])));
        }
        for k in 0..n {
            entries[(i, k)] = t.number(*line, &row[k + 1])?;
        }
    }
    Ok(RawDistances { ids, entries })
}

fn read_long(t: &Table) -> CliResult<RawDistances> {
    let (cf, ct, cv) = (t.column("from_id")?, t.column("to_id")?, t.column("value")?);
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut triples = Vec::new();
    for (line, row) in &t.rows {
        let mut slot = |id: &str| {
            *index.entry(id.to_owned()).or_insert_with(|| {
                ids.push(id.to_owned());
                ids.len() - 1
            })
        };
        let (i, k) = (slot(&row[cf]), slot(&row[ct]));
        triples.push((*line, i, k, t.number(*line, &row[cv])?));
    }
    let n = ids.len();
    let mut entries = DMatrix::from_element(n, n, f64::NAN);
    for (line, i, k, v) in triples {
        if !entries[(i, k)].is_nan() {
            return Err(t.error(line, format!("duplicate pair {} -> {}", ids[i], ids[k])));
        }
        entries[(i, k)] = v;
    }
    for i in 0..n {
        for k in 0..n {
            if entries[(i, k)].is_nan() {
                entries[(i, k)] = if i == k { 0.0 } else { entries[(k, i)] };
            }
            if entries[(i, k)].is_nan() {
                return Err(CliError::input(format!(
                    "{}: no distance between {} and {}",
                    t.path.display(),
                    ids[i],
                    ids[k]
                )));
            }
        }
    }
    Ok(RawDistances { ids, entries })
}

pub fn write_square(path: &Path, d: &DistanceMatrix) -> CliResult<()> {
    let mut header = vec!["id"];
    header.extend(d.ids().iter().map(String::as_str));
    let rows: Vec<Vec<String>> = (0..d.len())
        .map(|i| {
            let mut row = vec![d.ids()[i].clone()];
            row.extend((0..d.len()).map(|k| num(d.get(i, k))));
            row
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Reads `location_id,x1,x2,...` embedding coordinates.
pub fn read_embedding(path: &Path) -> CliResult<(Vec<String>, DMatrix<f64>)> {
    let t = Table::read(path)?;
    let ci = t.column("location_id")?;
    let cols: Vec<usize> = (0..t.header.len()).filter(|&j| j != ci).collect();
    if cols.is_empty() || t.rows.is_empty() {
        return Err(CliError::input(format!("{}: no coordinates", t.path.display())));
    }
    let mut coords = DMatrix::zeros(t.rows.len(), cols.len());
    let mut ids = Vec::with_capacity(t.rows.len());
    for (i, (line, row)) in t.rows.iter().enumerate() {
        ids.push(row[ci].clone());
        for (j, &c) in cols.iter().enumerate() {
            coords[(i, j)] = t.number(*line, &row[c])?;
        }
    }
    Ok((ids, coords))
}

/// Reads `location_id,lat,lon` in degrees.
pub fn read_geo(path: &Path) -> CliResult<GeoCoords> {
    let t = Table::read(path)?;
    let (ci, cla, clo) = (t.column("location_id")?, t.column("lat")?, t.column("lon")?);
    let mut coords = GeoCoords {
        ids: Vec::new(),
        lat: Vec::new(),
        lon: Vec::new(),
    };
    for (line, row) in &t.rows {
        coords.ids.push(row[ci].clone());
        coords.lat.push(t.number(*line, &row[cla])?);
        coords.lon.push(t.number(*line, &row[clo])?);
    }
    Ok(coords)
}

/// Reads `location_id,t,h_inv` warps sampled on a uniform grid.
pub fn read_warps(path: &Path) -> CliResult<Vec<(String, Vec<f64>)>> {
    let t = Table::read(path)?;
    let (ci, ct, ch) = (t.column("location_id")?, t.column("t")?, t.column("h_inv")?);
    let mut obs = Vec::with_capacity(t.rows.len());
    for (line, row) in &t.rows {
        obs.push((row[ci].clone(), (*line, t.number(*line, &row[ct])?, t.number(*line, &row[ch])?)));
    }
    let mut out = Vec::new();
    for (id, mut points) in grouped(obs) {
        points.sort_by(|a, b| a.1.total_cmp(&b.1));
        let g = points.len();
        if g < 2 {
            return Err(CliError::input(format!("{}: location {id} has fewer than two grid points", t.path.display())));
        }
        for (j, p) in points.iter().enumerate() {
            let expected = j as f64 / (g - 1) as f64;
            if (p.1 - expected).abs() > 1e-9 {
                return Err(t.error(p.0, format!("t = {} is not on a uniform grid of {g} points", p.1)));
            }
        }
        out.push((id, points.iter().map(|p| p.2).collect()));
    }
    if out.is_empty() {
        return Err(CliError::input(format!("{}: no warps", t.path.display())));
    }
    Ok(out)
}
