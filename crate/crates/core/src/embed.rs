//! Distance matrices: symmetrization, metric repair and Euclidean
//! approximation by classical scaling.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which eigenvalues count as zero.
pub const EIGEN_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-9;

/// Mean Earth radius in km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Symmetric, nonnegative matrix of pairwise distances with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    entries: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(ids: Vec<String>, entries: DMatrix<f64>) -> Result<Self> {
        let n = ids.len();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::validation(format!(
                "{n} ids but a {}x{} matrix",
                entries.nrows(),
                entries.ncols()
            )));
        }
        check_ids(&ids)?;
        for i in 0..n {
            if entries[(i, i)] != 0.0 {
                return Err(Error::validation(format!("nonzero diagonal at {}", ids[i])));
            }
            for k in 0..n {
                let v = entries[(i, k)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::validation(format!(
                        "invalid distance {v} between {} and {}",
                        ids[i], ids[k]
                    )));
                }
                let scale = v.max(entries[(k, i)]).max(1.0);
                if (v - entries[(k, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::validation(format!(
                        "asymmetric distances between {} and {}",
                        ids[i], ids[k]
                    )));
                }
            }
        }
        Ok(Self { ids, entries })
    }

    /// Ids `"0"`, `"1"`, ... for matrices without labels.
    pub fn unlabelled(entries: DMatrix<f64>) -> Result<Self> {
        let ids = (0..entries.nrows()).map(|i| i.to_string()).collect();
        Self::new(ids, entries)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.entries[(i, k)]
    }

    /// Upper-triangle entries, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for k in i + 1..n {
                out.push(self.entries[(i, k)]);
            }
        }
        out
    }

    /// Reorders rows and columns to follow `ids`.
    pub fn reorder(&self, ids: &[String]) -> Result<Self> {
        let mut index = Vec::with_capacity(ids.len());
        let mut missing = Vec::new();
        for id in ids {
            match self.ids.iter().position(|x| x == id) {
                Some(i) => index.push(i),
                None => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() || ids.len() != self.len() {
            let extra = self.ids.iter().filter(|x| !ids.contains(x)).cloned();
            missing.extend(extra);
            return Err(Error::IdMismatch { offenders: missing });
        }
        let entries = DMatrix::from_fn(ids.len(), ids.len(), |a, b| {
            self.entries[(index[a], index[b])]
        });
        Ok(Self {
            ids: ids.to_vec(),
            entries,
        })
    }
}

fn check_ids(ids: &[String]) -> Result<()> {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::validation(format!("duplicate location id {}", w[0])));
    }
    Ok(())
}

/// Averages a raw distance matrix with its transpose.
pub fn symmetrize(ids: Vec<String>, raw: &DMatrix<f64>) -> Result<DistanceMatrix> {
    if raw.nrows() != raw.ncols() {
        return Err(Error::validation("distance matrix is not square"));
    }
    if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("distance matrix has negative or non-finite entries"));
    }
    if (0..raw.nrows()).any(|i| raw[(i, i)] != 0.0) {
        return Err(Error::validation("distance matrix has a nonzero diagonal"));
    }
    let entries = (raw + raw.transpose()) * 0.5;
    DistanceMatrix::new(ids, entries)
}

/// Largest metric dominated by `d`: all-pairs shortest paths.
pub fn metric_repair(d: &DistanceMatrix) -> DistanceMatrix {
    let n = d.len();
    let mut m = d.entries.clone();
    for via in 0..n {
        for i in 0..n {
            let a = m[(i, via)];
            for k in 0..n {
                let through = a + m[(via, k)];
                if through < m[(i, k)] {
                    m[(i, k)] = through;
                }
            }
        }
    }
    DistanceMatrix {
        ids: d.ids.clone(),
        entries: m,
    }
}

/// Double-centred inner-product matrix `-H (D∘D) H / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
}

pub fn double_center(d: &DistanceMatrix) -> GramMatrix {
    let n = d.len();
    let sq = d.entries.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let entries = DMatrix::from_fn(n, n, |i, k| {
        -0.5 * (sq[(i, k)] - row_means[i] - row_means[k] + grand)
    });
    GramMatrix { entries }
}

/// Spectral decomposition of a Gram matrix, positive part only, descending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl Spectrum {
    pub fn of(b: &GramMatrix) -> Self {
        let n = b.entries.nrows();
        let eig = SymmetricEigen::new(b.entries.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
        let max = order.first().map_or(0.0, |&i| eig.eigenvalues[i]);
        let keep: Vec<usize> = order
            .into_iter()
            .take_while(|&i| max > 0.0 && eig.eigenvalues[i] > EIGEN_TOL * max)
            .collect();
        let mut vectors = DMatrix::zeros(n, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            let mut u: DVector<f64> = eig.eigenvectors.column(i).into_owned();
            let pivot = u.iter().copied().fold(0.0, |a: f64, v| if v.abs() > a.abs() { v } else { a });
            if pivot < 0.0 {
                u = -u;
            }
            vectors.set_column(j, &u);
        }
        Self {
            eigenvalues: keep.iter().map(|&i| eig.eigenvalues[i]).collect(),
            eigenvectors: vectors,
        }
    }

    /// Number of eigenvalues above the relative tolerance.
    pub fn positive_rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn embedding(&self, ids: &[String], p: usize) -> Result<Embedding> {
        if p == 0 || p > self.positive_rank() {
            return Err(Error::validation(format!(
                "embedding dimension {p} not in 1..={} (positive rank)",
                self.positive_rank()
            )));
        }
        let mut coords = self.eigenvectors.columns(0, p).into_owned();
        for j in 0..p {
            let s = self.eigenvalues[j].sqrt();
            coords.column_mut(j).scale_mut(s);
        }
        Ok(Embedding {
            ids: ids.to_vec(),
            coords,
            eigenvalues: self.eigenvalues[..p].to_vec(),
        })
    }
}

/// Points in `R^p` whose distances approximate a distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub ids: Vec<String>,
    /// One row per location.
    pub coords: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    pub fn dimension(&self) -> usize {
        self.coords.ncols()
    }

    /// Points given directly, e.g. read back from a file.
    pub fn from_coords(ids: Vec<String>, coords: DMatrix<f64>) -> Result<Self> {
        if coords.nrows() != ids.len() {
            return Err(Error::validation("coordinate rows do not match ids"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite coordinates"));
        }
        check_ids(&ids)?;
        Ok(Self {
            ids,
            coords,
            eigenvalues: Vec::new(),
        })
    }
}

/// Classical scaling of `d` into `p` dimensions.
pub fn embed(d: &DistanceMatrix, p: usize) -> Result<Embedding> {
    Spectrum::of(&double_center(d)).embedding(&d.ids, p)
}

pub fn embedded_distances(e: &Embedding) -> DistanceMatrix {
    let n = e.coords.nrows();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i + 1..n {
            let v = (e.coords.row(i) - e.coords.row(k)).norm();
            m[(i, k)] = v;
            m[(k, i)] = v;
        }
    }
    DistanceMatrix {
        ids: e.ids.clone(),
        entries: m,
    }
}

/// Residual sum of squares of the no-intercept regression of `d` on `fitted`
/// over unordered pairs.
pub fn regression_rss(d: &DistanceMatrix, fitted: &DistanceMatrix) -> f64 {
    let y = d.upper_triangle();
    let x = fitted.upper_triangle();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    x.iter().zip(&y).map(|(a, b)| (b - slope * a).powi(2)).sum()
}

/// How to choose the embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Minimize regression RSS of `d` on the embedded distances, relative to a baseline metric.
    Rss,
    /// Maximize an externally computed sill-to-nugget ratio over `1..=max_p`.
    SillNugget { max_p: usize },
    /// `min(requested, cap)`.
    Cap { requested: usize, cap: usize },
    /// 2 or 3, for plotting.
    Viz(usize),
}

/// Chosen dimension with the scores that led to it.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionChoice {
    pub dimension: usize,
    /// `(p, score)` in increasing `p`.
    pub scores: Vec<(usize, f64)>,
}

pub type Scorer<'a> = &'a mut dyn FnMut(usize) -> Result<f64>;

pub fn select_dimension(
    d: &DistanceMatrix,
    criterion: Criterion,
    baseline: Option<&DistanceMatrix>,
    scorer: Option<Scorer<'_>>,
) -> Result<DimensionChoice> {
    let spectrum = Spectrum::of(&double_center(d));
    let rank = spectrum.positive_rank();
    if rank == 0 {
        return Err(Error::degenerate("distance matrix has no positive eigenvalues"));
    }
    match criterion {
        Criterion::Rss => {
            let baseline =
                baseline.ok_or_else(|| Error::validation("rss criterion needs a baseline metric"))?;
            let baseline = baseline.reorder(&d.ids)?;
            let base_rss = regression_rss(d, &baseline);
            let scale = d.upper_triangle().iter().map(|v| v * v).sum::<f64>();
            let denom = if base_rss > 1e-14 * scale { base_rss } else { 1.0 };
            let mut scores = Vec::with_capacity(rank);
            for p in 1..=rank {
                let e = spectrum.embedding(&d.ids, p)?;
                scores.push((p, regression_rss(d, &embedded_distances(&e)) / denom));
            }
            let dimension = argbest(&scores, |a, b| a < b);
            Ok(DimensionChoice { dimension, scores })
        }
        Criterion::SillNugget { max_p } => {
            let scorer =
                scorer.ok_or_else(|| Error::validation("sill-nugget criterion needs a scorer"))?;
            if max_p == 0 {
                return Err(Error::validation("max dimension must be positive"));
            }
            let mut scores = Vec::new();
            for p in 1..=max_p.min(rank) {
                scores.push((p, scorer(p)?));
            }
            let dimension = argbest(&scores, |a, b| a > b);
            Ok(DimensionChoice { dimension, scores })
        }
        Criterion::Cap { requested, cap } => {
            if requested == 0 || cap == 0 {
                return Err(Error::validation("dimensions must be positive"));
            }
            Ok(DimensionChoice {
                dimension: requested.min(cap).min(rank),
                scores: Vec::new(),
            })
        }
        Criterion::Viz(p) => {
            if p != 2 && p != 3 {
                return Err(Error::validation("visualization dimension must be 2 or 3"));
            }
            if p > rank {
                return Err(Error::validation(format!("positive rank is only {rank}")));
            }
            Ok(DimensionChoice {
                dimension: p,
                scores: Vec::new(),
            })
        }
    }
}

/// First `p` whose score beats all others; NaN scores never win.
fn argbest(scores: &[(usize, f64)], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for &(p, s) in scores {
        if s.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, b)| better(s, b)) {
            best = Some((p, s));
        }
    }
    best.map_or(scores[0].0, |(p, _)| p)
}

/// Latitude and longitude in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoCoords {
    pub ids: Vec<String>,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
}

/// Great-circle (haversine) distances in km.
pub fn geodesic_distances(coords: &GeoCoords) -> Result<DistanceMatrix> {
    let n = coords.ids.len();
    if coords.lat.len() != n || coords.lon.len() != n {
        return Err(Error::validation("coordinate vectors differ in length"));
    }
    for i in 0..n {
        let (la, lo) = (coords.lat[i], coords.lon[i]);
        if !(-90.0..=90.0).contains(&la) || !(-180.0..=180.0).contains(&lo) {
            return Err(Error::validation(format!(
                "invalid coordinates ({la}, {lo}) for {}",
                coords.ids[i]
            )));
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i + 1..n {
            let v = haversine(coords.lat[i], coords.lon[i], coords.lat[k], coords.lon[k]);
            m[(i, k)] = v;
            m[(k, i)] = v;
        }
    }
    DistanceMatrix::new(coords.ids.clone(), m)
}

fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, dim, |_, _| rng.random_range(-1.0..1.0))
    }

    fn euclidean(x: &DMatrix<f64>) -> DistanceMatrix {
        let e = Embedding::from_coords((0..x.nrows()).map(|i| i.to_string()).collect(), x.clone())
            .unwrap();
        embedded_distances(&e)
    }

    fn random_distances(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in i + 1..n {
                let v = rng.random_range(1..1000) as f64 / 64.0;
                m[(i, k)] = v;
                m[(k, i)] = v;
            }
        }
        DistanceMatrix::unlabelled(m).unwrap()
    }

    /// Shortest paths by repeated Dijkstra, independent of Floyd–Warshall.
    fn dijkstra_apsp(d: &DistanceMatrix) -> DMatrix<f64> {
        let n = d.len();
        let mut out = DMatrix::zeros(n, n);
        for s in 0..n {
            let mut dist = vec![f64::INFINITY; n];
            let mut done = vec![false; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let u = (0..n)
                    .filter(|&v| !done[v])
                    .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
                    .unwrap();
                done[u] = true;
                for v in 0..n {
                    let alt = dist[u] + d.get(u, v);
                    if alt < dist[v] {
                        dist[v] = alt;
                    }
                }
            }
            for v in 0..n {
                out[(s, v)] = dist[v];
            }
        }
        out
    }

    #[test]
    fn symmetrize_averages() {
        let raw = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 4.0, 0.0]);
        let d = symmetrize(vec!["a".into(), "b".into()], &raw).unwrap();
        assert_eq!(d.get(0, 1), 3.0);
        assert_eq!(d.get(1, 0), 3.0);
        let bad = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(symmetrize(vec!["a".into(), "b".into()], &bad).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(symmetrize(vec!["a".into(), "b".into()], &diag).is_err());
    }

    #[test]
    fn symmetrize_random_asymmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let raw = DMatrix::from_fn(50, 50, |i, k| if i == k { 0.0 } else { rng.random_range(0.0..5.0) });
        let d = symmetrize((0..50).map(|i| i.to_string()).collect(), &raw).unwrap();
        for i in 0..50 {
            assert_eq!(d.get(i, i), 0.0);
            for k in 0..50 {
                assert!((d.get(i, k) - d.get(k, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn repair_shortcut_through_hub() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 5.0, 1.0, 5.0, 0.0]);
        let r = metric_repair(&DistanceMatrix::unlabelled(m).unwrap());
        assert_eq!(r.get(1, 2), 2.0);
        assert_eq!(r.get(2, 1), 2.0);
    }

    #[test]
    fn repair_matches_dijkstra() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let d = random_distances(&mut rng, 50);
            let r = metric_repair(&d);
            assert_eq!(r.entries(), &dijkstra_apsp(&d));
            assert_eq!(metric_repair(&r), r);
            assert!(r.entries().iter().zip(d.entries().iter()).all(|(a, b)| a <= b));
        }
    }

    #[test]
    fn repair_keeps_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = euclidean(&points(&mut rng, 20, 3));
        let r = metric_repair(&d);
        assert!((r.entries() - d.entries()).amax() < 1e-12);
    }

    #[test]
    fn double_center_two_points() {
        let d = DistanceMatrix::unlabelled(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0])).unwrap();
        let b = double_center(&d);
        assert_eq!(b.entries, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn double_center_recovers_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = points(&mut rng, 15, 4);
        let mean = x.row_mean();
        let xc = DMatrix::from_fn(15, 4, |i, j| x[(i, j)] - mean[j]);
        let gram = &xc * xc.transpose();
        let b = double_center(&euclidean(&x));
        assert!((b.entries.clone() - gram).amax() < 1e-8);
        let d = random_distances(&mut rng, 12);
        let b = double_center(&d);
        for i in 0..12 {
            assert!(b.entries.row(i).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn embed_two_points() {
        let d = DistanceMatrix::unlabelled(DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0])).unwrap();
        let e = embed(&d, 1).unwrap();
        assert!((e.coords[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((e.coords[(0, 0)] + e.coords[(1, 0)]).abs() < 1e-12);
        assert!((embedded_distances(&e).get(0, 1) - 2.0).abs() < 1e-12);
        assert!(embed(&d, 2).is_err());
    }

    #[test]
    fn round_trip_and_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = euclidean(&points(&mut rng, 20, 5));
        let spectrum = Spectrum::of(&double_center(&d));
        assert_eq!(spectrum.positive_rank(), 5);
        let e = embed(&d, 5).unwrap();
        assert!((embedded_distances(&e).entries() - d.entries()).amax() < 1e-8);
        let b = double_center(&d).entries;
        let mut last = f64::INFINITY;
        for p in 1..=5 {
            let e = embed(&d, p).unwrap();
            let gram = &e.coords * e.coords.transpose();
            let mut trunc = DMatrix::zeros(20, 20);
            for j in 0..p {
                let u = spectrum.eigenvectors.column(j);
                trunc += spectrum.eigenvalues[j] * u * u.transpose();
            }
            assert!((gram - trunc).amax() < 1e-8);
            let err = (embedded_distances(&e).entries() - d.entries()).norm();
            assert!(err <= last + 1e-10);
            last = err;
        }
        assert!(b.nrows() == 20);
    }

    #[test]
    fn one_dimensional_embedding_is_collinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_distances(&mut rng, 10);
        let e = embed(&d, 1).unwrap();
        let dd = embedded_distances(&e);
        for i in 0..10 {
            for k in 0..10 {
                let x = (e.coords[(i, 0)] - e.coords[(k, 0)]).abs();
                assert!((dd.get(i, k) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = points(&mut rng, 10, 3);
        let shifted = DMatrix::from_fn(10, 3, |i, j| x[(i, j)] + [5.0, -2.0, 0.5][j]);
        assert!((euclidean(&x).entries() - euclidean(&shifted).entries()).amax() < 1e-12);
    }

    #[test]
    fn relabelling_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = random_distances(&mut rng, 12);
        let perm: Vec<String> = (0..12).rev().map(|i| i.to_string()).collect();
        let pd = d.reorder(&perm).unwrap();
        let a = metric_repair(&d).reorder(&perm).unwrap();
        assert_eq!(a, metric_repair(&pd));
        let d = euclidean(&points(&mut rng, 12, 4));
        let pd = d.reorder(&perm).unwrap();
        let e1 = embedded_distances(&embed(&d, 3).unwrap()).reorder(&perm).unwrap();
        let e2 = embedded_distances(&embed(&pd, 3).unwrap());
        assert!((e1.entries() - e2.entries()).amax() < 1e-9);
    }

    #[test]
    fn rss_picks_intrinsic_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = euclidean(&points(&mut rng, 25, 3));
        let noisy = DMatrix::from_fn(25, 25, |i, k| d.get(i, k) * (1.0 + 0.1 * ((i * k) % 3) as f64));
        let noisy = symmetrize(d.ids().to_vec(), &noisy).unwrap();
        let choice = select_dimension(&d, Criterion::Rss, Some(&noisy), None).unwrap();
        assert_eq!(choice.dimension, 3);
        assert!(choice.scores[2].1 < 1e-10);
        assert!(choice.scores.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12));
        assert!(select_dimension(&d, Criterion::Rss, None, None).is_err());
    }

    #[test]
    fn rss_scores_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = euclidean(&points(&mut rng, 30, 6));
        let base = euclidean(&points(&mut rng, 30, 2));
        let choice = select_dimension(&d, Criterion::Rss, Some(&base), None).unwrap();
        for w in choice.scores.windows(2) {
            assert!(w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-12, "{:?}", w);
        }
    }

    #[test]
    fn other_criteria() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = euclidean(&points(&mut rng, 10, 4));
        let mut scorer = |p: usize| Ok(-((p as f64) - 2.0).powi(2));
        let c = select_dimension(&d, Criterion::SillNugget { max_p: 4 }, None, Some(&mut scorer))
            .unwrap();
        assert_eq!(c.dimension, 2);
        assert_eq!(c.scores.len(), 4);
        assert!(select_dimension(&d, Criterion::SillNugget { max_p: 4 }, None, None).is_err());
        let mut failing = |_p: usize| Err(Error::Numerical("no fit".into()));
        assert!(
            select_dimension(&d, Criterion::SillNugget { max_p: 2 }, None, Some(&mut failing))
                .is_err()
        );
        let cap = Criterion::Cap { requested: 16, cap: 3 };
        assert_eq!(select_dimension(&d, cap, None, None).unwrap().dimension, 3);
        assert_eq!(select_dimension(&d, Criterion::Viz(2), None, None).unwrap().dimension, 2);
        assert!(select_dimension(&d, Criterion::Viz(4), None, None).is_err());
    }

    #[test]
    fn geodesics() {
        let g = GeoCoords {
            ids: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            lat: vec![0.0, 0.0, 0.0, 0.0],
            lon: vec![0.0, 180.0, 90.0, 0.0],
        };
        let d = geodesic_distances(&g).unwrap();
        assert!((d.get(0, 1) - 20015.1).abs() < 0.1);
        assert!((d.get(0, 2) - 10007.5).abs() < 0.1);
        assert_eq!(d.get(0, 3), 0.0);
        let bad = GeoCoords {
            ids: vec!["a".into()],
            lat: vec![91.0],
            lon: vec![0.0],
        };
        assert!(geodesic_distances(&bad).is_err());
    }
}
