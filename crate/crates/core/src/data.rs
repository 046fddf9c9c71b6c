//! Datasets: CSV ingestion, feature scaling and seeded synthetic generators.
//!
//! All randomness comes from `ChaCha8Rng` (crate `rand_chacha` 0.9) seeded with
//! `seed_from_u64`, so a seed reproduces the same points on every platform for a
//! fixed build of this crate.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::matrix::Mat;
use crate::{Error, Result};

/// A `d × n` matrix of observations (one column per point) with optional
/// ground-truth labels in `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub points: Mat,
    pub labels: Option<Vec<usize>>,
    pub name: String,
}

impl Dataset {
    pub fn new(points: Mat, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        if points.rows() == 0 || points.cols() == 0 {
            return Err(Error::Empty);
        }
        if let Some((idx, _)) = points.as_slice().iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let d = points.rows();
            return Err(Error::NonFiniteValue { row: idx / d + 1, column: idx % d + 1 });
        }
        if let Some(l) = &labels {
            if l.len() != points.cols() {
                return Err(Error::DimensionMismatch(format!("{} labels for {} points", l.len(), points.cols())));
            }
            num_classes(l)?;
        }
        Ok(Dataset { points, labels, name: name.into() })
    }

    pub fn dim(&self) -> usize {
        self.points.rows()
    }

    pub fn len(&self) -> usize {
        self.points.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.cols() == 0
    }

    pub fn descriptor(&self, source: &str, seed: Option<u64>) -> DatasetDescriptor {
        DatasetDescriptor {
            schema: "v1".into(),
            name: self.name.clone(),
            d: self.dim(),
            n: self.len(),
            source: source.into(),
            seed,
        }
    }

    /// Writes `x1,…,xd[,label]` rows, one per observation.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut header: Vec<String> = (1..=self.dim()).map(|k| format!("x{k}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).map_err(|e| csv_io(path, e))?;
        let mut record = Vec::with_capacity(self.dim() + 1);
        for i in 0..self.len() {
            record.clear();
            record.extend(self.points.col(i).iter().map(|v| format!("{v:?}")));
            if let Some(l) = &self.labels {
                record.push(l[i].to_string());
            }
            w.write_record(&record).map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// JSON sidecar describing where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub schema: String,
    pub name: String,
    pub d: usize,
    pub n: usize,
    pub source: String,
    pub seed: Option<u64>,
}

/// Checks that `labels` is a surjection onto `1..=K` and returns `K`.
pub fn num_classes(labels: &[usize]) -> Result<usize> {
    let k = labels.iter().copied().max().unwrap_or(0);
    if labels.contains(&0) {
        return Err(Error::InvalidLabels("labels must be 1-based".into()));
    }
    let mut seen = vec![false; k];
    for &l in labels {
        seen[l - 1] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidLabels(format!("class {} is empty", missing + 1)));
    }
    Ok(k)
}

/// Relabels arbitrary integer ids onto `1..=K` in increasing id order.
pub fn canonical_labels(raw: &[i64]) -> Vec<usize> {
    let ids: BTreeMap<i64, usize> = {
        let mut uniq: Vec<i64> = raw.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        uniq.into_iter().enumerate().map(|(k, id)| (id, k + 1)).collect()
    };
    raw.iter().map(|id| ids[id]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvOrientation {
    /// One observation per row (default).
    #[default]
    RowsArePoints,
    /// One observation per column.
    ColumnsArePoints,
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { row: 0, column: 0, message: format!("{other:?}") },
    }
}

/// Reads a comma-separated file of reals.
///
/// A first row that does not parse as numbers is taken as a header. When
/// `has_labels` is set, the label column is the one named `label` in the header,
/// or the last column if there is no header. Labels may be any integers; they
/// are mapped onto `1..=K` in increasing order. With
/// [`CsvOrientation::ColumnsArePoints`] the label column becomes a label row.
pub fn load_csv(path: impl AsRef<Path>, has_labels: bool, orientation: CsvOrientation) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_csv(&text, has_labels, orientation, &name)
}

pub(crate) fn parse_csv(text: &str, has_labels: bool, orientation: CsvOrientation, name: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse { row: r + 1, column: 0, message: e.to_string() })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }

    let looks_numeric = |f: &str| f.parse::<f64>().is_ok();
    let header: Option<Vec<String>> =
        if rows[0].iter().any(|f| !looks_numeric(f)) && orientation == CsvOrientation::RowsArePoints {
            Some(rows.remove(0))
        } else {
            None
        };
    // Row numbers reported to the user are 1-based file lines.
    let row_offset = if header.is_some() { 2 } else { 1 };
    if rows.is_empty() {
        return Err(Error::Empty);
    }

    let width = rows[0].len();
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "row {} has {} fields, expected {}",
                r + row_offset,
                row.len(),
                width
            )));
        }
    }

    let parse = |r: usize, c: usize, f: &str| -> Result<f64> {
        let v: f64 = f.parse().map_err(|_| Error::Parse {
            row: r + row_offset,
            column: c + 1,
            message: format!("cannot parse {f:?} as a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::NonFiniteValue { row: r + row_offset, column: c + 1 });
        }
        Ok(v)
    };

    match orientation {
        CsvOrientation::RowsArePoints => {
            let label_col = if has_labels {
                let col = header
                    .as_ref()
                    .and_then(|h| h.iter().position(|f| f.eq_ignore_ascii_case("label")))
                    .unwrap_or(width - 1);
                Some(col)
            } else {
                None
            };
            let d = width - usize::from(label_col.is_some());
            if d == 0 {
                return Err(Error::DimensionMismatch("no feature columns".into()));
            }
            let n = rows.len();
            let mut data = Vec::with_capacity(d * n);
            let mut raw_labels = Vec::with_capacity(if has_labels { n } else { 0 });
            for (r, row) in rows.iter().enumerate() {
                for (c, f) in row.iter().enumerate() {
                    if Some(c) == label_col {
                        raw_labels.push(parse_label(r + row_offset, c + 1, f)?);
                    } else {
                        data.push(parse(r, c, f)?);
                    }
                }
            }
            let labels = label_col.map(|_| canonical_labels(&raw_labels));
            Dataset::new(Mat::from_col_major(d, n, data), labels, name)
        }
        CsvOrientation::ColumnsArePoints => {
            let n = width;
            let d = rows.len() - usize::from(has_labels);
            if d == 0 {
                return Err(Error::DimensionMismatch("no feature rows".into()));
            }
            let mut points = Mat::zeros(d, n);
            for (r, row) in rows.iter().take(d).enumerate() {
                for (c, f) in row.iter().enumerate() {
                    points.set(r, c, parse(r, c, f)?);
                }
            }
            let labels = if has_labels {
                let raw = rows[d]
                    .iter()
                    .enumerate()
                    .map(|(c, f)| parse_label(d + row_offset, c + 1, f))
                    .collect::<Result<Vec<_>>>()?;
                Some(canonical_labels(&raw))
            } else {
                None
            };
            Dataset::new(points, labels, name)
        }
    }
}

fn parse_label(row: usize, column: usize, f: &str) -> Result<i64> {
    if let Ok(v) = f.parse::<i64>() {
        return Ok(v);
    }
    // Accept integral floats such as "2.0".
    match f.parse::<f64>() {
        Ok(v) if v.is_finite() && v.fract() == 0.0 => Ok(v as i64),
        _ => Err(Error::Parse { row, column, message: format!("label {f:?} is not an integer") }),
    }
}

/// Maps every feature affinely onto `[0, 1]`; constant features become 0.5.
pub fn scale_unit_box(data: &Dataset) -> Dataset {
    let (d, n) = data.points.shape();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for c in data.points.columns() {
        for k in 0..d {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let mut points = data.points.clone();
    for i in 0..n {
        let c = points.col_mut(i);
        for k in 0..d {
            let span = hi[k] - lo[k];
            c[k] = if span > 0.0 { ((c[k] - lo[k]) / span).clamp(0.0, 1.0) } else { 0.5 };
        }
    }
    Dataset { points, labels: data.labels.clone(), name: data.name.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Two interlocking unit semicircles; the second is flipped and offset by
    /// `(1, −0.5)`. Labels split `n/2` / `n − n/2`.
    TwoHalfMoons { noise: f64 },
    /// Isotropic Gaussian blobs. `sizes` gives each blob's share of `n`; if it
    /// is empty the points are split evenly.
    GaussianBlobs { centers: Vec<Vec<f64>>, std: f64, sizes: Vec<usize> },
    /// Eight 2-D Gaussian blobs with sizes in proportion 2000:2000:2000:100:…:100,
    /// scaled into the unit box.
    UnbalancedGaussian,
    /// Two concentric upper half-shells in R³, half the points in each,
    /// uniformly distributed by volume.
    SemiSphericalShells { inner: (f64, f64), outer: (f64, f64) },
}

impl SyntheticKind {
    pub fn two_half_moons() -> Self {
        SyntheticKind::TwoHalfMoons { noise: 0.1 }
    }

    pub fn semi_spherical_shells() -> Self {
        SyntheticKind::SemiSphericalShells { inner: (1.0, 1.4), outer: (1.6, 2.0) }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SyntheticKind::TwoHalfMoons { .. } => "two_half_moons",
            SyntheticKind::GaussianBlobs { .. } => "gaussian_blobs",
            SyntheticKind::UnbalancedGaussian => "unbalanced_gaussian",
            SyntheticKind::SemiSphericalShells { .. } => "semi_spherical_shells",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub kind: SyntheticKind,
    pub n: usize,
    pub seed: u64,
}

const UNBALANCED_SHARES: [usize; 8] = [2000, 2000, 2000, 100, 100, 100, 100, 100];
const UNBALANCED_CENTERS: [[f64; 2]; 8] =
    [[0.0, 0.0], [12.0, 0.0], [6.0, 10.0], [18.0, 10.0], [-6.0, 10.0], [18.0, -6.0], [-6.0, -6.0], [6.0, -6.0]];
const UNBALANCED_STDS: [f64; 8] = [1.2, 1.2, 1.2, 0.5, 0.5, 0.5, 0.5, 0.5];

/// Seeded synthetic data with ground-truth labels.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let name = spec.kind.name();
    match &spec.kind {
        SyntheticKind::TwoHalfMoons { noise } => {
            if !(*noise >= 0.0) || !noise.is_finite() {
                return Err(Error::InvalidArgument("noise must be a finite nonnegative number".into()));
            }
            if spec.n < 2 {
                return Err(Error::InvalidArgument("two_half_moons needs n >= 2".into()));
            }
            let n_upper = spec.n / 2;
            let n_lower = spec.n - n_upper;
            let mut pts = Mat::zeros(2, spec.n);
            let mut labels = Vec::with_capacity(spec.n);
            let angle = |k: usize, m: usize| if m > 1 { PI * k as f64 / (m - 1) as f64 } else { 0.0 };
            for k in 0..n_upper {
                let t = angle(k, n_upper);
                pts.col_mut(k).copy_from_slice(&[t.cos(), t.sin()]);
                labels.push(1);
            }
            for k in 0..n_lower {
                let t = angle(k, n_lower);
                pts.col_mut(n_upper + k).copy_from_slice(&[1.0 - t.cos(), 1.0 - t.sin() - 0.5]);
                labels.push(2);
            }
            for v in pts.as_mut_slice() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *v += noise * e;
            }
            Dataset::new(pts, Some(labels), name)
        }
        SyntheticKind::GaussianBlobs { centers, std, sizes } => {
            let sizes = if sizes.is_empty() { even_split(spec.n, centers.len()) } else { sizes.clone() };
            gaussian_mixture(&mut rng, centers, &vec![*std; centers.len()], &sizes, spec.n, name)
        }
        SyntheticKind::UnbalancedGaussian => {
            let centers: Vec<Vec<f64>> = UNBALANCED_CENTERS.iter().map(|c| c.to_vec()).collect();
            let raw = gaussian_mixture(&mut rng, &centers, &UNBALANCED_STDS, &UNBALANCED_SHARES, spec.n, name)?;
            Ok(scale_unit_box(&raw))
        }
        SyntheticKind::SemiSphericalShells { inner, outer } => {
            let ordered = |(a, b): (f64, f64)| a.is_finite() && b.is_finite() && 0.0 <= a && a < b;
            if !ordered(*inner) || !ordered(*outer) || inner.1 > outer.0 {
                return Err(Error::InvalidArgument(
                    "shell radii must satisfy 0 <= r_in < r_out and inner shell below outer shell".into(),
                ));
            }
            let n_inner = spec.n / 2;
            let mut pts = Mat::zeros(3, spec.n);
            let mut labels = Vec::with_capacity(spec.n);
            for i in 0..spec.n {
                let (band, label) = if i < n_inner { (*inner, 1) } else { (*outer, 2) };
                let p = sample_half_shell(&mut rng, band);
                pts.col_mut(i).copy_from_slice(&p);
                labels.push(label);
            }
            Dataset::new(pts, Some(labels), name)
        }
    }
}

fn even_split(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Splits `n` in proportion to `shares` (largest-remainder rounding).
fn proportional_split(n: usize, shares: &[usize]) -> Vec<usize> {
    let total: usize = shares.iter().sum();
    if total == n {
        return shares.to_vec();
    }
    let exact: Vec<f64> = shares.iter().map(|&s| s as f64 * n as f64 / total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = n - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

fn gaussian_mixture(
    rng: &mut ChaCha8Rng,
    centers: &[Vec<f64>],
    stds: &[f64],
    shares: &[usize],
    n: usize,
    name: &str,
) -> Result<Dataset> {
    if centers.is_empty() {
        return Err(Error::InvalidArgument("at least one center is required".into()));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidArgument("centers must share a positive dimension".into()));
    }
    if shares.len() != centers.len() {
        return Err(Error::InvalidArgument("one size per center is required".into()));
    }
    if stds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("std must be a finite nonnegative number".into()));
    }
    let sizes = proportional_split(n, shares);
    if sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!("n = {n} leaves a blob empty")));
    }
    let mut pts = Mat::zeros(d, n);
    let mut labels = Vec::with_capacity(n);
    let mut col = 0;
    for (b, (&size, center)) in sizes.iter().zip(centers).enumerate() {
        for _ in 0..size {
            let c = pts.col_mut(col);
            for k in 0..d {
                let e: f64 = StandardNormal.sample(rng);
                c[k] = center[k] + stds[b] * e;
            }
            labels.push(b + 1);
            col += 1;
        }
    }
    Dataset::new(pts, Some(labels), name)
}

/// Uniform-by-volume sample from `{x : r_in ≤ ‖x‖ ≤ r_out, x_3 ≥ 0}`.
fn sample_half_shell(rng: &mut ChaCha8Rng, (r_in, r_out): (f64, f64)) -> [f64; 3] {
    let mut dir = [0.0; 3];
    loop {
        for v in dir.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-12 {
            dir.iter_mut().for_each(|v| *v /= norm);
            break;
        }
    }
    dir[2] = dir[2].abs();
    let u: f64 = rng.random();
    let (a, b) = (r_in.powi(3), r_out.powi(3));
    let r = (a + u * (b - a)).cbrt().clamp(r_in, r_out);
    [r * dir[0], r * dir[1], r * dir[2]]
}
