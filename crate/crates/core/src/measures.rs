//! Source and target measures, cost functions, sampling, and point-cloud I/O.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::Real;

/// Absolute slack allowed on the weight sum after renormalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Rejection-sampling budget per accepted truncated-mixture sample.
const MAX_REJECTIONS: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("measure must have at least one support point")]
    EmptySupport,
    #[error("weight {value} at index {index} is not strictly positive")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("points and weights have different lengths: {points} vs {weights}")]
    LengthMismatch { points: usize, weights: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cost-table index ({row}, {col}) out of range for {rows}x{cols} table")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("cost value at ({row}, {col}) is negative or not finite")]
    InvalidCost { row: usize, col: usize },
    #[error("rejection sampling exceeded {MAX_REJECTIONS} draws without landing in the box")]
    RejectionLimit,
    #[error("sample stream is exhausted")]
    StreamExhausted,
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

/// A discrete probability measure: support points plus strictly positive
/// weights that sum to one.
///
/// Weights passed to the constructor may be unnormalized; they are rescaled
/// so the sum is 1 within `1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<T> {
    points: Vec<Vec<T>>,
    weights: Vec<T>,
    log_weights: Vec<T>,
    dim: usize,
}

impl<T: Real> DiscreteMeasure<T> {
    /// Builds a measure from support points and optional unnormalized weights.
    /// Omitted weights mean uniform mass `1/J`.
    pub fn new(points: Vec<Vec<T>>, weights: Option<Vec<T>>) -> Result<Self, MeasureError> {
        if points.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        let dim = points[0].len();
        for p in &points {
            if p.len() != dim {
                return Err(MeasureError::DimensionMismatch {
                    left: dim,
                    right: p.len(),
                });
            }
        }
        let n = points.len();
        let weights = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(MeasureError::LengthMismatch {
                        points: n,
                        weights: w.len(),
                    });
                }
                for (i, &wi) in w.iter().enumerate() {
                    if !(wi > T::zero()) || !wi.is_finite() {
                        return Err(MeasureError::NonPositiveWeight {
                            index: i,
                            value: wi.as_f64(),
                        });
                    }
                }
                let sum: T = w.iter().copied().sum();
                w.into_iter().map(|wi| wi / sum).collect()
            }
            None => vec![T::one() / T::of_usize(n); n],
        };
        let log_weights = weights.iter().map(|&w| w.ln()).collect();
        Ok(Self {
            points,
            weights,
            log_weights,
            dim,
        })
    }

    /// Uniform weights `1/J` over the given points.
    pub fn uniform(points: Vec<Vec<T>>) -> Result<Self, MeasureError> {
        Self::new(points, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a constructed measure always has support
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub(crate) fn log_weight(&self, i: usize) -> T {
        self.log_weights[i]
    }

    pub fn min_weight(&self) -> T {
        self.weights
            .iter()
            .copied()
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

/// Cost function between a source point and a target point.
///
/// `Custom` holds a cost table indexed by atom: both arguments must then be
/// one-dimensional points whose single coordinate is the atom index.
#[derive(Debug, Clone)]
pub enum CostSpec<T> {
    Euclidean,
    SquaredEuclidean,
    Custom(CostMatrix<T>),
}

impl<T: Real> CostSpec<T> {
    /// Evaluates the cost `c(x, y)`; always nonnegative.
    pub fn cost(&self, x: &[T], y: &[T]) -> Result<T, MeasureError> {
        match self {
            CostSpec::Euclidean => Ok(squared_distance(x, y)?.sqrt()),
            CostSpec::SquaredEuclidean => squared_distance(x, y),
            CostSpec::Custom(table) => {
                if x.len() != 1 || y.len() != 1 {
                    return Err(MeasureError::DimensionMismatch {
                        left: x.len(),
                        right: y.len(),
                    });
                }
                let (i, j) = (x[0].as_f64() as usize, y[0].as_f64() as usize);
                table.get(i, j)
            }
        }
    }
}

fn squared_distance<T: Real>(x: &[T], y: &[T]) -> Result<T, MeasureError> {
    if x.len() != y.len() {
        return Err(MeasureError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let mut acc = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let d = a - b;
        acc += d * d;
    }
    Ok(acc)
}

/// Dense `I x J` matrix of nonnegative costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    values: Vec<T>,
    rows: usize,
    cols: usize,
}

impl<T: Real> CostMatrix<T> {
    pub fn new(values: Vec<T>, rows: usize, cols: usize) -> Result<Self, MeasureError> {
        assert_eq!(values.len(), rows * cols, "row-major storage size");
        for (k, &v) in values.iter().enumerate() {
            if v < T::zero() || !v.is_finite() {
                return Err(MeasureError::InvalidCost {
                    row: k / cols,
                    col: k % cols,
                });
            }
        }
        Ok(Self { values, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[i * self.cols + j]
    }

    pub fn get(&self, i: usize, j: usize) -> Result<T, MeasureError> {
        if i >= self.rows || j >= self.cols {
            return Err(MeasureError::IndexOutOfRange {
                row: i,
                col: j,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.at(i, j))
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Pairwise cost matrix between the supports of two discrete measures.
pub fn cost_matrix<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    spec: &CostSpec<T>,
) -> Result<CostMatrix<T>, MeasureError> {
    if let CostSpec::Custom(table) = spec {
        if table.rows() != mu.len() || table.cols() != nu.len() {
            return Err(MeasureError::IndexOutOfRange {
                row: mu.len() - 1,
                col: nu.len() - 1,
                rows: table.rows(),
                cols: table.cols(),
            });
        }
        return Ok(table.clone());
    }
    let mut values = Vec::with_capacity(mu.len() * nu.len());
    for x in mu.points() {
        for y in nu.points() {
            values.push(spec.cost(x, y)?);
        }
    }
    CostMatrix::new(values, mu.len(), nu.len())
}

/// One axis-aligned Gaussian bump of a mixture.
#[derive(Debug, Clone)]
pub struct GaussianComponent<T> {
    pub weight: T,
    pub mean: Vec<T>,
    pub std_dev: Vec<T>,
}

/// Mixture of axis-aligned Gaussian densities.
#[derive(Debug, Clone)]
pub struct GaussianMixture<T> {
    components: Vec<GaussianComponent<T>>,
}

impl<T: Real> GaussianMixture<T> {
    pub fn new(components: Vec<GaussianComponent<T>>) -> Result<Self, MeasureError> {
        if components.is_empty() {
            return Err(MeasureError::EmptySupport);
        }
        let dim = components[0].mean.len();
        for c in &components {
            if c.mean.len() != dim || c.std_dev.len() != dim {
                return Err(MeasureError::DimensionMismatch {
                    left: dim,
                    right: c.mean.len().max(c.std_dev.len()),
                });
            }
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn components(&self) -> &[GaussianComponent<T>] {
        &self.components
    }

    /// Unnormalized mixture density at `x` (component weights need not sum to 1).
    pub fn density(&self, x: &[T]) -> T {
        let half = T::of(0.5);
        let mut total = T::zero();
        for c in &self.components {
            let mut log_pdf = T::zero();
            for k in 0..x.len() {
                let z = (x[k] - c.mean[k]) / c.std_dev[k];
                log_pdf = log_pdf - half * z * z - c.std_dev[k].ln();
            }
            total += c.weight * log_pdf.exp();
        }
        total
    }

    /// Projects the mixture onto a regular grid: evaluates the density at the
    /// grid nodes of `[lo, hi]^d` and renormalizes the node masses to one.
    pub fn discretize_on_grid(
        &self,
        per_axis: usize,
        lo: &[T],
        hi: &[T],
    ) -> Result<DiscreteMeasure<T>, MeasureError> {
        let nodes = grid_points(per_axis, lo, hi)?;
        let floor = T::of(1e-300); // keep weights strictly positive
        let weights: Vec<T> = nodes.iter().map(|p| self.density(p).max(floor)).collect();
        DiscreteMeasure::new(nodes, Some(weights))
    }
}

/// Regular lattice with `per_axis` points per axis, endpoints included
/// (`per_axis == 1` takes the box midpoint). First axis varies slowest.
pub fn grid_points<T: Real>(
    per_axis: usize,
    lo: &[T],
    hi: &[T],
) -> Result<Vec<Vec<T>>, MeasureError> {
    if per_axis == 0 || lo.is_empty() {
        return Err(MeasureError::EmptySupport);
    }
    if lo.len() != hi.len() {
        return Err(MeasureError::DimensionMismatch {
            left: lo.len(),
            right: hi.len(),
        });
    }
    let d = lo.len();
    let axis_coord = |k: usize, i: usize| -> T {
        if per_axis == 1 {
            (lo[k] + hi[k]) / T::of(2.0)
        } else {
            let t = T::of_usize(i) / T::of_usize(per_axis - 1);
            lo[k] + (hi[k] - lo[k]) * t
        }
    };
    let total = per_axis.pow(d as u32);
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = vec![T::zero(); d];
        for k in (0..d).rev() {
            p[k] = axis_coord(k, idx % per_axis);
            idx /= per_axis;
        }
        out.push(p);
    }
    Ok(out)
}

/// Anything that can produce a stream of source samples.
pub trait Sampler<T: Real> {
    fn dim(&self) -> usize;

    /// Writes the next sample into `out` (cleared first).
    fn sample_into(&mut self, out: &mut Vec<T>) -> Result<(), MeasureError>;

    fn next_point(&mut self) -> Result<Vec<T>, MeasureError> {
        let mut p = Vec::with_capacity(self.dim());
        self.sample_into(&mut p)?;
        Ok(p)
    }
}

/// What distribution a [`SampleSource`] draws from.
#[derive(Debug, Clone)]
pub enum SourceKind<T> {
    /// Draws support points of the measure, index `j` with probability `w_j`.
    Empirical(DiscreteMeasure<T>),
    /// Gaussian mixture restricted to a box by rejection.
    GaussianMixtureTruncated {
        mixture: GaussianMixture<T>,
        lo: Vec<T>,
        hi: Vec<T>,
    },
    /// Uniform on `[0, 1]^d`.
    UniformHypercube(usize),
}

/// Seedable i.i.d. sample stream.
///
/// The generator is ChaCha8 seeded from a `u64`, and all selection logic runs
/// in `f64`, so a given seed reproduces the same stream on every platform and
/// for every scalar type.
#[derive(Debug, Clone)]
pub struct SampleSource<T> {
    kind: SourceKind<T>,
    rng: ChaCha8Rng,
    /// Cumulative selection weights (atoms or mixture components).
    cumulative: Vec<f64>,
}

impl<T: Real> SampleSource<T> {
    pub fn new(kind: SourceKind<T>, seed: u64) -> Self {
        let cumulative = match &kind {
            SourceKind::Empirical(m) => cumulative_f64(m.weights()),
            SourceKind::GaussianMixtureTruncated { mixture, .. } => {
                let w: Vec<T> = mixture.components().iter().map(|c| c.weight).collect();
                cumulative_f64(&w)
            }
            SourceKind::UniformHypercube(_) => Vec::new(),
        };
        Self {
            kind,
            rng: ChaCha8Rng::seed_from_u64(seed),
            cumulative,
        }
    }

    pub fn kind(&self) -> &SourceKind<T> {
        &self.kind
    }

    /// Restarts the stream from the given seed.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn pick_index(&mut self) -> usize {
        let u: f64 = self.rng.random();
        let n = self.cumulative.len();
        self.cumulative.partition_point(|&c| c <= u).min(n - 1)
    }
}

fn cumulative_f64<T: Real>(weights: &[T]) -> Vec<f64> {
    let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w.as_f64() / total;
            acc
        })
        .collect()
}

impl<T: Real> Sampler<T> for SampleSource<T> {
    fn dim(&self) -> usize {
        match &self.kind {
            SourceKind::Empirical(m) => m.dim(),
            SourceKind::GaussianMixtureTruncated { mixture, .. } => mixture.dim(),
            SourceKind::UniformHypercube(d) => *d,
        }
    }

    fn sample_into(&mut self, out: &mut Vec<T>) -> Result<(), MeasureError> {
        out.clear();
        match &self.kind {
            SourceKind::Empirical(_) => {
                let j = self.pick_index();
                let SourceKind::Empirical(m) = &self.kind else {
                    unreachable!()
                };
                out.extend_from_slice(m.point(j));
            }
            SourceKind::UniformHypercube(d) => {
                for _ in 0..*d {
                    let u: f64 = self.rng.random();
                    out.push(T::of(u));
                }
            }
            SourceKind::GaussianMixtureTruncated { .. } => {
                let comp = self.pick_index();
                let SourceKind::GaussianMixtureTruncated { mixture, lo, hi } = &self.kind else {
                    unreachable!()
                };
                let c = &mixture.components()[comp];
                let d = c.mean.len();
                let (mean, sd): (Vec<f64>, Vec<f64>) = (
                    c.mean.iter().map(|m| m.as_f64()).collect(),
                    c.std_dev.iter().map(|s| s.as_f64()).collect(),
                );
                let (lo, hi): (Vec<f64>, Vec<f64>) = (
                    lo.iter().map(|v| v.as_f64()).collect(),
                    hi.iter().map(|v| v.as_f64()).collect(),
                );
                for _ in 0..MAX_REJECTIONS {
                    let mut inside = true;
                    out.clear();
                    for k in 0..d {
                        let z: f64 = StandardNormal.sample(&mut self.rng);
                        let x = mean[k] + sd[k] * z;
                        if x < lo[k] || x > hi[k] {
                            inside = false;
                            break;
                        }
                        out.push(T::of(x));
                    }
                    if inside {
                        return Ok(());
                    }
                }
                return Err(MeasureError::RejectionLimit);
            }
        }
        Ok(())
    }
}

/// Draws `n` i.i.d. samples from the source.
pub fn draw<T: Real>(source: &mut SampleSource<T>, n: usize) -> Result<Vec<Vec<T>>, MeasureError> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(source.next_point()?);
    }
    Ok(out)
}

/// A raw point cloud as read from CSV: header `x1,...,xd[,w]`, one point per
/// row, optional unnormalized weight in the final column.
#[derive(Debug, Clone)]
pub struct PointCloud<T> {
    pub points: Vec<Vec<T>>,
    pub weights: Option<Vec<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, MeasureError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| MeasureError::Parse {
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        let (dim, has_weight) = parse_header(&headers)?;
        let mut points = Vec::new();
        let mut weights: Vec<T> = Vec::new();
        for (rec_idx, rec) in rdr.records().enumerate() {
            let row = rec_idx + 2; // 1-based line number, after the header
            let rec = rec.map_err(|e| MeasureError::Parse {
                row,
                message: e.to_string(),
            })?;
            if rec.len() != dim + usize::from(has_weight) {
                return Err(MeasureError::Parse {
                    row,
                    message: format!("expected {} fields, found {}", dim + usize::from(has_weight), rec.len()),
                });
            }
            let mut p = Vec::with_capacity(dim);
            for k in 0..dim {
                p.push(parse_field(&rec[k], row)?);
            }
            points.push(p);
            if has_weight {
                weights.push(parse_field(&rec[dim], row)?);
            }
        }
        Ok(Self {
            points,
            weights: if has_weight { Some(weights) } else { None },
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Min-max rescaling of every coordinate onto `[0, 1]` (constant
    /// coordinates map to 0.5).
    pub fn rescale_unit_box(&mut self) {
        let d = self.dim();
        for k in 0..d {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for p in &self.points {
                lo = lo.min(p[k]);
                hi = hi.max(p[k]);
            }
            let span = hi - lo;
            for p in &mut self.points {
                p[k] = if span > T::zero() {
                    (p[k] - lo) / span
                } else {
                    T::of(0.5)
                };
            }
        }
    }

    pub fn into_measure(self) -> Result<DiscreteMeasure<T>, MeasureError> {
        DiscreteMeasure::new(self.points, self.weights)
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.dim();
        for k in 0..d {
            write!(w, "{}x{}", if k > 0 { "," } else { "" }, k + 1)?;
        }
        if self.weights.is_some() {
            write!(w, ",w")?;
        }
        writeln!(w)?;
        for (i, p) in self.points.iter().enumerate() {
            let mut first = true;
            for &c in p {
                write!(w, "{}{}", if first { "" } else { "," }, crate::sig12(c.as_f64()))?;
                first = false;
            }
            if let Some(ws) = &self.weights {
                write!(w, ",{}", crate::sig12(ws[i].as_f64()))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn parse_header(headers: &csv::StringRecord) -> Result<(usize, bool), MeasureError> {
    let n = headers.len();
    if n == 0 {
        return Err(MeasureError::Parse {
            row: 1,
            message: "empty header".into(),
        });
    }
    let has_weight = headers.get(n - 1).map(str::trim) == Some("w");
    let dim = if has_weight { n - 1 } else { n };
    if dim == 0 {
        return Err(MeasureError::Parse {
            row: 1,
            message: "no coordinate columns".into(),
        });
    }
    Ok((dim, has_weight))
}

fn parse_field<T: Real>(s: &str, row: usize) -> Result<T, MeasureError> {
    let v: f64 = s.trim().parse().map_err(|_| MeasureError::Parse {
        row,
        message: format!("non-numeric field {s:?}"),
    })?;
    Ok(T::of(v))
}

/// Lazily reads points from a CSV stream, one row per sample, without
/// loading the file into memory. A trailing `w` column is ignored.
pub struct CsvPointStream<R: io::Read> {
    records: csv::StringRecordsIntoIter<R>,
    dim: usize,
    row: usize,
}

impl<R: io::Read> CsvPointStream<R> {
    pub fn new(reader: R) -> Result<Self, MeasureError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| MeasureError::Parse {
                row: 1,
                message: e.to_string(),
            })?
            .clone();
        let (dim, _) = parse_header(&headers)?;
        Ok(Self {
            records: rdr.into_records(),
            dim,
            row: 1,
        })
    }
}

impl<T: Real, R: io::Read> Sampler<T> for CsvPointStream<R> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&mut self, out: &mut Vec<T>) -> Result<(), MeasureError> {
        self.row += 1;
        let rec = match self.records.next() {
            None => return Err(MeasureError::StreamExhausted),
            Some(r) => r.map_err(|e| MeasureError::Parse {
                row: self.row,
                message: e.to_string(),
            })?,
        };
        if rec.len() < self.dim {
            return Err(MeasureError::Parse {
                row: self.row,
                message: format!("expected at least {} fields, found {}", self.dim, rec.len()),
            });
        }
        out.clear();
        for k in 0..self.dim {
            out.push(parse_field(&rec[k], self.row)?);
        }
        Ok(())
    }
}
