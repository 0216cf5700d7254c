//! Datasets for linear binary classification: storage, synthetic generation,
//! LIBSVM I/O, RBF kernel mapping and train/test splitting.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use base64::Engine as _;
use rand::seq::SliceRandom;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::sampling::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
enum Features {
    /// Row-major `n * d` values.
    Dense(Vec<f64>),
    /// CSR layout; column indices are sorted within each row.
    Sparse {
        indptr: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    },
}

/// A borrowed feature row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse {
        indices: &'a [usize],
        values: &'a [f64],
    },
}

impl Row<'_> {
    #[inline]
    pub fn dot(&self, w: &[f64]) -> f64 {
        match *self {
            Row::Dense(x) => linalg::dot(x, w),
            Row::Sparse { indices, values } => {
                indices.iter().zip(values).map(|(&j, v)| v * w[j]).sum()
            }
        }
    }

    /// `out += alpha * x`
    #[inline]
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        match *self {
            Row::Dense(x) => linalg::axpy(alpha, x, out),
            Row::Sparse { indices, values } => {
                for (&j, v) in indices.iter().zip(values) {
                    out[j] += alpha * v;
                }
            }
        }
    }

    pub fn squared_norm(&self) -> f64 {
        match *self {
            Row::Dense(x) => linalg::dot(x, x),
            Row::Sparse { values, .. } => linalg::dot(values, values),
        }
    }

    /// Dot product between two rows of the same dimension.
    pub fn dot_row(&self, other: &Row<'_>) -> f64 {
        match (*self, *other) {
            (Row::Dense(a), Row::Dense(b)) => linalg::dot(a, b),
            (Row::Dense(a), s @ Row::Sparse { .. }) | (s @ Row::Sparse { .. }, Row::Dense(a)) => {
                s.dot(a)
            }
            (
                Row::Sparse {
                    indices: ia,
                    values: va,
                },
                Row::Sparse {
                    indices: ib,
                    values: vb,
                },
            ) => {
                let (mut p, mut q, mut acc) = (0, 0, 0.0);
                while p < ia.len() && q < ib.len() {
                    match ia[p].cmp(&ib[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            acc += va[p] * vb[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                acc
            }
        }
    }

    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        self.axpy_into(1.0, &mut out);
        out
    }

    /// Nonzero `(index, value)` pairs in increasing index order.
    pub fn entries(&self) -> Vec<(usize, f64)> {
        match *self {
            Row::Dense(x) => x
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect(),
            Row::Sparse { indices, values } => {
                indices.iter().copied().zip(values.iter().copied()).collect()
            }
        }
    }
}

/// Feature rows with labels in {-1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Features,
    labels: Vec<f64>,
    d: usize,
}

fn check_labels(labels: &[f64]) -> Result<()> {
    if labels.is_empty() {
        return Err(invalid("dataset needs at least one row"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(invalid(format!("label {bad} is not in {{-1, +1}}")));
    }
    Ok(())
}

impl Dataset {
    /// Dense dataset from row-major values.
    pub fn dense(d: usize, values: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        check_labels(&labels)?;
        if d == 0 || values.len() != labels.len() * d {
            return Err(Error::Dimension {
                expected: labels.len() * d,
                got: values.len(),
            });
        }
        linalg::ensure_finite(&values, "features")?;
        Ok(Self {
            features: Features::Dense(values),
            labels,
            d,
        })
    }

    /// Sparse dataset from per-row `(index, value)` lists. Indices are
    /// zero-based and get sorted; duplicates are rejected.
    pub fn sparse(d: usize, rows: Vec<Vec<(usize, f64)>>, labels: Vec<f64>) -> Result<Self> {
        check_labels(&labels)?;
        if rows.len() != labels.len() {
            return Err(Error::Dimension {
                expected: labels.len(),
                got: rows.len(),
            });
        }
        if d == 0 {
            return Err(invalid("dimension must be positive"));
        }
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(invalid(format!("duplicate feature index {}", w[0].0)));
                }
            }
            for (j, v) in row {
                if j >= d {
                    return Err(Error::Dimension {
                        expected: d,
                        got: j + 1,
                    });
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite("features"));
                }
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            features: Features::Sparse {
                indptr,
                indices,
                values,
            },
            labels,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.features, Features::Sparse { .. })
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.features {
            Features::Dense(v) => Row::Dense(&v[i * self.d..(i + 1) * self.d]),
            Features::Sparse {
                indptr,
                indices,
                values,
            } => {
                let (a, b) = (indptr[i], indptr[i + 1]);
                Row::Sparse {
                    indices: &indices[a..b],
                    values: &values[a..b],
                }
            }
        }
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let labels: Vec<f64> = idx.iter().map(|&i| self.labels[i]).collect();
        match &self.features {
            Features::Dense(_) => {
                let mut values = Vec::with_capacity(idx.len() * self.d);
                for &i in idx {
                    if let Row::Dense(x) = self.row(i) {
                        values.extend_from_slice(x);
                    }
                }
                Self::dense(self.d, values, labels)
            }
            Features::Sparse { .. } => {
                let rows = idx.iter().map(|&i| self.row(i).entries()).collect();
                Self::sparse(self.d, rows, labels)
            }
        }
    }

    pub fn to_dense(&self) -> Self {
        match &self.features {
            Features::Dense(_) => self.clone(),
            Features::Sparse { .. } => {
                let mut values = Vec::with_capacity(self.n() * self.d);
                for i in 0..self.n() {
                    values.extend(self.row(i).to_dense(self.d));
                }
                Self {
                    features: Features::Dense(values),
                    labels: self.labels.clone(),
                    d: self.d,
                }
            }
        }
    }

    pub fn to_sparse(&self) -> Self {
        match &self.features {
            Features::Sparse { .. } => self.clone(),
            Features::Dense(_) => {
                let rows = (0..self.n()).map(|i| self.row(i).entries()).collect();
                Self::sparse(self.d, rows, self.labels.clone()).expect("valid dataset")
            }
        }
    }

    /// Fraction of rows where `sign(x . w)` matches the label (0 counts as wrong).
    pub fn accuracy(&self, w: &[f64]) -> f64 {
        let hits = (0..self.n())
            .filter(|&i| self.label(i) * self.row(i).dot(w) > 0.0)
            .count();
        hits as f64 / self.n() as f64
    }
}

/// Parameters of a synthetic linearly separable dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec {
    pub n: usize,
    pub d: usize,
    pub margin: f64,
    pub seed: u64,
}

fn unit_sphere(rng: &mut impl rand::Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let nrm = linalg::norm(&v);
        if nrm > 1e-12 {
            linalg::scale(1.0 / nrm, &mut v);
            return v;
        }
    }
}

/// Draws a separator uniformly on the unit sphere, then rejection-samples
/// unit-norm rows with `|x . w| >= margin`, labelled by `sign(x . w)`.
///
/// Returns the dataset and the planted unit separator.
pub fn generate_margin_dataset(spec: &MarginSpec) -> Result<(Dataset, Vec<f64>)> {
    if spec.n < 1 || spec.d < 2 {
        return Err(invalid("margin dataset needs n >= 1 and d >= 2"));
    }
    if !(spec.margin > 0.0) {
        return Err(invalid("margin must be positive"));
    }
    if spec.margin > 1.0 {
        return Err(invalid(format!(
            "margin {} is infeasible for unit-norm features",
            spec.margin
        )));
    }
    let mut rng = rng_from_seed(spec.seed);
    let separator = unit_sphere(&mut rng, spec.d);
    let max_attempts = 100_000usize.saturating_mul(spec.n);
    let mut values = Vec::with_capacity(spec.n * spec.d);
    let mut labels = Vec::with_capacity(spec.n);
    let mut attempts = 0usize;
    while labels.len() < spec.n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(invalid(format!(
                "rejection sampling for margin {} exhausted {max_attempts} attempts",
                spec.margin
            )));
        }
        let x = unit_sphere(&mut rng, spec.d);
        let z = linalg::dot(&x, &separator);
        if z.abs() >= spec.margin {
            labels.push(if z > 0.0 { 1.0 } else { -1.0 });
            values.extend(x);
        }
    }
    Ok((Dataset::dense(spec.d, values, labels)?, separator))
}

/// Parse LIBSVM text (`<label> <idx>:<val> ...`, 1-based indices).
///
/// Blank lines and lines starting with `#` are skipped. Two distinct label
/// values are mapped to -1 (smaller) and +1 (larger); a single label value
/// must already be one of -1, 0, +1.
pub fn parse_libsvm<R: BufRead>(reader: R) -> Result<Dataset> {
    parse_libsvm_with_dim(reader, 0)
}

/// As [`parse_libsvm`], with the dimension raised to at least `min_d`.
pub fn parse_libsvm_with_dim<R: BufRead>(reader: R, min_d: usize) -> Result<Dataset> {
    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("nonempty line");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad label `{label_tok}`"),
        })?;
        if !label.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("bad label `{label_tok}`"),
            });
        }
        let mut row = Vec::new();
        for tok in tokens {
            let bad = || Error::Parse {
                line: line_no,
                msg: format!("malformed feature `{tok}`"),
            };
            let (idx, val) = tok.split_once(':').ok_or_else(bad)?;
            let idx: usize = idx.parse().map_err(|_| bad())?;
            let val: f64 = val.parse().map_err(|_| bad())?;
            if idx == 0 || !val.is_finite() {
                return Err(bad());
            }
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        row.sort_by_key(|&(j, _)| j);
        if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("duplicate index {}", w[0].0 + 1),
            });
        }
        rows.push(row);
        raw_labels.push(label);
    }
    if rows.is_empty() {
        return Err(invalid("no data rows"));
    }
    let labels = remap_labels(&raw_labels)?;
    Dataset::sparse(max_index.max(min_d).max(1), rows, labels)
}

fn remap_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let distinct: BTreeSet<u64> = raw.iter().map(|v| v.to_bits()).collect();
    let mut values: Vec<f64> = distinct.into_iter().map(f64::from_bits).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    match values.as_slice() {
        [only] => {
            let y = match *only {
                1.0 => 1.0,
                v if v == -1.0 || v == 0.0 => -1.0,
                v => return Err(invalid(format!("cannot map lone label {v} to +/-1"))),
            };
            Ok(vec![y; raw.len()])
        }
        [lo, _hi] => Ok(raw
            .iter()
            .map(|&v| if v == *lo { -1.0 } else { 1.0 })
            .collect()),
        _ => Err(invalid(format!(
            "label set is not binary ({} distinct values)",
            values.len()
        ))),
    }
}

/// Write LIBSVM text; zero entries are omitted, values use the shortest
/// round-trip representation.
pub fn write_libsvm<W: Write>(data: &Dataset, mut out: W) -> std::io::Result<()> {
    let mut line = String::new();
    for i in 0..data.n() {
        line.clear();
        line.push_str(if data.label(i) > 0.0 { "+1" } else { "-1" });
        for (j, v) in data.row(i).entries() {
            let _ = write!(line, " {}:{}", j + 1, v);
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Synthetic dataset cache: LIBSVM body preceded by
/// `# margin=<m> seed=<s> separator=<base64 of little-endian f64s>`.
pub fn write_margin_cache<W: Write>(
    data: &Dataset,
    spec: &MarginSpec,
    separator: &[f64],
    mut out: W,
) -> std::io::Result<()> {
    let bytes: Vec<u8> = separator.iter().flat_map(|v| v.to_le_bytes()).collect();
    writeln!(
        out,
        "# margin={} seed={} separator={}",
        spec.margin,
        spec.seed,
        base64::engine::general_purpose::STANDARD.encode(bytes)
    )?;
    write_libsvm(data, out)
}

/// Header fields of a synthetic cache file.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheHeader {
    pub margin: f64,
    pub seed: u64,
    pub separator: Vec<f64>,
}

pub fn parse_cache_header(line: &str) -> Result<CacheHeader> {
    let bad = |msg: &str| Error::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| bad("missing cache header"))?;
    let (mut margin, mut seed, mut separator) = (None, None, None);
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("margin", v)) => margin = v.parse::<f64>().ok(),
            Some(("seed", v)) => seed = v.parse::<u64>().ok(),
            Some(("separator", v)) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(v)
                    .map_err(|e| bad(&format!("separator: {e}")))?;
                if bytes.len() % 8 != 0 {
                    return Err(bad("separator length is not a multiple of 8"));
                }
                separator = Some(
                    bytes
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                        .collect::<Vec<_>>(),
                );
            }
            _ => return Err(bad(&format!("unexpected header field `{field}`"))),
        }
    }
    Ok(CacheHeader {
        margin: margin.ok_or_else(|| bad("header lacks margin"))?,
        seed: seed.ok_or_else(|| bad("header lacks seed"))?,
        separator: separator.ok_or_else(|| bad("header lacks separator"))?,
    })
}

/// Read a synthetic cache file written by [`write_margin_cache`]. The
/// returned dataset is dense.
pub fn read_margin_cache<R: BufRead>(mut reader: R) -> Result<(Dataset, CacheHeader)> {
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let header = parse_cache_header(&first)?;
    let data = parse_libsvm_with_dim(reader, header.separator.len())?;
    if data.d() != header.separator.len() {
        return Err(Error::Dimension {
            expected: header.separator.len(),
            got: data.d(),
        });
    }
    Ok((data.to_dense(), header))
}

/// Map `query` rows to RBF features against every `train` row:
/// `exp(-|x - t_j|^2 / (2 bandwidth^2))`. Output dimension is `train.n()`.
pub fn rbf_kernel_map(train: &Dataset, query: &Dataset, bandwidth: f64) -> Result<Dataset> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(invalid("bandwidth must be positive and finite"));
    }
    if train.d() != query.d() {
        return Err(Error::Dimension {
            expected: train.d(),
            got: query.d(),
        });
    }
    let m = train.n();
    let train_sq: Vec<f64> = (0..m).map(|j| train.row(j).squared_norm()).collect();
    let denom = 2.0 * bandwidth * bandwidth;
    let values: Vec<f64> = (0..query.n())
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = query.row(i);
            let x_sq = x.squared_norm();
            let train_sq = &train_sq;
            (0..m).map(move |j| {
                let dist = (x_sq + train_sq[j] - 2.0 * x.dot_row(&train.row(j))).max(0.0);
                (-dist / denom).exp()
            })
        })
        .collect();
    Dataset::dense(m, values, query.labels().to_vec())
}

/// Random partition into `ceil(fraction * n)` training rows and the rest.
/// Both parts keep the original row order. The training part is capped at
/// `n - 1` rows so the test part is never empty.
pub fn train_test_split(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = data.n();
    if n < 2 {
        return Err(invalid("split needs at least two rows"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(invalid("split fraction must be in (0, 1)"));
    }
    let n_train = ((fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let (train, test) = perm.split_at_mut(n_train);
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(train)?, data.subset(test)?))
}
