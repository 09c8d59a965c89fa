use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SequenceBatch, TaskKind, Targets};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// A multivariate series, `[time, feature]`, with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub columns: Vec<String>,
    pub data: Matrix,
}

impl Series {
    pub fn new(columns: Vec<String>, data: Matrix) -> Result<Self> {
        if columns.len() != data.cols() {
            return Err(Error::Data(format!("{} column names for {} features", columns.len(), data.cols())));
        }
        Ok(Series { columns, data })
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn features(&self) -> usize {
        self.data.cols()
    }

    /// Indices of `names`; `None` selects every column.
    pub fn column_indices(&self, names: Option<&[String]>) -> Result<Vec<usize>> {
        match names {
            None => Ok((0..self.features()).collect()),
            Some(names) if names.is_empty() => Err(Error::Config("target_cols must not be empty".into())),
            Some(names) => names
                .iter()
                .map(|n| {
                    self.columns
                        .iter()
                        .position(|c| c == n)
                        .ok_or_else(|| Error::Config(format!("no column named `{n}`")))
                })
                .collect(),
        }
    }
}

/// Parse a CSV with a header row. A leading column named `date` is skipped;
/// every other cell must parse as a decimal float.
pub fn load_csv_series(path: &Path) -> Result<Series> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_err(1, "empty file or missing header".into()));
    }
    let skip = usize::from(header[0].trim().eq_ignore_ascii_case("date"));
    let columns: Vec<String> = header.iter().skip(skip).map(|s| s.trim().to_string()).collect();
    if columns.is_empty() {
        return Err(parse_err(1, "no feature columns".into()));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        for (j, cell) in record.iter().enumerate().skip(skip) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}`: not a number: `{cell}`", header[j].trim())))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{}`: non-finite value", header[j].trim())));
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(2, "no data rows".into()));
    }
    let cols = columns.len();
    Series::new(columns, Matrix::from_vec(rows, cols, data)?)
}

/// Write `series` as `date,<columns…>` with the row index as date. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn write_csv_series(series: &Series, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["date".to_string()];
        header.extend(series.columns.iter().cloned());
        w.write_record(&header).map_err(|e| Error::Data(e.to_string()))?;
        for t in 0..series.len() {
            let mut row = vec![t.to_string()];
            row.extend(series.data.row(t).iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| Error::Data(e.to_string()))?;
        }
        w.flush()?;
    }
    crate::io::write_atomic(path, &buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    #[serde(default = "default_len")]
    pub seq_len: usize,
    #[serde(default = "default_len")]
    pub pred_len: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn default_len() -> usize {
    96
}

fn default_stride() -> usize {
    1
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            seq_len: 96,
            pred_len: 96,
            stride: 1,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.pred_len == 0 || self.stride == 0 {
            return Err(Error::Config("seq_len, pred_len and stride must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
}

impl SplitSpec {
    /// 6:2:2, used for ETT-style data.
    pub const ETT: SplitSpec = SplitSpec { ratios: [0.6, 0.2, 0.2] };
    /// 7:1:2, used for everything else.
    pub const DEFAULT: SplitSpec = SplitSpec { ratios: [0.7, 0.1, 0.2] };

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {:?} must be ≥ 0 and sum to 1", self.ratios)));
        }
        Ok(())
    }

    /// Half-open row ranges: train ends at `⌊r₀·n⌋`, validation at `⌊(r₀+r₁)·n⌋`.
    pub fn bounds(&self, n: usize) -> [(usize, usize); 3] {
        // tolerance so that e.g. (0.7 + 0.1)·10 floors to 8, not 7
        let cut = |f: f64| ((f * n as f64) + 1e-9).floor().min(n as f64) as usize;
        let a = cut(self.ratios[0]);
        let b = cut(self.ratios[0] + self.ratios[1]).max(a);
        [(0, a), (a, b), (b, n)]
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::DEFAULT
    }
}

/// Per-feature z-score fitted on a row range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with zero variance are passed through unchanged.
    pub passthrough: Vec<bool>,
}

impl Normalizer {
    pub fn fit(series: &Series, rows: (usize, usize)) -> Result<Self> {
        let (a, b) = rows;
        if b <= a || b > series.len() {
            return Err(Error::Empty("normalization range"));
        }
        let n = (b - a) as f64;
        let f = series.features();
        let mut mean = vec![0.0; f];
        let mut std = vec![0.0; f];
        let mut passthrough = vec![false; f];
        for j in 0..f {
            mean[j] = (a..b).map(|t| series.data.get(t, j)).sum::<f64>() / n;
            let var = (a..b).map(|t| (series.data.get(t, j) - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = var.sqrt();
            if !(std[j] > 0.0) {
                log::warn!("feature `{}` is constant on the fit range; passing it through", series.columns[j]);
                passthrough[j] = true;
            }
        }
        Ok(Normalizer { mean, std, passthrough })
    }

    fn map(&self, series: &Series, f: impl Fn(f64, f64, f64) -> f64) -> Result<Series> {
        if series.features() != self.mean.len() {
            return Err(Error::shape("normalize", (series.len(), series.features()), (1, self.mean.len())));
        }
        let mut data = series.data.clone();
        for t in 0..series.len() {
            for j in 0..series.features() {
                if !self.passthrough[j] {
                    data.set(t, j, f(series.data.get(t, j), self.mean[j], self.std[j]));
                }
            }
        }
        Series::new(series.columns.clone(), data)
    }

    pub fn apply(&self, series: &Series) -> Result<Series> {
        self.map(series, |x, m, s| (x - m) / s)
    }

    pub fn inverse(&self, series: &Series) -> Result<Series> {
        self.map(series, |z, m, s| z * s + m)
    }
}

/// Windows for each split plus the row ranges they were cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: SequenceBatch,
    pub val: SequenceBatch,
    pub test: SequenceBatch,
    pub bounds: [(usize, usize); 3],
}

/// Sliding windows over rows `[a, b)` only.
pub fn windows_in_range(
    series: &Series,
    targets: &[usize],
    (a, b): (usize, usize),
    w: &WindowSpec,
    name: &str,
) -> Result<SequenceBatch> {
    let span = w.seq_len + w.pred_len;
    if b - a < span {
        return Err(Error::Data(format!(
            "{name} split has {} rows, needs at least seq_len + pred_len = {span}",
            b - a
        )));
    }
    let starts: Vec<usize> = (a..=b - span).step_by(w.stride).collect();
    let f = series.features();
    let mut inputs = Vec::with_capacity(starts.len() * w.seq_len * f);
    let mut out = Vec::with_capacity(starts.len() * w.pred_len * targets.len());
    for &s in &starts {
        for t in s..s + w.seq_len {
            inputs.extend_from_slice(series.data.row(t));
        }
        for t in s + w.seq_len..s + span {
            out.extend(targets.iter().map(|&j| series.data.get(t, j)));
        }
    }
    SequenceBatch::new(
        inputs,
        (starts.len(), w.seq_len, f),
        Targets::Values {
            out_dim: w.pred_len * targets.len(),
            data: out,
        },
        TaskKind::Regression,
    )
}

/// Chronological split first, then sliding windows inside each split, so no
/// window straddles a boundary. Targets are flattened `[pred_len, targets]`.
pub fn window_and_split(series: &Series, targets: &[usize], window: &WindowSpec, split: &SplitSpec) -> Result<Splits> {
    window.validate()?;
    split.validate()?;
    if targets.is_empty() || targets.iter().any(|&j| j >= series.features()) {
        return Err(Error::Config("target column index out of range".into()));
    }
    let bounds = split.bounds(series.len());
    Ok(Splits {
        train: windows_in_range(series, targets, bounds[0], window, "train")?,
        val: windows_in_range(series, targets, bounds[1], window, "validation")?,
        test: windows_in_range(series, targets, bounds[2], window, "test")?,
        bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Target;
    use std::io::Write;

    fn ramp(n: usize, f: usize) -> Series {
        let data: Vec<f64> = (0..n * f).map(|i| i as f64).collect();
        Series::new((0..f).map(|j| format!("c{j}")).collect(), Matrix::from_vec(n, f, data).unwrap()).unwrap()
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_basic_and_date() {
        let f = write("a,b\n1,2\n3,4\n5,6\n");
        let s = load_csv_series(f.path()).unwrap();
        assert_eq!(s.columns, vec!["a", "b"]);
        assert_eq!(s.data.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);

        let f = write("date,x\n2016-07-01 00:00:00,0.5\n2016-07-01 01:00:00,-1.25\n");
        let s = load_csv_series(f.path()).unwrap();
        assert_eq!(s.columns, vec!["x"]);
        assert_eq!(s.data.as_slice(), &[0.5, -1.25]);
    }

    #[test]
    fn csv_ett_header() {
        let f = write("date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n2016-07-01 00:00:00,5.827,2.009,1.599,0.462,4.203,1.340,30.531\n");
        let s = load_csv_series(f.path()).unwrap();
        assert_eq!(s.features(), 7);
        assert_eq!(s.column_indices(Some(&["OT".to_string()])).unwrap(), vec![6]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let f = write("a,b\n1,2\n3\n");
        let err = load_csv_series(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let f = write("a,b\n1,2\n3,x\n");
        let err = load_csv_series(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let f = write("");
        assert!(load_csv_series(f.path()).is_err());
        let f = write("a,b\n");
        assert!(load_csv_series(f.path()).is_err());
    }

    #[test]
    fn split_bounds() {
        assert_eq!(SplitSpec::DEFAULT.bounds(10), [(0, 7), (7, 8), (8, 10)]);
        assert_eq!(SplitSpec::DEFAULT.bounds(1000), [(0, 700), (700, 800), (800, 1000)]);
        assert_eq!(SplitSpec::ETT.bounds(10), [(0, 6), (6, 8), (8, 10)]);
        assert!(SplitSpec { ratios: [0.5, 0.5, 0.5] }.validate().is_err());
    }

    #[test]
    fn train_windows_stay_inside_train_rows() {
        let s = ramp(10, 1);
        let w = WindowSpec { seq_len: 2, pred_len: 1, stride: 1 };
        let bounds = SplitSpec::ETT.bounds(10);
        assert_eq!(bounds[0], (0, 6));
        let train = windows_in_range(&s, &[0], bounds[0], &w, "train").unwrap();
        assert_eq!(train.len(), 4);
        let Target::Values(last) = train.target(3) else { panic!() };
        assert_eq!(last, &[5.0]);
        // val/test splits have 2 rows, fewer than seq_len + pred_len
        assert!(window_and_split(&s, &[0], &w, &SplitSpec::ETT).is_err());
        let s = ramp(30, 1);
        let sp = window_and_split(&s, &[0], &w, &SplitSpec::ETT).unwrap();
        let max_train = (0..sp.train.len())
            .flat_map(|i| {
                let mut v: Vec<f64> = (0..2).map(|t| sp.train.step(i, t)[0]).collect();
                if let Target::Values(y) = sp.train.target(i) {
                    v.extend_from_slice(y);
                }
                v
            })
            .fold(f64::MIN, f64::max);
        assert!(max_train < 18.0);
        assert_eq!(sp.val.step(0, 0)[0], 18.0);
    }

    #[test]
    fn window_counts_match_enumeration() {
        let s = ramp(200, 2);
        for (seq, pred, stride) in [(5, 3, 1), (10, 10, 1), (7, 2, 3)] {
            let w = WindowSpec { seq_len: seq, pred_len: pred, stride };
            let sp = window_and_split(&s, &[1], &w, &SplitSpec::DEFAULT).unwrap();
            for ((a, b), batch) in sp.bounds.iter().zip([&sp.train, &sp.val, &sp.test]) {
                let brute = (*a..*b).filter(|s| (s - a) % stride == 0 && s + seq + pred <= *b).count();
                assert_eq!(batch.len(), brute);
                if stride == 1 {
                    assert_eq!(batch.len(), b - a - seq - pred + 1);
                }
            }
        }
    }

    #[test]
    fn normalizer_round_trip_and_constant_passthrough() {
        let mut data = Matrix::zeros(50, 2);
        for t in 0..50 {
            data.set(t, 0, (t as f64 * 0.37).sin() * 4.0 + 2.0);
            data.set(t, 1, 3.0);
        }
        let s = Series::new(vec!["a".into(), "b".into()], data).unwrap();
        let n = Normalizer::fit(&s, (0, 35)).unwrap();
        assert!(n.passthrough[1] && !n.passthrough[0]);
        let z = n.apply(&s).unwrap();
        let mean: f64 = (0..35).map(|t| z.data.get(t, 0)).sum::<f64>() / 35.0;
        assert!(mean.abs() < 1e-10);
        assert_eq!(z.data.get(7, 1), 3.0);
        let back = n.inverse(&z).unwrap();
        for (a, b) in back.data.as_slice().iter().zip(s.data.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
