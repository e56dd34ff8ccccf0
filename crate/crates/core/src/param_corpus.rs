//! Gait-parameter tables: loading, healthy-referenced normalization,
//! correlation-filtered parameter combinations and sentence rendering.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bound of the normalized value range.
pub const NORM_RANGE: f64 = 2.5;

const PARAMETERS: &str = include_str!("../assets/parameters.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDescriptor {
    /// Phrase used in sentences, e.g. "the walking speed".
    pub name: String,
    pub unit: String,
    #[serde(default)]
    pub index: usize,
}

/// Parameter vocabulary together with the class names of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(rename = "parameter")]
    pub parameters: Vec<ParameterDescriptor>,
    pub classes: Vec<String>,
    pub healthy_label: String,
}

#[derive(Deserialize)]
struct ParameterList {
    parameter: Vec<ParameterDescriptor>,
}

impl Schema {
    /// The built-in 29-parameter vocabulary with the given class names.
    pub fn builtin(classes: &[&str], healthy_label: &str) -> Self {
        let list: ParameterList = toml::from_str(PARAMETERS).expect("bundled parameter list parses");
        let mut s = Schema {
            parameters: list.parameter,
            classes: classes.iter().map(|c| c.to_string()).collect(),
            healthy_label: healthy_label.to_string(),
        };
        s.reindex();
        s.validate().expect("bundled schema is valid");
        s
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut s: Schema = toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        s.reindex();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn reindex(&mut self) {
        for (i, p) in self.parameters.iter_mut().enumerate() {
            p.index = i;
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.parameters.iter().enumerate() {
            if p.name.trim().is_empty() {
                return Err(Error::Config(format!("parameter {i} has an empty name")));
            }
            if self.parameters[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Config(format!("duplicate parameter name `{}`", p.name)));
            }
        }
        if self.classes.is_empty() {
            return Err(Error::Config("schema lists no classes".into()));
        }
        self.healthy_index()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.parameters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parameters.is_empty()
    }

    pub fn healthy_index(&self) -> Result<usize> {
        self.class_index(&self.healthy_label).ok_or_else(|| {
            Error::Config(format!("healthy label `{}` is not a class", self.healthy_label))
        })
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn parameter_index(&self, name: &str) -> Option<usize> {
        self.parameters.iter().position(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecord {
    pub subject_id: String,
    pub label: usize,
    pub values: Vec<f64>,
}

/// Reads `subject_id,label,<param_0>,...` rows. Labels may be class names or indices.
pub fn load_corpus(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<ParameterRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(file, schema)
}

pub fn read_corpus(reader: impl std::io::Read, schema: &Schema) -> Result<Vec<ParameterRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, column: String::new(), message: e.to_string() })?
        .clone();
    let mut expected = vec!["subject_id".to_string(), "label".to_string()];
    expected.extend(schema.parameters.iter().map(|p| p.name.clone()));
    for (i, name) in expected.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == name => {}
            other => {
                return Err(Error::Parse {
                    row: 0,
                    column: name.clone(),
                    message: format!("expected header `{name}`, found {other:?}"),
                })
            }
        }
    }
    if header.len() != expected.len() {
        return Err(Error::Parse {
            row: 0,
            column: header.get(expected.len()).unwrap_or_default().to_string(),
            message: format!("expected {} columns, found {}", expected.len(), header.len()),
        });
    }
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| Error::Parse { row: row_no, column: String::new(), message: e.to_string() })?;
        if row.len() != expected.len() {
            return Err(Error::Parse {
                row: row_no,
                column: expected.get(row.len()).cloned().unwrap_or_default(),
                message: format!("expected {} cells, found {}", expected.len(), row.len()),
            });
        }
        let label_cell = &row[1];
        let label = schema
            .class_index(label_cell)
            .or_else(|| label_cell.parse::<usize>().ok().filter(|&l| l < schema.classes.len()))
            .ok_or_else(|| Error::Parse {
                row: row_no,
                column: "label".into(),
                message: format!("unknown label `{label_cell}`"),
            })?;
        let values = schema
            .parameters
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let cell = &row[j + 2];
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        row: row_no,
                        column: p.name.clone(),
                        message: format!("`{cell}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(ParameterRecord { subject_id: row[0].to_string(), label, values });
    }
    Ok(records)
}

pub fn write_corpus(path: impl AsRef<Path>, schema: &Schema, records: &[ParameterRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let mut header = vec!["subject_id".to_string(), "label".to_string()];
    header.extend(schema.parameters.iter().map(|p| p.name.clone()));
    w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
    for r in records {
        let mut row = vec![r.subject_id.clone(), schema.classes[r.label].clone()];
        row.extend(r.values.iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub healthy_mean: Vec<f64>,
    pub dispersion: Vec<f64>,
    pub scale_factor: Vec<f64>,
}

/// Healthy-referenced normalization: the healthy mean maps to zero and the
/// fit corpus spans exactly `[-2.5, 2.5]` per parameter.
///
/// The dispersion is the population standard deviation over all records.
pub fn fit_normalization(records: &[ParameterRecord], healthy_label: usize, schema: &Schema) -> Result<NormalizationStats> {
    let n_params = schema.len();
    if records.iter().any(|r| r.values.len() != n_params) {
        return Err(Error::shape("record values", n_params, "mismatched count"));
    }
    let healthy: Vec<&ParameterRecord> = records.iter().filter(|r| r.label == healthy_label).collect();
    if healthy.len() < 2 {
        return Err(Error::Invalid(format!(
            "normalization needs at least 2 healthy records, found {}",
            healthy.len()
        )));
    }
    let mut stats = NormalizationStats {
        healthy_mean: Vec::with_capacity(n_params),
        dispersion: Vec::with_capacity(n_params),
        scale_factor: Vec::with_capacity(n_params),
    };
    for p in 0..n_params {
        let hm = healthy.iter().map(|r| r.values[p]).sum::<f64>() / healthy.len() as f64;
        let all: Vec<f64> = records.iter().map(|r| r.values[p]).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64).sqrt();
        let degenerate = |message: &str| Error::Degenerate {
            name: schema.parameters[p].name.clone(),
            message: message.to_string(),
        };
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(degenerate("zero dispersion"));
        }
        let max_z = all.iter().map(|v| ((v - hm) / sd).abs()).fold(0.0, f64::max);
        if !(max_z > 0.0) {
            return Err(degenerate("all values equal the healthy mean"));
        }
        stats.healthy_mean.push(hm);
        stats.dispersion.push(sd);
        stats.scale_factor.push(NORM_RANGE / max_z);
    }
    Ok(stats)
}

impl NormalizationStats {
    pub fn len(&self) -> usize {
        self.healthy_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.healthy_mean.is_empty()
    }

    /// Affine map to the normalized range, clamped to `[-2.5, 2.5]`.
    pub fn normalize(&self, value: f64, param: usize) -> Result<f64> {
        if param >= self.len() {
            return Err(Error::OutOfRange(format!("parameter index {param}")));
        }
        let z = self.scale_factor[param] * (value - self.healthy_mean[param]) / self.dispersion[param];
        Ok(z.clamp(-NORM_RANGE, NORM_RANGE))
    }

    /// Inverse of [`normalize`](Self::normalize) on the unclamped range.
    pub fn denormalize(&self, value: f64, param: usize) -> Result<f64> {
        if param >= self.len() {
            return Err(Error::OutOfRange(format!("parameter index {param}")));
        }
        Ok(self.healthy_mean[param] + value * self.dispersion[param] / self.scale_factor[param])
    }
}

/// Sample Pearson correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Invalid(format!(
            "pearson needs two equal-length sequences of at least 2 values ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate {
            name: "pearson".into(),
            message: "zero variance".into(),
        });
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Ascending set of distinct parameter indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Combination(pub Vec<usize>);

impl Combination {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, param: usize) -> bool {
        self.0.contains(&param)
    }
}

/// Pairwise Pearson correlation matrix of the parameter columns.
pub fn correlation_matrix(records: &[ParameterRecord], n_params: usize) -> Result<Vec<Vec<f64>>> {
    let cols: Vec<Vec<f64>> = (0..n_params)
        .map(|p| records.iter().map(|r| r.values[p]).collect())
        .collect();
    let mut m = vec![vec![1.0; n_params]; n_params];
    for i in 0..n_params {
        for j in i + 1..n_params {
            let r = pearson(&cols[i], &cols[j])?;
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    Ok(m)
}

/// All `k`-subsets whose pairwise |Pearson| is at most `threshold`, in lexicographic order.
pub fn enumerate_combinations(records: &[ParameterRecord], threshold: f64, k: usize) -> Result<Vec<Combination>> {
    let n_params = records.first().map(|r| r.values.len()).unwrap_or(0);
    if k == 0 || n_params < k {
        return Err(Error::Invalid(format!("need at least {k} parameters, found {n_params}")));
    }
    let corr = correlation_matrix(records, n_params)?;
    let ok = |a: usize, b: usize| corr[a][b].abs() <= threshold;
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn extend(
        start: usize,
        n: usize,
        k: usize,
        current: &mut Vec<usize>,
        ok: &dyn Fn(usize, usize) -> bool,
        out: &mut Vec<Combination>,
    ) {
        if current.len() == k {
            out.push(Combination(current.clone()));
            return;
        }
        for p in start..n {
            if current.iter().all(|&q| ok(q, p)) {
                current.push(p);
                extend(p + 1, n, k, current, ok, out);
                current.pop();
            }
        }
    }
    extend(0, n_params, k, &mut current, &ok, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceItem {
    pub param: usize,
    pub phrase: String,
    /// Full-precision normalized value in `[-2.5, 2.5]`.
    pub value: f64,
    /// Value in original units, as displayed in the text.
    pub display: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericSentence {
    pub items: Vec<SentenceItem>,
    pub text: String,
    pub label: usize,
}

impl NumericSentence {
    pub fn values(&self) -> Vec<f64> {
        self.items.iter().map(|i| i.value).collect()
    }

    pub fn params(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.param).collect()
    }
}

/// "<phrase> is <value>" clauses joined by " and "; values shown in original
/// units with one decimal.
pub fn render_sentence(combo: &Combination, record: &ParameterRecord, schema: &Schema, stats: &NormalizationStats) -> Result<NumericSentence> {
    let items = combo
        .indices()
        .iter()
        .map(|&p| {
            let desc = schema
                .parameters
                .get(p)
                .ok_or_else(|| Error::OutOfRange(format!("parameter index {p}")))?;
            let raw = *record
                .values
                .get(p)
                .ok_or_else(|| Error::OutOfRange(format!("record has no parameter {p}")))?;
            Ok(SentenceItem {
                param: p,
                phrase: desc.name.clone(),
                value: stats.normalize(raw, p)?,
                display: format!("{raw:.1}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let text = items
        .iter()
        .map(|i| format!("{} is {}", i.phrase, i.display))
        .collect::<Vec<_>>()
        .join(" and ");
    Ok(NumericSentence { items, text, label: record.label })
}

/// Splits a rendered sentence back into `(phrase, displayed value)` pairs.
pub fn parse_sentence(text: &str) -> Result<Vec<(String, f64)>> {
    text.split(" and ")
        .map(|clause| {
            let (phrase, value) = clause
                .rsplit_once(" is ")
                .ok_or_else(|| Error::Invalid(format!("clause without ` is `: `{clause}`")))?;
            let value = value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Invalid(format!("bad value in `{clause}`")))?;
            Ok((phrase.to_string(), value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema3() -> Schema {
        Schema::builtin(&["healthy", "dlb", "ad"], "healthy")
    }

    fn tiny_schema(n: usize) -> Schema {
        Schema {
            parameters: (0..n)
                .map(|i| ParameterDescriptor { name: format!("p{i}"), unit: "u".into(), index: i })
                .collect(),
            classes: vec!["healthy".into(), "sick".into()],
            healthy_label: "healthy".into(),
        }
    }

    fn rec(label: usize, values: Vec<f64>) -> ParameterRecord {
        ParameterRecord { subject_id: "s".into(), label, values }
    }

    #[test]
    fn builtin_schema_has_29_unique_parameters() {
        let s = schema3();
        assert_eq!(s.len(), 29);
        for (i, p) in s.parameters.iter().enumerate() {
            assert_eq!(p.index, i);
        }
        assert_eq!(s.healthy_index().unwrap(), 0);
    }

    #[test]
    fn schema_rejects_duplicates_and_unknown_healthy() {
        let mut s = tiny_schema(2);
        s.parameters[1].name = "p0".into();
        assert!(s.validate().is_err());
        let mut s = tiny_schema(2);
        s.healthy_label = "nobody".into();
        assert!(s.validate().is_err());
        let s = tiny_schema(3);
        assert_eq!(Schema::from_toml(&s.to_toml().unwrap()).unwrap(), s);
    }

    fn csv_header(schema: &Schema) -> String {
        let mut h = vec!["subject_id".to_string(), "label".to_string()];
        h.extend(schema.parameters.iter().map(|p| p.name.clone()));
        h.join(",")
    }

    #[test]
    fn load_corpus_counts_rows() {
        let s = schema3();
        let header = csv_header(&s);
        let empty = read_corpus(header.as_bytes(), &s).unwrap();
        assert!(empty.is_empty());
        let row = |id: &str, label: &str| {
            let vals: Vec<String> = (0..29).map(|i| format!("{}.5", i)).collect();
            format!("{id},{label},{}", vals.join(","))
        };
        let text = format!("{header}\n{}\n{}\n{}\n", row("a", "healthy"), row("b", "dlb"), row("c", "2"));
        let recs = read_corpus(text.as_bytes(), &s).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[1].label, 1);
        assert_eq!(recs[2].label, 2);
        assert_eq!(recs[0].values[3], 3.5);
    }

    #[test]
    fn load_corpus_errors_name_the_cell() {
        let s = schema3();
        let header = csv_header(&s);
        let mut vals: Vec<String> = (0..29).map(|i| i.to_string()).collect();
        vals[4] = "NaN".into();
        let text = format!("{header}\na,healthy,{}\n", vals.join(","));
        match read_corpus(text.as_bytes(), &s) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "the step time");
            }
            other => panic!("unexpected {other:?}"),
        }
        vals[4] = "1".into();
        let text = format!("{header}\na,martian,{}\n", vals.join(","));
        assert!(matches!(read_corpus(text.as_bytes(), &s), Err(Error::Parse { column, .. }) if column == "label"));
        let bad_header = header.replace("the cadence", "cadence");
        assert!(read_corpus(bad_header.as_bytes(), &s).is_err());
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let s = schema3();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let recs = vec![rec(0, (0..29).map(|i| i as f64 * 0.25).collect()), rec(2, vec![1.0; 29])];
        write_corpus(&path, &s, &recs).unwrap();
        assert_eq!(load_corpus(&path, &s).unwrap(), recs);
    }

    #[test]
    fn fit_matches_hand_computed_scale() {
        // healthy {0.6, 1.4} -> mean 1.0; population sd over {0.6, 1.0, 1.4} = sqrt(0.32/3)
        let s = tiny_schema(1);
        let recs = vec![rec(0, vec![0.6]), rec(0, vec![1.4]), rec(1, vec![1.0])];
        let st = fit_normalization(&recs, 0, &s).unwrap();
        let sd = (0.32f64 / 3.0).sqrt();
        assert!((st.healthy_mean[0] - 1.0).abs() < 1e-12);
        assert!((st.dispersion[0] - sd).abs() < 1e-12);
        assert!((st.dispersion[0] - 0.3266).abs() < 1e-4);
        assert!((st.scale_factor[0] - 2.5 / (0.4 / sd)).abs() < 1e-12);
        assert!((st.scale_factor[0] - 2.0412).abs() < 1e-4);
    }

    #[test]
    fn fit_rejects_degenerate_parameters() {
        let s = tiny_schema(2);
        let recs = vec![rec(0, vec![1.0, 2.0]), rec(0, vec![1.0, 3.0]), rec(1, vec![1.0, 4.0])];
        assert!(matches!(fit_normalization(&recs, 0, &s), Err(Error::Degenerate { name, .. }) if name == "p0"));
        let recs = vec![rec(0, vec![1.0, 2.0]), rec(1, vec![2.0, 3.0])];
        assert!(fit_normalization(&recs, 0, &s).is_err());
    }

    #[test]
    fn normalize_examples() {
        let st = NormalizationStats { healthy_mean: vec![1.0], dispersion: vec![0.2], scale_factor: vec![1.0] };
        assert_eq!(st.normalize(1.0, 0).unwrap(), 0.0);
        assert!((st.normalize(1.2, 0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(st.normalize(100.0, 0).unwrap(), 2.5);
        assert_eq!(st.normalize(-100.0, 0).unwrap(), -2.5);
        assert!(st.normalize(1.0, 1).is_err());
    }

    #[test]
    fn pearson_examples() {
        let xs = [1.0, 2.0, 3.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((pearson(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
        // sum of cross products 3, sums of squares 2 and 14/3 (about the means)
        let r = pearson(&xs, &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 3.0 / (2.0f64 * 14.0 / 3.0).sqrt()).abs() < 1e-12);
        assert!((r - 0.9820).abs() < 1e-4);
        assert!(pearson(&xs, &[1.0, 1.0, 1.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn independent_parameters_give_all_combinations() {
        // orthogonal Hadamard-like columns have exactly zero correlation
        let cols = [
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
            [1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0],
        ];
        let recs: Vec<_> = (0..8).map(|r| rec(0, cols.iter().map(|c| c[r]).collect())).collect();
        let combos = enumerate_combinations(&recs, 0.4, 4).unwrap();
        assert_eq!(combos.len(), 5);
        assert_eq!(combos[0], Combination(vec![0, 1, 2, 3]));
        assert_eq!(combos[4], Combination(vec![1, 2, 3, 4]));
    }

    #[test]
    fn correlated_pair_is_excluded() {
        let cols = [
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
            [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0],
            // nearly a copy of column 0
            [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, 1.0],
        ];
        let recs: Vec<_> = (0..8).map(|r| rec(0, cols.iter().map(|c| c[r]).collect())).collect();
        let xs: Vec<f64> = recs.iter().map(|r| r.values[0]).collect();
        let ys: Vec<f64> = recs.iter().map(|r| r.values[4]).collect();
        assert!(pearson(&xs, &ys).unwrap() > 0.4);
        let combos = enumerate_combinations(&recs, 0.4, 4).unwrap();
        assert!(combos.iter().all(|c| !(c.contains(0) && c.contains(4))));
    }

    #[test]
    fn render_single_and_four_items() {
        let s = tiny_schema(4);
        let mut s = s;
        s.parameters[0].name = "the walking speed".into();
        let st = NormalizationStats { healthy_mean: vec![1.0; 4], dispersion: vec![1.0; 4], scale_factor: vec![1.0; 4] };
        let r = rec(1, vec![1.2, 3.14159, -0.05, 10.0]);
        let one = render_sentence(&Combination(vec![0]), &r, &s, &st).unwrap();
        assert_eq!(one.text, "the walking speed is 1.2");
        assert!((one.items[0].value - 0.2).abs() < 1e-12);
        let four = render_sentence(&Combination(vec![0, 1, 2, 3]), &r, &s, &st).unwrap();
        assert_eq!(four.text.matches(" and ").count(), 3);
        assert_eq!(four.text.matches(" is ").count(), 4);
        assert_eq!(four.label, 1);
        let parsed = parse_sentence(&four.text).unwrap();
        assert_eq!(parsed[1], ("p1".to_string(), 3.1));
        assert_eq!(parsed[2], ("p2".to_string(), -0.1));
    }

    proptest! {
        #[test]
        fn normalize_is_affine_before_clamp(a in -3.0f64..3.0, b in -3.0f64..3.0, t in -1.0f64..1.0) {
            let st = NormalizationStats { healthy_mean: vec![0.5], dispersion: vec![4.0], scale_factor: vec![0.5] };
            // wide dispersion keeps every probe inside the clamp range
            let f = |t: f64| st.normalize(a * t + b, 0).unwrap();
            let mid = f(0.5 * t);
            prop_assert!((mid - 0.5 * (f(t) + f(0.0))).abs() < 1e-12);
            prop_assert_eq!(st.normalize(0.5, 0).unwrap(), 0.0);
        }

        #[test]
        fn fit_corpus_spans_the_range(vals in proptest::collection::vec(-50.0f64..50.0, 6..30)) {
            let s = tiny_schema(1);
            let recs: Vec<_> = vals.iter().enumerate().map(|(i, &v)| rec(usize::from(i % 3 == 0), vec![v])).collect();
            if let Ok(st) = fit_normalization(&recs, 0, &s) {
                let normed: Vec<f64> = recs.iter().map(|r| st.normalize(r.values[0], 0).unwrap()).collect();
                let max = normed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                prop_assert!((max - 2.5).abs() < 1e-9);
                prop_assert_eq!(st.normalize(st.healthy_mean[0], 0).unwrap(), 0.0);
            }
        }

        #[test]
        fn combinations_are_order_invariant_and_rechecked(
            seed_vals in proptest::collection::vec(-1.0f64..1.0, 7 * 20),
            rot in 0usize..20,
        ) {
            let recs: Vec<_> = seed_vals.chunks(7).map(|c| rec(0, c.to_vec())).collect();
            let combos = enumerate_combinations(&recs, 0.4, 4).unwrap();
            let mut rotated = recs.clone();
            rotated.rotate_left(rot);
            rotated.reverse();
            prop_assert_eq!(&combos, &enumerate_combinations(&rotated, 0.4, 4).unwrap());
            for c in &combos {
                for (i, &a) in c.indices().iter().enumerate() {
                    for &b in &c.indices()[i + 1..] {
                        let xs: Vec<f64> = recs.iter().map(|r| r.values[a]).collect();
                        let ys: Vec<f64> = recs.iter().map(|r| r.values[b]).collect();
                        prop_assert!(pearson(&xs, &ys).unwrap().abs() <= 0.4);
                    }
                }
            }
        }

        #[test]
        fn rendered_text_has_k_clauses(k in 1usize..6, vals in proptest::collection::vec(-9.0f64..9.0, 6)) {
            let s = tiny_schema(6);
            let st = NormalizationStats { healthy_mean: vec![0.0; 6], dispersion: vec![1.0; 6], scale_factor: vec![0.2; 6] };
            let combo = Combination((0..k).collect());
            let sent = render_sentence(&combo, &rec(0, vals), &s, &st).unwrap();
            prop_assert_eq!(sent.text.matches(" is ").count(), k);
            prop_assert_eq!(sent.text.matches(" and ").count(), k - 1);
            let parsed = parse_sentence(&sent.text).unwrap();
            for (item, (phrase, shown)) in sent.items.iter().zip(&parsed) {
                prop_assert_eq!(&item.phrase, phrase);
                prop_assert_eq!(format!("{shown:.1}"), item.display.clone());
            }
        }
    }
}
