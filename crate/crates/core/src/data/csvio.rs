//! CSV ingestion and emission.
//!
//! Files have a header row. Features are plain decimal floats (period
//! separator, optional exponent). A label column, when present, holds
//! arbitrary strings which are mapped to dense class indices.

use std::path::Path;

use super::{LabeledDataset, Provenance};
use crate::error::{Error, Result};

/// Which columns to read.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvSchema {
    /// Label column; `None` reads an unlabeled file.
    pub label: Option<String>,
    /// Feature columns in order; `None` takes every non-label column.
    pub features: Option<Vec<String>>,
}

impl CsvSchema {
    pub fn labeled(label: impl Into<String>) -> Self {
        Self {
            label: Some(label.into()),
            features: None,
        }
    }

    pub fn unlabeled() -> Self {
        Self::default()
    }
}

/// Class index ↔ label string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelDictionary {
    names: Vec<String>,
}

impl LabelDictionary {
    /// Labels that all parse as non-negative integers are ordered
    /// numerically, anything else lexicographically.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut names: Vec<String> = labels.into_iter().map(str::to_owned).collect();
        names.sort();
        names.dedup();
        if names.iter().all(|n| n.parse::<u64>().is_ok()) {
            names.sort_by_key(|n| n.parse::<u64>().unwrap_or(u64::MAX));
        }
        Self { names }
    }

    pub fn from_names(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CsvData {
    Labeled(LabeledDataset),
    Unlabeled(Vec<Vec<f64>>),
}

impl CsvData {
    pub fn into_labeled(self) -> Result<LabeledDataset> {
        match self {
            CsvData::Labeled(ds) => Ok(ds),
            CsvData::Unlabeled(_) => Err(Error::usage("expected a labeled file")),
        }
    }

    pub fn into_vectors(self) -> Vec<Vec<f64>> {
        match self {
            CsvData::Labeled(ds) => ds.features().to_vec(),
            CsvData::Unlabeled(rows) => rows,
        }
    }
}

struct RawTable {
    features: Vec<Vec<f64>>,
    labels: Option<Vec<(String, u64)>>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_table(path: &Path, schema: &CsvSchema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_error(path, 1, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_error(path, 1, e.to_string()))?
        .clone();
    let width = headers.len();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(path, 1, format!("unknown column {name:?}")))
    };
    let label_col = schema.label.as_deref().map(column).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| column(n)).collect::<Result<_>>()?,
        None => (0..width).filter(|&i| Some(i) != label_col).collect(),
    };
    if feature_cols.is_empty() {
        return Err(parse_error(path, 1, "no feature columns"));
    }

    let mut features = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_error(
                path,
                line,
                format!("row has {} fields, header has {width}", record.len()),
            ));
        }
        let row = feature_cols
            .iter()
            .map(|&c| {
                let field = &record[c];
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        parse_error(path, line, format!("non-numeric value {field:?} in column {:?}", &headers[c]))
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        features.push(row);
        if let (Some(c), Some(labels)) = (label_col, labels.as_mut()) {
            labels.push((record[c].to_owned(), line));
        }
    }
    Ok(RawTable { features, labels })
}

/// Read a CSV file; a labeled schema builds the label dictionary from the file.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<CsvData> {
    let path = path.as_ref();
    let table = read_table(path, schema)?;
    match table.labels {
        None => Ok(CsvData::Unlabeled(table.features)),
        Some(labels) => {
            let dict = LabelDictionary::from_labels(labels.iter().map(|(s, _)| s.as_str()));
            build_labeled(path, table.features, &labels, dict).map(CsvData::Labeled)
        }
    }
}

/// Read a labeled CSV file mapping labels through an existing dictionary, so
/// that e.g. test files share the training file's class indices.
pub fn load_csv_with_labels(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    dictionary: &LabelDictionary,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    if schema.label.is_none() {
        return Err(Error::usage("schema has no label column"));
    }
    let table = read_table(path, schema)?;
    let labels = table.labels.unwrap_or_default();
    build_labeled(path, table.features, &labels, dictionary.clone())
}

fn build_labeled(
    path: &Path,
    features: Vec<Vec<f64>>,
    labels: &[(String, u64)],
    dict: LabelDictionary,
) -> Result<LabeledDataset> {
    let indices = labels
        .iter()
        .map(|(name, line)| {
            dict.index_of(name)
                .ok_or_else(|| parse_error(path, *line, format!("unknown label {name:?}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    LabeledDataset::new(features, indices, dict.len())?.with_dictionary(dict)
}

fn feature_header(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("x{i}")).collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::usage(format!("writing {}: {other:?}", path.display())),
    }
}

/// Columns `x0..x{d-1},label`; labels are written through the dataset's
/// dictionary when it has one.
pub fn write_labeled_csv(path: impl AsRef<Path>, dataset: &LabeledDataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    let mut header = feature_header(dataset.dim());
    header.push("label".into());
    w.write_record(&header).map_err(|e| write_err(path, e))?;
    for (x, y) in dataset.iter() {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.push(match dataset.dictionary().and_then(|d| d.name(y)) {
            Some(name) => name.to_owned(),
            None => y.to_string(),
        });
        w.write_record(&row).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Columns `x0..x{d-1}`.
pub fn write_features_csv(path: impl AsRef<Path>, rows: &[Vec<f64>]) -> Result<()> {
    let path = path.as_ref();
    let dim = rows.first().map_or(0, Vec::len);
    let mut w = csv_writer(path)?;
    w.write_record(feature_header(dim)).map_err(|e| write_err(path, e))?;
    for x in rows {
        w.write_record(x.iter().map(f64::to_string))
            .map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Side file for synthetic wild sets: a single `source` column of `in`/`out`.
pub fn write_provenance_csv(path: impl AsRef<Path>, provenance: &[Provenance]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["source"]).map_err(|e| write_err(path, e))?;
    for p in provenance {
        w.write_record([p.as_str()]).map_err(|e| write_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a provenance side file written by [`write_provenance_csv`].
pub fn load_provenance_csv(path: impl AsRef<Path>) -> Result<Vec<Provenance>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_error(path, 1, format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| parse_error(path, 1, e.to_string()))?;
    if headers.len() != 1 || &headers[0] != "source" {
        return Err(parse_error(path, 1, "expected a single \"source\" column"));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| parse_error(path, line, e.to_string()))?;
        out.push(match &record[0] {
            "in" => Provenance::In,
            "out" => Provenance::Out,
            other => return Err(parse_error(path, line, format!("source must be in or out, got {other:?}"))),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_well_formed_file() {
        let f = file_with("a,b,label\n1.0,2.5,cat\n-3,4e-2,dog\n0.5,0.25,cat\n");
        let ds = load_csv(f.path(), &CsvSchema::labeled("label"))
            .unwrap()
            .into_labeled()
            .unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.features()[1], vec![-3.0, 0.04]);
    }

    #[test]
    fn missing_field_names_the_row() {
        let f = file_with("a,b,label\n1,2,x\n3,y\n");
        let err = load_csv(f.path(), &CsvSchema::labeled("label")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_unknown_columns() {
        let f = file_with("a,b\n1,2\n3,abc\n");
        let err = load_csv(f.path(), &CsvSchema::unlabeled()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let schema = CsvSchema {
            label: Some("nope".into()),
            features: None,
        };
        assert!(matches!(load_csv(f.path(), &schema), Err(Error::Parse { line: 1, .. })));
        let f = file_with("a,b\n1,1,000\n");
        assert!(load_csv(f.path(), &CsvSchema::unlabeled()).is_err());
    }

    #[test]
    fn label_dictionary_roundtrips() {
        let f = file_with("x,label\n1,setosa\n2,virginica\n3,versicolor\n4,setosa\n");
        let ds = load_csv(f.path(), &CsvSchema::labeled("label"))
            .unwrap()
            .into_labeled()
            .unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_labeled_csv(out.path(), &ds).unwrap();
        let text = std::fs::read_to_string(out.path()).unwrap();
        let labels: Vec<&str> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(labels, vec!["setosa", "virginica", "versicolor", "setosa"]);
        let back = load_csv(out.path(), &CsvSchema::labeled("label"))
            .unwrap()
            .into_labeled()
            .unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let d = LabelDictionary::from_labels(["10", "2", "0", "2"]);
        assert_eq!(d.names(), &["0".to_string(), "2".into(), "10".into()]);
    }

    #[test]
    fn shared_dictionary_and_unknown_label() {
        let train = file_with("x,label\n1,b\n2,a\n");
        let ds = load_csv(train.path(), &CsvSchema::labeled("label"))
            .unwrap()
            .into_labeled()
            .unwrap();
        let test = file_with("x,label\n5,b\n");
        let t = load_csv_with_labels(test.path(), &CsvSchema::labeled("label"), ds.dictionary().unwrap()).unwrap();
        assert_eq!(t.labels(), &[1]);
        assert_eq!(t.num_classes(), 2);
        let bad = file_with("x,label\n5,c\n");
        assert!(load_csv_with_labels(bad.path(), &CsvSchema::labeled("label"), ds.dictionary().unwrap()).is_err());
    }

    #[test]
    fn features_and_provenance_files() {
        let rows = vec![vec![0.1, -2.0], vec![1e-300, 3.5]];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_features_csv(f.path(), &rows).unwrap();
        let back = load_csv(f.path(), &CsvSchema::unlabeled()).unwrap().into_vectors();
        assert_eq!(back, rows);
        let p = tempfile::NamedTempFile::new().unwrap();
        write_provenance_csv(p.path(), &[Provenance::In, Provenance::Out]).unwrap();
        assert_eq!(std::fs::read_to_string(p.path()).unwrap(), "source\nin\nout\n");
    }

    #[test]
    fn provenance_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = vec![Provenance::In, Provenance::Out, Provenance::Out];
        write_provenance_csv(&path, &p).unwrap();
        assert_eq!(load_provenance_csv(&path).unwrap(), p);
        std::fs::write(&path, "source\nin\nmaybe\n").unwrap();
        assert!(matches!(load_provenance_csv(&path), Err(Error::Parse { line: 3, .. })));
    }
}
