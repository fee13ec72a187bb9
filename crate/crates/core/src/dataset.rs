//! Data model for mixed cross-sectional/longitudinal multiview data, long-format
//! CSV ingestion, and preprocessing transforms (windowed averaging, pseudo-count
//! log transform, zero-fraction and variance filters).
//!
//! A [`ViewTensor`] is complete by construction: every (subject, variable, time)
//! cell is present and finite. Raw files with missing cells are loaded into a
//! [`MaskedView`] instead, whose only consumer is [`window_average`]; the
//! carry-forward rule there produces a complete tensor for the rest of the
//! pipeline.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array3, Axis};

use crate::error::{Error, Result};

/// One view's data: an `N x p x t` tensor with variable and time metadata.
///
/// `t == 1` marks a cross-sectional view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTensor {
    values: Array3<f64>,
    variable_names: Vec<String>,
    time_labels: Vec<f64>,
}

impl ViewTensor {
    pub fn new(
        values: Array3<f64>,
        variable_names: Vec<String>,
        time_labels: Vec<f64>,
    ) -> Result<Self> {
        let (n, p, t) = values.dim();
        if n == 0 || p == 0 || t == 0 {
            return Err(Error::InvalidInput(format!(
                "view tensor dimensions must all be >= 1, got ({n}, {p}, {t})"
            )));
        }
        if variable_names.len() != p {
            return Err(Error::ShapeMismatch(format!(
                "{} variable names for {p} variables",
                variable_names.len()
            )));
        }
        if time_labels.len() != t {
            return Err(Error::ShapeMismatch(format!(
                "{} time labels for {t} time points",
                time_labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &variable_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate variable name {name}"
                )));
            }
        }
        if time_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "time labels must be strictly increasing".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "view tensor contains non-finite value {bad}"
            )));
        }
        Ok(ViewTensor {
            values,
            variable_names,
            time_labels,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_variables(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_times(&self) -> usize {
        self.values.dim().2
    }

    /// Cross-sectional views have a single time point.
    pub fn is_cross_sectional(&self) -> bool {
        self.n_times() == 1
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    pub fn time_labels(&self) -> &[f64] {
        &self.time_labels
    }

    /// Restrict the view to the given variable indices (input order preserved
    /// by the caller's index order).
    pub fn select_variables(&self, indices: &[usize]) -> Result<ViewTensor> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("no variables selected".into()));
        }
        for &i in indices {
            if i >= self.n_variables() {
                return Err(Error::InvalidInput(format!(
                    "variable index {i} out of range ({} variables)",
                    self.n_variables()
                )));
            }
        }
        let values = self.values.select(Axis(1), indices);
        let names = indices
            .iter()
            .map(|&i| self.variable_names[i].clone())
            .collect();
        ViewTensor::new(values, names, self.time_labels.clone())
    }

    /// Restrict the view to the given subject rows. Duplicate indices are
    /// allowed (bootstrap resampling).
    pub fn select_subjects(&self, indices: &[usize]) -> Result<ViewTensor> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("no subjects selected".into()));
        }
        for &i in indices {
            if i >= self.n_subjects() {
                return Err(Error::InvalidInput(format!(
                    "subject index {i} out of range ({} subjects)",
                    self.n_subjects()
                )));
            }
        }
        let values = self.values.select(Axis(0), indices);
        ViewTensor::new(values, self.variable_names.clone(), self.time_labels.clone())
    }
}

/// Raw ingestion form of a view: values plus a per-cell presence mask.
///
/// Permitted only upstream of [`window_average`]; every other operation
/// consumes complete [`ViewTensor`]s.
#[derive(Debug, Clone)]
pub struct MaskedView {
    pub values: Array3<f64>,
    pub present: Array3<bool>,
    pub variable_names: Vec<String>,
    pub time_labels: Vec<f64>,
}

/// `D` views sharing a subject axis, plus class labels.
///
/// Class labels are densified to `0..K` in first-appearance order of the
/// original label strings; `class_names[k]` recovers the original string.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewDataset {
    views: Vec<ViewTensor>,
    labels: Vec<usize>,
    subject_ids: Vec<String>,
    class_names: Vec<String>,
}

impl MultiViewDataset {
    pub fn new(
        views: Vec<ViewTensor>,
        labels: Vec<usize>,
        subject_ids: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::InvalidInput("dataset needs at least one view".into()));
        }
        let n = subject_ids.len();
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {n} subjects",
                labels.len()
            )));
        }
        for (d, v) in views.iter().enumerate() {
            if v.n_subjects() != n {
                return Err(Error::ShapeMismatch(format!(
                    "view {d} has {} subjects, labels file has {n}",
                    v.n_subjects()
                )));
            }
        }
        let k = class_names.len();
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 classes, got {k}"
            )));
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidInput(format!(
                    "label code {l} out of range for {k} classes"
                )));
            }
            counts[l] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass { class: empty });
        }
        Ok(MultiViewDataset {
            views,
            labels,
            subject_ids,
            class_names,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn views(&self) -> &[ViewTensor] {
        &self.views
    }

    pub fn view(&self, d: usize) -> &ViewTensor {
        &self.views[d]
    }

    /// Class codes in `0..K`, aligned with `subject_ids`.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Replace one view, keeping subjects and labels.
    pub fn with_view(&self, d: usize, view: ViewTensor) -> Result<Self> {
        let mut views = self.views.clone();
        views[d] = view;
        MultiViewDataset::new(
            views,
            self.labels.clone(),
            self.subject_ids.clone(),
            self.class_names.clone(),
        )
    }

    /// Subset subjects by index; duplicates allowed (bootstrap sets).
    ///
    /// Errors if the subset loses a class entirely.
    pub fn select_subjects(&self, indices: &[usize]) -> Result<Self> {
        let views = self
            .views
            .iter()
            .map(|v| v.select_subjects(indices))
            .collect::<Result<Vec<_>>>()?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let subject_ids = indices
            .iter()
            .map(|&i| self.subject_ids[i].clone())
            .collect();
        MultiViewDataset::new(views, labels, subject_ids, self.class_names.clone())
    }
}

/// One row of a long-format view file.
#[derive(Debug, Clone)]
struct LongRecord {
    subject: String,
    variable: String,
    time: f64,
    value: f64,
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(GzDecoder::new(file)))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

fn read_long_csv(path: &Path) -> Result<Vec<LongRecord>> {
    let reader = open_maybe_gz(path)?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv.headers().map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
        let expected = ["subject", "variable", "time", "value"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected header subject,variable,time,value, got {}", got.join(",")),
            });
        }
    }
    let mut records = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
        if row.len() != 4 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                msg: format!("expected 4 fields, got {}", row.len()),
            });
        }
        let time: f64 = row[2].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            msg: format!("bad time value {:?}", &row[2]),
        })?;
        let value: f64 = row[3].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            msg: format!("bad value {:?}", &row[3]),
        })?;
        if !value.is_finite() {
            return Err(Error::Parse {
                path: path.into(),
                line,
                msg: format!("non-finite value {value}"),
            });
        }
        records.push(LongRecord {
            subject: row[0].to_string(),
            variable: row[1].to_string(),
            time,
            value,
        });
    }
    Ok(records)
}

/// Labels file rows as (subject, label string) in file order.
fn read_labels_csv(path: &Path) -> Result<Vec<(String, String)>> {
    let reader = open_maybe_gz(path)?;
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = csv.headers().map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
        let got: Vec<&str> = headers.iter().collect();
        if got != ["subject", "label"] {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: format!("expected header subject,label, got {}", got.join(",")),
            });
        }
    }
    let mut out = Vec::new();
    for (i, row) in csv.records().enumerate() {
        let row = row.map_err(|e| Error::Csv {
            path: path.into(),
            source: e,
        })?;
        if row.len() != 2 {
            return Err(Error::Parse {
                path: path.into(),
                line: i + 2,
                msg: format!("expected 2 fields, got {}", row.len()),
            });
        }
        out.push((row[0].to_string(), row[1].to_string()));
    }
    Ok(out)
}

/// Subject ordering and densified labels from a labels file.
///
/// Subjects keep the file order (first appearance); duplicate subject rows
/// error. Label strings are densified to codes `0..K` in first-appearance
/// order.
struct LabelTable {
    subject_ids: Vec<String>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    index: HashMap<String, usize>,
}

fn build_label_table(path: &Path) -> Result<LabelTable> {
    let rows = read_labels_csv(path)?;
    if rows.is_empty() {
        return Err(Error::InvalidInput(format!(
            "labels file {} is empty",
            path.display()
        )));
    }
    let mut subject_ids = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut index = HashMap::new();
    for (subject, label) in rows {
        if index.contains_key(&subject) {
            return Err(Error::InvalidInput(format!(
                "subject {subject} appears twice in {}",
                path.display()
            )));
        }
        let code = match class_names.iter().position(|c| *c == label) {
            Some(c) => c,
            None => {
                class_names.push(label.clone());
                class_names.len() - 1
            }
        };
        index.insert(subject.clone(), subject_ids.len());
        subject_ids.push(subject);
        labels.push(code);
    }
    Ok(LabelTable {
        subject_ids,
        labels,
        class_names,
        index,
    })
}

/// Assemble one view from long records. Variable order is first appearance in
/// the file; time labels are the sorted distinct times.
fn assemble_view(
    path: &Path,
    records: Vec<LongRecord>,
    table: &LabelTable,
    allow_missing: bool,
) -> Result<MaskedView> {
    if records.is_empty() {
        return Err(Error::InvalidInput(format!(
            "view file {} has no data rows",
            path.display()
        )));
    }
    let mut variable_names: Vec<String> = Vec::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    let mut times: Vec<f64> = Vec::new();
    for r in &records {
        if !table.index.contains_key(&r.subject) {
            return Err(Error::UnknownSubject {
                subject: r.subject.clone(),
                path: path.into(),
            });
        }
        if !var_index.contains_key(&r.variable) {
            var_index.insert(r.variable.clone(), variable_names.len());
            variable_names.push(r.variable.clone());
        }
        if !times.contains(&r.time) {
            times.push(r.time);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let time_index: HashMap<u64, usize> = times
        .iter()
        .enumerate()
        .map(|(i, t)| (t.to_bits(), i))
        .collect();

    let n = table.subject_ids.len();
    let p = variable_names.len();
    let t = times.len();
    let mut values = Array3::<f64>::zeros((n, p, t));
    let mut present = Array3::<bool>::from_elem((n, p, t), false);
    for r in &records {
        let si = table.index[&r.subject];
        let vi = var_index[&r.variable];
        let ti = time_index[&r.time.to_bits()];
        if present[(si, vi, ti)] {
            return Err(Error::DuplicateCell {
                path: path.into(),
                subject: r.subject.clone(),
                variable: r.variable.clone(),
                time: r.time,
            });
        }
        values[(si, vi, ti)] = r.value;
        present[(si, vi, ti)] = true;
    }
    if !allow_missing {
        for si in 0..n {
            for vi in 0..p {
                for ti in 0..t {
                    if !present[(si, vi, ti)] {
                        return Err(Error::MissingCell {
                            path: path.into(),
                            subject: table.subject_ids[si].clone(),
                            variable: variable_names[vi].clone(),
                            time: times[ti],
                        });
                    }
                }
            }
        }
    }
    Ok(MaskedView {
        values,
        present,
        variable_names,
        time_labels: times,
    })
}

/// Load a complete multiview dataset from long-format view CSVs and a labels
/// CSV. Every (subject, variable, time) cell must be present exactly once.
pub fn load_dataset(view_files: &[PathBuf], labels_file: &Path) -> Result<MultiViewDataset> {
    let table = build_label_table(labels_file)?;
    let mut views = Vec::new();
    for path in view_files {
        let records = read_long_csv(path)?;
        let masked = assemble_view(path, records, &table, false)?;
        views.push(ViewTensor::new(
            masked.values,
            masked.variable_names,
            masked.time_labels,
        )?);
    }
    MultiViewDataset::new(views, table.labels, table.subject_ids, table.class_names)
}

/// Load raw views that may have missing cells, for windowed averaging.
/// Returns the masked views plus the label metadata shared by all views.
pub fn load_masked_dataset(
    view_files: &[PathBuf],
    labels_file: &Path,
) -> Result<(Vec<MaskedView>, Vec<usize>, Vec<String>, Vec<String>)> {
    let table = build_label_table(labels_file)?;
    let mut views = Vec::new();
    for path in view_files {
        let records = read_long_csv(path)?;
        views.push(assemble_view(path, records, &table, true)?);
    }
    Ok((views, table.labels, table.subject_ids, table.class_names))
}

/// Write one view as a long-format CSV (`subject,variable,time,value`).
///
/// Values are written with the shortest representation that round-trips
/// exactly, so save/load reproduces the tensor bit for bit.
pub fn save_view(view: &ViewTensor, subject_ids: &[String], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "subject,variable,time,value").map_err(|e| Error::io(path, e))?;
    for (si, s) in subject_ids.iter().enumerate() {
        for (vi, v) in view.variable_names().iter().enumerate() {
            for (ti, t) in view.time_labels().iter().enumerate() {
                writeln!(w, "{s},{v},{t},{}", view.values()[(si, vi, ti)])
                    .map_err(|e| Error::io(path, e))?;
            }
        }
    }
    Ok(())
}

/// Write the labels CSV (`subject,label`) using the original label strings.
pub fn save_labels(dataset: &MultiViewDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "subject,label").map_err(|e| Error::io(path, e))?;
    for (s, &l) in dataset.subject_ids().iter().zip(dataset.labels()) {
        writeln!(w, "{s},{}", dataset.class_names()[l]).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Write a dataset as `view_1.csv ... view_D.csv` plus `labels.csv` in `dir`.
pub fn save_dataset(dataset: &MultiViewDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (d, view) in dataset.views().iter().enumerate() {
        let path = dir.join(format!("view_{}.csv", d + 1));
        save_view(view, dataset.subject_ids(), &path)?;
        paths.push(path);
    }
    let labels = dir.join("labels.csv");
    save_labels(dataset, &labels)?;
    paths.push(labels);
    Ok(paths)
}

/// Windowed averaging over the time axis.
///
/// Time labels are interpreted as week numbers; group `g` (1-based) averages
/// the present cells with `floor(label / window_len) == g - 1`. A group with
/// no present cells copies the previous group's value; an empty first group is
/// an error naming the subject. Labels at or beyond `window_len * n_groups`
/// are ignored.
pub fn window_average(
    view: &MaskedView,
    subject_ids: &[String],
    window_len: usize,
    n_groups: usize,
) -> Result<ViewTensor> {
    if window_len == 0 || n_groups == 0 {
        return Err(Error::InvalidInput(
            "window_len and n_groups must be positive".into(),
        ));
    }
    let (n, p, t) = view.values.dim();
    if subject_ids.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} subject ids for {n} subjects",
            subject_ids.len()
        )));
    }
    let mut group_of_time = vec![None; t];
    for (ti, &label) in view.time_labels.iter().enumerate() {
        if label < 0.0 {
            return Err(Error::InvalidInput(format!(
                "negative time label {label} in windowed averaging"
            )));
        }
        let g = (label / window_len as f64).floor() as usize;
        if g < n_groups {
            group_of_time[ti] = Some(g);
        }
    }
    let mut values = Array3::<f64>::zeros((n, p, n_groups));
    for si in 0..n {
        for vi in 0..p {
            let mut prev = f64::NAN;
            for g in 0..n_groups {
                let mut sum = 0.0;
                let mut count = 0usize;
                for ti in 0..t {
                    if group_of_time[ti] == Some(g) && view.present[(si, vi, ti)] {
                        sum += view.values[(si, vi, ti)];
                        count += 1;
                    }
                }
                let cell = if count > 0 {
                    sum / count as f64
                } else if g == 0 {
                    return Err(Error::EmptyFirstGroup {
                        subject: subject_ids[si].clone(),
                    });
                } else {
                    prev
                };
                values[(si, vi, g)] = cell;
                prev = cell;
            }
        }
    }
    let time_labels = (1..=n_groups).map(|g| g as f64).collect();
    ViewTensor::new(values, view.variable_names.clone(), time_labels)
}

/// Replace every value `v` by `ln(v + pseudocount)`. Negative inputs error.
pub fn log_pseudo(view: &ViewTensor, pseudocount: f64) -> Result<ViewTensor> {
    if !(pseudocount > 0.0) {
        return Err(Error::InvalidInput(format!(
            "pseudocount must be positive, got {pseudocount}"
        )));
    }
    if let Some(bad) = view.values().iter().find(|v| **v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "log_pseudo requires non-negative values, found {bad}"
        )));
    }
    let values = view.values().mapv(|v| (v + pseudocount).ln());
    ViewTensor::new(
        values,
        view.variable_names().to_vec(),
        view.time_labels().to_vec(),
    )
}

/// Keep variables whose fraction of exactly-zero cells is below
/// `max_zero_frac`. Returns the filtered view and the kept input indices.
pub fn zero_fraction_filter(
    view: &ViewTensor,
    max_zero_frac: f64,
) -> Result<(ViewTensor, Vec<usize>)> {
    if !(0.0..=1.0).contains(&max_zero_frac) {
        return Err(Error::InvalidInput(format!(
            "max_zero_frac must be in [0,1], got {max_zero_frac}"
        )));
    }
    let (n, p, t) = view.values().dim();
    let cells = (n * t) as f64;
    let mut kept = Vec::new();
    for vi in 0..p {
        let zeros = view
            .values()
            .index_axis(Axis(1), vi)
            .iter()
            .filter(|v| **v == 0.0)
            .count();
        if (zeros as f64) / cells < max_zero_frac {
            kept.push(vi);
        }
    }
    if kept.is_empty() {
        return Err(Error::AllVariablesRemoved {
            filter: "zero-fraction".into(),
        });
    }
    Ok((view.select_variables(&kept)?, kept))
}

/// Sample variance over all (subject, time) cells, unbiased (n-1) denominator.
fn cell_variance(view: &ViewTensor, vi: usize) -> f64 {
    let slice = view.values().index_axis(Axis(1), vi);
    let n = slice.len() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = slice.iter().sum::<f64>() / n;
    slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Keep variables with sample variance above `cutoff`. Returns the filtered
/// view and the kept input indices.
pub fn variance_filter(view: &ViewTensor, cutoff: f64) -> Result<(ViewTensor, Vec<usize>)> {
    if cutoff < 0.0 {
        return Err(Error::InvalidInput(format!(
            "variance cutoff must be non-negative, got {cutoff}"
        )));
    }
    let p = view.n_variables();
    let kept: Vec<usize> = (0..p).filter(|&vi| cell_variance(view, vi) > cutoff).collect();
    if kept.is_empty() {
        return Err(Error::AllVariablesRemoved {
            filter: "variance".into(),
        });
    }
    Ok((view.select_variables(&kept)?, kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr3;
    fn write_file(dir: &Path, name: &str, contents: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        path
    }

    #[test]
    fn load_minimal_complete_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let view = write_file(
            dir.path(),
            "v.csv",
            "subject,variable,time,value\n\
             s1,a,0,1.0\ns1,b,0,2.0\ns2,a,0,3.0\ns2,b,0,4.0\n",
        );
        let labels = write_file(dir.path(), "l.csv", "subject,label\ns1,1\ns2,2\n");
        let ds = load_dataset(&[view], &labels).unwrap();
        assert_eq!(ds.view(0).values().dim(), (2, 2, 1));
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.view(0).values()[(1, 0, 0)], 3.0);
    }

    #[test]
    fn missing_cell_names_the_triple() {
        let dir = tempfile::tempdir().unwrap();
        let view = write_file(
            dir.path(),
            "v.csv",
            "subject,variable,time,value\n\
             s1,v1,1,1.0\ns1,v2,1,1.0\ns1,v1,3,1.0\n",
        );
        let labels = write_file(dir.path(), "l.csv", "subject,label\ns1,1\ns2,2\n");
        // s2 never appears, and s1 lacks (v2, 3); the first reported gap is
        // scanned in subject-major order.
        let err = load_dataset(&[view], &labels).unwrap_err();
        match err {
            Error::MissingCell { subject, variable, time, .. } => {
                assert_eq!(subject, "s1");
                assert_eq!(variable, "v2");
                assert_eq!(time, 3.0);
            }
            other => panic!("expected MissingCell, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_cell_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let view = write_file(
            dir.path(),
            "v.csv",
            "subject,variable,time,value\ns1,a,0,1.0\ns1,a,0,2.0\n",
        );
        let labels = write_file(dir.path(), "l.csv", "subject,label\ns1,1\ns2,2\n");
        assert!(matches!(
            load_dataset(&[view], &labels).unwrap_err(),
            Error::DuplicateCell { .. }
        ));
    }

    #[test]
    fn unknown_subject_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let view = write_file(
            dir.path(),
            "v.csv",
            "subject,variable,time,value\nsX,a,0,1.0\n",
        );
        let labels = write_file(dir.path(), "l.csv", "subject,label\ns1,1\ns2,2\n");
        assert!(matches!(
            load_dataset(&[view], &labels).unwrap_err(),
            Error::UnknownSubject { .. }
        ));
    }

    #[test]
    fn label_codes_densified_in_first_appearance_order() {
        let dir = tempfile::tempdir().unwrap();
        let view = write_file(
            dir.path(),
            "v.csv",
            "subject,variable,time,value\ns1,a,0,1\ns2,a,0,2\ns3,a,0,3\n",
        );
        let labels = write_file(dir.path(), "l.csv", "subject,label\ns1,1\ns2,2\ns3,1\n");
        let ds = load_dataset(&[view], &labels).unwrap();
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.class_names(), &["1".to_string(), "2".to_string()]);
    }

    #[test]
    fn gz_input_accepted_by_extension() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv.gz");
        let f = File::create(&path).unwrap();
        let mut enc = GzEncoder::new(f, flate2::Compression::default());
        enc.write_all(b"subject,variable,time,value\ns1,a,0,1.5\ns2,a,0,2.5\n")
            .unwrap();
        enc.finish().unwrap();
        let labels = write_file(dir.path(), "l.csv", "subject,label\ns1,x\ns2,y\n");
        let ds = load_dataset(&[path], &labels).unwrap();
        assert_eq!(ds.view(0).values()[(0, 0, 0)], 1.5);
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let values = arr3(&[
            [[0.1f64, 0.2, 0.3], [1.0, 2.0, 3.0]],
            [[-0.5, 1e-17, 3.0_f64.sqrt()], [4.0, 5.0, 6.0]],
        ]);
        let view = ViewTensor::new(
            values,
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0, 2.5],
        )
        .unwrap();
        let ds = MultiViewDataset::new(
            vec![view],
            vec![0, 1],
            vec!["s1".into(), "s2".into()],
            vec!["healthy".into(), "case".into()],
        )
        .unwrap();
        let paths = save_dataset(&ds, dir.path()).unwrap();
        let reloaded = load_dataset(&paths[..1], &paths[1]).unwrap();
        assert_eq!(reloaded.view(0).values(), ds.view(0).values());
        assert_eq!(reloaded.subject_ids(), ds.subject_ids());
        let original: Vec<&String> = ds.labels().iter().map(|&l| &ds.class_names()[l]).collect();
        let round: Vec<&String> = reloaded
            .labels()
            .iter()
            .map(|&l| &reloaded.class_names()[l])
            .collect();
        assert_eq!(original, round);
    }

    fn masked_single_subject(weeks: &[(f64, f64)]) -> MaskedView {
        let t = weeks.len();
        let mut values = Array3::<f64>::zeros((1, 1, t));
        let present = Array3::<bool>::from_elem((1, 1, t), true);
        for (ti, &(_, v)) in weeks.iter().enumerate() {
            values[(0, 0, ti)] = v;
        }
        MaskedView {
            values,
            present,
            variable_names: vec!["a".into()],
            time_labels: weeks.iter().map(|&(w, _)| w).collect(),
        }
    }

    #[test]
    fn window_average_means_present_cells() {
        let view = masked_single_subject(&[(0.0, 2.0), (3.0, 4.0)]);
        let out = window_average(&view, &["s1".into()], 5, 1).unwrap();
        assert_eq!(out.values()[(0, 0, 0)], 3.0);
    }

    #[test]
    fn window_average_carries_previous_group_forward() {
        // weeks 0 and 3 fall in group 1; group 2 (weeks 5..9) is empty.
        let view = masked_single_subject(&[(0.0, 2.0), (3.0, 4.0)]);
        let out = window_average(&view, &["s1".into()], 5, 2).unwrap();
        assert_eq!(out.values()[(0, 0, 0)], 3.0);
        assert_eq!(out.values()[(0, 0, 1)], 3.0);
    }

    #[test]
    fn window_average_fifty_weeks_to_ten_groups() {
        let weeks: Vec<(f64, f64)> = (0..50).map(|w| (w as f64, w as f64)).collect();
        let view = masked_single_subject(&weeks);
        let out = window_average(&view, &["s1".into()], 5, 10).unwrap();
        assert_eq!(out.n_times(), 10);
        // group 1 averages weeks 0..4
        assert_eq!(out.values()[(0, 0, 0)], 2.0);
    }

    #[test]
    fn window_average_errors_on_empty_first_group() {
        let view = masked_single_subject(&[(7.0, 1.0)]);
        let err = window_average(&view, &["s9".into()], 5, 2).unwrap_err();
        match err {
            Error::EmptyFirstGroup { subject } => assert_eq!(subject, "s9"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn window_average_identity_when_groups_match_times() {
        let weeks: Vec<(f64, f64)> = (0..4).map(|w| (w as f64, (w * w) as f64)).collect();
        let view = masked_single_subject(&weeks);
        let out = window_average(&view, &["s1".into()], 1, 4).unwrap();
        for ti in 0..4 {
            assert_eq!(out.values()[(0, 0, ti)], (ti * ti) as f64);
        }
    }

    #[test]
    fn log_pseudo_examples_and_monotonicity() {
        let view = ViewTensor::new(
            arr3(&[[[0.0, std::f64::consts::E - 1.0]]]),
            vec!["a".into()],
            vec![0.0, 1.0],
        )
        .unwrap();
        let out = log_pseudo(&view, 1.0).unwrap();
        assert!(out.values()[(0, 0, 0)].abs() < 1e-15);
        assert!((out.values()[(0, 0, 1)] - 1.0).abs() < 1e-12);

        let bad = ViewTensor::new(arr3(&[[[-0.5]]]), vec!["a".into()], vec![0.0]).unwrap();
        assert!(log_pseudo(&bad, 1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn log_pseudo_strictly_monotone(v1 in 0.0..100.0f64, v2 in 0.0..100.0f64) {
            proptest::prop_assume!(v1 < v2);
            let view = ViewTensor::new(
                arr3(&[[[v1, v2]]]),
                vec!["a".into()],
                vec![0.0, 1.0],
            ).unwrap();
            let out = log_pseudo(&view, 1.0).unwrap();
            proptest::prop_assert!(out.values()[(0, 0, 0)] < out.values()[(0, 0, 1)]);
        }
    }

    #[test]
    fn zero_fraction_filter_boundary_is_strict() {
        // 9 zeros out of 10 cells: fraction 0.9 is not < 0.9, so removed.
        let mut values = Array3::<f64>::zeros((5, 2, 2));
        values[(0, 0, 0)] = 1.0; // variable 0: 9 zeros of 10
        for si in 0..5 {
            for ti in 0..2 {
                values[(si, 1, ti)] = 1.0; // variable 1: no zeros
            }
        }
        let view = ViewTensor::new(values, vec!["a".into(), "b".into()], vec![0.0, 1.0]).unwrap();
        let (filtered, kept) = zero_fraction_filter(&view, 0.9).unwrap();
        assert_eq!(kept, vec![1]);
        assert_eq!(filtered.variable_names(), &["b".to_string()]);
    }

    #[test]
    fn zero_fraction_filter_keeps_relative_order() {
        let mut values = Array3::<f64>::zeros((2, 3, 5));
        // zero fractions: var0 -> 1.0, var1 -> 0.5, var2 -> 0.0
        for ti in 0..5 {
            values[(0, 1, ti)] = 1.0;
            values[(0, 2, ti)] = 1.0;
            values[(1, 2, ti)] = 1.0;
        }
        let view = ViewTensor::new(
            values,
            vec!["a".into(), "b".into(), "c".into()],
            (0..5).map(|t| t as f64).collect(),
        )
        .unwrap();
        let (_, kept) = zero_fraction_filter(&view, 0.9).unwrap();
        assert_eq!(kept, vec![1, 2]);
    }

    #[test]
    fn variance_filter_examples() {
        let values = arr3(&[[[0.0], [1.0]], [[2.0], [1.0]]]); // var a: {0,2}, var b constant
        let view = ViewTensor::new(values, vec!["a".into(), "b".into()], vec![0.0]).unwrap();
        let (filtered, kept) = variance_filter(&view, 1.0).unwrap();
        assert_eq!(kept, vec![0]);
        assert_eq!(filtered.n_variables(), 1);
        // constant variable removed even at cutoff 0
        let (_, kept0) = variance_filter(&view, 0.0).unwrap();
        assert_eq!(kept0, vec![0]);
    }

    #[test]
    fn all_variables_removed_errors() {
        let values = arr3(&[[[1.0]], [[1.0]]]);
        let view = ViewTensor::new(values, vec!["a".into()], vec![0.0]).unwrap();
        assert!(matches!(
            variance_filter(&view, 10.0).unwrap_err(),
            Error::AllVariablesRemoved { .. }
        ));
    }

    #[test]
    fn view_invariants_enforced() {
        assert!(ViewTensor::new(
            arr3(&[[[1.0]]]),
            vec!["a".into()],
            vec![0.0, 1.0]
        )
        .is_err());
        assert!(ViewTensor::new(
            arr3(&[[[1.0], [2.0]]]),
            vec!["a".into(), "a".into()],
            vec![0.0]
        )
        .is_err());
        assert!(ViewTensor::new(
            arr3(&[[[f64::NAN]]]),
            vec!["a".into()],
            vec![0.0]
        )
        .is_err());
    }
}
