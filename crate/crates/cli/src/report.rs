//! Aggregates per-seed metric CSVs from an output directory into a long
//! report and a mean-and-sd summary pivot.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot parse '{0}': metric files are named metrics_*_seed<N>.csv")]
    BadFilename(String),
    #[error("bad row in {path}: {message}")]
    BadRow { path: PathBuf, message: String },
    #[error("no metrics_*.csv files found in {0}")]
    Empty(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub model: String,
    pub n_train: usize,
    pub m: usize,
    pub metric: String,
    pub component: String,
    pub value: f64,
}

/// Sorts numeric components numerically, named ones ("mean", "all") after.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ComponentKey {
    Index(usize),
    Name(String),
}

fn component_key(component: &str) -> ComponentKey {
    match component.parse::<usize>() {
        Ok(i) => ComponentKey::Index(i),
        Err(_) => ComponentKey::Name(component.to_string()),
    }
}

type GroupKey = (String, String, usize, usize, String, ComponentKey);

fn group_key(row: &MetricRow) -> GroupKey {
    (
        row.method.clone(),
        row.model.clone(),
        row.n_train,
        row.m,
        row.metric.clone(),
        component_key(&row.component),
    )
}

/// Finds `metrics_*_seed<N>.csv` files and the seed encoded in each name.
pub fn collect_metric_files(dir: &Path) -> Result<Vec<(u64, PathBuf)>, ReportError> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if !(name.starts_with("metrics_") && name.ends_with(".csv")) {
            continue;
        }
        let stem = &name["metrics_".len()..name.len() - ".csv".len()];
        let Some((_, seed_str)) = stem.rsplit_once("_seed") else {
            return Err(ReportError::BadFilename(name.to_string()));
        };
        let seed = seed_str
            .parse::<u64>()
            .map_err(|_| ReportError::BadFilename(name.to_string()))?;
        found.push((seed, path));
    }
    found.sort();
    Ok(found)
}

pub fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>, ReportError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| ReportError::Csv { path: path.to_path_buf(), source })?;
    let bad = |message: String| ReportError::BadRow { path: path.to_path_buf(), message };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| ReportError::Csv { path: path.to_path_buf(), source })?;
        if record.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", record.len())));
        }
        let field = |i: usize| record.get(i).unwrap().to_string();
        rows.push(MetricRow {
            method: field(0),
            model: field(1),
            n_train: field(2).parse().map_err(|e| bad(format!("n_train: {e}")))?,
            m: field(3).parse().map_err(|e| bad(format!("m: {e}")))?,
            metric: field(4),
            component: field(5),
            value: field(6).parse().map_err(|e| bad(format!("value: {e}")))?,
        });
    }
    Ok(rows)
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub const LONG_HEADER: &str = "seed,method,model,n_train,m,metric,component,value\n";
pub const SUMMARY_HEADER: &str = "method,model,n_train,m,metric,component,mean,sd,n_seeds\n";

pub struct Report {
    pub long_csv: String,
    pub summary_csv: String,
    pub n_files: usize,
}

/// Builds the long and summary tables from every metric file under `dir`.
/// Rows are grouped by (method, model, n_train, m, metric, component); the
/// summary reports the across-seed mean and sample standard deviation
/// (zero for a single seed) in a deterministic sort order.
pub fn build_report(dir: &Path) -> Result<Report, ReportError> {
    let files = collect_metric_files(dir)?;
    if files.is_empty() {
        return Err(ReportError::Empty(dir.to_path_buf()));
    }

    let mut long_rows: Vec<(u64, MetricRow)> = Vec::new();
    for (seed, path) in &files {
        for row in read_metric_rows(path)? {
            long_rows.push((*seed, row));
        }
    }
    long_rows.sort_by(|a, b| (group_key(&a.1), a.0).cmp(&(group_key(&b.1), b.0)));

    let mut long_csv = String::from(LONG_HEADER);
    for (seed, r) in &long_rows {
        long_csv.push_str(&format!(
            "{seed},{},{},{},{},{},{},{}\n",
            r.method, r.model, r.n_train, r.m, r.metric, r.component, r.value
        ));
    }

    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for (_, row) in &long_rows {
        groups.entry(group_key(row)).or_default().push(row.value);
    }
    let mut summary_csv = String::from(SUMMARY_HEADER);
    for ((method, model, n_train, m, metric, comp), values) in &groups {
        let (mean, sd) = mean_sd(values);
        let component = match comp {
            ComponentKey::Index(i) => i.to_string(),
            ComponentKey::Name(s) => s.clone(),
        };
        summary_csv.push_str(&format!(
            "{method},{model},{n_train},{m},{metric},{component},{mean},{sd},{}\n",
            values.len()
        ));
    }

    Ok(Report { long_csv, summary_csv, n_files: files.len() })
}

/// Writes `report.csv` and `summary.csv` into `dir` and returns the report.
pub fn emit_report(dir: &Path) -> Result<Report, ReportError> {
    let report = build_report(dir)?;
    std::fs::write(dir.join("report.csv"), &report.long_csv)?;
    std::fs::write(dir.join("summary.csv"), &report.summary_csv)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    const HEADER: &str = "method,model,n_train,m,metric,component,value\n";

    fn write_metrics(dir: &Path, seed: u64, rows: &str) {
        let name = format!("metrics_energy_conjugate_gaussian_n100_seed{seed}.csv");
        std::fs::write(dir.join(name), format!("{HEADER}{rows}")).unwrap();
    }

    #[test]
    fn aggregates_mean_and_sd_over_seeds() {
        let dir = tempdir().unwrap();
        write_metrics(
            dir.path(),
            1,
            "energy,conjugate_gaussian,100,10,nrmse,1,0.2\n\
             energy,conjugate_gaussian,100,10,nrmse,mean,0.2\n",
        );
        write_metrics(
            dir.path(),
            2,
            "energy,conjugate_gaussian,100,10,nrmse,1,0.4\n\
             energy,conjugate_gaussian,100,10,nrmse,mean,0.4\n",
        );
        let report = emit_report(dir.path()).unwrap();
        assert_eq!(report.n_files, 2);

        let expected_sd = (2.0f64 * 0.1 * 0.1).sqrt();
        let lines: Vec<&str> = report.summary_csv.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER.trim_end());
        assert_eq!(
            lines[1],
            format!("energy,conjugate_gaussian,100,10,nrmse,1,0.30000000000000004,{expected_sd},2")
        );
        assert!(lines[2].starts_with("energy,conjugate_gaussian,100,10,nrmse,mean,"));
        assert!(lines[2].ends_with(",2"));

        assert!(dir.path().join("report.csv").exists());
        assert!(dir.path().join("summary.csv").exists());
        let long: Vec<&str> = report.long_csv.lines().collect();
        assert_eq!(long[0], LONG_HEADER.trim_end());
        assert_eq!(long[1], "1,energy,conjugate_gaussian,100,10,nrmse,1,0.2");
        assert_eq!(long[2], "2,energy,conjugate_gaussian,100,10,nrmse,1,0.4");
    }

    #[test]
    fn single_seed_gets_zero_sd() {
        let dir = tempdir().unwrap();
        write_metrics(dir.path(), 7, "energy,conjugate_gaussian,100,10,r_squared,1,0.5\n");
        let report = build_report(dir.path()).unwrap();
        assert!(report
            .summary_csv
            .contains("energy,conjugate_gaussian,100,10,r_squared,1,0.5,0,1"));
    }

    #[test]
    fn components_sort_numerically_before_names() {
        let dir = tempdir().unwrap();
        write_metrics(
            dir.path(),
            1,
            "energy,grid_toy,50,10,nrmse,10,0.1\n\
             energy,grid_toy,50,10,nrmse,2,0.2\n\
             energy,grid_toy,50,10,nrmse,mean,0.3\n\
             energy,grid_toy,50,10,nrmse,all,0.4\n",
        );
        let report = build_report(dir.path()).unwrap();
        let comps: Vec<&str> = report
            .summary_csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(5).unwrap())
            .collect();
        assert_eq!(comps, vec!["2", "10", "all", "mean"]);
    }

    #[test]
    fn methods_sort_deterministically() {
        let dir = tempdir().unwrap();
        std::fs::write(
            dir.path().join("metrics_kernel_conjugate_gaussian_n100_seed1.csv"),
            format!("{HEADER}kernel,conjugate_gaussian,100,10,nrmse,1,0.3\n"),
        )
        .unwrap();
        std::fs::write(
            dir.path().join("metrics_energy_conjugate_gaussian_n100_seed1.csv"),
            format!("{HEADER}energy,conjugate_gaussian,100,10,nrmse,1,0.2\n"),
        )
        .unwrap();
        let a = build_report(dir.path()).unwrap();
        let b = build_report(dir.path()).unwrap();
        assert_eq!(a.summary_csv, b.summary_csv);
        let methods: Vec<&str> = a
            .summary_csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(methods, vec!["energy", "kernel"]);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempdir().unwrap();
        match build_report(dir.path()) {
            Err(ReportError::Empty(_)) => {}
            other => panic!("expected Empty, got {:?}", other.map(|r| r.n_files)),
        }
    }

    #[test]
    fn malformed_filenames_are_rejected() {
        let dir = tempdir().unwrap();
        std::fs::write(dir.path().join("metrics_oops.csv"), HEADER).unwrap();
        match collect_metric_files(dir.path()) {
            Err(ReportError::BadFilename(name)) => assert_eq!(name, "metrics_oops.csv"),
            other => panic!("expected BadFilename, got {other:?}"),
        }
    }
}
