use std::fs;
use std::path::{Path, PathBuf};

use super::{SimConfig, SimResultRow};
use crate::error::{Error, Result};
use crate::config::FileConfig;

pub const CSV_COLUMNS: [&str; 20] = [
    "kind",
    "p",
    "ratio",
    "B",
    "n",
    "N_y",
    "q",
    "c_q",
    "seed",
    "empirical_q",
    "approx_q_mc",
    "analytic_Q",
    "mean_mse_mc",
    "var_mse_mc",
    "B1",
    "B2",
    "S",
    "R",
    "kappa_Z",
    "c_Z",
];

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_csv_string(rows: &[SimResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv serialization: {e}"))
}

/// Write `rows` to `path` with the fixed column order.
pub fn write_csv(rows: &[SimResultRow], path: &Path) -> Result<()> {
    fs::write(path, to_csv_string(rows)?).map_err(io_error(path))
}

/// `<out>.meta.toml` next to a CSV output.
pub fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.toml");
    csv.with_file_name(name)
}

/// The resolved configuration as a loadable config file, with the
/// covariate law of every kind echoed as comments.
pub fn meta_string(config: &SimConfig) -> Result<String> {
    let mut text = String::from("# resolved configuration; reload with --config\n");
    for &kind in &config.kinds {
        text.push_str(&format!("# covariates.{kind} = {}\n", config.covariates.distribution(kind)));
    }
    text.push_str(&FileConfig::from_sim(config).to_toml_string()?);
    Ok(text)
}

/// Echo the resolved configuration of a run to `meta_path(csv)`.
pub fn write_meta(config: &SimConfig, csv: &Path) -> Result<PathBuf> {
    let path = meta_path(csv);
    fs::write(&path, meta_string(config)?).map_err(io_error(&path))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    fn config() -> SimConfig {
        SimConfig {
            n: 4,
            plans: vec![AllocationPlan::admissible(4, 1, 1).unwrap()],
            p_list: vec![1],
            kinds: vec![ResponseKind::Survival],
            n_y: 1000,
            ..SimConfig::default()
        }
    }

    #[test]
    fn header_and_rows() {
        let rows = run_grid(&config()).unwrap();
        let text = to_csv_string(&rows).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_COLUMNS.join(","));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), CSV_COLUMNS.len());
        assert_eq!(&first[..4], &["survival", "1", "1:1", "1"]);
        assert_eq!(text.lines().count(), rows.len() + 1);
    }

    #[test]
    fn same_seed_same_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_csv(&run_grid(&config()).unwrap(), &a).unwrap();
        write_csv(&run_grid(&config()).unwrap(), &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn io_errors_name_the_path() {
        let path = Path::new("/nonexistent-dir/out.csv");
        let err = write_csv(&[], path).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"), "{err}");
    }

    #[test]
    fn meta_reloads_to_the_same_config() {
        let c = SimConfig {
            covariates: CovariateFamily::Exponential,
            kinds: vec![ResponseKind::Incidence, ResponseKind::Count],
            ..config()
        };
        let text = meta_string(&c).unwrap();
        assert_eq!(FileConfig::from_toml_str(&text).unwrap().sim_config().unwrap(), c);
        let rate = 1.0 / 3f64.sqrt();
        assert!(text.contains(&format!("# covariates.incidence = exponential(rate={rate})")), "{text}");
        assert!(text.contains("# covariates.count = exponential(rate=1.73205080756887"), "{text}");
        assert_eq!(meta_path(Path::new("x/grid.csv")), Path::new("x/grid.csv.meta.toml"));
    }

    #[test]
    fn custom_grids_reload() {
        let mut c = SimConfig::default();
        c.plans[0].blocks = vec![2, 4];
        c.plans[1].blocks = vec![2, 4];
        c.n_y = 5000;
        c.moment_variant = crate::response::MomentVariant::Linear;
        let text = meta_string(&c).unwrap();
        assert_eq!(FileConfig::from_toml_str(&text).unwrap().sim_config().unwrap(), c);
        assert_eq!(FileConfig::from_toml_str(&meta_string(&SimConfig::default()).unwrap()).unwrap().sim_config().unwrap(), SimConfig::default());
    }
}
