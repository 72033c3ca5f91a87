//! Rolling-window evaluation on panel data and report writing.
//!
//! Loads a bottom-level panel from CSV, walks a training window across
//! it one observation at a time, fits base models and covariances per
//! window, reconciles with every requested method and scores point and
//! probabilistic forecasts against the realized observations.

use crate::covariance::EstimatorKind;
use crate::error::{Error, Result};
use crate::hierarchy::{aggregate, build_summing_matrix, HierarchySpec, SummingMatrix};
use crate::models::{base_forecast_all_opts, FitOptions};
use crate::report::{write_failures_csv, write_metadata, write_records_csv};
use crate::simulation::{
    estimate_kinds, relative_improvement, CrpsMode, RepFailure, ScoreName,
    ScoreRecord, ScoreTask, ScoredMethod,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::collections::BTreeSet;
use std::path::Path;

/// Bottom-level observations with date labels and the hierarchy spec.
#[derive(Debug, Clone)]
pub struct PanelData {
    dates: Vec<String>,
    values: DMatrix<f64>,
    spec: HierarchySpec,
}

impl PanelData {
    /// Wraps a T x n bottom panel whose columns follow the spec order.
    pub fn new(dates: Vec<String>, values: DMatrix<f64>, spec: HierarchySpec) -> Result<Self> {
        if values.ncols() != spec.n_bottom() {
            return Err(Error::DimensionMismatch {
                context: "panel columns",
                expected: spec.n_bottom(),
                actual: values.ncols(),
            });
        }
        if values.nrows() != dates.len() {
            return Err(Error::DimensionMismatch {
                context: "panel rows",
                expected: dates.len(),
                actual: values.nrows(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for d in &dates {
            if !seen.insert(d.clone()) {
                return Err(Error::DuplicateDate(d.clone()));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("panel values"));
        }
        Ok(Self {
            dates,
            values,
            spec,
        })
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn spec(&self) -> &HierarchySpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Writes the panel back to the CSV exchange format.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        let mut header = vec!["date".to_string()];
        header.extend(self.spec.bottom_labels().iter().cloned());
        wtr.write_record(&header)?;
        for (i, date) in self.dates.iter().enumerate() {
            let mut row = vec![date.clone()];
            for j in 0..self.values.ncols() {
                row.push(self.values[(i, j)].to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Loads a bottom-level panel CSV against a hierarchy spec file.
///
/// The first CSV column holds date labels; the remaining columns are
/// bottom series keyed by label and are reordered to the spec order.
/// Columns not named in the spec are ignored; a spec label without a
/// column is an error. Aggregates are always computed, never read.
pub fn load_panel(
    csv_path: impl AsRef<Path>,
    hierarchy_path: impl AsRef<Path>,
) -> Result<PanelData> {
    let spec = HierarchySpec::from_file(hierarchy_path)?;
    let mut rdr = csv::Reader::from_path(csv_path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::InvalidParameter(
            "panel CSV needs a date column plus at least one series".into(),
        ));
    }
    let mut column_of = std::collections::HashMap::new();
    for (idx, name) in headers.iter().enumerate().skip(1) {
        column_of.insert(name.to_string(), idx);
    }
    let order: Vec<usize> = spec
        .bottom_labels()
        .iter()
        .map(|label| {
            column_of
                .get(label)
                .copied()
                .ok_or_else(|| Error::MissingColumn(label.clone()))
        })
        .collect::<Result<_>>()?;

    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        dates.push(record[0].to_string());
        let mut row = Vec::with_capacity(order.len());
        for (&col, label) in order.iter().zip(spec.bottom_labels()) {
            let cell = record.get(col).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row: i + 2,
                column: label.clone(),
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    let t_len = rows.len();
    let n = spec.n_bottom();
    let values = DMatrix::from_fn(t_len, n, |i, j| rows[i][j]);
    PanelData::new(dates, values, spec)
}

/// Fixed-length window that slides, or a window anchored at the start
/// that grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    Sliding,
    Expanding,
}

impl WindowMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            WindowMode::Sliding => "sliding",
            WindowMode::Expanding => "expanding",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "sliding" => Ok(WindowMode::Sliding),
            "expanding" => Ok(WindowMode::Expanding),
            other => Err(Error::InvalidParameter(format!(
                "unknown window mode `{other}`"
            ))),
        }
    }
}

/// Options for a rolling evaluation run.
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub initial_window: usize,
    pub h: usize,
    pub methods: Vec<(ScoredMethod, EstimatorKind)>,
    pub window_mode: WindowMode,
    pub fit: FitOptions,
    pub n_draws: usize,
    pub seed: u64,
}

impl EvalOptions {
    pub fn new(initial_window: usize, methods: Vec<(ScoredMethod, EstimatorKind)>) -> Self {
        Self {
            initial_window,
            h: 1,
            methods,
            window_mode: WindowMode::Sliding,
            fit: FitOptions::default(),
            n_draws: 10_000,
            seed: 0,
        }
    }
}

/// Point forecasts and the realized vector for one window.
#[derive(Debug, Clone)]
pub struct WindowResult {
    pub window_end: String,
    pub realized: DVector<f64>,
    /// (method label, covariance label, full-structure point forecast).
    pub forecasts: Vec<(String, String, DVector<f64>)>,
}

/// Everything a rolling evaluation produces.
#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub records: Vec<ScoreRecord>,
    pub failures: Vec<RepFailure>,
    pub windows: Vec<WindowResult>,
    pub n_windows: usize,
    /// Largest coherence discrepancy of any reconciled point forecast.
    pub max_coherence_discrepancy: f64,
    pub metadata: Vec<(String, String)>,
}

/// Walks the training window across the panel and scores every method.
///
/// Each window fits the base models, estimates the requested covariance
/// kinds from in-sample residuals, reconciles the h-step base forecast
/// and scores it against the realized observation (multivariate LS on the
/// bottom density, ES/VS on draws from the full structure, univariate
/// LS/CRPS/IS at alpha in {0.05, 0.10, 0.20}, squared error for MSE).
/// CRPS here uses the empirical estimator on seeded draws. Window
/// failures are recorded, never fatal.
pub fn rolling_evaluate(panel: &PanelData, opts: &EvalOptions) -> Result<EvalOutput> {
    if opts.initial_window < 24 {
        return Err(Error::InvalidParameter(
            "initial window must be at least 24 observations".into(),
        ));
    }
    if opts.h < 1 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let t_len = panel.len();
    if opts.initial_window + opts.h > t_len {
        return Err(Error::SeriesTooShort {
            min: opts.initial_window + opts.h,
            actual: t_len,
        });
    }
    let s = build_summing_matrix(panel.spec())?;
    let n_windows = t_len - opts.initial_window - opts.h + 1;
    let mut kinds: Vec<EstimatorKind> = Vec::new();
    for (_, k) in &opts.methods {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    let interval_alphas = [
        (ScoreName::Is80, 0.20),
        (ScoreName::Is90, 0.10),
        (ScoreName::Is95, 0.05),
    ];
    let scores = [
        ScoreName::Ls,
        ScoreName::Es,
        ScoreName::Vs,
        ScoreName::Crps,
        ScoreName::Is80,
        ScoreName::Is90,
        ScoreName::Is95,
        ScoreName::Mse,
    ];

    struct WindowOutcome {
        records: Vec<ScoreRecord>,
        failures: Vec<RepFailure>,
        window: Option<WindowResult>,
        max_coherence: f64,
    }

    let outcomes: Vec<WindowOutcome> = (0..n_windows)
        .into_par_iter()
        .map(|w| {
            let (start, len) = match opts.window_mode {
                WindowMode::Sliding => (w, opts.initial_window),
                WindowMode::Expanding => (0, opts.initial_window + w),
            };
            let test_index = start + len + opts.h - 1;
            let train_bottom = panel.values().rows(start, len).into_owned();
            let train_full = &train_bottom * s.matrix().transpose();
            let realized_bottom = panel.values().row(test_index).transpose();
            let z = aggregate(&s, &realized_bottom).expect("panel column count matches spec");

            let base = match base_forecast_all_opts(
                &train_full,
                opts.h,
                &opts.fit,
                Some(s.row_labels()),
            ) {
                Ok(b) => b,
                Err(err) => {
                    return WindowOutcome {
                        records: Vec::new(),
                        failures: vec![RepFailure {
                            replication: w,
                            method: "all".into(),
                            covariance_kind: String::new(),
                            reason: format!("base model fitting failed: {err}"),
                        }],
                        window: None,
                        max_coherence: 0.0,
                    };
                }
            };
            let estimates = estimate_kinds(&base.residuals, &kinds);
            let task = ScoreTask {
                s: &s,
                y_hat: &base.point,
                z: &z,
                methods: &opts.methods,
                scores: &scores,
                n_draws: opts.n_draws,
                crps_mode: CrpsMode::Empirical,
                interval_alphas: &interval_alphas,
                emit_mse: true,
                replication: w,
                master_seed: opts.seed,
                seed_domain: 4,
            };
            let out = crate::simulation::score_methods(&task, &estimates);

            // Per-window summary: realized vector plus each method's
            // full-structure point forecast.
            let mut forecasts = Vec::new();
            for &(method, kind) in &opts.methods {
                let est = match estimates.iter().find(|(k, _)| *k == kind) {
                    Some((_, Ok(e))) => e,
                    _ => continue,
                };
                let full_mean = match method {
                    ScoredMethod::Base => base.point.clone(),
                    ScoredMethod::Reconciled(mk) => {
                        match crate::reconcile::g_matrix(mk, &s, Some(est)) {
                            Ok(g) => s.matrix() * (&g * &base.point),
                            Err(_) => continue,
                        }
                    }
                };
                forecasts.push((method.as_str().to_string(), kind.as_str().to_string(), full_mean));
            }
            WindowOutcome {
                records: out.records,
                failures: out.failures,
                window: Some(WindowResult {
                    window_end: panel.dates()[test_index].clone(),
                    realized: z,
                    forecasts,
                }),
                max_coherence: out.max_coherence,
            }
        })
        .collect();

    let mut output = EvalOutput {
        records: Vec::new(),
        failures: Vec::new(),
        windows: Vec::new(),
        n_windows,
        max_coherence_discrepancy: 0.0,
        metadata: Vec::new(),
    };
    for o in outcomes {
        output.records.extend(o.records);
        output.failures.extend(o.failures);
        if let Some(w) = o.window {
            output.windows.push(w);
        }
        output.max_coherence_discrepancy = output.max_coherence_discrepancy.max(o.max_coherence);
    }
    output.metadata = vec![
        ("window_mode".into(), opts.window_mode.as_str().into()),
        ("initial_window".into(), opts.initial_window.to_string()),
        ("horizon".into(), opts.h.to_string()),
        (
            "covariance_kinds".into(),
            kinds
                .iter()
                .map(|k| k.as_str().to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("n_draws".into(), opts.n_draws.to_string()),
        ("seed".into(), opts.seed.to_string()),
        ("difference".into(), opts.fit.difference.to_string()),
        ("max_p".into(), opts.fit.max_p.to_string()),
        ("max_q".into(), opts.fit.max_q.to_string()),
        ("crps_estimator".into(), "empirical".into()),
        ("logscore_basis".into(), "bottom-level density".into()),
        (
            "h_step_covariance".into(),
            "1-step estimate used for all horizons".into(),
        ),
        ("n_windows".into(), n_windows.to_string()),
        (
            "max_coherence_discrepancy".into(),
            output.max_coherence_discrepancy.to_string(),
        ),
    ];
    Ok(output)
}

/// A relative-improvement MSE table grouped by hierarchy level.
#[derive(Debug, Clone)]
pub struct MseTable {
    pub level_names: Vec<String>,
    /// (method label, covariance label, one value per level column).
    pub rows: Vec<(String, String, Vec<f64>)>,
    pub baseline_method: String,
}

impl MseTable {
    pub fn to_csv_string(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["method".to_string(), "covariance".to_string()];
        header.extend(self.level_names.iter().cloned());
        wtr.write_record(&header).expect("in-memory write");
        for (method, kind, values) in &self.rows {
            let mut row = vec![method.clone(), kind.clone()];
            row.extend(values.iter().map(|v| v.to_string()));
            wtr.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8")
    }

    pub fn get(&self, method: &str, kind: &str, level: &str) -> Option<f64> {
        let col = self.level_names.iter().position(|l| l == level)?;
        self.rows
            .iter()
            .find(|(m, k, _)| m == method && k == kind)
            .map(|(_, _, v)| v[col])
    }
}

/// Names for the level groups derived from the aggregate blocks: the
/// prefix-0 block is "Total", further aggregate blocks "Level1",
/// "Level2", ..., the identity block "Bottom", plus the all-series
/// "Average".
fn level_groups(s: &SummingMatrix) -> Vec<(String, Vec<usize>)> {
    let mut groups = Vec::new();
    let mut row = 0usize;
    for (i, &count) in s.aggregates_per_level().iter().enumerate() {
        let name = if count == 1 && s.row_labels()[row] == crate::hierarchy::TOTAL_LABEL {
            "Total".to_string()
        } else {
            format!("Level{i}")
        };
        groups.push((name, (row..row + count).collect()));
        row += count;
    }
    groups.push(("Bottom".to_string(), (row..s.m()).collect()));
    groups.push(("Average".to_string(), (0..s.m()).collect()));
    groups
}

/// Builds the MSE relative-improvement table against the bottom-up rows.
///
/// Per series the MSE is the mean of its squared-error records across
/// windows (pairwise-complete against the baseline); per level group the
/// table reports `100 (mse_method - mse_bu) / mse_bu` of the group means.
pub fn mse_table(records: &[ScoreRecord], s: &SummingMatrix) -> Result<MseTable> {
    let labels = s.row_labels();
    let mse_records: Vec<&ScoreRecord> = records
        .iter()
        .filter(|r| r.score_name == ScoreName::Mse)
        .collect();
    if mse_records.is_empty() {
        return Err(Error::InvalidParameter(
            "no squared-error records present".into(),
        ));
    }
    let mut pairs: Vec<(String, String)> = Vec::new();
    for r in &mse_records {
        let p = (r.method.clone(), r.covariance_kind.clone());
        if !pairs.contains(&p) {
            pairs.push(p);
        }
    }
    let method_rank = |m: &str| match m {
        "BU" => 0,
        "OLS" => 1,
        "WLS" => 2,
        "MinT" => 3,
        "Base" => 4,
        _ => 5,
    };
    let kind_rank = |k: &str| match k {
        "sample" => 0,
        "shrinkage" => 1,
        _ => 2,
    };
    pairs.sort_by(|(m1, k1), (m2, k2)| {
        (method_rank(m1), kind_rank(k1), m1, k1).cmp(&(method_rank(m2), kind_rank(k2), m2, k2))
    });
    let baseline_kind = pairs
        .iter()
        .find(|(m, _)| m == "BU")
        .map(|(_, k)| k.clone())
        .ok_or_else(|| Error::MissingBaseline {
            method: "BU".into(),
            kind: "any".into(),
        })?;

    // Per (method, kind, series): mean squared error over windows present
    // in both the row and the baseline.
    let windows_of = |method: &str, kind: &str, series: &str| -> BTreeSet<usize> {
        mse_records
            .iter()
            .filter(|r| r.method == method && r.covariance_kind == kind && r.series_label == series)
            .map(|r| r.replication)
            .collect()
    };
    let mean_over = |method: &str, kind: &str, series: &str, windows: &BTreeSet<usize>| -> f64 {
        let vals: Vec<f64> = mse_records
            .iter()
            .filter(|r| {
                r.method == method
                    && r.covariance_kind == kind
                    && r.series_label == series
                    && windows.contains(&r.replication)
            })
            .map(|r| r.value)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    };

    let groups = level_groups(s);
    let mut rows = Vec::new();
    for (method, kind) in &pairs {
        let mut values = Vec::with_capacity(groups.len());
        for (_, series_idx) in &groups {
            let mut method_sum = 0.0;
            let mut base_sum = 0.0;
            let mut n_series = 0usize;
            for &i in series_idx {
                let label = &labels[i];
                let own = windows_of(method, kind, label);
                let base = windows_of("BU", &baseline_kind, label);
                let common: BTreeSet<usize> = own.intersection(&base).copied().collect();
                if common.is_empty() {
                    continue;
                }
                method_sum += mean_over(method, kind, label, &common);
                base_sum += mean_over("BU", &baseline_kind, label, &common);
                n_series += 1;
            }
            if n_series == 0 || base_sum <= 0.0 {
                values.push(f64::NAN);
            } else {
                values.push(100.0 * (method_sum - base_sum) / base_sum);
            }
        }
        rows.push((method.clone(), kind.clone(), values));
    }

    Ok(MseTable {
        level_names: groups.into_iter().map(|(n, _)| n).collect(),
        rows,
        baseline_method: "BU".into(),
    })
}

/// Writes the standard report bundle into a directory: `records.csv`,
/// `table.csv` (multivariate relative improvements), `mse_table.csv`,
/// one `uni_<score>.csv` per univariate score with per-series relative
/// improvements (the data behind the per-series figures), `failures.csv`
/// when failures occurred, `metadata.txt` and a plain-text `summary.txt`.
pub fn report(output: &EvalOutput, s: &SummingMatrix, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_records_csv(&output.records, dir.join("records.csv"))?;
    if !output.failures.is_empty() {
        write_failures_csv(&output.failures, dir.join("failures.csv"))?;
    }
    write_metadata(&output.metadata, dir.join("metadata.txt"))?;

    if output.records.is_empty() {
        // Nothing to tabulate; leave header-only CSVs behind.
        std::fs::write(dir.join("table.csv"), "method\n")?;
        std::fs::write(dir.join("summary.txt"), "no records\n")?;
        return Ok(());
    }
    let (baseline_kind, table) = multivariate_table_with_fallback(&output.records)?;
    std::fs::write(dir.join("table.csv"), table.to_csv_string())?;

    if output.records.iter().any(|r| r.score_name == ScoreName::Mse) {
        let mse = mse_table(&output.records, s)?;
        std::fs::write(dir.join("mse_table.csv"), mse.to_csv_string())?;
    }

    for score in [
        ScoreName::Ls,
        ScoreName::Crps,
        ScoreName::Is80,
        ScoreName::Is90,
        ScoreName::Is95,
    ] {
        if output.records.iter().any(|r| r.score_name == score) {
            let csv = per_series_table(&output.records, s, score, &baseline_kind);
            std::fs::write(
                dir.join(format!("uni_{}.csv", score.as_str().to_lowercase())),
                csv,
            )?;
        }
    }

    let mut summary = String::new();
    summary.push_str(&format!("windows evaluated: {}\n", output.n_windows));
    summary.push_str(&format!(
        "max coherence discrepancy: {:.3e}\n",
        output.max_coherence_discrepancy
    ));
    summary.push_str(&format!("failures: {}\n", output.failures.len()));
    std::fs::write(dir.join("summary.txt"), summary)?;
    Ok(())
}

/// Relative-improvement table with the spec baseline (BU, sample) when
/// present, else BU under the first available covariance kind.
pub fn multivariate_table_with_fallback(
    records: &[ScoreRecord],
) -> Result<(String, crate::simulation::RelTable)> {
    match relative_improvement(records, "BU", "sample") {
        Ok(t) => Ok(("sample".into(), t)),
        Err(Error::MissingBaseline { .. }) => {
            let kind = records
                .iter()
                .find(|r| r.method == "BU")
                .map(|r| r.covariance_kind.clone())
                .ok_or(Error::MissingBaseline {
                    method: "BU".into(),
                    kind: "any".into(),
                })?;
            let t = relative_improvement(records, "BU", &kind)?;
            Ok((kind, t))
        }
        Err(e) => Err(e),
    }
}

/// Per-series percentage relative improvements for one univariate score,
/// rows = series, columns = (method, covariance) pairs, baseline BU.
fn per_series_table(
    records: &[ScoreRecord],
    s: &SummingMatrix,
    score: ScoreName,
    baseline_kind: &str,
) -> String {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for r in records {
        if r.score_name == score {
            let p = (r.method.clone(), r.covariance_kind.clone());
            if !pairs.contains(&p) {
                pairs.push(p);
            }
        }
    }
    pairs.sort();
    let mean_for = |method: &str, kind: &str, series: &str| -> Option<f64> {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| {
                r.score_name == score
                    && r.method == method
                    && r.covariance_kind == kind
                    && r.series_label == series
            })
            .map(|r| r.value)
            .collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["series".to_string()];
    for (m, k) in &pairs {
        header.push(format!("{m}_{k}"));
    }
    wtr.write_record(&header).expect("in-memory write");
    for label in s.row_labels() {
        let mut row = vec![label.clone()];
        let base = mean_for("BU", baseline_kind, label);
        for (m, k) in &pairs {
            let cell = match (mean_for(m, k, label), base) {
                (Some(v), Some(b)) if b.abs() > 1e-300 => {
                    (100.0 * (v - b) / b.abs()).to_string()
                }
                _ => String::new(),
            };
            row.push(cell);
        }
        wtr.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Convenience entry: sliding window, default fit options and draw
/// counts for the given method list.
pub fn rolling_evaluate_default(
    panel: &PanelData,
    initial_window: usize,
    methods: Vec<(ScoredMethod, EstimatorKind)>,
    h: usize,
) -> Result<EvalOutput> {
    let mut opts = EvalOptions::new(initial_window, methods);
    opts.h = h;
    rolling_evaluate(panel, &opts)
}
