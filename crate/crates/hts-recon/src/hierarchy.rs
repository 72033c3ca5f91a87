//! Hierarchy specification and the summing matrix.
//!
//! A hierarchy is described by its bottom-level labels plus a list of
//! prefix lengths: each prefix length defines one aggregation level by
//! grouping bottom labels that share a prefix of that length (length 0 is
//! the grand total). The summing matrix S maps the n bottom series to all
//! m series, `y = S b`, with aggregate rows first and the identity block
//! for the bottom series last.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::path::Path;

/// Label used for the prefix-length-0 (grand total) row.
pub const TOTAL_LABEL: &str = "Total";

/// Prefix-based description of a strict hierarchy (tree).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySpec {
    bottom_labels: Vec<String>,
    level_prefix_lengths: Vec<usize>,
}

impl HierarchySpec {
    /// Validates and wraps a hierarchy description.
    ///
    /// Bottom labels must be unique and non-empty, every prefix length
    /// strictly shorter than every bottom label, and the prefix lengths
    /// strictly increasing. An empty prefix list is allowed and yields
    /// S = I (no aggregation).
    pub fn new(bottom_labels: Vec<String>, level_prefix_lengths: Vec<usize>) -> Result<Self> {
        if bottom_labels.is_empty() {
            return Err(Error::EmptySpec);
        }
        let mut seen = std::collections::HashSet::new();
        for label in &bottom_labels {
            if label.is_empty() {
                return Err(Error::EmptyLabel);
            }
            if !seen.insert(label.clone()) {
                return Err(Error::DuplicateLabel(label.clone()));
            }
        }
        for w in level_prefix_lengths.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::PrefixOrder);
            }
        }
        for &len in &level_prefix_lengths {
            for label in &bottom_labels {
                if len >= label.chars().count() {
                    return Err(Error::PrefixTooLong {
                        length: len,
                        label: label.clone(),
                    });
                }
            }
        }
        Ok(Self {
            bottom_labels,
            level_prefix_lengths,
        })
    }

    /// Parses the text exchange format: line 1 holds comma-separated
    /// prefix lengths, each further non-empty line one bottom label.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParameter("hierarchy file is empty".into()))?;
        let prefixes: Vec<usize> = header
            .split(',')
            .map(|tok| tok.trim())
            .filter(|tok| !tok.is_empty())
            .map(|tok| {
                tok.parse::<usize>().map_err(|_| {
                    Error::InvalidParameter(format!("bad prefix length `{tok}` in hierarchy file"))
                })
            })
            .collect::<Result<_>>()?;
        let labels: Vec<String> = lines
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        Self::new(labels, prefixes)
    }

    /// Reads the exchange format from a file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn bottom_labels(&self) -> &[String] {
        &self.bottom_labels
    }

    pub fn level_prefix_lengths(&self) -> &[usize] {
        &self.level_prefix_lengths
    }

    /// Number of bottom series.
    pub fn n_bottom(&self) -> usize {
        self.bottom_labels.len()
    }

    /// Serializes back to the text exchange format.
    pub fn to_text(&self) -> String {
        let header = self
            .level_prefix_lengths
            .iter()
            .map(|l| l.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        out.push_str(&header);
        out.push('\n');
        for label in &self.bottom_labels {
            out.push_str(label);
            out.push('\n');
        }
        out
    }
}

/// Dense 0/1 summing matrix with its row labels.
///
/// Aggregate rows come first (levels top-down, lexicographic within a
/// level), the bottom n rows are the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SummingMatrix {
    s: DMatrix<f64>,
    row_labels: Vec<String>,
    n_aggregate_per_level: Vec<usize>,
}

impl SummingMatrix {
    /// Total number of series (rows of S).
    pub fn m(&self) -> usize {
        self.s.nrows()
    }

    /// Number of bottom series (columns of S).
    pub fn n(&self) -> usize {
        self.s.ncols()
    }

    /// Number of aggregate series, m - n.
    pub fn m_star(&self) -> usize {
        self.m() - self.n()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn row_labels(&self) -> &[String] {
        &self.row_labels
    }

    /// Bottom-series labels (last n row labels).
    pub fn bottom_labels(&self) -> &[String] {
        &self.row_labels[self.m_star()..]
    }

    /// Number of aggregate rows contributed by each level, top-down.
    pub fn aggregates_per_level(&self) -> &[usize] {
        &self.n_aggregate_per_level
    }

    /// The aggregate block C, i.e. the first m - n rows of S.
    pub fn aggregate_block(&self) -> DMatrix<f64> {
        self.s.rows(0, self.m_star()).into_owned()
    }

    /// Splits a full-structure vector into (aggregate block, bottom block).
    pub fn split(&self, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch {
                context: "full-structure vector",
                expected: self.m(),
                actual: y.len(),
            });
        }
        let m_star = self.m_star();
        Ok((
            y.rows(0, m_star).into_owned(),
            y.rows(m_star, self.n()).into_owned(),
        ))
    }
}

/// Builds the summing matrix for a hierarchy spec.
///
/// Aggregate rows are ordered by level (shortest prefix first) and
/// lexicographically within a level; the identity block for the bottom
/// series follows in the label order of the spec.
pub fn build_summing_matrix(spec: &HierarchySpec) -> Result<SummingMatrix> {
    let n = spec.n_bottom();
    let mut rows: Vec<(String, Vec<usize>)> = Vec::new();
    let mut per_level = Vec::with_capacity(spec.level_prefix_lengths().len());

    for &len in spec.level_prefix_lengths() {
        // BTreeMap keeps the prefixes of one level in lexicographic order.
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (j, label) in spec.bottom_labels().iter().enumerate() {
            let prefix: String = label.chars().take(len).collect();
            groups.entry(prefix).or_default().push(j);
        }
        per_level.push(groups.len());
        for (prefix, members) in groups {
            let row_label = if len == 0 {
                TOTAL_LABEL.to_string()
            } else {
                prefix
            };
            rows.push((row_label, members));
        }
    }

    let m_star = rows.len();
    let m = m_star + n;
    let mut s = DMatrix::<f64>::zeros(m, n);
    let mut row_labels = Vec::with_capacity(m);
    for (i, (label, members)) in rows.into_iter().enumerate() {
        for j in members {
            s[(i, j)] = 1.0;
        }
        row_labels.push(label);
    }
    for (j, label) in spec.bottom_labels().iter().enumerate() {
        s[(m_star + j, j)] = 1.0;
        row_labels.push(label.clone());
    }

    Ok(SummingMatrix {
        s,
        row_labels,
        n_aggregate_per_level: per_level,
    })
}

/// y = S b.
pub fn aggregate(s: &SummingMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    if b.len() != s.n() {
        return Err(Error::DimensionMismatch {
            context: "bottom vector",
            expected: s.n(),
            actual: b.len(),
        });
    }
    Ok(s.matrix() * b)
}

/// Max-norm violation of the aggregation constraints.
///
/// Splitting S as [C; I], the discrepancy is `max|y_agg - C y_bottom|`,
/// which is zero exactly when y lies in the column span of S.
pub fn coherence_discrepancy(s: &SummingMatrix, y: &DVector<f64>) -> Result<f64> {
    let (y_agg, y_bottom) = s.split(y)?;
    if s.m_star() == 0 {
        return Ok(0.0);
    }
    let implied = s.aggregate_block() * y_bottom;
    Ok((y_agg - implied).amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn two_level_spec() -> HierarchySpec {
        HierarchySpec::new(
            ["AA", "AB", "AC", "BA", "BB"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn two_level_matrix_entry_exact() {
        let s = build_summing_matrix(&two_level_spec()).unwrap();
        assert_eq!((s.m(), s.n()), (8, 5));
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(8, 5, &[
            1.0, 1.0, 1.0, 1.0, 1.0,
            1.0, 1.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0, 1.0,
            1.0, 0.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        assert_eq!(s.matrix(), &expected);
        assert_eq!(
            s.row_labels(),
            &["Total", "A", "B", "AA", "AB", "AC", "BA", "BB"]
        );
    }

    #[test]
    fn degenerate_single_series() {
        let spec = HierarchySpec::new(vec!["A".into()], vec![0]).unwrap();
        let s = build_summing_matrix(&spec).unwrap();
        assert_eq!((s.m(), s.n()), (2, 1));
        assert_eq!(s.matrix().as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn thirty_six_bottom_in_six_groups() {
        let labels: Vec<String> = ('A'..='F')
            .flat_map(|g| (1..=6).map(move |k| format!("{g}{k}")))
            .collect();
        let spec = HierarchySpec::new(labels, vec![0, 1]).unwrap();
        let s = build_summing_matrix(&spec).unwrap();
        assert_eq!((s.m(), s.n()), (43, 36));
        let row_sums: Vec<f64> = (0..s.m_star())
            .map(|i| s.matrix().row(i).sum())
            .collect();
        assert_eq!(row_sums, vec![36.0, 6.0, 6.0, 6.0, 6.0, 6.0, 6.0]);
    }

    #[test]
    fn aggregate_examples() {
        let s = build_summing_matrix(&two_level_spec()).unwrap();
        let ones = DVector::from_element(5, 1.0);
        let y = aggregate(&s, &ones).unwrap();
        assert_eq!(
            y.as_slice(),
            &[5.0, 3.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0]
        );
        let zero = DVector::zeros(5);
        assert_eq!(aggregate(&s, &zero).unwrap(), DVector::zeros(8));
        let b = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = aggregate(&s, &b).unwrap();
        assert_eq!(
            y.as_slice(),
            &[15.0, 6.0, 9.0, 1.0, 2.0, 3.0, 4.0, 5.0]
        );
    }

    #[test]
    fn aggregate_rejects_wrong_length() {
        let s = build_summing_matrix(&two_level_spec()).unwrap();
        assert!(aggregate(&s, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn coherence_zero_for_aggregated_vectors() {
        let s = build_summing_matrix(&two_level_spec()).unwrap();
        let b = DVector::from_row_slice(&[0.3, -1.2, 4.0, 2.5, -0.7]);
        let y = aggregate(&s, &b).unwrap();
        assert_relative_eq!(coherence_discrepancy(&s, &y).unwrap(), 0.0);
    }

    #[test]
    fn coherence_unit_violation() {
        let s = build_summing_matrix(&two_level_spec()).unwrap();
        let mut y = DVector::zeros(8);
        y[0] = 1.0;
        assert_relative_eq!(coherence_discrepancy(&s, &y).unwrap(), 1.0);
    }

    #[test]
    fn spec_validation_errors() {
        assert!(matches!(
            HierarchySpec::new(vec![], vec![0]),
            Err(Error::EmptySpec)
        ));
        assert!(matches!(
            HierarchySpec::new(vec!["AA".into(), "AA".into()], vec![0]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(
            HierarchySpec::new(vec!["AA".into(), "B".into()], vec![0, 1]),
            Err(Error::PrefixTooLong { .. })
        ));
        assert!(matches!(
            HierarchySpec::new(vec!["AAA".into()], vec![1, 1]),
            Err(Error::PrefixOrder)
        ));
    }

    #[test]
    fn text_round_trip() {
        let spec = two_level_spec();
        let parsed = HierarchySpec::from_text(&spec.to_text()).unwrap();
        assert_eq!(spec, parsed);
    }

    #[test]
    fn sts_is_positive_definite() {
        let s = build_summing_matrix(&two_level_spec()).unwrap();
        let sts = s.matrix().transpose() * s.matrix();
        assert!(nalgebra::Cholesky::new(sts).is_some());
    }
}
