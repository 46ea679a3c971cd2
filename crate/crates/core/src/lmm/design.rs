//! Design-matrix construction: reference-level dummy coding, numeric
//! standardization, interaction products, and group indexing.

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::zscore;

use super::formula::{ModelSpec, Term};
use super::table::{Column, Table};

#[derive(Debug, Clone)]
pub struct TermColumns {
    pub term: String,
    /// Columns of `x` belonging to this term; its length is the term's df.
    pub columns: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub y: DVector<f64>,
    /// Fixed-effect matrix, intercept in column 0.
    pub x: DMatrix<f64>,
    pub col_names: Vec<String>,
    /// Non-intercept terms in formula order.
    pub terms: Vec<TermColumns>,
    /// Row -> grouping-level index.
    pub group_idx: Vec<usize>,
    pub group_levels: Vec<String>,
    /// Rows dropped for missing response, covariate, or group.
    pub n_dropped: usize,
}

impl DesignMatrix {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_levels.len()
    }

    /// Per-group row indices, in group-level order.
    pub fn group_rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.n_groups()];
        for (i, &g) in self.group_idx.iter().enumerate() {
            rows[g].push(i);
        }
        rows
    }
}

fn stringify(col: &Column, row: usize) -> Option<String> {
    match col {
        Column::Categorical(v) => v[row].clone(),
        Column::Numeric(v) => v[row].map(|x| x.to_string()),
    }
}

/// Coded (numeric) columns for one variable over the retained rows.
struct CodedVariable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

fn code_variable(
    name: &str,
    col: &Column,
    rows: &[usize],
    reference_levels: &HashMap<String, String>,
) -> Result<CodedVariable> {
    match col {
        Column::Numeric(values) => {
            let raw: Vec<f64> = rows.iter().map(|&r| values[r].unwrap()).collect();
            let standardized = zscore(&raw)
                .map_err(|_| Error::invalid(format!("numeric covariate {name:?} is constant")))?;
            Ok(CodedVariable {
                names: vec![name.to_string()],
                columns: vec![standardized],
            })
        }
        Column::Categorical(values) => {
            let mut levels: BTreeSet<String> = rows
                .iter()
                .map(|&r| values[r].clone().unwrap())
                .collect();
            if levels.len() < 2 {
                return Err(Error::invalid(format!(
                    "categorical covariate {name:?} has a single level"
                )));
            }
            let reference = match reference_levels.get(name) {
                Some(level) => {
                    if !levels.remove(level) {
                        return Err(Error::invalid(format!(
                            "reference level {level:?} not present in {name:?}"
                        )));
                    }
                    level.clone()
                }
                None => {
                    let first = levels.iter().next().unwrap().clone();
                    levels.remove(&first);
                    first
                }
            };
            let _ = reference;
            let mut names = Vec::new();
            let mut columns = Vec::new();
            for level in levels {
                names.push(format!("{name}[{level}]"));
                columns.push(
                    rows.iter()
                        .map(|&r| (values[r].as_deref() == Some(level.as_str())) as u8 as f64)
                        .collect(),
                );
            }
            Ok(CodedVariable { names, columns })
        }
    }
}

/// Build the fixed-effect design from a model spec and a joined table.
///
/// Rows with any missing response, covariate, or group value are dropped
/// and counted. Numeric covariates are standardized over the retained
/// rows; categoricals get reference-level dummy coding (reference taken
/// from `reference_levels` or the first level in sort order); interaction
/// columns are elementwise products of the coded columns.
pub fn build_design(
    spec: &ModelSpec,
    data: &Table,
    reference_levels: &HashMap<String, String>,
) -> Result<DesignMatrix> {
    let response_col = data.require(&spec.response)?;
    let group_col = data.require(&spec.grouping)?;
    let mut var_names: Vec<&str> = Vec::new();
    for term in &spec.terms {
        for v in term.variables() {
            if !var_names.contains(&v) {
                var_names.push(v);
            }
        }
    }
    let var_cols: Vec<&Column> = var_names
        .iter()
        .map(|v| data.require(v))
        .collect::<Result<_>>()?;

    let response_values = match response_col {
        Column::Numeric(v) => v,
        Column::Categorical(_) => {
            return Err(Error::invalid(format!(
                "response {:?} must be numeric",
                spec.response
            )))
        }
    };

    // Complete-case rows.
    let rows: Vec<usize> = (0..data.n_rows())
        .filter(|&r| {
            response_values[r].is_some()
                && group_col.is_present(r)
                && var_cols.iter().all(|c| c.is_present(r))
        })
        .collect();
    let n_dropped = data.n_rows() - rows.len();
    if rows.is_empty() {
        return Err(Error::invalid("no complete rows for the model"));
    }

    // Group index.
    let group_labels: Vec<String> = rows
        .iter()
        .map(|&r| stringify(group_col, r).unwrap())
        .collect();
    let group_levels: Vec<String> = {
        let set: BTreeSet<&String> = group_labels.iter().collect();
        set.into_iter().cloned().collect()
    };
    if group_levels.len() < 2 {
        return Err(Error::invalid(format!(
            "grouping column {:?} needs at least 2 levels",
            spec.grouping
        )));
    }
    let level_index: HashMap<&str, usize> = group_levels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let group_idx: Vec<usize> = group_labels
        .iter()
        .map(|l| level_index[l.as_str()])
        .collect();

    // Code each variable once, then assemble term columns.
    let mut coded: HashMap<&str, CodedVariable> = HashMap::new();
    for (name, col) in var_names.iter().zip(&var_cols) {
        coded.insert(name, code_variable(name, col, &rows, reference_levels)?);
    }

    let n = rows.len();
    let mut col_names = vec!["(Intercept)".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut terms = Vec::new();
    for term in &spec.terms {
        let start = columns.len();
        match term {
            Term::Main(v) => {
                let cv = &coded[v.as_str()];
                col_names.extend(cv.names.iter().cloned());
                columns.extend(cv.columns.iter().cloned());
            }
            Term::Interaction(a, b) => {
                let (ca, cb) = (&coded[a.as_str()], &coded[b.as_str()]);
                for (na, va) in ca.names.iter().zip(&ca.columns) {
                    for (nb, vb) in cb.names.iter().zip(&cb.columns) {
                        col_names.push(format!("{na}:{nb}"));
                        columns.push(va.iter().zip(vb).map(|(x, y)| x * y).collect());
                    }
                }
            }
        }
        terms.push(TermColumns {
            term: term.label(),
            columns: start..columns.len(),
        });
    }

    let p = columns.len();
    let mut x = DMatrix::zeros(n, p);
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            x[(i, j)] = v;
        }
    }
    let y = DVector::from_iterator(n, rows.iter().map(|&r| response_values[r].unwrap()));

    Ok(DesignMatrix {
        y,
        x,
        col_names,
        terms,
        group_idx,
        group_levels,
        n_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(s: &str) -> ModelSpec {
        s.parse().unwrap()
    }

    fn cat(values: &[&str]) -> Column {
        Column::Categorical(values.iter().map(|v| Some(v.to_string())).collect())
    }

    #[test]
    fn two_level_factor_reference_coding() {
        let mut t = Table::new();
        t.push_numeric("y", vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)])
            .unwrap();
        t.push("f", cat(&["a", "b", "a", "b"])).unwrap();
        t.push("g", cat(&["g1", "g1", "g2", "g2"])).unwrap();
        let design = build_design(&spec("y ~ f, group = g"), &t, &HashMap::new()).unwrap();
        assert_eq!(design.col_names, vec!["(Intercept)", "f[b]"]);
        let dummy: Vec<f64> = design.x.column(1).iter().copied().collect();
        assert_eq!(dummy, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn interaction_is_elementwise_product() {
        let mut t = Table::new();
        t.push_numeric("y", vec![Some(1.0); 4]).unwrap();
        t.push("a", cat(&["x", "y", "y", "x"])).unwrap();
        t.push("b", cat(&["p", "p", "q", "q"])).unwrap();
        t.push("g", cat(&["g1", "g1", "g2", "g2"])).unwrap();
        let design =
            build_design(&spec("y ~ a + b + a:b, group = g"), &t, &HashMap::new()).unwrap();
        assert_eq!(
            design.col_names,
            vec!["(Intercept)", "a[y]", "b[q]", "a[y]:b[q]"]
        );
        let a: Vec<f64> = design.x.column(1).iter().copied().collect();
        let b: Vec<f64> = design.x.column(2).iter().copied().collect();
        let ab: Vec<f64> = design.x.column(3).iter().copied().collect();
        let expect: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        assert_eq!(ab, expect);
    }

    #[test]
    fn numeric_covariates_are_standardized() {
        let mut t = Table::new();
        t.push_numeric("y", vec![Some(1.0), Some(2.0), Some(3.0)]).unwrap();
        t.push_numeric("x", vec![Some(1.0), Some(2.0), Some(3.0)]).unwrap();
        t.push("g", cat(&["g1", "g2", "g1"])).unwrap();
        let design = build_design(&spec("y ~ x, group = g"), &t, &HashMap::new()).unwrap();
        let coded: Vec<f64> = design.x.column(1).iter().copied().collect();
        assert_eq!(coded, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_values_drop_rows_with_count() {
        let mut t = Table::new();
        t.push_numeric("y", vec![Some(1.0), None, Some(3.0), Some(4.0)])
            .unwrap();
        t.push_numeric("x", vec![Some(1.0), Some(2.0), None, Some(4.0)])
            .unwrap();
        t.push("g", cat(&["g1", "g1", "g2", "g2"])).unwrap();
        let design = build_design(&spec("y ~ x, group = g"), &t, &HashMap::new()).unwrap();
        assert_eq!(design.n_obs(), 2);
        assert_eq!(design.n_dropped, 2);
    }

    #[test]
    fn explicit_reference_level_is_honored() {
        let mut t = Table::new();
        t.push_numeric("y", vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)])
            .unwrap();
        t.push("f", cat(&["a", "b", "a", "b"])).unwrap();
        t.push("g", cat(&["g1", "g1", "g2", "g2"])).unwrap();
        let refs = HashMap::from([("f".to_string(), "b".to_string())]);
        let design = build_design(&spec("y ~ f, group = g"), &t, &refs).unwrap();
        assert_eq!(design.col_names[1], "f[a]");
    }

    #[test]
    fn single_group_level_is_rejected() {
        let mut t = Table::new();
        t.push_numeric("y", vec![Some(1.0), Some(2.0)]).unwrap();
        t.push("g", cat(&["g1", "g1"])).unwrap();
        t.push_numeric("x", vec![Some(0.0), Some(1.0)]).unwrap();
        assert!(build_design(&spec("y ~ x, group = g"), &t, &HashMap::new()).is_err());
    }
}
