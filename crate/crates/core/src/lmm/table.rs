//! A minimal named-column table feeding design-matrix construction.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_present(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_some(),
            Column::Categorical(v) => v[row].is_some(),
        }
    }
}

/// Column-ordered table; all columns share one row count.
#[derive(Debug, Clone, Default)]
pub struct Table {
    columns: Vec<(String, Column)>,
}

impl Table {
    pub fn new() -> Self {
        Table::default()
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map(|(_, c)| c.len()).unwrap_or(0)
    }

    pub fn push(&mut self, name: impl Into<String>, column: Column) -> Result<()> {
        let name = name.into();
        if !self.columns.is_empty() && column.len() != self.n_rows() {
            return Err(Error::invalid(format!(
                "column {name:?} has {} rows, table has {}",
                column.len(),
                self.n_rows()
            )));
        }
        if self.get(&name).is_some() {
            return Err(Error::invalid(format!("duplicate column {name:?}")));
        }
        self.columns.push((name, column));
        Ok(())
    }

    pub fn push_numeric(&mut self, name: impl Into<String>, values: Vec<Option<f64>>) -> Result<()> {
        self.push(name, Column::Numeric(values))
    }

    pub fn push_categorical(
        &mut self,
        name: impl Into<String>,
        values: Vec<Option<String>>,
    ) -> Result<()> {
        self.push(name, Column::Categorical(values))
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
    }

    pub fn require(&self, name: &str) -> Result<&Column> {
        self.get(name).ok_or_else(|| {
            Error::invalid(format!(
                "missing column {name:?}; available: {:?}",
                self.columns.iter().map(|(n, _)| n).collect::<Vec<_>>()
            ))
        })
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }
}
