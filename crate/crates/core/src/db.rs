//! Utility databases: one row per respondent, one column per outcome.

use std::io::{Read, Write};
use std::path::Path;

use crate::basis::Domain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityRecord {
    pub respondent: String,
    /// One entry per outcome in canonical order; `None` is missing.
    pub values: Vec<Option<f64>>,
}

impl UtilityRecord {
    pub fn observed_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityDatabase {
    pub num_outcomes: usize,
    pub records: Vec<UtilityRecord>,
}

impl UtilityDatabase {
    pub fn new(num_outcomes: usize) -> Self {
        Self {
            num_outcomes,
            records: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: UtilityRecord) -> Result<()> {
        if record.values.len() != self.num_outcomes {
            return Err(Error::DimensionMismatch {
                expected: self.num_outcomes,
                got: record.values.len(),
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn observed_fraction(&self) -> f64 {
        let total = self.records.len() * self.num_outcomes;
        if total == 0 {
            return 0.0;
        }
        let seen: usize = self.records.iter().map(UtilityRecord::observed_count).sum();
        seen as f64 / total as f64
    }

    /// Parse `respondent,<outcome key>,...`. Columns may appear in any order;
    /// outcomes without a column are missing for every respondent.
    pub fn read_csv<R: Read>(domain: &Domain, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("respondent") {
            return Err(Error::Malformed("first column must be `respondent`".into()));
        }
        let n = domain.num_outcomes();
        let mut column_outcome = Vec::with_capacity(headers.len() - 1);
        let mut seen = vec![false; n];
        for key in headers.iter().skip(1) {
            let o = domain.parse_outcome_key(key.trim())?;
            if std::mem::replace(&mut seen[o], true) {
                return Err(Error::Malformed(format!("duplicate column `{key}`")));
            }
            column_outcome.push(o);
        }
        let mut db = Self::new(n);
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            if row.len() != headers.len() {
                return Err(Error::Malformed(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    row.len(),
                    headers.len()
                )));
            }
            let mut values = vec![None; n];
            for (cell, &o) in row.iter().skip(1).zip(&column_outcome) {
                let cell = cell.trim();
                if cell.is_empty() {
                    continue;
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| Error::Malformed(format!("row {}: bad number `{cell}`", line + 2)))?;
                if !v.is_finite() {
                    return Err(Error::Malformed(format!("row {}: non-finite value", line + 2)));
                }
                values[o] = Some(v);
            }
            db.records.push(UtilityRecord {
                respondent: row[0].to_string(),
                values,
            });
        }
        Ok(db)
    }

    pub fn write_csv<W: Write>(&self, domain: &Domain, writer: W) -> Result<()> {
        if domain.num_outcomes() != self.num_outcomes {
            return Err(Error::Mismatch(format!(
                "database has {} outcomes, domain has {}",
                self.num_outcomes,
                domain.num_outcomes()
            )));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["respondent".to_string()];
        header.extend((0..self.num_outcomes).map(|o| domain.outcome_key(o)));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.respondent.clone()];
            row.extend(r.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(domain: &Domain, path: &Path) -> Result<Self> {
        Self::read_csv(domain, std::fs::File::open(path)?)
    }

    pub fn save(&self, domain: &Domain, path: &Path) -> Result<()> {
        self.write_csv(domain, std::fs::File::create(path)?)
    }
}
