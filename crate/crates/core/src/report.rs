//! Comparison reports: analytic moments against Monte-Carlo estimates.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// What is being compared, e.g. `layer 2` or `relu mu=0 c=1`.
    pub group: String,
    /// `mean`, `var`, `cov` or `chi`.
    pub quantity: String,
    pub index: String,
    pub analytic: f64,
    pub estimate: f64,
    pub se: f64,
}

impl ReportRow {
    pub fn abs_error(&self) -> f64 {
        (self.analytic - self.estimate).abs()
    }

    /// Absolute error in units of the standard error. A zero standard error gives 0 for
    /// an exact match and infinity otherwise.
    pub fn normalized_error(&self) -> f64 {
        let e = self.abs_error();
        if self.se > 0.0 {
            e / self.se
        } else if e == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentReport {
    pub title: String,
    pub metadata: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
}

impl MomentReport {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Default::default() }
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn push(
        &mut self,
        group: &str,
        quantity: &str,
        index: String,
        analytic: f64,
        estimate: f64,
        se: f64,
    ) {
        self.rows.push(ReportRow {
            group: group.to_string(),
            quantity: quantity.to_string(),
            index,
            analytic,
            estimate,
            se,
        });
    }

    pub fn rows_where<'a>(
        &'a self,
        group: Option<&'a str>,
        quantity: Option<&'a str>,
    ) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| group.is_none_or(|g| r.group == g) && quantity.is_none_or(|q| r.quantity == q))
    }

    /// Largest normalized error among matching rows, 0 when none match.
    pub fn max_normalized(&self, group: Option<&str>, quantity: Option<&str>) -> f64 {
        self.rows_where(group, quantity).map(ReportRow::normalized_error).fold(0.0, f64::max)
    }

    pub fn max_abs(&self, group: Option<&str>, quantity: Option<&str>) -> f64 {
        self.rows_where(group, quantity).map(ReportRow::abs_error).fold(0.0, f64::max)
    }

    pub fn groups(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.group.as_str()) {
                out.push(&r.group);
            }
        }
        out
    }

    /// Human-readable summary: metadata, then the worst normalized error per group and quantity.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.title);
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "  {k}: {v}");
        }
        for g in self.groups() {
            let _ = writeln!(s, "{g}");
            for q in ["mean", "var", "cov", "chi"] {
                let n = self.rows_where(Some(g), Some(q)).count();
                if n == 0 {
                    continue;
                }
                let _ = writeln!(
                    s,
                    "  {q:<5} n={n:<6} max|err|={:.3e}  max err/se={:.3}",
                    self.max_abs(Some(g), Some(q)),
                    self.max_normalized(Some(g), Some(q))
                );
            }
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("group\tquantity\tindex\tanalytic\testimate\tse\tnormalized_error\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.group,
                r.quantity,
                r.index,
                r.analytic,
                r.estimate,
                r.se,
                r.normalized_error()
            );
        }
        s
    }

    /// Writes `<stem>.txt` and `<stem>.tsv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        for (ext, body) in [("txt", self.to_text()), ("tsv", self.to_tsv())] {
            let path = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
