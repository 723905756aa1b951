//! CSV tables with `# key=value` metadata lines above the header.

use std::path::Path;

use xolscreen_core::sim::ValidationReport;
use xolscreen_core::{ContractMenu, MarketParams, MenuIndex};
use xolscreen_core::screening::LoadingCurve;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { meta: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn with_market(mut self, m: &MarketParams) -> Self {
        for (k, v) in [("lambda", m.lambda), ("T", m.horizon_t), ("gamma_I", m.gamma_i), ("x_C", m.x_c), ("x_I", m.x_i)] {
            self.meta.push((k.to_string(), num(v)));
        }
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Csv(e.to_string()))?;
        out.push_str(&String::from_utf8(bytes).map_err(|e| CliError::Csv(e.to_string()))?);
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut meta = Vec::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(m) = line.strip_prefix('#') {
                let (k, v) = m.trim().split_once('=').ok_or_else(|| CliError::Csv(format!("bad metadata line `{line}`")))?;
                meta.push((k.to_string(), v.to_string()));
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let columns = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { meta, columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_csv()?).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)
    }

    fn index(&self, name: &str) -> Result<usize, CliError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| CliError::Csv(format!("no column `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<&str>, CliError> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    pub fn column_f64(&self, name: &str) -> Result<Vec<f64>, CliError> {
        self.column(name)?
            .into_iter()
            .map(|v| v.parse().map_err(|_| CliError::Csv(format!("column `{name}`: `{v}` is not a number"))))
            .collect()
    }
}

/// gamma, loading, deductible, premium_rate (attitude) or
/// theta, loading, deductible, premium_rate, gamma_of_theta (type).
pub fn menu_table(menu: &ContractMenu, market: &MarketParams) -> Table {
    let mut t = match menu.index {
        MenuIndex::Gamma => Table::new(&["gamma", "loading", "deductible", "premium_rate"]),
        MenuIndex::Theta => Table::new(&["theta", "loading", "deductible", "premium_rate", "gamma_of_theta"]),
    }
    .with_market(market);
    for ((x, c), g) in menu.grid.iter().zip(&menu.contracts).zip(&menu.gamma) {
        let mut row = vec![num(*x), num(c.loading), num(c.deductible), num(c.premium_rate)];
        if menu.index == MenuIndex::Theta {
            row.push(num(*g));
        }
        t.push(row);
    }
    t
}

pub fn curve_table(curve: &LoadingCurve, market: &MarketParams) -> Table {
    let mut t = Table::new(&["theta", "xi", "method", "C"]).with_market(market);
    let c = num(curve.c);
    for (th, xi) in curve.theta_grid.iter().zip(&curve.xi) {
        t.push(vec![num(*th), num(*xi), curve.method.name().to_string(), c.clone()]);
    }
    t
}

/// Two-column key/value report.
pub fn report_table(entries: &[(String, String)], market: &MarketParams) -> Table {
    let mut t = Table::new(&["key", "value"]).with_market(market);
    for (k, v) in entries {
        t.push(vec![k.clone(), v.clone()]);
    }
    t
}

pub fn validation_entries(r: &ValidationReport) -> Vec<(String, String)> {
    let mut e = Vec::new();
    for (side, check, moments) in [("customer", &r.customer, &r.sim.customer), ("insurer", &r.insurer, &r.sim.insurer)] {
        e.push((format!("{side}_mean"), num(moments.mean)));
        e.push((format!("{side}_variance"), num(moments.variance())));
        e.push((format!("{side}_se_mean"), num(moments.se_mean())));
        e.push((format!("{side}_se_variance"), num(moments.se_variance())));
        e.push((format!("{side}_value_analytic"), num(check.analytic)));
        e.push((format!("{side}_value_simulated"), num(check.simulated)));
        e.push((format!("{side}_value_se"), num(check.std_error)));
        e.push((format!("{side}_z"), num(check.z)));
    }
    e.push(("conservation_error".into(), num(r.sim.conservation_error)));
    e.push(("passed".into(), r.passed().to_string()));
    e
}
