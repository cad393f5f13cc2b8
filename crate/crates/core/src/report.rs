//! Fixed-layout CSV tables for experiment outputs.
//!
//! Column order is part of the output contract. Floats are written with
//! Rust's shortest round-trip formatting so that equal values always print
//! identically; missing optional values are written as empty cells.

use std::io::Write;

use serde::Serialize;

use crate::capacity::{ConvergenceReport, Fig2Table, MultiUserReport, SweepReport};
use crate::channel::CapacityResult;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.header)?;
        for r in &self.rows {
            wtr.write_record(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn joined(xs: &[f64]) -> String {
    xs.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

pub fn single_capacity_table(c: &CapacityResult) -> Table {
    let mut t = Table::new(vec![
        "lambda",
        "bits_per_symbol",
        "bits_per_time",
        "input_dist",
        "iterations",
        "gap_bound",
        "converged",
    ]);
    t.push(vec![
        num(c.lambda),
        num(c.bits_per_symbol),
        num(c.bits_per_time),
        joined(&c.input_dist),
        c.iterations.to_string(),
        num(c.gap_bound),
        c.converged.to_string(),
    ]);
    t
}

pub fn fig2_table(f: &Fig2Table) -> Table {
    let mut t = Table::new(vec!["mu", "lambda", "rho", "bits_per_symbol", "bits_per_time"]);
    for r in &f.rows {
        t.push(vec![
            num(r.mu),
            num(r.lambda),
            num(r.rho),
            num(r.bits_per_symbol),
            num(r.bits_per_time),
        ]);
    }
    t
}

pub fn sweep_table(s: &SweepReport) -> Table {
    let mut t = Table::new(vec![
        "family",
        "sigma_star",
        "k0",
        "pi0_plus_pi1",
        "pi0",
        "bits_per_symbol",
        "bits_per_time",
        "mixture_bits_per_symbol",
    ]);
    for r in &s.rows {
        t.push(vec![
            r.label.clone(),
            opt(r.sigma_star),
            opt(r.k0),
            opt(r.pi0_plus_pi1),
            num(r.pi0),
            num(r.bits_per_symbol),
            num(r.bits_per_time),
            num(r.mixture_bits_per_symbol),
        ]);
    }
    t
}

/// One row per user followed by a `sum` row carrying the pooled values.
pub fn multi_user_table(m: &MultiUserReport) -> Table {
    let mut t = Table::new(vec![
        "user",
        "lambda",
        "samples",
        "weight",
        "bits_per_symbol",
        "bits_per_symbol_se",
        "bits_per_time",
    ]);
    for (u, w) in m.per_user.iter().zip(&m.weights) {
        t.push(vec![
            u.user.to_string(),
            num(u.lambda),
            u.samples.to_string(),
            num(*w),
            num(u.c_ind_sym),
            num(u.c_ind_sym_se),
            num(u.c_ind_time),
        ]);
    }
    let lambda: f64 = m.per_user.iter().map(|u| u.lambda).sum();
    let samples: usize = m.per_user.iter().map(|u| u.samples).sum();
    t.push(vec![
        "sum".into(),
        num(lambda),
        samples.to_string(),
        num(1.0),
        num(m.c_sum_sym),
        num(m.c_sum_sym_se),
        num(m.c_sum_time),
    ]);
    t
}

pub fn convergence_table(c: &ConvergenceReport) -> Table {
    let mut t = Table::new(vec![
        "k",
        "arrivals",
        "tv_queue",
        "tv_std_error",
        "bits_per_symbol",
        "bits_per_symbol_se",
        "cap_gap_sym",
        "cap_gap_time",
        "g1",
        "g1_std_error",
        "g2",
        "b2_g2",
    ]);
    for r in &c.rows {
        t.push(vec![
            r.k.to_string(),
            r.arrivals.to_string(),
            num(r.tv_queue),
            num(r.tv_std_error),
            num(r.c_sum_sym),
            num(r.c_sum_sym_se),
            num(r.cap_gap_sym),
            num(r.cap_gap_time),
            num(r.g1),
            num(r.g1_std_error),
            num(r.g2),
            num(r.b2_g2),
        ]);
    }
    t
}

pub fn service_comparison_table(c: &ConvergenceReport) -> Table {
    let mut t = Table::new(vec![
        "service",
        "k",
        "bits_per_symbol",
        "bits_per_symbol_se",
        "analytic_bits_per_symbol",
        "tv_queue",
    ]);
    for r in &c.comparison {
        t.push(vec![
            r.label.clone(),
            r.k.to_string(),
            num(r.c_sim_sym),
            num(r.c_sim_sym_se),
            num(r.c_analytic_sym),
            num(r.tv_queue),
        ]);
    }
    t
}

pub fn write_json<W: Write, T: Serialize>(w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(w, value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::Fig2Row;

    #[test]
    fn fig2_csv_layout() {
        let f = Fig2Table {
            rows: vec![Fig2Row {
                mu: 1.0,
                lambda: 0.5,
                rho: 0.5,
                bits_per_symbol: 0.28,
                bits_per_time: 0.14,
            }],
            skipped: vec![],
            assertions: vec![],
        };
        let mut buf = Vec::new();
        fig2_table(&f).write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "mu,lambda,rho,bits_per_symbol,bits_per_time\n1,0.5,0.5,0.28,0.14\n"
        );
    }

    #[test]
    fn optional_cells_empty() {
        assert_eq!(opt(None), "");
        assert_eq!(opt(Some(0.25)), "0.25");
        assert_eq!(joined(&[0.5, 0.5]), "0.5;0.5");
    }
}
