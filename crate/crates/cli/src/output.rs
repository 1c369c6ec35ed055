//! CSV emission. Floats are written with 17 significant digits so binary64
//! values round-trip; undefined entries are left empty.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use spfp::diagnostics::{Order, StudyReport};
use spfp::Field;

use crate::error::{CliError, Result};
use crate::study::{ConvergenceRow, EntropySeries};

pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.16e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn order(o: Option<&Order<f64>>) -> String {
    match o {
        Some(Order::Value(v)) => num(*v),
        Some(Order::Saturated) => "saturated".into(),
        None => String::new(),
    }
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.into(), source })?;
    }
    fs::write(path, text).map_err(|source| CliError::Write { path: path.into(), source })
}

/// `time,mass,min_f,rel_l1_err,entropy,dissipation`.
pub fn diagnostics_csv(report: &StudyReport<f64>) -> String {
    let mut out = String::from("time,mass,min_f,rel_l1_err,entropy,dissipation\n");
    let col = |s: &Option<Vec<f64>>, k: usize| opt(s.as_ref().map(|v| v[k]));
    for k in 0..report.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(report.times[k]),
            num(report.mass[k]),
            num(report.min_value[k]),
            col(&report.rel_l1_error, k),
            col(&report.entropy, k),
            col(&report.dissipation, k)
        );
    }
    out
}

/// Header `N,a,b,time` with its values, then one line per grid row `j`
/// (values along `x`).
pub fn snapshot_csv(field: &Field<f64>, time: f64) -> String {
    let g = field.grid();
    let np = g.points();
    let mut out = format!("N,a,b,time\n{},{},{},{}\n", np, num(g.a()), num(g.b()), num(time));
    for row in field.values().chunks(np) {
        let line: Vec<String> = row.iter().map(|v| num(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn snapshot_name(index: usize, time: f64) -> String {
    format!("snapshot_{index:03}_t{time:.6}.csv")
}

/// `quadrature,integrator,time,err_1..err_k,order_coarse..,order`; errors
/// and orders padded so that every row has the same shape.
pub fn orders_csv(rows: &[ConvergenceRow], grids: usize) -> String {
    let mut header = vec!["quadrature".to_string(), "integrator".into(), "time".into()];
    header.extend((1..=grids).map(|k| format!("err_{k}")));
    let pairs = grids.saturating_sub(1);
    header.extend((1..pairs).map(|k| if pairs == 2 { "order_coarse".to_string() } else { format!("order_coarse_{k}") }));
    if pairs > 0 {
        header.push("order".into());
    }
    let mut out = header.join(",") + "\n";
    for r in rows {
        let mut cells = vec![r.quadrature.name().to_string(), r.integrator.name().to_string(), num(r.time)];
        cells.extend((0..grids).map(|k| opt(r.errors.get(k).copied())));
        // Successive-difference studies have one order fewer; the finest stays in `order`.
        let skip = pairs.saturating_sub(r.orders.len());
        cells.extend((0..pairs).map(|k| order(k.checked_sub(skip).and_then(|k| r.orders.get(k)))));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// `points,time,H_delta,I_delta,dH_dt_fd`, every `stride`-th step plus the last.
pub fn entropy_csv(series: &[EntropySeries], stride: usize) -> String {
    let mut out = String::from("points,time,H_delta,I_delta,dH_dt_fd\n");
    for s in series {
        let last = s.times.len().saturating_sub(1);
        for n in (0..s.times.len()).filter(|n| n % stride == 0 || *n == last) {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.points,
                num(s.times[n]),
                num(s.entropy[n]),
                num(s.dissipation[n]),
                opt(s.dh_dt(n))
            );
        }
    }
    out
}
