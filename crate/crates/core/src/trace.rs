//! Iteration traces and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::ell::EllModel;
use crate::error::{Error, Result};

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    ConvergedGap,
    ConvergedGrad,
    MaxIters,
    Diverged,
    /// SGD only: the sampled gradient met `‖g‖² ≤ ε/4`.
    SurrogateStop,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::ConvergedGap => "ConvergedGap",
            Status::ConvergedGrad => "ConvergedGrad",
            Status::MaxIters => "MaxIters",
            Status::Diverged => "Diverged",
            Status::SurrogateStop => "SurrogateStop",
        }
    }

    pub fn converged(&self) -> bool {
        matches!(self, Status::ConvergedGap | Status::ConvergedGrad)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Step size rule of the deterministic solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `γ = ∫₀¹ dv/ℓ(g + g v)`.
    PaperIntegral,
    FixedStep(f64),
    /// `γ = 1/ℓ(2g)`.
    LowerBound,
    /// `γ = ∫₀¹ dv/ℓ(g + g v) / divisor`; with `divisor = 5r` this is the
    /// noiseless stochastic step.
    ScaledIntegral { divisor: f64 },
}

/// State at iterate `k`. `step` is the step taken from `x` to the next
/// iterate, zero on the final record.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub k: usize,
    pub x: Vec<f64>,
    pub f_val: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub safeguard_hit: bool,
    pub batch: Option<u64>,
    pub true_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<Record>,
    pub status: Status,
    pub rule: StepRule,
    /// The ℓ model that produced the steps, when the rule uses one.
    pub ell: Option<EllModel>,
}

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Format(format!("line {line}: bad number '{s}'")))
}

impl Trace {
    /// Number of steps taken.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("trace has at least one record")
    }

    /// First `k` whose record satisfies `pred`.
    pub fn first_k<P: Fn(&Record) -> bool>(&self, pred: P) -> Option<usize> {
        self.records.iter().find(|r| pred(r)).map(|r| r.k)
    }

    fn stochastic(&self) -> bool {
        self.records.iter().any(|r| r.batch.is_some())
    }

    /// CSV with header `k,x0,…,x{d-1},f,grad_norm,step,safeguard`, plus
    /// `batch,true_grad_norm` for stochastic traces. Reals use 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let dim = self.records.first().map_or(0, |r| r.x.len());
        let stochastic = self.stochastic();
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = vec!["k".into()];
        header.extend((0..dim).map(|i| format!("x{i}")));
        header.extend(["f", "grad_norm", "step", "safeguard"].map(String::from));
        if stochastic {
            header.extend(["batch", "true_grad_norm"].map(String::from));
        }
        let io = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(&header).map_err(io)?;
        for r in &self.records {
            let mut row = vec![r.k.to_string()];
            row.extend(r.x.iter().map(|&v| fmt_f(v)));
            row.push(fmt_f(r.f_val));
            row.push(fmt_f(r.grad_norm));
            row.push(fmt_f(r.step));
            row.push(u8::from(r.safeguard_hit).to_string());
            if stochastic {
                row.push(r.batch.map_or(String::new(), |b| b.to_string()));
                row.push(r.true_grad_norm.map_or(String::new(), fmt_f));
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    /// Parses the CSV form. Rule, model and status are not stored in the
    /// file and are supplied by the caller.
    pub fn read_csv<R: Read>(input: R, rule: StepRule, ell: Option<EllModel>, status: Status) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let dim = cols.iter().filter(|c| c.starts_with('x')).count();
        let mut expected: Vec<String> = vec!["k".into()];
        expected.extend((0..dim).map(|i| format!("x{i}")));
        expected.extend(["f", "grad_norm", "step", "safeguard"].map(String::from));
        let stochastic = cols.len() == expected.len() + 2;
        if stochastic {
            expected.extend(["batch", "true_grad_norm"].map(String::from));
        }
        if cols != expected {
            return Err(Error::Format(format!("unexpected header {cols:?}")));
        }
        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Format(e.to_string()))?;
            let k = row[0].trim().parse::<usize>().map_err(|_| Error::Format(format!("line {line}: bad k")))?;
            let x = (0..dim).map(|j| parse_f(&row[1 + j], line)).collect::<Result<Vec<_>>>()?;
            let safeguard_hit = match row[dim + 4].trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::Format(format!("line {line}: bad safeguard flag '{other}'"))),
            };
            let (batch, true_grad_norm) = if stochastic {
                let b = row[dim + 5].trim();
                let t = row[dim + 6].trim();
                let batch = if b.is_empty() {
                    None
                } else {
                    Some(b.parse::<u64>().map_err(|_| Error::Format(format!("line {line}: bad batch")))?)
                };
                let tg = if t.is_empty() { None } else { Some(parse_f(t, line)?) };
                (batch, tg)
            } else {
                (None, None)
            };
            records.push(Record {
                k,
                x,
                f_val: parse_f(&row[dim + 1], line)?,
                grad_norm: parse_f(&row[dim + 2], line)?,
                step: parse_f(&row[dim + 3], line)?,
                safeguard_hit,
                batch,
                true_grad_norm,
            });
        }
        if records.is_empty() {
            return Err(Error::Format("trace has no records".into()));
        }
        Ok(Trace { records, status, rule, ell })
    }
}
