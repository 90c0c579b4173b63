use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::data::DatasetKind;
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "iter,stage,lr,loss_rpn,loss_det,loss_softmax,loss_center,dataset";

/// Per-branch losses of one step; branches not evaluated report zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BranchLosses {
    pub rpn: f64,
    pub det: f64,
    pub softmax: f64,
    pub center: f64,
}

impl BranchLosses {
    pub fn add(&mut self, o: &BranchLosses) {
        self.rpn += o.rpn;
        self.det += o.det;
        self.softmax += o.softmax;
        self.center += o.center;
    }

    pub fn scale(&mut self, f: f64) {
        self.rpn *= f;
        self.det *= f;
        self.softmax *= f;
        self.center *= f;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub iter: u64,
    pub stage: usize,
    pub lr: f64,
    pub losses: BranchLosses,
    pub dataset: DatasetKind,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let l = &self.losses;
        format!(
            "{},{},{:e},{},{},{},{},{}",
            self.iter, self.stage, self.lr, l.rpn, l.det, l.softmax, l.center, self.dataset
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("bad metrics row `{line}`"));
        if f.len() != 8 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(MetricsRow {
            iter: f[0].parse().map_err(|_| bad())?,
            stage: f[1].parse().map_err(|_| bad())?,
            lr: num(f[2])?,
            losses: BranchLosses {
                rpn: num(f[3])?,
                det: num(f[4])?,
                softmax: num(f[5])?,
                center: num(f[6])?,
            },
            dataset: f[7].parse()?,
        })
    }
}

/// Appending CSV writer. On resume, rows at or beyond the resume iteration
/// are dropped so the file matches an uninterrupted run.
pub struct MetricsLog {
    out: BufWriter<File>,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(MetricsLog { out })
    }

    pub fn resume(path: &Path, iter: u64) -> Result<Self> {
        if !path.exists() {
            return Self::create(path);
        }
        let rows = read_metrics(path)?;
        let mut log = Self::create(path)?;
        for row in rows.iter().filter(|r| r.iter < iter) {
            log.append(row)?;
        }
        Ok(log)
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        writeln!(self.out, "{}", row.to_csv())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(OpenOptions::new().read(true).open(path)?)
        .lines()
        .enumerate()
    {
        let line = line?;
        if i == 0 {
            if line != METRICS_HEADER {
                return Err(Error::Format(format!("unexpected metrics header `{line}`")));
            }
            continue;
        }
        if !line.is_empty() {
            rows.push(MetricsRow::parse(&line)?);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_round_trip() {
        let row = MetricsRow {
            iter: 12,
            stage: 1,
            lr: 0.01,
            losses: BranchLosses {
                rpn: 0.5,
                det: 1.25,
                softmax: 0.0,
                center: 3.0e-5,
            },
            dataset: DatasetKind::Recognition,
        };
        assert_eq!(MetricsRow::parse(&row.to_csv()).unwrap(), row);
    }
}
