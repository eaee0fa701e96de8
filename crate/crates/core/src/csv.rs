//! Minimal CSV output: header row, comma separated, floats with 17
//! significant digits so values round-trip exactly.

use std::io::{self, Write};

pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new<S: AsRef<str>>(mut out: W, header: &[S]) -> io::Result<Self> {
        let line: Vec<&str> = header.iter().map(|s| s.as_ref()).collect();
        writeln!(out, "{}", line.join(","))?;
        Ok(Self {
            out,
            columns: header.len(),
        })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> io::Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        let line: Vec<&str> = fields.iter().map(|s| s.as_ref()).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn finish(mut self) -> io::Result<()> {
        self.out.flush()
    }
}
