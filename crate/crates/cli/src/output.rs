use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use adaptgap_core::harness::Table;
use anyhow::{Context, Result};
use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    fn delimiter(self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }
}

/// A command's output: `# key=value` configuration lines, one data table,
/// then `# ...` summary lines.
#[derive(Debug, Default)]
pub struct Report {
    config: Vec<(String, String)>,
    tables: Vec<Table>,
    summary: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut report = Report::default();
        report.set("command", command);
        report.set("version", env!("CARGO_PKG_VERSION"));
        report
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn table(&mut self, table: Table) {
        self.tables.push(table);
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn write_to(&self, out: &mut dyn Write, format: Format) -> Result<()> {
        for (k, v) in &self.config {
            writeln!(out, "# {k}={v}")?;
        }
        for table in &self.tables {
            out.flush()?;
            let mut w = csv::WriterBuilder::new()
                .delimiter(format.delimiter())
                .from_writer(&mut *out);
            w.write_record(&table.header)?;
            for row in &table.rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        for line in &self.summary {
            writeln!(out, "# {line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn emit(&self, path: Option<&Path>, format: Format) -> Result<()> {
        match path {
            Some(path) => {
                let file = File::create(path)
                    .with_context(|| format!("cannot create {}", path.display()))?;
                self.write_to(&mut BufWriter::new(file), format)
            }
            None => self.write_to(&mut io::stdout().lock(), format),
        }
    }
}
