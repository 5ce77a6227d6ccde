//! On-disk formats: sample streams, delimited tables, JSON records and
//! atomic replacement.
//!
//! Sample files start with a text header terminated by `end_header`. In
//! binary mode each row is a fixed-width little-endian record (the step as
//! `u64`, everything else `f64`); in text mode rows are tab-separated with
//! shortest round-trip float formatting. Snapshot files carry the same
//! scalar columns followed by the bead coordinates.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::SampleFormat;
use crate::error::{Error, Result};
use crate::estimators::HistogramGrid;
use crate::sampler::TrajectorySample;

pub const SAMPLE_FILE: &str = "samples.dat";
pub const SNAPSHOT_FILE: &str = "snapshots.dat";
pub const SAMPLE_FORMAT_VERSION: u32 = 1;

const SCALAR_COLUMNS: [&str; 8] = [
    "step",
    "s",
    "bias_value",
    "potential_energy",
    "spring_energy_oo",
    "virial_direct",
    "virial_exchange",
    "kinetic_energy",
];

/// Provenance stamped into every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
}

impl Provenance {
    pub fn header_lines(&self) -> Vec<String> {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        vec![
            format!("version {}", self.version),
            format!("config_hash {}", self.config_hash),
            format!("seed {}", seeds.join(",")),
        ]
    }
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Header of a sample or snapshot file.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleHeader {
    pub provenance: Provenance,
    pub format: SampleFormat,
    /// Bead coordinates per row (0 for plain sample files).
    pub coords: usize,
}

impl SampleHeader {
    pub fn to_text(&self) -> String {
        let mut s = format!("xpimd-samples {SAMPLE_FORMAT_VERSION}\n");
        for l in self.provenance.header_lines() {
            s.push_str(&l);
            s.push('\n');
        }
        let fmt = match self.format {
            SampleFormat::Binary => "binary",
            SampleFormat::Text => "text",
        };
        s.push_str(&format!("format {fmt}\n"));
        s.push_str(&format!("columns {}\n", SCALAR_COLUMNS.join(" ")));
        s.push_str(&format!("coords {}\n", self.coords));
        s.push_str("end_header\n");
        s
    }

    fn parse(reader: &mut impl BufRead, path: &Path) -> Result<(Self, u64)> {
        let mut consumed = 0u64;
        let mut line = String::new();
        let mut next = |line: &mut String| -> Result<String> {
            line.clear();
            let n = reader.read_line(line)?;
            if n == 0 {
                return Err(format_error(path, "header ends early"));
            }
            consumed += n as u64;
            Ok(line.trim_end_matches('\n').to_string())
        };
        let magic = next(&mut line)?;
        if magic != format!("xpimd-samples {SAMPLE_FORMAT_VERSION}") {
            return Err(format_error(path, format!("not a sample file or unsupported version: `{magic}`")));
        }
        let mut field = |name: &str, line: &mut String| -> Result<String> {
            let l = next(line)?;
            l.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| format_error(path, format!("expected `{name}`, found `{l}`")))
        };
        let version = field("version", &mut line)?;
        let config_hash = field("config_hash", &mut line)?;
        let seeds = field("seed", &mut line)?
            .split(',')
            .map(|s| s.parse::<u64>().map_err(|_| format_error(path, "bad seed")))
            .collect::<Result<Vec<_>>>()?;
        let format = match field("format", &mut line)?.as_str() {
            "binary" => SampleFormat::Binary,
            "text" => SampleFormat::Text,
            other => return Err(format_error(path, format!("unknown format `{other}`"))),
        };
        if field("columns", &mut line)? != SCALAR_COLUMNS.join(" ") {
            return Err(format_error(path, "unexpected column list"));
        }
        let coords = field("coords", &mut line)?
            .parse()
            .map_err(|_| format_error(path, "bad coordinate count"))?;
        drop(field);
        if next(&mut line)? != "end_header" {
            return Err(format_error(path, "missing end_header"));
        }
        Ok((
            SampleHeader {
                provenance: Provenance {
                    version,
                    config_hash,
                    seeds,
                },
                format,
                coords,
            },
            consumed,
        ))
    }

    fn row_bytes(&self) -> usize {
        8 * (SCALAR_COLUMNS.len() + self.coords)
    }
}

/// Appends rows to a sample or snapshot file and tracks the byte length.
pub struct SampleWriter {
    out: BufWriter<File>,
    header: SampleHeader,
    bytes: u64,
    line: String,
}

impl SampleWriter {
    /// Creates a new file, replacing any existing one.
    pub fn create(path: &Path, header: SampleHeader) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        let text = header.to_text();
        out.write_all(text.as_bytes())?;
        Ok(SampleWriter {
            out,
            bytes: text.len() as u64,
            header,
            line: String::new(),
        })
    }

    /// Reopens an existing file for appending after cutting it back to
    /// `length` bytes. The stored header must match `header` exactly.
    pub fn resume(path: &Path, header: SampleHeader, length: u64) -> Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let text = header.to_text();
        let mut existing = vec![0u8; text.len()];
        file.read_exact(&mut existing)
            .map_err(|_| format_error(path, "file is shorter than its header"))?;
        if existing != text.as_bytes() {
            return Err(format_error(path, "header does not match this configuration and seed"));
        }
        let actual = file.metadata()?.len();
        if actual < length || length < text.len() as u64 {
            return Err(format_error(
                path,
                format!("file holds {actual} bytes but the checkpoint expects {length}"),
            ));
        }
        file.set_len(length)?;
        file.seek(SeekFrom::Start(length))?;
        Ok(SampleWriter {
            out: BufWriter::new(file),
            header,
            bytes: length,
            line: String::new(),
        })
    }

    pub fn write(&mut self, s: &TrajectorySample) -> Result<()> {
        let scalars = [
            s.s,
            s.bias_value,
            s.potential_energy,
            s.spring_energy_oo,
            s.virial_direct,
            s.virial_exchange,
            s.kinetic_energy,
        ];
        let coords: &[f64] = match (&s.snapshot, self.header.coords) {
            (_, 0) => &[],
            (Some(c), n) if c.len() == n => c,
            _ => return Err(Error::validation("snapshot row without matching coordinates")),
        };
        match self.header.format {
            SampleFormat::Binary => {
                self.out.write_all(&s.step.to_le_bytes())?;
                for v in scalars.iter().chain(coords) {
                    self.out.write_all(&v.to_le_bytes())?;
                }
                self.bytes += self.header.row_bytes() as u64;
            }
            SampleFormat::Text => {
                use std::fmt::Write as _;
                self.line.clear();
                let _ = write!(self.line, "{}", s.step);
                for v in scalars.iter().chain(coords) {
                    let _ = write!(self.line, "\t{v:?}");
                }
                self.line.push('\n');
                self.out.write_all(self.line.as_bytes())?;
                self.bytes += self.line.len() as u64;
            }
        }
        Ok(())
    }

    /// Flushes and returns the file length, for checkpoints.
    pub fn sync(&mut self) -> Result<u64> {
        self.out.flush()?;
        Ok(self.bytes)
    }
}

/// Streams rows back as samples.
pub struct SampleReader {
    input: BufReader<File>,
    pub header: SampleHeader,
    path: PathBuf,
    buf: Vec<u8>,
    line: String,
}

impl SampleReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let (header, _) = SampleHeader::parse(&mut input, path)?;
        Ok(SampleReader {
            buf: vec![0; header.row_bytes()],
            input,
            header,
            path: path.to_path_buf(),
            line: String::new(),
        })
    }

    pub fn next_sample(&mut self) -> Result<Option<TrajectorySample>> {
        let ncol = SCALAR_COLUMNS.len() - 1;
        let (step, vals) = match self.header.format {
            SampleFormat::Binary => {
                let mut filled = 0;
                while filled < self.buf.len() {
                    let n = self.input.read(&mut self.buf[filled..])?;
                    if n == 0 {
                        break;
                    }
                    filled += n;
                }
                if filled == 0 {
                    return Ok(None);
                }
                if filled < self.buf.len() {
                    return Err(format_error(&self.path, "truncated row"));
                }
                let step = u64::from_le_bytes(self.buf[..8].try_into().expect("8 bytes"));
                let vals: Vec<f64> = self.buf[8..]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                (step, vals)
            }
            SampleFormat::Text => {
                self.line.clear();
                if self.input.read_line(&mut self.line)? == 0 {
                    return Ok(None);
                }
                let mut it = self.line.trim_end().split('\t');
                let step = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| format_error(&self.path, "bad step field"))?;
                let vals = it
                    .map(|t| t.parse::<f64>().map_err(|_| format_error(&self.path, format!("bad value `{t}`"))))
                    .collect::<Result<Vec<_>>>()?;
                if vals.len() != ncol + self.header.coords {
                    return Err(format_error(&self.path, "wrong number of fields"));
                }
                (step, vals)
            }
        };
        Ok(Some(TrajectorySample {
            step,
            s: vals[0],
            bias_value: vals[1],
            potential_energy: vals[2],
            spring_energy_oo: vals[3],
            virial_direct: vals[4],
            virial_exchange: vals[5],
            kinetic_energy: vals[6],
            snapshot: (self.header.coords > 0).then(|| vals[ncol..].to_vec()),
        }))
    }

    /// Calls `f` on every remaining sample.
    pub fn for_each<F: FnMut(&TrajectorySample) -> Result<()>>(mut self, mut f: F) -> Result<()> {
        while let Some(s) = self.next_sample()? {
            f(&s)?;
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format_error(path, e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_error(path, e.to_string()))
}

/// A tab-separated table with `#` comment lines for provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(provenance: &Provenance, columns: &[&str]) -> Self {
        Table {
            comments: provenance.header_lines(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "{}", self.columns.join("\t"));
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{}", cells.join("\t"));
        }
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut comments = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(c) = line.strip_prefix("# ") {
                comments.push(c.to_string());
            } else if columns.is_none() {
                columns = Some(line.split('\t').map(str::to_string).collect());
            } else if !line.is_empty() {
                let row = line
                    .split('\t')
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| format_error(origin, format!("line {}: bad number", i + 1)))?;
                rows.push(row);
            }
        }
        let columns = columns.ok_or_else(|| format_error(origin, "no column header"))?;
        if rows.iter().any(|r| r.len() != columns.len()) {
            return Err(format_error(origin, "ragged rows"));
        }
        Ok(Table { comments, columns, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

/// 1D histogram as a table of bin edges, density, error and effective samples.
pub fn histogram_table(provenance: &Provenance, grid: &HistogramGrid, name: &str) -> Table {
    let mut t = Table::new(
        provenance,
        &[&format!("{name}_lo"), &format!("{name}_hi"), "value", "stderr", "effective_samples"],
    );
    t.comments.push(format!("overflow {:?}", grid.overflow));
    for i in 0..grid.x.bins {
        let (lo, hi) = grid.x.edges(i);
        t.push(vec![lo, hi, grid.values[i], grid.errors[i], grid.effective_samples[i]]);
    }
    t
}

/// 2D histogram as a long-format table over bin centres.
pub fn density_table(provenance: &Provenance, grid: &HistogramGrid) -> Table {
    let mut t = Table::new(provenance, &["x", "y", "value", "stderr", "effective_samples"]);
    t.comments.push(format!("overflow {:?}", grid.overflow));
    let y = grid.y.as_ref().expect("2D grid");
    for ix in 0..grid.x.bins {
        for iy in 0..y.bins {
            let k = ix * y.bins + iy;
            t.push(vec![
                grid.x.center(ix),
                y.center(iy),
                grid.values[k],
                grid.errors[k],
                grid.effective_samples[k],
            ]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prov() -> Provenance {
        Provenance {
            version: "0.1.0".into(),
            config_hash: "ab".repeat(32),
            seeds: vec![3],
        }
    }

    fn sample(step: u64, x: f64, coords: usize) -> TrajectorySample {
        TrajectorySample {
            step,
            s: x,
            bias_value: -x * 0.5,
            potential_energy: x.sin(),
            spring_energy_oo: 1.0 / 3.0 + x,
            virial_direct: f64::MIN_POSITIVE,
            virial_exchange: -1e300,
            kinetic_energy: x * x,
            snapshot: (coords > 0).then(|| (0..coords).map(|i| x + i as f64 * 0.1).collect()),
        }
    }

    fn round_trip(format: SampleFormat, coords: usize, xs: &[f64]) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dat");
        let header = SampleHeader {
            provenance: prov(),
            format,
            coords,
        };
        let mut w = SampleWriter::create(&path, header.clone()).unwrap();
        let written: Vec<_> = xs.iter().enumerate().map(|(i, &x)| sample(i as u64 * 5, x, coords)).collect();
        for s in &written {
            w.write(s).unwrap();
        }
        let len = w.sync().unwrap();
        drop(w);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), len);
        let mut r = SampleReader::open(&path).unwrap();
        assert_eq!(r.header, header);
        let mut back = Vec::new();
        while let Some(s) = r.next_sample().unwrap() {
            back.push(s);
        }
        assert_eq!(back.len(), written.len());
        for (a, b) in back.iter().zip(&written) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.s.to_bits(), b.s.to_bits());
            assert_eq!(a.virial_exchange.to_bits(), b.virial_exchange.to_bits());
            assert_eq!(a.snapshot, b.snapshot);
        }
    }

    proptest! {
        #[test]
        fn samples_round_trip_bit_exactly(xs in proptest::collection::vec(-1e6f64..1e6, 0..40)) {
            round_trip(SampleFormat::Binary, 0, &xs);
            round_trip(SampleFormat::Text, 0, &xs);
            round_trip(SampleFormat::Binary, 6, &xs);
            round_trip(SampleFormat::Text, 6, &xs);
        }
    }

    #[test]
    fn resume_truncates_to_checkpoint_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dat");
        for format in [SampleFormat::Binary, SampleFormat::Text] {
            let header = SampleHeader {
                provenance: prov(),
                format,
                coords: 2,
            };
            let mut w = SampleWriter::create(&path, header.clone()).unwrap();
            w.write(&sample(5, 1.0, 2)).unwrap();
            let mark = w.sync().unwrap();
            w.write(&sample(10, 2.0, 2)).unwrap();
            w.sync().unwrap();
            drop(w);
            let mut w = SampleWriter::resume(&path, header.clone(), mark).unwrap();
            w.write(&sample(10, 3.0, 2)).unwrap();
            w.sync().unwrap();
            drop(w);
            let mut r = SampleReader::open(&path).unwrap();
            assert_eq!(r.next_sample().unwrap().unwrap().s, 1.0);
            assert_eq!(r.next_sample().unwrap().unwrap().s, 3.0);
            assert!(r.next_sample().unwrap().is_none());
            let other = SampleHeader {
                provenance: Provenance {
                    seeds: vec![4],
                    ..prov()
                },
                ..header
            };
            assert!(SampleWriter::resume(&path, other, mark).is_err());
        }
    }

    #[test]
    fn truncated_binary_row_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.dat");
        let header = SampleHeader {
            provenance: prov(),
            format: SampleFormat::Binary,
            coords: 0,
        };
        let mut w = SampleWriter::create(&path, header).unwrap();
        w.write(&sample(1, 1.0, 0)).unwrap();
        let len = w.sync().unwrap();
        drop(w);
        let f = OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 3).unwrap();
        let mut r = SampleReader::open(&path).unwrap();
        assert!(matches!(r.next_sample(), Err(Error::Format { .. })));
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(&prov(), &["a", "b"]);
        t.push(vec![0.1, -2.5e-300]);
        t.push(vec![f64::MAX, 3.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        t.write(&path).unwrap();
        let back = Table::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("b").unwrap(), vec![-2.5e-300, 3.0]);
        assert!(back.comments.iter().any(|c| c.starts_with("config_hash ")));
    }
}
