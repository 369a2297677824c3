//! Field dump formats.
//!
//! Text: a header line `# nsf-field d=<d> n=<n> t=<time> name=<name>` followed
//! by one value per line in cell index order, written with 17 significant
//! digits.
//!
//! Binary (all little-endian):
//!
//! ```text
//! offset  size  content
//! 0       8     magic "NSFFLD01"
//! 8       8     reserved, zero
//! 16      4     d (u32)
//! 20      4     n (u32)
//! 24      8     t (f64)
//! 32      4     name length L (u32)
//! 36      L     name, UTF-8
//! 36+L    8     value count (u64)
//! 44+L    8·k   values (f64)
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NsfError, Result};
use crate::field::ScalarField;
use crate::grid::Grid;

pub const BINARY_MAGIC: &[u8; 8] = b"NSFFLD01";

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDump {
    pub dim: usize,
    pub n: usize,
    pub time: f64,
    pub name: String,
    pub values: ScalarField,
}

impl FieldDump {
    pub fn new(grid: &Grid, time: f64, name: impl Into<String>, values: ScalarField) -> Self {
        FieldDump {
            dim: grid.dim(),
            n: grid.cells_per_axis(),
            time,
            name: name.into(),
            values,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n)
    }

    fn check(&self) -> Result<()> {
        if self.name.chars().any(char::is_whitespace) {
            return Err(NsfError::Format(format!("field name {:?} contains whitespace", self.name)));
        }
        let expected = self.n.pow(self.dim as u32);
        if self.values.len() != expected {
            return Err(NsfError::Format(format!(
                "{} values for a {}-d grid with n = {}",
                self.values.len(),
                self.dim,
                self.n
            )));
        }
        Ok(())
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        writeln!(
            w,
            "# nsf-field d={} n={} t={:?} name={}",
            self.dim, self.n, self.time, self.name
        )?;
        for v in self.values.iter() {
            writeln!(w, "{:.16e}", v)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| NsfError::Format("empty field file".into()))??;
        let rest = header
            .strip_prefix("# nsf-field ")
            .ok_or_else(|| NsfError::Format(format!("bad header: {header}")))?;
        let (mut dim, mut n, mut time, mut name) = (None, None, None, None);
        for tok in rest.split_whitespace() {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| NsfError::Format(format!("bad header token {tok}")))?;
            let bad = |_| NsfError::Format(format!("bad value in {tok}"));
            match key {
                "d" => dim = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "n" => n = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "t" => time = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "name" => name = Some(value.to_string()),
                _ => {}
            }
        }
        let missing = |k: &str| NsfError::Format(format!("header is missing {k}"));
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            values.push(
                t.parse::<f64>()
                    .map_err(|e| NsfError::Format(format!("bad value {t:?}: {e}")))?,
            );
        }
        let dump = FieldDump {
            dim: dim.ok_or_else(|| missing("d"))?,
            n: n.ok_or_else(|| missing("n"))?,
            time: time.ok_or_else(|| missing("t"))?,
            name: name.ok_or_else(|| missing("name"))?,
            values: ScalarField(values),
        };
        dump.check()?;
        Ok(dump)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&[0u8; 8])?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&(self.name.len() as u32).to_le_bytes())?;
        w.write_all(self.name.as_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in self.values.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 16];
        r.read_exact(&mut head)?;
        if &head[..8] != BINARY_MAGIC {
            return Err(NsfError::Format("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let time = f64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let mut name = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| NsfError::Format(e.to_string()))?;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if count != n.pow(dim as u32) {
            return Err(NsfError::Format(format!("value count {count} does not match grid")));
        }
        let mut raw = vec![0u8; 8 * count];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(FieldDump {
            dim,
            n,
            time,
            name,
            values: ScalarField(values),
        })
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Reads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::read_binary(&bytes[..])
        } else {
            Self::read_text(BufReader::new(&bytes[..]))
        }
    }
}
