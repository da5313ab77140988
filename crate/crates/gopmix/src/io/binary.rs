//! Binary formats: `GMXF` feature matrices, `GMPL` phone pools, and `GMDS`
//! word-sample datasets. All integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::{
    FeatureMatrix, PhoneId, PhoneInventory, PhonePoolSet, Provenance, Quadruplet, WordSample,
};

pub const MATRIX_MAGIC: &[u8; 4] = b"GMXF";
pub const POOL_MAGIC: &[u8; 4] = b"GMPL";
pub const DATASET_MAGIC: &[u8; 4] = b"GMDS";

pub const POOL_VERSION: u32 = 1;
pub const DATASET_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Low-level primitives

pub(crate) struct Reader<'p, R> {
    inner: R,
    path: &'p Path,
}

impl<'p, R: Read> Reader<'p, R> {
    pub(crate) fn new(inner: R, path: &'p Path) -> Self {
        Reader { inner, path }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::format(self.path, "truncated file")
            } else {
                Error::io(self.path, e)
            }
        })
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    pub(crate) fn f32_vec(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut bytes = vec![0u8; n * 4];
        self.fill(&mut bytes)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        if len > 1 << 20 {
            return Err(Error::format(self.path, format!("string length {len} implausible")));
        }
        let mut bytes = vec![0u8; len];
        self.fill(&mut bytes)?;
        String::from_utf8(bytes).map_err(|_| Error::format(self.path, "invalid utf-8 string"))
    }

    pub(crate) fn expect_magic(&mut self, magic: &[u8; 4], what: &str) -> Result<()> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        if &b != magic {
            return Err(Error::format(
                self.path,
                format!("bad magic {:?}, expected {what}", String::from_utf8_lossy(&b)),
            ));
        }
        Ok(())
    }

    pub(crate) fn expect_version(&mut self, supported: u32, what: &str) -> Result<()> {
        let v = self.u32()?;
        if v != supported {
            return Err(Error::format(
                self.path,
                format!("unsupported {what} version {v} (supported: {supported})"),
            ));
        }
        Ok(())
    }

    pub(crate) fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::format(self.path, "trailing bytes after payload")),
            Err(e) => Err(Error::io(self.path, e)),
        }
    }
}

/// Writer that tracks the byte position, for index sidecars.
pub(crate) struct CountingWriter<W> {
    inner: W,
    pos: u64,
}

impl<W: Write> CountingWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        CountingWriter { inner, pos: 0 }
    }

    pub(crate) fn pos(&self) -> u64 {
        self.pos
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.inner.write_all(b)?;
        self.pos += b.len() as u64;
        Ok(())
    }

    pub(crate) fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.bytes(&[v])
    }

    pub(crate) fn u32(&mut self, v: u32) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn f32_slice(&mut self, vs: &[f32]) -> std::io::Result<()> {
        for v in vs {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        self.pos += 4 * vs.len() as u64;
        Ok(())
    }

    pub(crate) fn string(&mut self, s: &str) -> std::io::Result<()> {
        self.u32(s.len() as u32)?;
        self.bytes(s.as_bytes())
    }

    pub(crate) fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn write_inventory<W: Write>(w: &mut CountingWriter<W>, inv: &PhoneInventory) -> std::io::Result<()> {
    w.u32(inv.len() as u32)?;
    for s in inv.symbols() {
        w.string(s)?;
    }
    Ok(())
}

fn read_inventory<R: Read>(r: &mut Reader<R>) -> Result<Arc<PhoneInventory>> {
    let n = r.u32()? as usize;
    let mut symbols = Vec::with_capacity(n);
    for _ in 0..n {
        symbols.push(r.string()?);
    }
    PhoneInventory::from_symbols(symbols)
}

// ---------------------------------------------------------------------------
// Feature matrices

/// Writes a matrix in the canonical binary layout:
/// magic `GMXF`, u32 rows, u32 cols, f32 row-major data.
pub fn write_matrix_binary(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = CountingWriter::new(BufWriter::new(file));
    (|| -> std::io::Result<()> {
        w.bytes(MATRIX_MAGIC)?;
        w.u32(m.rows() as u32)?;
        w.u32(m.cols() as u32)?;
        w.f32_slice(m.data())?;
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Writes a matrix as TSV text, one frame per line.
pub fn write_matrix_tsv(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for t in 0..m.rows() {
            let line: Vec<String> = m.row(t).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join("\t"))?;
        }
        w.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

/// Reads a feature matrix, auto-detecting the binary format by magic and
/// falling back to TSV text.
pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] == MATRIX_MAGIC {
        read_matrix_binary(path, &bytes)
    } else {
        read_matrix_tsv(path, &bytes)
    }
}

fn read_matrix_binary(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(MATRIX_MAGIC, "GMXF matrix")?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::format(
            path,
            format!("invalid matrix dimensions {rows}x{cols}"),
        ));
    }
    let data = r.f32_vec(rows * cols)?;
    r.expect_eof()?;
    FeatureMatrix::new(rows, cols, data)
}

fn read_matrix_tsv(path: &Path, bytes: &[u8]) -> Result<FeatureMatrix> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::format(path, "not valid utf-8 and not a GMXF matrix"))?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    let mut cols = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for cell in line.split('\t').flat_map(|c| c.split_whitespace()) {
            let v: f32 = cell
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("non-numeric cell `{cell}`")))?;
            row.push(v);
        }
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("ragged row: {} cells, expected {c}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "matrix file has no rows"));
    }
    FeatureMatrix::from_rows(&rows)
}

// ---------------------------------------------------------------------------
// Phone pools

fn write_quadruplet<W: Write>(w: &mut CountingWriter<W>, q: &Quadruplet) -> std::io::Result<()> {
    w.u32(q.frames() as u32)?;
    w.u32(q.mfcc_seg.cols() as u32)?;
    w.u32(q.deep_seg.cols() as u32)?;
    w.f32_slice(q.mfcc_seg.data())?;
    w.f32_slice(q.deep_seg.data())?;
    w.f64(q.gop)
}

fn read_quadruplet<R: Read>(r: &mut Reader<R>, phone: PhoneId) -> Result<Quadruplet> {
    let t = r.u32()? as usize;
    let d_m = r.u32()? as usize;
    let d_d = r.u32()? as usize;
    let mfcc = FeatureMatrix::new(t, d_m, r.f32_vec(t * d_m)?)?;
    let deep = FeatureMatrix::new(t, d_d, r.f32_vec(t * d_d)?)?;
    let gop = r.f64()?;
    Quadruplet::new(phone, mfcc, deep, gop)
}

/// Serializes a pool set into a byte buffer (the exact file contents).
pub fn pool_to_bytes(pools: &PhonePoolSet) -> Vec<u8> {
    let mut w = CountingWriter::new(Vec::new());
    write_pool_inner(&mut w, pools).expect("writing to Vec cannot fail");
    w.inner
}

fn write_pool_inner<W: Write>(
    w: &mut CountingWriter<W>,
    pools: &PhonePoolSet,
) -> std::io::Result<Vec<(String, u64, u64)>> {
    w.bytes(POOL_MAGIC)?;
    w.u32(POOL_VERSION)?;
    write_inventory(w, pools.inventory())?;
    let mut index = Vec::new();
    for phone in pools.phones() {
        let offset = w.pos();
        let items = pools.pool(phone);
        w.u64(items.len() as u64)?;
        for q in items {
            write_quadruplet(w, q)?;
        }
        index.push((
            pools.inventory().symbol(phone).to_string(),
            offset,
            items.len() as u64,
        ));
    }
    Ok(index)
}

/// Writes the pool file plus a JSON index sidecar (`<path>.idx.json`) with
/// per-phone byte offsets.
pub fn write_pool(path: &Path, pools: &PhonePoolSet) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = CountingWriter::new(BufWriter::new(file));
    let index = write_pool_inner(&mut w, pools).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;

    let sidecar: Vec<serde_json::Value> = index
        .into_iter()
        .map(|(symbol, offset, count)| {
            serde_json::json!({ "symbol": symbol, "offset": offset, "count": count })
        })
        .collect();
    let idx_path = sidecar_path(path, "idx.json");
    let body = serde_json::to_string_pretty(&serde_json::json!({ "phones": sidecar }))
        .expect("index is serializable");
    std::fs::write(&idx_path, body + "\n").map_err(|e| Error::io(&idx_path, e))
}

/// Reads a `GMPL` pool file.
pub fn read_pool(path: &Path) -> Result<PhonePoolSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(BufReader::new(file), path);
    r.expect_magic(POOL_MAGIC, "GMPL pool")?;
    r.expect_version(POOL_VERSION, "pool")?;
    let inventory = read_inventory(&mut r)?;
    let mut pools = PhonePoolSet::new(inventory.clone());
    for phone in inventory.ids() {
        let count = r.u64()? as usize;
        for _ in 0..count {
            pools.push(read_quadruplet(&mut r, phone)?);
        }
    }
    r.expect_eof()?;
    Ok(pools)
}

/// `<path>.<ext>` next to the primary file.
pub(crate) fn sidecar_path(path: &Path, ext: &str) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".");
    s.push(ext);
    std::path::PathBuf::from(s)
}

// ---------------------------------------------------------------------------
// Word-sample datasets

fn write_sample<W: Write>(w: &mut CountingWriter<W>, s: &WordSample) -> std::io::Result<()> {
    w.string(&s.word)?;
    w.u8(s.provenance.tag())?;
    w.f64(s.target)?;
    w.u32(s.frames() as u32)?;
    w.u32(s.mfcc.cols() as u32)?;
    w.u32(s.deep.cols() as u32)?;
    for p in &s.phones_per_frame {
        w.u32(p.0)?;
    }
    w.f32_slice(s.mfcc.data())?;
    w.f32_slice(s.deep.data())
}

fn read_sample<R: Read>(r: &mut Reader<R>, inv: &PhoneInventory) -> Result<WordSample> {
    let word = r.string()?;
    let tag = r.u8()?;
    let provenance = Provenance::from_tag(tag)
        .ok_or_else(|| Error::InvalidInput(format!("unknown provenance tag {tag}")))?;
    let target = r.f64()?;
    let t = r.u32()? as usize;
    let d_m = r.u32()? as usize;
    let d_d = r.u32()? as usize;
    let mut phones = Vec::with_capacity(t);
    for _ in 0..t {
        let id = r.u32()?;
        if id as usize >= inv.len() {
            return Err(Error::InvalidInput(format!(
                "phone id {id} out of range for inventory of {}",
                inv.len()
            )));
        }
        phones.push(PhoneId(id));
    }
    let mfcc = FeatureMatrix::new(t, d_m, r.f32_vec(t * d_m)?)?;
    let deep = FeatureMatrix::new(t, d_d, r.f32_vec(t * d_d)?)?;
    WordSample::new(word, phones, mfcc, deep, target, provenance)
}

/// Serializes a dataset into a byte buffer (the exact file contents).
pub fn dataset_to_bytes(samples: &[WordSample], inv: &PhoneInventory) -> Vec<u8> {
    let mut w = CountingWriter::new(Vec::new());
    write_dataset_inner(&mut w, samples, inv).expect("writing to Vec cannot fail");
    w.inner
}

fn write_dataset_inner<W: Write>(
    w: &mut CountingWriter<W>,
    samples: &[WordSample],
    inv: &PhoneInventory,
) -> std::io::Result<()> {
    w.bytes(DATASET_MAGIC)?;
    w.u32(DATASET_VERSION)?;
    write_inventory(w, inv)?;
    w.u64(samples.len() as u64)?;
    for s in samples {
        write_sample(w, s)?;
    }
    Ok(())
}

/// Writes a `GMDS` dataset file.
pub fn write_dataset(path: &Path, samples: &[WordSample], inv: &PhoneInventory) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = CountingWriter::new(BufWriter::new(file));
    write_dataset_inner(&mut w, samples, inv).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a `GMDS` dataset file, returning the samples and the phone
/// inventory they are indexed against.
pub fn read_dataset(path: &Path) -> Result<(Vec<WordSample>, Arc<PhoneInventory>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(BufReader::new(file), path);
    r.expect_magic(DATASET_MAGIC, "GMDS dataset")?;
    r.expect_version(DATASET_VERSION, "dataset")?;
    let inventory = read_inventory(&mut r)?;
    let count = r.u64()? as usize;
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        samples.push(read_sample(&mut r, &inventory)?);
    }
    r.expect_eof()?;
    Ok((samples, inventory))
}
