//! CSV and binary framing for rasters and feature matrices.
//!
//! Binary layouts are little-endian:
//!
//! - raster: `b"CJRS"`, N `u32`, K `u64`, fs `f64`, N rows of `ceil(K/64)`
//!   `u64` words, then a `u32`-length-prefixed JSON label list;
//! - matrix: `b"CJMF"`, rows `u32`, cols `u64`, fs `f64`, row-major `f64`
//!   values, then a `u32`-length-prefixed JSON metadata block.

use std::io::{BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::encoders::SpikeRaster;
use crate::error::{Error, Result};
use crate::rates::FeatureMatrix;
use crate::trajectory::SampleClock;

const RASTER_MAGIC: &[u8; 4] = b"CJRS";
const MATRIX_MAGIC: &[u8; 4] = b"CJMF";

#[derive(Serialize, Deserialize)]
struct RasterHeader {
    n: usize,
    k: usize,
    fs: f64,
    labels: Vec<String>,
}

/// Writes `cell_id,t_ms` rows preceded by a `#` metadata line.
pub fn write_raster_csv<W: Write>(raster: &SpikeRaster, out: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    let header = RasterHeader { n: raster.n_cells(), k: raster.len(), fs: raster.clock().fs(), labels: raster.labels().to_vec() };
    writeln!(out, "# {}", serde_json::to_string(&header)?)?;
    writeln!(out, "cell_id,t_ms")?;
    let ms = raster.clock().dt * 1000.0;
    for n in 0..raster.n_cells() {
        for k in raster.spike_indices(n) {
            writeln!(out, "{n},{}", k as f64 * ms)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_raster_csv<R: Read>(mut input: R) -> Result<SpikeRaster> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let (meta, body) = text.split_once('\n').unwrap_or((text.as_str(), ""));
    let json = meta.strip_prefix("# ").ok_or(Error::Parse { line: 1, message: "missing metadata line".into() })?;
    let header: RasterHeader = serde_json::from_str(json).map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    if header.labels.len() != header.n {
        return Err(Error::Parse { line: 1, message: "label count differs from n".into() });
    }
    let clock = SampleClock::new(1.0 / header.fs, header.k)?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let ms = clock.dt * 1000.0;
    let mut spikes = vec![Vec::new(); header.n];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let bad = |m: &str| Error::Parse { line, message: m.to_string() };
        if rec.len() != 2 {
            return Err(bad("expected cell_id,t_ms"));
        }
        let n: usize = rec[0].trim().parse().map_err(|_| bad("bad cell id"))?;
        let t: f64 = rec[1].trim().parse().map_err(|_| bad("bad spike time"))?;
        if n >= header.n || !t.is_finite() || t < 0.0 {
            return Err(bad("spike outside raster"));
        }
        spikes[n].push((t / ms).round() as usize);
    }
    SpikeRaster::from_spike_indices(header.labels, clock, &spikes)
}

pub fn write_raster_bin<W: Write>(raster: &SpikeRaster, out: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    out.write_all(RASTER_MAGIC)?;
    out.write_all(&(raster.n_cells() as u32).to_le_bytes())?;
    out.write_all(&(raster.len() as u64).to_le_bytes())?;
    out.write_all(&raster.clock().fs().to_le_bytes())?;
    for n in 0..raster.n_cells() {
        for w in raster.row_words(n) {
            out.write_all(&w.to_le_bytes())?;
        }
    }
    write_trailer(&mut out, &serde_json::to_vec(raster.labels())?)?;
    out.flush()?;
    Ok(())
}

pub fn read_raster_bin<R: Read>(input: R) -> Result<SpikeRaster> {
    let mut input = BufReader::new(input);
    expect_magic(&mut input, RASTER_MAGIC)?;
    let n = read_u32(&mut input)? as usize;
    let k = read_u64(&mut input)? as usize;
    let fs = read_f64(&mut input)?;
    let clock = SampleClock::new(1.0 / fs, k)?;
    let wpr = k.div_ceil(64);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        rows.push((0..wpr).map(|_| read_u64(&mut input)).collect::<Result<Vec<_>>>()?);
    }
    let labels: Vec<String> = serde_json::from_slice(&read_trailer(&mut input)?)?;
    if labels.len() != n {
        return Err(Error::Data("raster label trailer does not match row count".into()));
    }
    let raster = SpikeRaster::from_row_words(labels, clock, rows.clone())?;
    if (0..n).any(|i| raster.row_words(i) != rows[i].as_slice()) {
        return Err(Error::Data("raster has bits set past its last sample".into()));
    }
    Ok(raster)
}

#[derive(Serialize, Deserialize)]
struct MatrixMeta {
    labels: Vec<String>,
    stride: usize,
    dt: f64,
}

/// Writes one row per feature: label, then its values.
pub fn write_matrix_csv<W: Write>(m: &FeatureMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["# stride", &m.stride.to_string(), "dt", &m.dt.to_string()])?;
    for r in 0..m.rows {
        let mut rec = vec![m.labels[r].clone()];
        rec.extend(m.row(r).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(input: R) -> Result<FeatureMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = rdr.records();
    let head = records.next().ok_or(Error::Parse { line: 1, message: "empty matrix file".into() })??;
    let parse_err = |line: usize, m: &str| Error::Parse { line, message: m.to_string() };
    if head.len() != 4 || &head[0] != "# stride" {
        return Err(parse_err(1, "missing stride/dt header"));
    }
    let stride = head[1].parse().map_err(|_| parse_err(1, "bad stride"))?;
    let dt = head[3].parse().map_err(|_| parse_err(1, "bad dt"))?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        labels.push(rec[0].to_string());
        rows.push(rec.iter().skip(1).map(|v| v.parse::<f64>().map_err(|_| parse_err(i + 2, "bad value"))).collect::<Result<Vec<_>>>()?);
    }
    FeatureMatrix::from_rows(labels, rows, stride, dt)
}

pub fn write_matrix_bin<W: Write>(m: &FeatureMatrix, out: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(m.rows as u32).to_le_bytes())?;
    out.write_all(&(m.cols as u64).to_le_bytes())?;
    out.write_all(&(1.0 / m.dt).to_le_bytes())?;
    for v in &m.data {
        out.write_all(&v.to_le_bytes())?;
    }
    let meta = MatrixMeta { labels: m.labels.clone(), stride: m.stride, dt: m.dt };
    write_trailer(&mut out, &serde_json::to_vec(&meta)?)?;
    out.flush()?;
    Ok(())
}

pub fn read_matrix_bin<R: Read>(input: R) -> Result<FeatureMatrix> {
    let mut input = BufReader::new(input);
    expect_magic(&mut input, MATRIX_MAGIC)?;
    let rows = read_u32(&mut input)? as usize;
    let cols = read_u64(&mut input)? as usize;
    let _fs = read_f64(&mut input)?;
    let data = (0..rows * cols).map(|_| read_f64(&mut input)).collect::<Result<Vec<_>>>()?;
    let meta: MatrixMeta = serde_json::from_slice(&read_trailer(&mut input)?)?;
    if meta.labels.len() != rows {
        return Err(Error::Data("matrix label trailer does not match row count".into()));
    }
    Ok(FeatureMatrix { labels: meta.labels, rows, cols, stride: meta.stride, dt: meta.dt, data })
}

fn write_trailer<W: Write>(out: &mut W, bytes: &[u8]) -> Result<()> {
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)?;
    Ok(())
}

fn read_trailer<R: Read>(input: &mut R) -> Result<Vec<u8>> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0; len];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn expect_magic<R: Read>(input: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0; 4];
    input.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::Data(format!("bad magic {buf:?}, expected {:?}", std::str::from_utf8(magic).unwrap_or("?"))));
    }
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(input)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raster_strategy() -> impl Strategy<Value = SpikeRaster> {
        (1usize..5, 1usize..300).prop_flat_map(|(n, k)| {
            proptest::collection::vec(proptest::collection::vec(any::<bool>(), k), n).prop_map(move |rows| {
                let labels = (0..n).map(|i| format!("cell,{i}")).collect();
                SpikeRaster::from_rows(labels, SampleClock::new(0.001, k).unwrap(), &rows).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn raster_csv_round_trips(r in raster_strategy()) {
            let mut buf = Vec::new();
            write_raster_csv(&r, &mut buf).unwrap();
            prop_assert_eq!(read_raster_csv(buf.as_slice()).unwrap(), r);
        }

        #[test]
        fn raster_bin_round_trips(r in raster_strategy()) {
            let mut buf = Vec::new();
            write_raster_bin(&r, &mut buf).unwrap();
            prop_assert_eq!(read_raster_bin(buf.as_slice()).unwrap(), r);
        }

        #[test]
        fn matrix_round_trips(rows in proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, 7), 1..4), stride in 1usize..20) {
            let labels = (0..rows.len()).map(|i| format!("m{i}")).collect();
            let m = FeatureMatrix::from_rows(labels, rows, stride, 0.001).unwrap();
            let mut csv_buf = Vec::new();
            write_matrix_csv(&m, &mut csv_buf).unwrap();
            prop_assert_eq!(&read_matrix_csv(csv_buf.as_slice()).unwrap(), &m);
            let mut bin = Vec::new();
            write_matrix_bin(&m, &mut bin).unwrap();
            prop_assert_eq!(read_matrix_bin(bin.as_slice()).unwrap(), m);
        }
    }

    #[test]
    fn bad_magic_is_data_error() {
        assert!(matches!(read_raster_bin(&b"XXXX0000"[..]), Err(Error::Data(_))));
    }

    #[test]
    fn csv_parse_error_reports_line() {
        let text = "# {\"n\":1,\"k\":10,\"fs\":1000.0,\"labels\":[\"a\"]}\ncell_id,t_ms\n0,3\n0,oops\n";
        match read_raster_csv(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
