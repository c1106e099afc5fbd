//! Grid and image serialization.
//!
//! Two interchange formats:
//!
//! * binary PGM (`P5`), 16-bit big-endian samples, written max-normalised —
//!   a lossless-to-view export whose byte stream is fully pinned down;
//! * CSV with the header line `nx,ny,pitch_mm`, a values line for those
//!   three fields, then one row of comma-separated samples per grid row —
//!   preserving the unnormalised values exactly (shortest round-trip float
//!   formatting).

use crate::beam::{GridGeometry, IntensityGrid};
use crate::ring_synth::SpdcImage;
use std::io::{self, BufRead, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed {format} data: {reason}")]
    Malformed {
        format: &'static str,
        reason: String,
    },
}

fn malformed(format: &'static str, reason: impl Into<String>) -> ImageIoError {
    ImageIoError::Malformed {
        format,
        reason: reason.into(),
    }
}

/// Write `values` (row-major `nx` x `ny`) as 16-bit binary PGM, scaled so
/// the maximum value maps to 65535. An all-zero grid writes all zeros.
pub fn write_pgm16<W: Write>(
    mut w: W,
    nx: usize,
    ny: usize,
    values: &[f64],
) -> Result<(), ImageIoError> {
    assert_eq!(values.len(), nx * ny, "value count must match dimensions");
    let max = values.iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    let mut buf = Vec::with_capacity(values.len() * 2);
    for &v in values {
        let q = (v * scale).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&q.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a binary PGM (`P5`), 8- or 16-bit; returns `(nx, ny, values)` with
/// raw sample values as f64.
pub fn read_pgm<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f64>), ImageIoError> {
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() < 2 || &data[0..2] != b"P5" {
        return Err(malformed("PGM", "missing P5 magic"));
    }
    // header: magic, width, height, maxval; '#' comments run to end of line
    let mut pos = 2;
    let mut fields = Vec::with_capacity(3);
    while fields.len() < 3 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("PGM", "truncated header"));
        }
        let token = std::str::from_utf8(&data[start..pos])
            .map_err(|_| malformed("PGM", "non-ASCII header"))?;
        let value: usize = token
            .parse()
            .map_err(|_| malformed("PGM", format!("bad header field {token:?}")))?;
        fields.push(value);
    }
    if pos >= data.len() {
        return Err(malformed("PGM", "missing sample data"));
    }
    pos += 1; // single whitespace after maxval
    let (nx, ny, maxval) = (fields[0], fields[1], fields[2]);
    if nx == 0 || ny == 0 || maxval == 0 || maxval > 65535 {
        return Err(malformed("PGM", format!("bad dimensions {nx}x{ny} maxval {maxval}")));
    }
    let wide = maxval > 255;
    let expected = nx * ny * if wide { 2 } else { 1 };
    let body = &data[pos..];
    if body.len() < expected {
        return Err(malformed(
            "PGM",
            format!("expected {expected} sample bytes, found {}", body.len()),
        ));
    }
    let values = if wide {
        body[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    } else {
        body[..expected].iter().map(|&b| b as f64).collect()
    };
    Ok((nx, ny, values))
}

/// Write a grid as CSV: header `nx,ny,pitch_mm`, its values on the next
/// line, then one comma-separated row per grid row.
pub fn write_grid_csv<W: Write>(
    mut w: W,
    nx: usize,
    ny: usize,
    pitch_mm: f64,
    values: &[f64],
) -> Result<(), ImageIoError> {
    assert_eq!(values.len(), nx * ny, "value count must match dimensions");
    writeln!(w, "nx,ny,pitch_mm")?;
    writeln!(w, "{nx},{ny},{pitch_mm}")?;
    for row in values.chunks_exact(nx) {
        let mut line = String::with_capacity(row.len() * 8);
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Read a grid CSV written by [`write_grid_csv`]; returns
/// `(nx, ny, pitch_mm, values)`.
pub fn read_grid_csv<R: BufRead>(r: R) -> Result<(usize, usize, f64, Vec<f64>), ImageIoError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed("CSV", "empty file"))??;
    if header.trim() != "nx,ny,pitch_mm" {
        return Err(malformed("CSV", format!("unexpected header {header:?}")));
    }
    let dims = lines
        .next()
        .ok_or_else(|| malformed("CSV", "missing dimensions line"))??;
    let parts: Vec<&str> = dims.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(malformed("CSV", format!("bad dimensions line {dims:?}")));
    }
    let nx: usize = parts[0]
        .parse()
        .map_err(|_| malformed("CSV", format!("bad nx {:?}", parts[0])))?;
    let ny: usize = parts[1]
        .parse()
        .map_err(|_| malformed("CSV", format!("bad ny {:?}", parts[1])))?;
    let pitch_mm: f64 = parts[2]
        .parse()
        .map_err(|_| malformed("CSV", format!("bad pitch {:?}", parts[2])))?;
    let mut values = Vec::with_capacity(nx * ny);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        for field in line.trim().split(',') {
            let v: f64 = field
                .parse()
                .map_err(|_| malformed("CSV", format!("bad value {field:?}")))?;
            values.push(v);
        }
    }
    if values.len() != nx * ny {
        return Err(malformed(
            "CSV",
            format!("expected {} values, found {}", nx * ny, values.len()),
        ));
    }
    Ok((nx, ny, pitch_mm, values))
}

impl IntensityGrid {
    pub fn write_pgm16<W: Write>(&self, w: W) -> Result<(), ImageIoError> {
        write_pgm16(w, self.geometry.nx, self.geometry.ny, &self.values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ImageIoError> {
        write_grid_csv(
            w,
            self.geometry.nx,
            self.geometry.ny,
            self.geometry.pitch_mm,
            &self.values,
        )
    }

    /// Read a grid CSV as an intensity grid centred on the origin.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, ImageIoError> {
        let (nx, ny, pitch_mm, values) = read_grid_csv(r)?;
        let geometry = GridGeometry::centered(nx, ny, pitch_mm, (0.0, 0.0))
            .map_err(|e| malformed("CSV", e.to_string()))?;
        Ok(Self { geometry, values })
    }

    /// Read a PGM as an intensity grid with the given pitch, centred on the
    /// origin.
    pub fn read_pgm<R: Read>(r: R, pitch_mm: f64) -> Result<Self, ImageIoError> {
        let (nx, ny, values) = read_pgm(r)?;
        let geometry = GridGeometry::centered(nx, ny, pitch_mm, (0.0, 0.0))
            .map_err(|e| malformed("PGM", e.to_string()))?;
        Ok(Self { geometry, values })
    }
}

impl SpdcImage {
    pub fn write_pgm16<W: Write>(&self, w: W) -> Result<(), ImageIoError> {
        write_pgm16(w, self.geometry.nx, self.geometry.ny, &self.values)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ImageIoError> {
        write_grid_csv(
            w,
            self.geometry.nx,
            self.geometry.ny,
            self.geometry.pitch_mm,
            &self.values,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip_and_normalisation() {
        let values = vec![0.0, 1.0, 2.0, 4.0, 3.0, 0.5];
        let mut buf = Vec::new();
        write_pgm16(&mut buf, 3, 2, &values).unwrap();
        let (nx, ny, read) = read_pgm(&buf[..]).unwrap();
        assert_eq!((nx, ny), (3, 2));
        assert_eq!(read[3], 65535.0); // max pixel
        assert_eq!(read[0], 0.0);
        assert_eq!(read[1], (65535.0_f64 / 4.0).round());
    }

    #[test]
    fn pgm_all_zero() {
        let mut buf = Vec::new();
        write_pgm16(&mut buf, 4, 4, &vec![0.0; 16]).unwrap();
        let (_, _, read) = read_pgm(&buf[..]).unwrap();
        assert!(read.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pgm_truncated_rejected() {
        let values = vec![1.0; 64];
        let mut buf = Vec::new();
        write_pgm16(&mut buf, 8, 8, &values).unwrap();
        buf.truncate(buf.len() - 7);
        assert!(matches!(
            read_pgm(&buf[..]),
            Err(ImageIoError::Malformed { .. })
        ));
        assert!(read_pgm(&b"P6\n2 2\n255\n0000"[..]).is_err());
    }

    #[test]
    fn pgm_with_comment_header() {
        let mut data = b"P5\n# a comment\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[7, 250]);
        let (nx, ny, v) = read_pgm(&data[..]).unwrap();
        assert_eq!((nx, ny), (2, 1));
        assert_eq!(v, vec![7.0, 250.0]);
    }

    #[test]
    fn csv_round_trip_exact() {
        let values: Vec<f64> = (0..12).map(|k| (k as f64).exp() * 1e-7).collect();
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, 4, 3, 0.0625, &values).unwrap();
        let (nx, ny, pitch, read) = read_grid_csv(&buf[..]).unwrap();
        assert_eq!((nx, ny), (4, 3));
        assert_eq!(pitch, 0.0625);
        assert_eq!(read, values); // bit-exact via shortest round-trip formatting
    }

    #[test]
    fn csv_bad_header_rejected() {
        assert!(read_grid_csv(&b"wrong\n1,1,1\n0\n"[..]).is_err());
        assert!(read_grid_csv(&b"nx,ny,pitch_mm\n2,2,0.1\n1,2\n"[..]).is_err());
    }
}
