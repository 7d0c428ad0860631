//! `GFN1` grid files: a five-line ASCII header, a blank line, then the samples
//! as row-major little-endian `f64`.
//!
//! ```text
//! GFN1
//! 2
//! 65 33
//! 0.125 0.25
//! -4 -4
//!
//! <binary>
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{check_meta, GridError, GridFunction};

pub(crate) struct Header {
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub body_offset: usize,
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub(crate) fn write_header(
    w: &mut impl Write,
    magic: &str,
    shape: &[usize],
    spacing: &[f64],
    origin: &[f64],
) -> std::io::Result<()> {
    write!(
        w,
        "{magic}\n{}\n{}\n{}\n{}\n\n",
        shape.len(),
        join(shape),
        join(spacing),
        join(origin)
    )
}

pub(crate) fn parse_header(bytes: &[u8], magic: &str) -> Result<Header, GridError> {
    let bad = |m: &str| GridError::Format(m.to_string());
    let mut lines = Vec::with_capacity(6);
    let mut pos = 0;
    while lines.len() < 6 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("truncated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not ASCII"))?;
        lines.push(line.trim_end_matches('\r').to_string());
        pos += end + 1;
    }
    if lines[0] != magic {
        return Err(GridError::Format(format!("expected magic `{magic}`, found `{}`", lines[0])));
    }
    let n: usize = lines[1].trim().parse().map_err(|_| bad("bad dimension line"))?;
    let shape: Vec<usize> = lines[2]
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("bad shape line"))?;
    let floats = |l: &str, what: &str| -> Result<Vec<f64>, GridError> {
        l.split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| GridError::Format(format!("bad {what} line")))
    };
    let spacing = floats(&lines[3], "spacing")?;
    let origin = floats(&lines[4], "origin")?;
    if !lines[5].trim().is_empty() {
        return Err(bad("missing blank separator line"));
    }
    if shape.len() != n {
        return Err(GridError::Metadata(n));
    }
    check_meta(&shape, &spacing, &origin)?;
    Ok(Header { shape, spacing, origin, body_offset: pos })
}

pub fn write_gfn(w: &mut impl Write, u: &GridFunction) -> Result<(), GridError> {
    write_header(w, "GFN1", u.shape(), u.spacing(), u.origin())?;
    let mut body = Vec::with_capacity(8 * u.len());
    for v in u.values() {
        body.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

pub fn read_gfn(r: &mut impl Read) -> Result<GridFunction, GridError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let h = parse_header(&bytes, "GFN1")?;
    let body = &bytes[h.body_offset..];
    let expected: usize = h.shape.iter().product();
    if body.len() != 8 * expected {
        return Err(GridError::Format(format!(
            "body has {} bytes, expected {}",
            body.len(),
            8 * expected
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    GridFunction::new(h.shape, h.spacing, h.origin, values)
}

pub fn write_gfn_file(path: impl AsRef<Path>, u: &GridFunction) -> Result<(), GridError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_gfn(&mut f, u)?;
    f.flush()?;
    Ok(())
}

pub fn read_gfn_file(path: impl AsRef<Path>) -> Result<GridFunction, GridError> {
    read_gfn(&mut std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let u = GridFunction::new(vec![2, 3], vec![0.5, 0.25], vec![-1.0, 0.0], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
            .unwrap();
        let mut buf = Vec::new();
        write_gfn(&mut buf, &u).unwrap();
        let head = b"GFN1\n2\n2 3\n0.5 0.25\n-1 0\n\n";
        assert_eq!(&buf[..head.len()], head);
        assert_eq!(buf.len(), head.len() + 48);
        assert_eq!(&buf[head.len() + 8..head.len() + 16], &1.0f64.to_le_bytes());
    }

    #[test]
    fn rejects_malformed() {
        assert!(read_gfn(&mut &b"GFN2\n1\n2\n1\n0\n\n"[..]).is_err());
        assert!(read_gfn(&mut &b"GFN1\n1\n2\n1\n0\n\nabc"[..]).is_err());
        assert!(read_gfn(&mut &b"GFN1\n1\n2\n1\n"[..]).is_err());
        assert!(read_gfn(&mut &b"GFN1\n2\n2\n1\n0\n\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(vals in proptest::collection::vec(-1e6f64..1e6, 12), h in 1e-3f64..10.0, o in -5.0f64..5.0) {
            let u = GridFunction::new(vec![3, 4], vec![h, h * 0.5], vec![o, -o], vals).unwrap();
            let mut buf = Vec::new();
            write_gfn(&mut buf, &u).unwrap();
            let back = read_gfn(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, u);
        }
    }
}
