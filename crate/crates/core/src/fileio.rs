//! Shared plumbing for the ASCII-header + little-endian payload formats.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAX_HEADER: usize = 512;

/// Reads one `\n`-terminated ASCII header line and splits it on whitespace.
pub(crate) fn read_header<R: Read>(r: &mut R) -> Result<Vec<String>> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(Error::format("unterminated header"));
        }
        if byte[0] == b'\n' {
            break;
        }
        line.push(byte[0]);
        if line.len() > MAX_HEADER {
            return Err(Error::format("header too long"));
        }
    }
    let text = String::from_utf8(line).map_err(|_| Error::format("header is not ASCII"))?;
    Ok(text.split_whitespace().map(str::to_owned).collect())
}

pub(crate) fn parse_usize(field: &str, what: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::format(format!("bad {what} field {field:?}")))
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format("truncated payload"),
        _ => Error::Io(e),
    })?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::format("trailing bytes after payload"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
