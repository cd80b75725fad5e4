//! Grayscale PGM (P2 / P5) reader for directory-backed frame sources.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame_gate::Frame;

/// Parse a PGM image. 8-bit intensities map to `value / 255`.
pub fn parse_pgm(bytes: &[u8], timestamp: f64) -> Result<Frame> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos).ok_or_else(|| Error::invalid("empty PGM"))?;
    let binary = match magic.as_str() {
        "P5" => true,
        "P2" => false,
        other => return Err(Error::invalid(format!("unsupported PGM magic `{other}`"))),
    };
    let mut header = [0usize; 3];
    for slot in header.iter_mut() {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| Error::invalid("truncated PGM header"))?;
        *slot = tok
            .parse()
            .map_err(|_| Error::invalid(format!("bad PGM header field `{tok}`")))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(Error::invalid(format!(
            "only 8-bit PGM (maxval 255) is supported, got {maxval}"
        )));
    }
    let n = width * height;
    let pixels: Vec<f64> = if binary {
        // exactly one whitespace byte separates the header from raster data
        pos += 1;
        let raster = bytes
            .get(pos..pos + n)
            .ok_or_else(|| Error::invalid("truncated PGM raster"))?;
        raster.iter().map(|&b| f64::from(b) / 255.0).collect()
    } else {
        let mut px = Vec::with_capacity(n);
        for _ in 0..n {
            let tok = next_token(bytes, &mut pos).ok_or_else(|| Error::invalid("truncated PGM raster"))?;
            let v: u8 = tok
                .parse()
                .map_err(|_| Error::invalid(format!("bad PGM sample `{tok}`")))?;
            px.push(f64::from(v) / 255.0);
        }
        px
    };
    Frame::new(width, height, pixels, timestamp)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.pixels().iter().map(|p| (p * 255.0).round() as u8));
    out
}

/// Lists `*.pgm` files in a directory sorted by file name.
pub fn list_pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Frames from a directory of PGM images; frame `i` gets timestamp `i / fps`.
pub fn pgm_dir_frames(dir: &Path, fps: f64) -> Result<impl Iterator<Item = Result<Frame>>> {
    if !(fps > 0.0) {
        return Err(Error::invalid("fps must be > 0"));
    }
    let files = list_pgm_files(dir)?;
    Ok(files.into_iter().enumerate().map(move |(i, path)| {
        let bytes = std::fs::read(&path)?;
        parse_pgm(&bytes, i as f64 / fps)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_pgm_is_bit_exact() {
        let mut bytes = b"P5\n# comment\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 255, 128, 1, 254]);
        let f = parse_pgm(&bytes, 0.5).unwrap();
        assert_eq!((f.width(), f.height()), (3, 2));
        assert_eq!(f.at(1, 0), 51.0 / 255.0);
        assert_eq!(f.at(2, 0), 1.0);
        assert_eq!(f.at(0, 1), 128.0 / 255.0);
        assert_eq!(f.timestamp, 0.5);
    }

    #[test]
    fn ascii_pgm() {
        let f = parse_pgm(b"P2 2 2 255\n0 255\n10 20\n", 0.0).unwrap();
        assert_eq!(f.at(0, 1), 10.0 / 255.0);
    }

    #[test]
    fn encode_then_parse() {
        let f = parse_pgm(b"P2 2 2 255\n0 255\n10 20\n", 0.0).unwrap();
        let g = parse_pgm(&encode_pgm(&f), 0.0).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn rejects_other_formats() {
        assert!(parse_pgm(b"P6 2 2 255\n", 0.0).is_err());
        assert!(parse_pgm(b"P5 2 2 65535\n", 0.0).is_err());
        assert!(parse_pgm(b"P5 2 2 255\n\x00", 0.0).is_err());
    }

    #[test]
    fn directory_source_orders_by_name() {
        let dir = tempfile::tempdir().unwrap();
        for (name, v) in [("b.pgm", 20u8), ("a.pgm", 10), ("c.txt", 0)] {
            let mut bytes = b"P5 2 2 255\n".to_vec();
            bytes.extend_from_slice(&[v; 4]);
            std::fs::write(dir.path().join(name), bytes).unwrap();
        }
        let frames: Vec<Frame> = pgm_dir_frames(dir.path(), 2.0).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].at(0, 0), 10.0 / 255.0);
        assert_eq!(frames[1].timestamp, 0.5);
    }
}
