//! Checkpoint serialization for a spec + parameter pair.
//!
//! Two on-disk forms share one loader: a little-endian binary format with a
//! `FFNC` magic, and a line-oriented text format that survives diffing.
//! Both round-trip every f64 bit-exactly (text relies on shortest round-trip
//! formatting).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::net::{Activation, NetworkSpec, Parameters};

const MAGIC: &[u8; 4] = b"FFNC";
const BINARY_VERSION: u16 = 1;
const TEXT_HEADER: &str = "ffn-text 1";

pub fn save_checkpoint_binary(
    path: &Path,
    spec: &NetworkSpec,
    params: &Parameters,
) -> Result<()> {
    check_pair(spec, params)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&[activation_tag(spec.activation), 0])?;
    w.write_all(&(spec.layer_sizes.len() as u32).to_le_bytes())?;
    for &size in &spec.layer_sizes {
        w.write_all(&(size as u32).to_le_bytes())?;
    }
    w.write_all(&(spec.sensitive_slice.start as u32).to_le_bytes())?;
    w.write_all(&(spec.sensitive_slice.end as u32).to_le_bytes())?;
    w.write_all(&params.version.to_le_bytes())?;
    for layer in &params.layers {
        for v in layer.weights.iter().chain(&layer.biases) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint_text(path: &Path, spec: &NetworkSpec, params: &Parameters) -> Result<()> {
    check_pair(spec, params)?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{TEXT_HEADER}")?;
    write!(w, "layers")?;
    for &size in &spec.layer_sizes {
        write!(w, " {size}")?;
    }
    writeln!(w)?;
    writeln!(w, "sensitive {} {}", spec.sensitive_slice.start, spec.sensitive_slice.end)?;
    writeln!(w, "version {}", params.version)?;
    for layer in &params.layers {
        for v in layer.weights.iter().chain(&layer.biases) {
            writeln!(w, "{v}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Loads either checkpoint form, detecting it from the leading bytes.
pub fn load_checkpoint(path: &Path) -> Result<(NetworkSpec, Parameters)> {
    let mut file = File::open(path)?;
    let mut head = [0u8; 4];
    let got = read_up_to(&mut file, &mut head)?;
    if got == 4 && &head == MAGIC {
        load_binary(BufReader::new(file))
    } else {
        drop(file);
        load_text(path)
    }
}

fn read_up_to(file: &mut File, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = file.read(&mut buf[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    Ok(filled)
}

fn load_binary(mut r: impl Read) -> Result<(NetworkSpec, Parameters)> {
    let version = read_u16(&mut r)?;
    if version != BINARY_VERSION {
        return Err(Error::Checkpoint(format!("unsupported binary version {version}")));
    }
    let mut tag = [0u8; 2];
    r.read_exact(&mut tag).map_err(truncated)?;
    let activation = parse_activation(tag[0])?;
    let count = read_u32(&mut r)? as usize;
    if !(2..=64).contains(&count) {
        return Err(Error::Checkpoint(format!("implausible layer count {count}")));
    }
    let mut layer_sizes = Vec::with_capacity(count);
    for _ in 0..count {
        layer_sizes.push(read_u32(&mut r)? as usize);
    }
    let start = read_u32(&mut r)? as usize;
    let end = read_u32(&mut r)? as usize;
    let params_version = read_u64(&mut r)?;

    let mut spec = NetworkSpec::new(layer_sizes, start..end)
        .map_err(|e| Error::Checkpoint(format!("invalid stored spec: {e}")))?;
    spec.activation = activation;

    let mut params = Parameters::zeros(&spec);
    params.version = params_version;
    for layer in &mut params.layers {
        read_f64_block(&mut r, &mut layer.weights)?;
        read_f64_block(&mut r, &mut layer.biases)?;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    params.validate_finite()?;
    Ok((spec, params))
}

fn load_text(path: &Path) -> Result<(NetworkSpec, Parameters)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = next_line(&mut lines)?;
    if header.trim() != TEXT_HEADER {
        return Err(Error::Checkpoint("unrecognized checkpoint header".into()));
    }
    let layers_line = next_line(&mut lines)?;
    let layer_sizes = parse_prefixed_usizes(&layers_line, "layers")?;
    let sens_line = next_line(&mut lines)?;
    let sens = parse_prefixed_usizes(&sens_line, "sensitive")?;
    if sens.len() != 2 {
        return Err(Error::Checkpoint("sensitive line needs start and end".into()));
    }
    let version_line = next_line(&mut lines)?;
    let version = parse_prefixed_usizes(&version_line, "version")?;
    if version.len() != 1 {
        return Err(Error::Checkpoint("version line needs one value".into()));
    }

    let spec = NetworkSpec::new(layer_sizes, sens[0]..sens[1])
        .map_err(|e| Error::Checkpoint(format!("invalid stored spec: {e}")))?;
    let mut params = Parameters::zeros(&spec);
    params.version = version[0] as u64;
    for layer in &mut params.layers {
        let rows = layer.rows;
        let cols = layer.cols;
        fill_from_lines(&mut lines, &mut layer.weights, rows * cols)?;
        fill_from_lines(&mut lines, &mut layer.biases, rows)?;
    }
    for line in lines {
        if !line?.trim().is_empty() {
            return Err(Error::Checkpoint("trailing values after parameters".into()));
        }
    }
    params.validate_finite()?;
    Ok((spec, params))
}

fn check_pair(spec: &NetworkSpec, params: &Parameters) -> Result<()> {
    if !params.matches_spec(spec) {
        return Err(Error::Shape("parameters do not match spec".into()));
    }
    Ok(())
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
    }
}

fn parse_activation(tag: u8) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Relu),
        other => Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
    }
}

fn truncated(_: std::io::Error) -> Error {
    Error::Checkpoint("truncated checkpoint".into())
}

fn read_u16(r: &mut impl Read) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64_block(r: &mut impl Read, out: &mut [f64]) -> Result<()> {
    let mut b = [0u8; 8];
    for slot in out {
        r.read_exact(&mut b).map_err(truncated)?;
        *slot = f64::from_le_bytes(b);
    }
    Ok(())
}

type Lines = std::io::Lines<BufReader<File>>;

fn next_line(lines: &mut Lines) -> Result<String> {
    match lines.next() {
        Some(line) => Ok(line?),
        None => Err(Error::Checkpoint("truncated checkpoint".into())),
    }
}

fn parse_prefixed_usizes(line: &str, prefix: &str) -> Result<Vec<usize>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(prefix) {
        return Err(Error::Checkpoint(format!("expected `{prefix}` line, got `{line}`")));
    }
    parts
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Checkpoint(format!("bad integer `{p}` in `{prefix}` line")))
        })
        .collect()
}

fn fill_from_lines(lines: &mut Lines, out: &mut [f64], expected: usize) -> Result<()> {
    debug_assert_eq!(out.len(), expected);
    for slot in out {
        let line = next_line(lines)?;
        let text = line.trim();
        *slot = text
            .parse::<f64>()
            .map_err(|_| Error::Checkpoint(format!("bad parameter value `{text}`")))?;
    }
    Ok(())
}
