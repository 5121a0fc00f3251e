//! Framed binary streaming.
//!
//! Both directions start with a 12-byte handshake: `b"HEAR"`, the protocol
//! version and the channel count N (little-endian `u32`). Each frame is then
//! N little-endian `f32` values. The corrector writes and flushes one output
//! frame per input frame before reading the next. The optional side channel
//! carries 2N values per frame: the artifact probabilities followed by the
//! uncorrectable probabilities.

use std::io::{ErrorKind, Read, Write};

use crate::corrector::Corrector;
use crate::error::{Error, Result};

pub const STREAM_MAGIC: [u8; 4] = *b"HEAR";
pub const STREAM_VERSION: u32 = 1;

pub fn write_handshake<W: Write + ?Sized>(out: &mut W, channels: usize) -> Result<()> {
    let n = u32::try_from(channels).map_err(|_| Error::InvalidConfig(format!("{channels} channels")))?;
    out.write_all(&STREAM_MAGIC)?;
    out.write_all(&STREAM_VERSION.to_le_bytes())?;
    out.write_all(&n.to_le_bytes())?;
    out.flush()?;
    Ok(())
}

/// Fill `buf` completely; `Ok(false)` on a clean end of stream before the first byte.
fn fill<R: Read + ?Sized>(input: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        match input.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => {
                return Err(Error::MalformedStream(format!(
                    "stream ended inside a frame ({got} of {} bytes)",
                    buf.len()
                )))
            }
            Ok(k) => got += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(true)
}

/// Read the handshake and return the channel count.
pub fn read_handshake<R: Read + ?Sized>(input: &mut R) -> Result<usize> {
    let mut buf = [0u8; 12];
    if !fill(input, &mut buf)? {
        return Err(Error::MalformedStream("missing handshake".into()));
    }
    if buf[..4] != STREAM_MAGIC {
        return Err(Error::MalformedStream("bad handshake magic".into()));
    }
    let version = u32::from_le_bytes([buf[4], buf[5], buf[6], buf[7]]);
    if version != STREAM_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: STREAM_VERSION,
        });
    }
    let channels = u32::from_le_bytes([buf[8], buf[9], buf[10], buf[11]]) as usize;
    if channels == 0 {
        return Err(Error::MalformedStream("zero channels".into()));
    }
    Ok(channels)
}

/// Read one frame into `frame`, using `bytes` (4 × channels long) as scratch.
/// Returns `Ok(false)` at a clean end of stream.
pub fn read_frame<R: Read + ?Sized>(input: &mut R, bytes: &mut [u8], frame: &mut [f64]) -> Result<bool> {
    if !fill(input, bytes)? {
        return Ok(false);
    }
    for (v, b) in frame.iter_mut().zip(bytes.chunks_exact(4)) {
        *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
    }
    Ok(true)
}

pub fn write_frame<W: Write + ?Sized>(out: &mut W, frame: &[f64], bytes: &mut [u8]) -> Result<()> {
    for (b, v) in bytes.chunks_exact_mut(4).zip(frame) {
        b.copy_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&bytes[..4 * frame.len()])?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamSummary {
    pub frames: u64,
}

/// Correct a framed stream causally with `corrector`, continuing from its
/// current state.
pub fn run_stream<R: Read, W: Write>(
    mut input: R,
    mut output: W,
    mut side: Option<&mut dyn Write>,
    corrector: &mut Corrector,
) -> Result<StreamSummary> {
    let n = corrector.channels();
    let channels = read_handshake(&mut input)?;
    if channels != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: channels,
        });
    }
    write_handshake(&mut output, n)?;
    if let Some(side) = side.as_deref_mut() {
        write_handshake(side, 2 * n)?;
    }

    let mut in_bytes = vec![0u8; 4 * n];
    let mut out_bytes = vec![0u8; 8 * n];
    let mut x = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut probs = vec![0.0; 2 * n];
    let mut frames = 0u64;
    while read_frame(&mut input, &mut in_bytes, &mut x)? {
        match side.as_deref_mut() {
            Some(side) => {
                let (p_art, uncorrectable) = probs.split_at_mut(n);
                corrector.correct_sample_into(&x, &mut y, Some(p_art))?;
                corrector.d_matrix().apply(p_art, uncorrectable)?;
                write_frame(side, &probs, &mut out_bytes)?;
                side.flush()?;
            }
            None => corrector.correct_sample_into(&x, &mut y, None)?,
        }
        write_frame(&mut output, &y, &mut out_bytes)?;
        output.flush()?;
        frames += 1;
    }
    Ok(StreamSummary { frames })
}
