use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sim::ArtifactEvent;

pub fn write_events<W: Write>(mut out: W, events: &[ArtifactEvent]) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read one event per line; blank lines are ignored.
pub fn read_events<R: BufRead>(input: R) -> Result<Vec<ArtifactEvent>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        events.push(ev);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{ArtifactKind, DriftShape};

    #[test]
    fn round_trip() {
        let events = vec![
            ArtifactEvent {
                trial: 0,
                channel: 3,
                onset: 5.5,
                kind: ArtifactKind::Pop {
                    amplitude: 101.25,
                    decay_rate: 0.2,
                },
            },
            ArtifactEvent {
                trial: 4,
                channel: 0,
                onset: 3.0,
                kind: ArtifactKind::Drift {
                    shape: DriftShape::default(),
                    seed: u64::MAX - 7,
                },
            },
        ];
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        assert_eq!(read_events(&buf[..]).unwrap(), events);
        let err = read_events(&b"\n{\"trial\":1}\n"[..]).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
