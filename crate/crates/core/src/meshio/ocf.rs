//! OCF v1: organized cloud frame container.
//!
//! ```text
//! OCF 1
//! width W
//! height H
//! frames N
//! camera <id>
//! cond <key> <value>      (zero or more)
//! end_header
//! ```
//! followed by N frames, each an f64 LE timestamp then W·H row-major cells:
//! one validity byte, and for valid cells 3 × f32 LE (x, y, z in meters)
//! plus 3 bytes RGB.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{create, open, CloudPoint, FrameSequence, Location, MeshIoError, OrganizedCloud};
use crate::geom::Point3;

#[derive(Debug, Clone, PartialEq)]
pub struct OcfHeader {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub camera: String,
    pub conditions: Vec<(String, String)>,
}

impl OcfHeader {
    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "OCF 1")?;
        writeln!(w, "width {}", self.width)?;
        writeln!(w, "height {}", self.height)?;
        writeln!(w, "frames {}", self.frames)?;
        writeln!(w, "camera {}", self.camera)?;
        for (k, v) in &self.conditions {
            writeln!(w, "cond {k} {v}")?;
        }
        writeln!(w, "end_header")
    }
}

/// Streaming frame reader; keeps the byte offset for diagnostics.
pub struct OcfReader<R> {
    inner: R,
    header: OcfHeader,
    offset: u64,
    frames_read: usize,
}

impl OcfReader<BufReader<std::fs::File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MeshIoError> {
        let path = path.as_ref();
        OcfReader::new(BufReader::new(open(path)?)).map_err(|e| e.in_file(path))
    }
}

impl<R: BufRead> OcfReader<R> {
    pub fn new(mut inner: R) -> Result<Self, MeshIoError> {
        let mut offset = 0u64;
        let mut line_no = 0u64;
        let mut buf = Vec::new();
        let mut next_line = |inner: &mut R| -> Result<(u64, String), MeshIoError> {
            buf.clear();
            let n = inner.read_until(b'\n', &mut buf)?;
            line_no += 1;
            if n == 0 || buf.last() != Some(&b'\n') {
                return Err(MeshIoError::Truncated { at: Location::Byte(offset), msg: "header ends early".into() });
            }
            offset += n as u64;
            let s = String::from_utf8(buf[..n - 1].to_vec())
                .map_err(|_| MeshIoError::Header { at: Location::Line(line_no), msg: "not UTF-8".into() })?;
            Ok((line_no, s))
        };
        let bad = |line: u64, msg: &str| MeshIoError::Header { at: Location::Line(line), msg: msg.into() };

        let (n, magic) = next_line(&mut inner)?;
        if magic != "OCF 1" {
            return Err(bad(n, "expected `OCF 1`"));
        }
        let mut numeric = |key: &str, inner: &mut R| -> Result<usize, MeshIoError> {
            let (n, line) = next_line(inner)?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(n, &format!("expected `{key} <count>`")))
        };
        let width = numeric("width", &mut inner)?;
        let height = numeric("height", &mut inner)?;
        let frames = numeric("frames", &mut inner)?;
        let (n, line) = next_line(&mut inner)?;
        let camera = line
            .strip_prefix("camera ")
            .filter(|c| !c.is_empty())
            .ok_or_else(|| bad(n, "expected `camera <id>`"))?
            .to_string();
        let mut conditions = Vec::new();
        loop {
            let (n, line) = next_line(&mut inner)?;
            if line == "end_header" {
                break;
            }
            let rest = line.strip_prefix("cond ").ok_or_else(|| bad(n, "expected `cond` or `end_header`"))?;
            let (k, v) = rest.split_once(' ').ok_or_else(|| bad(n, "expected `cond <key> <value>`"))?;
            conditions.push((k.to_string(), v.to_string()));
        }
        Ok(Self { inner, header: OcfHeader { width, height, frames, camera, conditions }, offset, frames_read: 0 })
    }

    pub fn header(&self) -> &OcfHeader {
        &self.header
    }

    fn read_exact_at(&mut self, buf: &mut [u8], what: &str) -> Result<(), MeshIoError> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(MeshIoError::Truncated {
                        at: Location::Byte(self.offset + filled as u64),
                        msg: format!("frame {} ends inside {what}", self.frames_read),
                    })
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    /// Next frame, or `None` after the declared frame count.
    pub fn next_frame(&mut self) -> Option<Result<OrganizedCloud, MeshIoError>> {
        if self.frames_read == self.header.frames {
            return None;
        }
        Some(self.read_frame())
    }

    fn read_frame(&mut self) -> Result<OrganizedCloud, MeshIoError> {
        let mut ts = [0u8; 8];
        self.read_exact_at(&mut ts, "the timestamp")?;
        let timestamp = f64::from_le_bytes(ts);
        let n = self.header.width * self.header.height;
        let mut cells = Vec::with_capacity(n);
        let mut flag = [0u8; 1];
        let mut payload = [0u8; 15];
        for _ in 0..n {
            let flag_at = self.offset;
            self.read_exact_at(&mut flag, "a cell")?;
            match flag[0] {
                0 => cells.push(None),
                1 => {
                    self.read_exact_at(&mut payload, "a cell")?;
                    let f = |i: usize| f32::from_le_bytes(payload[i..i + 4].try_into().unwrap()) as f64;
                    cells.push(Some(CloudPoint {
                        position: Point3::new(f(0), f(4), f(8)),
                        color: [payload[12], payload[13], payload[14]],
                    }));
                }
                other => {
                    return Err(MeshIoError::Malformed {
                        at: Location::Byte(flag_at),
                        msg: format!("validity byte {other} (expected 0 or 1)"),
                    })
                }
            }
        }
        self.frames_read += 1;
        OrganizedCloud::new(self.header.width, self.header.height, timestamp, cells)
    }
}

/// Streaming frame writer; `finish` checks the declared frame count.
pub struct OcfWriter<W: Write> {
    inner: W,
    header: OcfHeader,
    written: usize,
}

impl<W: Write> OcfWriter<W> {
    pub fn new(mut inner: W, header: OcfHeader) -> Result<Self, MeshIoError> {
        header.write_to(&mut inner)?;
        Ok(Self { inner, header, written: 0 })
    }

    pub fn write_frame(&mut self, frame: &OrganizedCloud) -> Result<(), MeshIoError> {
        if frame.width() != self.header.width || frame.height() != self.header.height {
            return Err(MeshIoError::Invalid(format!(
                "frame is {}×{}, header declares {}×{}",
                frame.width(),
                frame.height(),
                self.header.width,
                self.header.height
            )));
        }
        if self.written == self.header.frames {
            return Err(MeshIoError::Invalid("more frames than declared in the header".into()));
        }
        let w = &mut self.inner;
        w.write_all(&frame.timestamp().to_le_bytes())?;
        for cell in frame.cells() {
            match cell {
                None => w.write_all(&[0])?,
                Some(c) => {
                    let mut rec = [0u8; 16];
                    rec[0] = 1;
                    for (i, v) in c.position.to_array().into_iter().enumerate() {
                        rec[1 + 4 * i..5 + 4 * i].copy_from_slice(&(v as f32).to_le_bytes());
                    }
                    rec[13..16].copy_from_slice(&c.color);
                    w.write_all(&rec)?;
                }
            }
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, MeshIoError> {
        if self.written != self.header.frames {
            return Err(MeshIoError::Invalid(format!(
                "{} frames written, header declares {}",
                self.written, self.header.frames
            )));
        }
        self.inner.flush()?;
        Ok(self.inner)
    }
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<FrameSequence, MeshIoError> {
    let path = path.as_ref();
    let mut reader = OcfReader::open(path)?;
    let mut frames = Vec::with_capacity(reader.header().frames);
    while let Some(f) = reader.next_frame() {
        frames.push(f.map_err(|e| e.in_file(path))?);
    }
    let h = reader.header().clone();
    if h.frames == 0 {
        return Err(MeshIoError::Invalid("file declares zero frames".into()).in_file(path));
    }
    FrameSequence::new(frames, h.camera, h.conditions).map_err(|e| e.in_file(path))
}

pub fn write_frames(seq: &FrameSequence, path: impl AsRef<Path>) -> Result<(), MeshIoError> {
    let path = path.as_ref();
    let file = create(path)?;
    let run = || -> Result<(), MeshIoError> {
        let mut w = OcfWriter::new(BufWriter::new(file), seq.header())?;
        for f in seq.frames() {
            w.write_frame(f)?;
        }
        w.finish()?;
        Ok(())
    };
    run().map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_point_seq() -> FrameSequence {
        let c = CloudPoint { position: Point3::new(0.5, -0.25, 1.5), color: [1, 2, 3] };
        let frame = OrganizedCloud::new(1, 1, 0.125, vec![Some(c)]).unwrap();
        FrameSequence::new(vec![frame], "lidar", vec![("tissue".into(), "liver".into())]).unwrap()
    }

    fn encode(seq: &FrameSequence) -> Vec<u8> {
        let mut w = OcfWriter::new(Vec::new(), seq.header()).unwrap();
        for f in seq.frames() {
            w.write_frame(f).unwrap();
        }
        w.finish().unwrap()
    }

    fn decode(bytes: &[u8]) -> Result<Vec<OrganizedCloud>, MeshIoError> {
        let mut r = OcfReader::new(bytes)?;
        let mut out = Vec::new();
        while let Some(f) = r.next_frame() {
            out.push(f?);
        }
        Ok(out)
    }

    #[test]
    fn single_point_exact() {
        let seq = single_point_seq();
        let bytes = encode(&seq);
        let header = b"OCF 1\nwidth 1\nheight 1\nframes 1\ncamera lidar\ncond tissue liver\nend_header\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 8 + 16);
        let frames = decode(&bytes).unwrap();
        assert_eq!(frames, seq.frames());
    }

    #[test]
    fn truncated_reports_offset() {
        let bytes = encode(&single_point_seq());
        let cut = bytes.len() - 5;
        let err = decode(&bytes[..cut]).unwrap_err();
        // The cell payload starts right after the validity byte.
        let payload_start = (bytes.len() - 15) as u64;
        match err {
            MeshIoError::Truncated { at: Location::Byte(o), .. } => assert_eq!(o, payload_start + 10),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_validity_byte() {
        let mut bytes = encode(&single_point_seq());
        let flag = bytes.len() - 16;
        bytes[flag] = 7;
        assert!(matches!(
            decode(&bytes),
            Err(MeshIoError::Malformed { at: Location::Byte(o), .. }) if o == flag as u64
        ));
    }

    #[test]
    fn header_mismatch() {
        let bytes = b"OCF 2\nwidth 1\n";
        assert!(matches!(OcfReader::new(&bytes[..]), Err(MeshIoError::Header { .. })));
        let bytes = b"OCF 1\nwidth x\n";
        assert!(matches!(OcfReader::new(&bytes[..]), Err(MeshIoError::Header { at: Location::Line(2), .. })));
    }

    #[test]
    fn writer_checks_frame_count() {
        let seq = single_point_seq();
        let mut h = seq.header();
        h.frames = 2;
        let mut w = OcfWriter::new(Vec::new(), h).unwrap();
        w.write_frame(&seq.frames()[0]).unwrap();
        assert!(w.finish().is_err());
    }
}
