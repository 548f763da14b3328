//! BTAG time-tag files and their CSV mirror.
//!
//! Layout, all little-endian:
//!
//! ```text
//! header (32 bytes)
//!   0  magic        b"BTAG"
//!   4  version      u32 = 1
//!   8  record count u64
//!  16  reserved     16 zero bytes
//! record (16 bytes each)
//!   0  timestamp_ns  u64
//!   8  pulse_index   u32
//!  12  station       u8 (0 = A, 1 = B)
//!  13  port_bit      u8
//!  14  setting_index u16
//! ```

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::source::{DetectionEvent, Station};

pub const MAGIC: [u8; 4] = *b"BTAG";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 32;
pub const RECORD_LEN: u64 = 16;

pub const CSV_HEADER: [&str; 5] = ["timestamp_ns", "pulse_index", "station", "port_bit", "setting_index"];

fn encode(e: &DetectionEvent) -> [u8; 16] {
    let mut buf = [0u8; 16];
    buf[..8].copy_from_slice(&e.timestamp_ns.to_le_bytes());
    buf[8..12].copy_from_slice(&e.pulse_index.to_le_bytes());
    buf[12] = e.station as u8;
    buf[13] = e.port_bit;
    buf[14..].copy_from_slice(&e.setting_index.to_le_bytes());
    buf
}

fn decode(buf: &[u8; 16], offset: u64) -> Result<DetectionEvent> {
    let station = Station::from_u8(buf[12]).ok_or_else(|| Error::Integrity {
        offset: offset + 12,
        message: format!("invalid station byte {}", buf[12]),
    })?;
    if buf[13] > 1 {
        return Err(Error::Integrity {
            offset: offset + 13,
            message: format!("invalid port bit {}", buf[13]),
        });
    }
    Ok(DetectionEvent {
        timestamp_ns: u64::from_le_bytes(buf[..8].try_into().expect("8 bytes")),
        pulse_index: u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes")),
        station,
        port_bit: buf[13],
        setting_index: u16::from_le_bytes(buf[14..].try_into().expect("2 bytes")),
    })
}

/// Writes a BTAG stream. The iterator length goes into the header.
pub fn write_btag<W, I>(mut w: W, events: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = DetectionEvent>,
    I::IntoIter: ExactSizeIterator,
{
    let events = events.into_iter();
    let mut header = [0u8; HEADER_LEN as usize];
    header[..4].copy_from_slice(&MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(events.len() as u64).to_le_bytes());
    w.write_all(&header)?;
    for e in events {
        w.write_all(&encode(&e))?;
    }
    w.flush()?;
    Ok(())
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Reads a BTAG stream, validating header, record count and field ranges.
pub fn read_btag<R: Read>(mut r: R) -> Result<Vec<DetectionEvent>> {
    let mut header = [0u8; HEADER_LEN as usize];
    let got = read_full(&mut r, &mut header)?;
    if got < header.len() {
        return Err(Error::Integrity {
            offset: got as u64,
            message: format!("truncated header ({got} of {HEADER_LEN} bytes)"),
        });
    }
    if header[..4] != MAGIC {
        return Err(Error::Integrity {
            offset: 0,
            message: "bad magic, not a BTAG file".into(),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Integrity {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let count = u64::from_le_bytes(header[8..16].try_into().expect("8 bytes"));
    let mut events = Vec::with_capacity(count.min(1 << 26) as usize);
    let mut buf = [0u8; RECORD_LEN as usize];
    for k in 0..count {
        let offset = HEADER_LEN + k * RECORD_LEN;
        let got = read_full(&mut r, &mut buf)?;
        if got < buf.len() {
            return Err(Error::Integrity {
                offset: offset + got as u64,
                message: format!("truncated: header declares {count} records, record {k} is incomplete"),
            });
        }
        events.push(decode(&buf, offset)?);
    }
    let mut probe = [0u8; 1];
    if read_full(&mut r, &mut probe)? > 0 {
        return Err(Error::Integrity {
            offset: HEADER_LEN + count * RECORD_LEN,
            message: format!("trailing bytes after {count} declared records"),
        });
    }
    Ok(events)
}

/// Writes the CSV mirror: a header line, then one record per line.
pub fn write_csv<W: Write>(w: W, events: impl IntoIterator<Item = DetectionEvent>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for e in events {
        out.write_record([
            e.timestamp_ns.to_string(),
            e.pulse_index.to_string(),
            (e.station as u8).to_string(),
            e.port_bit.to_string(),
            e.setting_index.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<DetectionEvent>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut events = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| Error::Integrity {
            offset: rec.position().map_or(0, |p| p.byte()),
            message: format!("line {}: invalid {field}", line + 2),
        };
        if rec.len() != CSV_HEADER.len() {
            return Err(bad("field count"));
        }
        let station = rec[2]
            .parse::<u8>()
            .ok()
            .and_then(Station::from_u8)
            .ok_or_else(|| bad("station"))?;
        let port_bit = rec[3].parse::<u8>().ok().filter(|&b| b <= 1).ok_or_else(|| bad("port_bit"))?;
        events.push(DetectionEvent {
            timestamp_ns: rec[0].parse().map_err(|_| bad("timestamp_ns"))?,
            pulse_index: rec[1].parse().map_err(|_| bad("pulse_index"))?,
            station,
            port_bit,
            setting_index: rec[4].parse().map_err(|_| bad("setting_index"))?,
        });
    }
    Ok(events)
}
