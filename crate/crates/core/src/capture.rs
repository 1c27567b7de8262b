//! Classic libpcap file reading and writing.
//!
//! The reader accepts both byte orders and both microsecond and nanosecond
//! magics; nanosecond timestamps are truncated to microseconds. The writer
//! always produces little-endian microsecond files with link type 1.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::codec::{decode_frame, encode_frame, DecodeError, EncodeError, GooseFrame};
use crate::time::Timestamp;

pub const MAGIC_MICROS: u32 = 0xA1B2_C3D4;
pub const MAGIC_NANOS: u32 = 0xA1B2_3C4D;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const SNAPLEN: u32 = 65_535;
/// Records larger than this are treated as corruption.
const MAX_RECORD_LEN: u32 = 262_144;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsResolution {
    Micro,
    Nano,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub path: String,
    pub link_type: u32,
    pub ts_resolution: TsResolution,
    pub frame_count: u64,
    pub goose_count: u64,
    pub malformed_count: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("bad pcap magic 0x{0:08x} (pcapng is not supported; convert with `editcap -F pcap`)")]
    BadMagic(u32),
    #[error("unsupported link type {0} (only Ethernet = 1)")]
    BadLinkType(u32),
    #[error("record {index} claims {len} bytes, exceeding the {MAX_RECORD_LEN}-byte limit")]
    CorruptRecord { index: u64, len: u32 },
    #[error("file ends inside record {0}")]
    TruncatedRecord(u64),
    #[error("frames must be sorted by timestamp (frame {index} precedes its predecessor)")]
    UnsortedInput { index: usize },
    #[error("cannot encode frame {index}: {source}")]
    Encode {
        index: usize,
        #[source]
        source: EncodeError,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One raw pcap record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcapRecord {
    pub ts: Timestamp,
    pub orig_len: u32,
    pub data: Vec<u8>,
}

/// Streaming reader over the records of a classic pcap stream.
pub struct PcapReader<R> {
    inner: R,
    swapped: bool,
    resolution: TsResolution,
    link_type: u32,
    index: u64,
    done: bool,
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

impl<R: Read> PcapReader<R> {
    pub fn new(mut inner: R) -> Result<Self, CaptureError> {
        let mut hdr = [0u8; 24];
        let n = read_exact_or_eof(&mut inner, &mut hdr)?;
        if n < 4 {
            return Err(CaptureError::BadMagic(0));
        }
        let magic_le = u32::from_le_bytes(hdr[0..4].try_into().unwrap());
        let (swapped, resolution) = match magic_le {
            MAGIC_MICROS => (false, TsResolution::Micro),
            MAGIC_NANOS => (false, TsResolution::Nano),
            m if m.swap_bytes() == MAGIC_MICROS => (true, TsResolution::Micro),
            m if m.swap_bytes() == MAGIC_NANOS => (true, TsResolution::Nano),
            m => return Err(CaptureError::BadMagic(m)),
        };
        if n < 24 {
            return Err(CaptureError::Io(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "truncated pcap global header",
            )));
        }
        let mut rdr = PcapReader {
            inner,
            swapped,
            resolution,
            link_type: 0,
            index: 0,
            done: false,
        };
        rdr.link_type = rdr.u32_at(&hdr, 20);
        if rdr.link_type != LINKTYPE_ETHERNET {
            return Err(CaptureError::BadLinkType(rdr.link_type));
        }
        Ok(rdr)
    }

    fn u32_at(&self, buf: &[u8], at: usize) -> u32 {
        let raw: [u8; 4] = buf[at..at + 4].try_into().unwrap();
        if self.swapped {
            u32::from_be_bytes(raw)
        } else {
            u32::from_le_bytes(raw)
        }
    }

    pub fn resolution(&self) -> TsResolution {
        self.resolution
    }

    pub fn link_type(&self) -> u32 {
        self.link_type
    }

    fn next_record(&mut self) -> Result<Option<PcapRecord>, CaptureError> {
        let mut hdr = [0u8; 16];
        match read_exact_or_eof(&mut self.inner, &mut hdr)? {
            0 => return Ok(None),
            16 => {}
            _ => return Err(CaptureError::TruncatedRecord(self.index)),
        }
        let secs = i64::from(self.u32_at(&hdr, 0));
        let frac = i64::from(self.u32_at(&hdr, 4));
        let incl = self.u32_at(&hdr, 8);
        let orig_len = self.u32_at(&hdr, 12);
        if incl > MAX_RECORD_LEN {
            return Err(CaptureError::CorruptRecord {
                index: self.index,
                len: incl,
            });
        }
        let micros = match self.resolution {
            TsResolution::Micro => frac,
            TsResolution::Nano => frac / 1000,
        };
        let mut data = vec![0u8; incl as usize];
        if read_exact_or_eof(&mut self.inner, &mut data)? != data.len() {
            return Err(CaptureError::TruncatedRecord(self.index));
        }
        self.index += 1;
        Ok(Some(PcapRecord {
            ts: Timestamp::from_secs_micros(secs, micros),
            orig_len,
            data,
        }))
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PcapRecord, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Streams decoded GOOSE frames out of a pcap, counting what it drops.
pub struct GooseStream<R> {
    records: PcapReader<R>,
    pub frame_count: u64,
    pub goose_count: u64,
    pub malformed_count: u64,
}

impl<R: Read> GooseStream<R> {
    pub fn new(inner: R) -> Result<Self, CaptureError> {
        Ok(GooseStream {
            records: PcapReader::new(inner)?,
            frame_count: 0,
            goose_count: 0,
            malformed_count: 0,
        })
    }

    pub fn resolution(&self) -> TsResolution {
        self.records.resolution()
    }
}

impl<R: Read> Iterator for GooseStream<R> {
    type Item = Result<GooseFrame, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let rec = match self.records.next()? {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            self.frame_count += 1;
            match decode_frame(&rec.data, rec.ts) {
                Ok(frame) => {
                    self.goose_count += 1;
                    return Some(Ok(frame));
                }
                Err(DecodeError::NotGoose { .. }) => {}
                Err(DecodeError::Malformed(why)) => {
                    self.malformed_count += 1;
                    warn!("dropping malformed GOOSE frame #{}: {why}", self.frame_count);
                }
            }
        }
    }
}

/// Reads every GOOSE frame of a pcap file in file order.
pub fn read_goose(path: impl AsRef<Path>) -> Result<(Vec<GooseFrame>, CaptureMeta), CaptureError> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut stream = GooseStream::new(BufReader::new(file))?;
    let mut frames = Vec::new();
    for frame in stream.by_ref() {
        frames.push(frame?);
    }
    let meta = CaptureMeta {
        path: path.display().to_string(),
        link_type: LINKTYPE_ETHERNET,
        ts_resolution: stream.resolution(),
        frame_count: stream.frame_count,
        goose_count: stream.goose_count,
        malformed_count: stream.malformed_count,
    };
    Ok((frames, meta))
}

/// Writer for little-endian, microsecond, Ethernet pcap streams.
pub struct PcapWriter<W: Write> {
    inner: W,
    last_ts: Option<Timestamp>,
    count: u64,
}

impl<W: Write> PcapWriter<W> {
    pub fn new(mut inner: W) -> io::Result<Self> {
        let mut hdr = Vec::with_capacity(24);
        hdr.extend_from_slice(&MAGIC_MICROS.to_le_bytes());
        hdr.extend_from_slice(&2u16.to_le_bytes());
        hdr.extend_from_slice(&4u16.to_le_bytes());
        hdr.extend_from_slice(&0i32.to_le_bytes());
        hdr.extend_from_slice(&0u32.to_le_bytes());
        hdr.extend_from_slice(&SNAPLEN.to_le_bytes());
        hdr.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        inner.write_all(&hdr)?;
        Ok(PcapWriter {
            inner,
            last_ts: None,
            count: 0,
        })
    }

    /// Appends a raw record; timestamps must be non-decreasing.
    pub fn write_record(&mut self, ts: Timestamp, data: &[u8]) -> Result<(), CaptureError> {
        if self.last_ts.is_some_and(|prev| ts < prev) {
            return Err(CaptureError::UnsortedInput {
                index: self.count as usize,
            });
        }
        let secs = u32::try_from(ts.secs())
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "timestamp outside pcap range"))?;
        let len = data.len() as u32;
        let mut hdr = [0u8; 16];
        hdr[0..4].copy_from_slice(&secs.to_le_bytes());
        hdr[4..8].copy_from_slice(&(ts.subsec_micros() as u32).to_le_bytes());
        hdr[8..12].copy_from_slice(&len.to_le_bytes());
        hdr[12..16].copy_from_slice(&len.to_le_bytes());
        self.inner.write_all(&hdr)?;
        self.inner.write_all(data)?;
        self.last_ts = Some(ts);
        self.count += 1;
        Ok(())
    }

    pub fn write_frame(&mut self, frame: &GooseFrame) -> Result<(), CaptureError> {
        let index = self.count as usize;
        let bytes = encode_frame(frame).map_err(|source| CaptureError::Encode { index, source })?;
        self.write_record(frame.ts, &bytes)
    }

    pub fn into_inner(mut self) -> io::Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Writes frames to `path`. The input must already be sorted by timestamp;
/// nothing is written if it is not.
pub fn write_pcap(frames: &[GooseFrame], path: impl AsRef<Path>) -> Result<CaptureMeta, CaptureError> {
    if let Some(i) = frames.windows(2).position(|w| w[1].ts < w[0].ts) {
        return Err(CaptureError::UnsortedInput { index: i + 1 });
    }
    let path = path.as_ref();
    let mut w = PcapWriter::new(BufWriter::new(File::create(path)?))?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.into_inner()?;
    Ok(CaptureMeta {
        path: path.display().to_string(),
        link_type: LINKTYPE_ETHERNET,
        ts_resolution: TsResolution::Micro,
        frame_count: frames.len() as u64,
        goose_count: frames.len() as u64,
        malformed_count: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{MacAddr, VlanTag};

    fn frame(ts_us: i64, sq: u32) -> GooseFrame {
        let mut f = GooseFrame {
            ts: Timestamp::from_micros(ts_us),
            dst_mac: MacAddr([0x01, 0x0c, 0xcd, 0x01, 0x00, 0x01]),
            src_mac: MacAddr([0x00, 0x11, 0x22, 0x33, 0x44, 0x55]),
            vlan: Some(VlanTag { pcp: 4, vid: 1 }),
            appid: 1,
            pdu_len: 0,
            gocb_ref: "LD/LLN0$GO$gcb".into(),
            dat_set: "LD/LLN0$ds".into(),
            go_id: Some("G1".into()),
            ttl_ms: 2000,
            event_ts: [0; 8],
            st_num: 1,
            sq_num: sq,
            test: false,
            conf_rev: 1,
            nds_com: false,
            num_entries: 1,
            all_data: vec![0x83, 0x01, 0x00],
            frame_len: 0,
        };
        f.sync_lengths().unwrap();
        f
    }

    fn lldp_frame() -> Vec<u8> {
        let mut b = vec![0x01, 0x80, 0xc2, 0x00, 0x00, 0x0e, 0, 1, 2, 3, 4, 5, 0x88, 0xcc];
        b.resize(60, 0);
        b
    }

    #[test]
    fn header_only_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.pcap");
        let meta = write_pcap(&[], &p).unwrap();
        assert_eq!(meta.frame_count, 0);
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 24);
        let (frames, meta) = read_goose(&p).unwrap();
        assert!(frames.is_empty());
        assert_eq!((meta.frame_count, meta.goose_count), (0, 0));
    }

    #[test]
    fn record_header_arithmetic() {
        let mut buf = Vec::new();
        let f = frame(1_000_001, 0);
        {
            let mut w = PcapWriter::new(&mut buf).unwrap();
            w.write_frame(&f).unwrap();
        }
        assert_eq!(&buf[24..28], &1u32.to_le_bytes());
        assert_eq!(&buf[28..32], &1u32.to_le_bytes());
        let len = f.frame_len.to_le_bytes();
        assert_eq!(&buf[32..36], &len);
        assert_eq!(&buf[36..40], &len);
        assert_eq!(&buf[0..4], &[0xd4, 0xc3, 0xb2, 0xa1]);
        assert_eq!(&buf[16..20], &SNAPLEN.to_le_bytes());
        assert_eq!(&buf[20..24], &1u32.to_le_bytes());
    }

    #[test]
    fn roundtrip_file() {
        let frames: Vec<_> = (0..50).map(|i| frame(1_700_000_000_000_000 + i * 12_345, i as u32)).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.pcap");
        write_pcap(&frames, &p).unwrap();
        let (back, meta) = read_goose(&p).unwrap();
        assert_eq!(back, frames);
        assert_eq!(meta.goose_count, 50);
        assert_eq!(meta.ts_resolution, TsResolution::Micro);
    }

    #[test]
    fn unsorted_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.pcap");
        let err = write_pcap(&[frame(2, 0), frame(1, 1)], &p).unwrap_err();
        assert!(matches!(err, CaptureError::UnsortedInput { index: 1 }));
        assert!(!p.exists());
    }

    #[test]
    fn non_goose_frames_counted_and_dropped() {
        let mut buf = Vec::new();
        {
            let mut w = PcapWriter::new(&mut buf).unwrap();
            w.write_frame(&frame(1, 0)).unwrap();
            w.write_record(Timestamp::from_micros(2), &lldp_frame()).unwrap();
            w.write_frame(&frame(3, 1)).unwrap();
            w.write_record(Timestamp::from_micros(4), &lldp_frame()).unwrap();
            w.write_frame(&frame(5, 2)).unwrap();
        }
        let mut s = GooseStream::new(&buf[..]).unwrap();
        let got: Vec<_> = s.by_ref().map(Result::unwrap).collect();
        assert_eq!(got.len(), 3);
        assert_eq!(s.frame_count, 5);
        assert_eq!(s.goose_count, 3);
    }

    #[test]
    fn malformed_goose_counted() {
        let mut buf = Vec::new();
        let bytes = encode_frame(&frame(1, 0)).unwrap();
        {
            let mut w = PcapWriter::new(&mut buf).unwrap();
            w.write_record(Timestamp::from_micros(1), &bytes[..30]).unwrap();
            w.write_frame(&frame(2, 1)).unwrap();
        }
        let mut s = GooseStream::new(&buf[..]).unwrap();
        assert_eq!(s.by_ref().count(), 1);
        assert_eq!(s.malformed_count, 1);
        assert_eq!(s.frame_count, 2);
    }

    fn swap_header(mut le: Vec<u8>, nanos: bool) -> Vec<u8> {
        // Rewrite a little-endian file as big-endian, optionally nanosecond.
        let magic = if nanos { MAGIC_NANOS } else { MAGIC_MICROS };
        le[0..4].copy_from_slice(&magic.to_be_bytes());
        for at in [4usize, 6] {
            let v = u16::from_le_bytes([le[at], le[at + 1]]);
            le[at..at + 2].copy_from_slice(&v.to_be_bytes());
        }
        for at in [8usize, 12, 16, 20] {
            let v = u32::from_le_bytes(le[at..at + 4].try_into().unwrap());
            le[at..at + 4].copy_from_slice(&v.to_be_bytes());
        }
        let mut pos = 24;
        while pos < le.len() {
            let incl = u32::from_le_bytes(le[pos + 8..pos + 12].try_into().unwrap()) as usize;
            for k in 0..4 {
                let at = pos + 4 * k;
                let mut v = u32::from_le_bytes(le[at..at + 4].try_into().unwrap());
                if nanos && k == 1 {
                    v = v * 1000 + 999;
                }
                le[at..at + 4].copy_from_slice(&v.to_be_bytes());
            }
            pos += 16 + incl;
        }
        le
    }

    #[test]
    fn big_endian_and_nanosecond_inputs() {
        let frames = vec![frame(5_000_123, 0), frame(6_250_000, 1)];
        let mut buf = Vec::new();
        {
            let mut w = PcapWriter::new(&mut buf).unwrap();
            for f in &frames {
                w.write_frame(f).unwrap();
            }
        }
        for nanos in [false, true] {
            let be = swap_header(buf.clone(), nanos);
            let s = GooseStream::new(&be[..]).unwrap();
            let back: Vec<_> = s.map(Result::unwrap).collect();
            assert_eq!(back, frames, "nanos={nanos}");
        }
    }

    #[test]
    fn bad_magic_and_link_type() {
        let mut buf = Vec::new();
        PcapWriter::new(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = 0x0a;
        assert!(matches!(GooseStream::new(&bad[..]), Err(CaptureError::BadMagic(_))));
        let mut bad = buf.clone();
        bad[20] = 101;
        assert!(matches!(GooseStream::new(&bad[..]), Err(CaptureError::BadLinkType(101))));
        // pcapng section header block
        let ng = [0x0a, 0x0d, 0x0d, 0x0a, 0, 0, 0, 0];
        assert!(matches!(GooseStream::new(&ng[..]), Err(CaptureError::BadMagic(_))));
    }

    #[test]
    fn truncated_record_is_an_error() {
        let mut buf = Vec::new();
        {
            let mut w = PcapWriter::new(&mut buf).unwrap();
            w.write_frame(&frame(1, 0)).unwrap();
        }
        buf.truncate(buf.len() - 5);
        let mut s = GooseStream::new(&buf[..]).unwrap();
        assert!(matches!(s.next(), Some(Err(CaptureError::TruncatedRecord(0)))));
        assert!(s.next().is_none());
    }
}
