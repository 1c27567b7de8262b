//! The pcap reader streams: a million-record capture generated on the fly
//! decodes with a small, constant peak heap footprint.

use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};

use goosewatch_core::capture::{GooseStream, PcapWriter};
use goosewatch_core::codec::{encode_frame, GooseFrame, MacAddr};
use goosewatch_core::time::Timestamp;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

/// Emits a pcap global header followed by `n` copies of one record with
/// increasing timestamps, without materialising the file.
struct SyntheticPcap {
    header: Vec<u8>,
    frame: Vec<u8>,
    n: u64,
    next: u64,
    pending: Vec<u8>,
    pos: usize,
}

impl SyntheticPcap {
    fn new(frame: Vec<u8>, n: u64) -> Self {
        let header = PcapWriter::new(Vec::new()).unwrap().into_inner().unwrap();
        SyntheticPcap {
            pending: header.clone(),
            header,
            frame,
            n,
            next: 0,
            pos: 0,
        }
    }

    fn refill(&mut self) -> bool {
        if self.next == self.n {
            return false;
        }
        let ts = Timestamp::from_micros(1_700_000_000_000_000 + self.next as i64 * 1000);
        let mut w = PcapWriter::new(Vec::with_capacity(self.header.len() + 16 + self.frame.len())).unwrap();
        w.write_record(ts, &self.frame).unwrap();
        let bytes = w.into_inner().unwrap();
        self.pending = bytes[self.header.len()..].to_vec();
        self.pos = 0;
        self.next += 1;
        true
    }
}

impl Read for SyntheticPcap {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        if self.pos == self.pending.len() && !self.refill() {
            return Ok(0);
        }
        let k = buf.len().min(self.pending.len() - self.pos);
        buf[..k].copy_from_slice(&self.pending[self.pos..self.pos + k]);
        self.pos += k;
        Ok(k)
    }
}

fn frame() -> GooseFrame {
    let mut f = GooseFrame {
        ts: Timestamp::ZERO,
        dst_mac: "01:0c:cd:01:00:01".parse().unwrap(),
        src_mac: MacAddr([0, 0x1a, 0xb6, 0, 0, 1]),
        vlan: None,
        appid: 1,
        pdu_len: 0,
        gocb_ref: "IED1/LLN0$GO$gcb".into(),
        dat_set: "IED1/LLN0$DataSet".into(),
        go_id: Some("IED1".into()),
        ttl_ms: 2000,
        event_ts: [0; 8],
        st_num: 1,
        sq_num: 7,
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

#[test]
fn million_frames_stream_in_bounded_memory() {
    const N: u64 = 1_000_000;
    let f = frame();
    let bytes = encode_frame(&f).unwrap();
    let total_bytes = N * (16 + bytes.len() as u64);

    let src = SyntheticPcap::new(bytes, N);
    let baseline = LIVE.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let mut stream = GooseStream::new(src).unwrap();
    let mut count = 0u64;
    let mut last = Timestamp::ZERO;
    for item in stream.by_ref() {
        let g = item.unwrap();
        assert!(g.ts > last);
        last = g.ts;
        assert_eq!(g.sq_num, 7);
        count += 1;
    }
    let peak = PEAK.load(Ordering::Relaxed) - baseline;
    assert_eq!(count, N);
    assert_eq!(stream.goose_count, N);
    assert_eq!(stream.malformed_count, 0);
    // The capture is ~100 MB; the reader should never hold more than a few records.
    assert!(peak < 256 * 1024, "peak heap {peak} bytes while streaming {total_bytes} bytes");
}
