//! GOOSE Ethernet frame codec.
//!
//! Wire layout (one optional 802.1Q tag):
//!
//! ```text
//! dst(6) | src(6) | [0x8100 TCI(2)] | 0x88B8 | APPID(2) | Length(2) | res1(2) | res2(2) | APDU
//! ```
//!
//! The APDU is a BER `[APPLICATION 1]` (tag `0x61`) sequence of
//! context-specific fields. Only definite lengths are accepted. The
//! `allData` element is carried as opaque bytes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::time::Timestamp;

pub const ETHERTYPE_GOOSE: u16 = 0x88B8;
pub const ETHERTYPE_VLAN: u16 = 0x8100;
pub const ETHERTYPE_QINQ: u16 = 0x88A8;

/// Longest VisibleString accepted for gocbRef / datSet / goID.
pub const MAX_STRING_LEN: usize = 65;
/// Minimum Ethernet frame size without FCS; shorter frames are zero padded.
pub const MIN_FRAME_LEN: usize = 60;

const TAG_APDU: u32 = 0x61;
const TAG_GOCB_REF: u32 = 0x80;
const TAG_TTL: u32 = 0x81;
const TAG_DAT_SET: u32 = 0x82;
const TAG_GO_ID: u32 = 0x83;
const TAG_T: u32 = 0x84;
const TAG_ST_NUM: u32 = 0x85;
const TAG_SQ_NUM: u32 = 0x86;
const TAG_TEST: u32 = 0x87;
const TAG_CONF_REV: u32 = 0x88;
const TAG_NDS_COM: u32 = 0x89;
const TAG_NUM_ENTRIES: u32 = 0x8A;
const TAG_ALL_DATA: u32 = 0xAB;

/// A 48-bit IEEE MAC address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    /// Group (multicast/broadcast) addresses have the I/G bit set.
    #[inline]
    pub fn is_multicast(&self) -> bool {
        self.0[0] & 0x01 == 0x01
    }
}

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(
            f,
            "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}",
            b[0], b[1], b[2], b[3], b[4], b[5]
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid MAC address `{0}`")]
pub struct ParseMacError(String);

impl FromStr for MacAddr {
    type Err = ParseMacError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 6];
        let mut parts = s.split([':', '-']);
        for byte in out.iter_mut() {
            let p = parts.next().ok_or_else(|| ParseMacError(s.to_string()))?;
            if p.len() != 2 {
                return Err(ParseMacError(s.to_string()));
            }
            *byte = u8::from_str_radix(p, 16).map_err(|_| ParseMacError(s.to_string()))?;
        }
        if parts.next().is_some() {
            return Err(ParseMacError(s.to_string()));
        }
        Ok(MacAddr(out))
    }
}

impl Serialize for MacAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MacAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 802.1Q tag control information (DEI is not preserved).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VlanTag {
    pub pcp: u8,
    pub vid: u16,
}

/// One decoded GOOSE message plus its capture timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GooseFrame {
    pub ts: Timestamp,
    pub dst_mac: MacAddr,
    pub src_mac: MacAddr,
    pub vlan: Option<VlanTag>,
    pub appid: u16,
    /// The GOOSE `Length` header field: 8 + APDU length.
    pub pdu_len: u16,
    pub gocb_ref: String,
    pub dat_set: String,
    pub go_id: Option<String>,
    /// timeAllowedToLive in milliseconds.
    pub ttl_ms: u32,
    /// UtcTime of the last state change, kept verbatim.
    pub event_ts: [u8; 8],
    pub st_num: u32,
    pub sq_num: u32,
    pub test: bool,
    pub conf_rev: u32,
    pub nds_com: bool,
    pub num_entries: u32,
    /// Contents of the allData element (without its own tag/length).
    pub all_data: Vec<u8>,
    /// Total Ethernet frame length in bytes, padding included.
    pub frame_len: u32,
}

impl GooseFrame {
    /// Identity used for flow keying: goID when present and non-empty,
    /// gocbRef otherwise.
    pub fn identity(&self) -> &str {
        match &self.go_id {
            Some(id) if !id.is_empty() => id,
            _ => &self.gocb_ref,
        }
    }

    /// Recomputes `pdu_len` and `frame_len` from the current field values.
    pub fn sync_lengths(&mut self) -> Result<(), EncodeError> {
        let apdu = encode_apdu(self)?;
        let pdu_len = pdu_len_for(apdu.len())?;
        self.pdu_len = pdu_len;
        let header = if self.vlan.is_some() { 18 } else { 14 };
        self.frame_len = (header + usize::from(pdu_len)).max(MIN_FRAME_LEN) as u32;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MalformedReason {
    #[error("frame shorter than its Ethernet/GOOSE header")]
    TruncatedHeader,
    #[error("GOOSE Length field {0} is smaller than the 8-byte header")]
    LengthTooSmall(u16),
    #[error("GOOSE Length field overruns the captured buffer")]
    PduOverrun,
    #[error("expected APDU tag 0x61, found 0x{0:02x}")]
    NotGoosePdu(u32),
    #[error("BER element overruns its enclosing buffer")]
    BerOverrun,
    #[error("indefinite BER length")]
    IndefiniteLength,
    #[error("unsupported BER length or tag encoding")]
    BerEncoding,
    #[error("field `{0}` has an invalid value")]
    InvalidField(&'static str),
    #[error("mandatory field `{0}` missing")]
    MissingField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("not a GOOSE frame (ethertype 0x{ethertype:04x})")]
    NotGoose { ethertype: u16 },
    #[error("malformed GOOSE frame: {0}")]
    Malformed(#[from] MalformedReason),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("field `{field}` exceeds its encodable range")]
    FieldOverflow { field: &'static str },
}

fn overflow(field: &'static str) -> EncodeError {
    EncodeError::FieldOverflow { field }
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

fn put_len(out: &mut Vec<u8>, len: usize) {
    if len < 0x80 {
        out.push(len as u8);
    } else {
        let bytes = (len as u32).to_be_bytes();
        let skip = bytes.iter().take_while(|&&b| b == 0).count();
        out.push(0x80 | (4 - skip) as u8);
        out.extend_from_slice(&bytes[skip..]);
    }
}

fn put_tlv(out: &mut Vec<u8>, tag: u32, value: &[u8]) {
    out.push(tag as u8);
    put_len(out, value.len());
    out.extend_from_slice(value);
}

/// Minimal two's-complement encoding of a non-negative integer.
fn uint_bytes(v: u32) -> Vec<u8> {
    let bytes = v.to_be_bytes();
    let skip = bytes.iter().take_while(|&&b| b == 0).count().min(3);
    let mut out = Vec::with_capacity(5);
    if bytes[skip] & 0x80 != 0 {
        out.push(0);
    }
    out.extend_from_slice(&bytes[skip..]);
    out
}

fn check_string(field: &'static str, s: &str) -> Result<(), EncodeError> {
    if s.len() > MAX_STRING_LEN || !s.is_ascii() {
        return Err(overflow(field));
    }
    Ok(())
}

fn pdu_len_for(apdu_len: usize) -> Result<u16, EncodeError> {
    u16::try_from(apdu_len + 8).map_err(|_| overflow("length"))
}

fn encode_apdu(f: &GooseFrame) -> Result<Vec<u8>, EncodeError> {
    check_string("gocbRef", &f.gocb_ref)?;
    check_string("datSet", &f.dat_set)?;
    if let Some(id) = &f.go_id {
        check_string("goID", id)?;
    }
    if f.ttl_ms == 0 {
        return Err(overflow("timeAllowedToLive"));
    }

    let mut body = Vec::with_capacity(96 + f.all_data.len());
    put_tlv(&mut body, TAG_GOCB_REF, f.gocb_ref.as_bytes());
    put_tlv(&mut body, TAG_TTL, &uint_bytes(f.ttl_ms));
    put_tlv(&mut body, TAG_DAT_SET, f.dat_set.as_bytes());
    if let Some(id) = &f.go_id {
        put_tlv(&mut body, TAG_GO_ID, id.as_bytes());
    }
    put_tlv(&mut body, TAG_T, &f.event_ts);
    put_tlv(&mut body, TAG_ST_NUM, &uint_bytes(f.st_num));
    put_tlv(&mut body, TAG_SQ_NUM, &uint_bytes(f.sq_num));
    put_tlv(&mut body, TAG_TEST, &[if f.test { 0xFF } else { 0x00 }]);
    put_tlv(&mut body, TAG_CONF_REV, &uint_bytes(f.conf_rev));
    put_tlv(&mut body, TAG_NDS_COM, &[if f.nds_com { 0xFF } else { 0x00 }]);
    put_tlv(&mut body, TAG_NUM_ENTRIES, &uint_bytes(f.num_entries));
    put_tlv(&mut body, TAG_ALL_DATA, &f.all_data);

    if body.len() > usize::from(u16::MAX) {
        return Err(overflow("allData"));
    }
    let mut apdu = Vec::with_capacity(body.len() + 4);
    put_tlv(&mut apdu, TAG_APDU, &body);
    pdu_len_for(apdu.len())?;
    Ok(apdu)
}

/// Serializes a frame to wire bytes. `pdu_len` and `frame_len` are ignored
/// and recomputed; frames shorter than 60 bytes are zero padded.
pub fn encode_frame(f: &GooseFrame) -> Result<Vec<u8>, EncodeError> {
    let apdu = encode_apdu(f)?;
    let pdu_len = pdu_len_for(apdu.len())?;

    let mut out = Vec::with_capacity(26 + apdu.len());
    out.extend_from_slice(&f.dst_mac.0);
    out.extend_from_slice(&f.src_mac.0);
    if let Some(tag) = f.vlan {
        if tag.pcp > 7 {
            return Err(overflow("vlan.pcp"));
        }
        if tag.vid > 0x0FFF {
            return Err(overflow("vlan.vid"));
        }
        out.extend_from_slice(&ETHERTYPE_VLAN.to_be_bytes());
        let tci = (u16::from(tag.pcp) << 13) | tag.vid;
        out.extend_from_slice(&tci.to_be_bytes());
    }
    out.extend_from_slice(&ETHERTYPE_GOOSE.to_be_bytes());
    out.extend_from_slice(&f.appid.to_be_bytes());
    out.extend_from_slice(&pdu_len.to_be_bytes());
    out.extend_from_slice(&[0, 0, 0, 0]);
    out.extend_from_slice(&apdu);
    if out.len() < MIN_FRAME_LEN {
        out.resize(MIN_FRAME_LEN, 0);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct BerReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BerReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        BerReader { buf, pos: 0 }
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn byte(&mut self) -> Result<u8, MalformedReason> {
        let b = *self.buf.get(self.pos).ok_or(MalformedReason::BerOverrun)?;
        self.pos += 1;
        Ok(b)
    }

    fn tag(&mut self) -> Result<u32, MalformedReason> {
        let first = self.byte()?;
        let mut tag = u32::from(first);
        if first & 0x1F == 0x1F {
            // High-tag-number form: base-128 continuation bytes.
            for i in 0.. {
                if i == 3 {
                    return Err(MalformedReason::BerEncoding);
                }
                let b = self.byte()?;
                tag = (tag << 8) | u32::from(b);
                if b & 0x80 == 0 {
                    break;
                }
            }
        }
        Ok(tag)
    }

    fn len(&mut self) -> Result<usize, MalformedReason> {
        let first = self.byte()?;
        if first < 0x80 {
            return Ok(usize::from(first));
        }
        if first == 0x80 {
            return Err(MalformedReason::IndefiniteLength);
        }
        let n = usize::from(first & 0x7F);
        if n > 4 {
            return Err(MalformedReason::BerEncoding);
        }
        let mut len = 0usize;
        for _ in 0..n {
            len = (len << 8) | usize::from(self.byte()?);
        }
        Ok(len)
    }

    fn tlv(&mut self) -> Result<(u32, &'a [u8]), MalformedReason> {
        let tag = self.tag()?;
        let len = self.len()?;
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or(MalformedReason::BerOverrun)?;
        let value = &self.buf[self.pos..end];
        self.pos = end;
        Ok((tag, value))
    }
}

fn be16(buf: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([buf[at], buf[at + 1]])
}

fn read_uint(field: &'static str, v: &[u8]) -> Result<u32, MalformedReason> {
    if v.is_empty() || v.len() > 5 || v[0] & 0x80 != 0 {
        return Err(MalformedReason::InvalidField(field));
    }
    let mut acc: u64 = 0;
    for &b in v {
        acc = (acc << 8) | u64::from(b);
    }
    u32::try_from(acc).map_err(|_| MalformedReason::InvalidField(field))
}

fn read_bool(field: &'static str, v: &[u8]) -> Result<bool, MalformedReason> {
    match v {
        [b] => Ok(*b != 0),
        _ => Err(MalformedReason::InvalidField(field)),
    }
}

fn read_string(field: &'static str, v: &[u8]) -> Result<String, MalformedReason> {
    String::from_utf8(v.to_vec()).map_err(|_| MalformedReason::InvalidField(field))
}

/// Decodes one Ethernet frame (starting at the destination MAC).
///
/// Unknown APDU fields are skipped. A frame must carry stNum, sqNum,
/// timeAllowedToLive and at least one of gocbRef / goID.
pub fn decode_frame(bytes: &[u8], ts: Timestamp) -> Result<GooseFrame, DecodeError> {
    use MalformedReason as M;

    if bytes.len() < 14 {
        return Err(M::TruncatedHeader.into());
    }
    let mut ethertype = be16(bytes, 12);
    let mut off = 14;
    let mut vlan = None;
    if ethertype == ETHERTYPE_VLAN {
        if bytes.len() < 18 {
            return Err(M::TruncatedHeader.into());
        }
        let tci = be16(bytes, 14);
        vlan = Some(VlanTag {
            pcp: (tci >> 13) as u8,
            vid: tci & 0x0FFF,
        });
        ethertype = be16(bytes, 16);
        off = 18;
    }
    if ethertype != ETHERTYPE_GOOSE {
        return Err(DecodeError::NotGoose { ethertype });
    }
    if bytes.len() < off + 8 {
        return Err(M::TruncatedHeader.into());
    }
    let appid = be16(bytes, off);
    let pdu_len = be16(bytes, off + 2);
    if pdu_len < 8 {
        return Err(M::LengthTooSmall(pdu_len).into());
    }
    let end = off + usize::from(pdu_len);
    if end > bytes.len() {
        return Err(M::PduOverrun.into());
    }

    let mut outer = BerReader::new(&bytes[off + 8..end]);
    let (tag, apdu) = outer.tlv()?;
    if tag != TAG_APDU {
        return Err(M::NotGoosePdu(tag).into());
    }

    let mut gocb_ref = None;
    let mut dat_set = None;
    let mut go_id = None;
    let mut ttl = None;
    let mut event_ts = [0u8; 8];
    let mut st = None;
    let mut sq = None;
    let mut test = false;
    let mut conf_rev = 0;
    let mut nds_com = false;
    let mut num_entries = 0;
    let mut all_data = Vec::new();

    let mut r = BerReader::new(apdu);
    while !r.is_empty() {
        let (tag, v) = r.tlv()?;
        match tag {
            TAG_GOCB_REF => gocb_ref = Some(read_string("gocbRef", v)?),
            TAG_TTL => ttl = Some(read_uint("timeAllowedToLive", v)?),
            TAG_DAT_SET => dat_set = Some(read_string("datSet", v)?),
            TAG_GO_ID => go_id = Some(read_string("goID", v)?),
            TAG_T => {
                event_ts = v.try_into().map_err(|_| M::InvalidField("t"))?;
            }
            TAG_ST_NUM => st = Some(read_uint("stNum", v)?),
            TAG_SQ_NUM => sq = Some(read_uint("sqNum", v)?),
            TAG_TEST => test = read_bool("test", v)?,
            TAG_CONF_REV => conf_rev = read_uint("confRev", v)?,
            TAG_NDS_COM => nds_com = read_bool("ndsCom", v)?,
            TAG_NUM_ENTRIES => num_entries = read_uint("numDatSetEntries", v)?,
            TAG_ALL_DATA => all_data = v.to_vec(),
            _ => {}
        }
    }

    let st_num = st.ok_or(M::MissingField("stNum"))?;
    let sq_num = sq.ok_or(M::MissingField("sqNum"))?;
    let ttl_ms = ttl.ok_or(M::MissingField("timeAllowedToLive"))?;
    if ttl_ms == 0 {
        return Err(M::InvalidField("timeAllowedToLive").into());
    }
    if gocb_ref.is_none() && go_id.is_none() {
        return Err(M::MissingField("gocbRef").into());
    }

    Ok(GooseFrame {
        ts,
        dst_mac: MacAddr(bytes[0..6].try_into().expect("6 bytes")),
        src_mac: MacAddr(bytes[6..12].try_into().expect("6 bytes")),
        vlan,
        appid,
        pdu_len,
        gocb_ref: gocb_ref.unwrap_or_default(),
        dat_set: dat_set.unwrap_or_default(),
        go_id,
        ttl_ms,
        event_ts,
        st_num,
        sq_num,
        test,
        conf_rev,
        nds_com,
        num_entries,
        all_data,
        frame_len: bytes.len() as u32,
    })
}
