//! Wire format. Every frame starts with a big-endian `u16` length that
//! counts the bytes after it.
//!
//! ```txt
//! request:  len | tid u16 | asset u8 | op u8     | addr u16 | count u16 | payload u16 * count (writes)
//! response: len | tid u16 | asset u8 | status u8 | count u16 | words u16 * count
//! ```

use thiserror::Error;

/// Largest number of words in one request or response.
pub const MAX_WORDS: u16 = 125;

const REQUEST_HEADER: usize = 8;
const RESPONSE_HEADER: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("length field says {declared} bytes, body has {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("unknown op code {0}")]
    BadOp(u8),
    #[error("unknown status code {0}")]
    BadStatus(u8),
    #[error("word count {0} outside 1..={MAX_WORDS}")]
    BadCount(u16),
    #[error("payload has {got} words, count says {count}")]
    PayloadMismatch { count: u16, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Read = 1,
    Write = 2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub tid: u16,
    pub asset: u8,
    pub op: Op,
    pub addr: u16,
    pub count: u16,
    /// Empty for reads.
    pub payload: Vec<u16>,
}

impl Request {
    pub fn read(tid: u16, asset: u8, addr: u16, count: u16) -> Self {
        Self {
            tid,
            asset,
            op: Op::Read,
            addr,
            count,
            payload: Vec::new(),
        }
    }

    pub fn write(tid: u16, asset: u8, addr: u16, payload: Vec<u16>) -> Self {
        Self {
            tid,
            asset,
            op: Op::Write,
            addr,
            count: payload.len() as u16,
            payload,
        }
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.count == 0 || self.count > MAX_WORDS {
            return Err(FrameError::BadCount(self.count));
        }
        let expected = match self.op {
            Op::Read => 0,
            Op::Write => self.count as usize,
        };
        if self.payload.len() != expected {
            return Err(FrameError::PayloadMismatch {
                count: self.count,
                got: self.payload.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    AccessDenied = 1,
    UnknownRegister = 2,
    Malformed = 3,
    UnknownAsset = 4,
}

impl Status {
    fn from_u8(v: u8) -> Result<Self, FrameError> {
        Ok(match v {
            0 => Status::Ok,
            1 => Status::AccessDenied,
            2 => Status::UnknownRegister,
            3 => Status::Malformed,
            4 => Status::UnknownAsset,
            other => return Err(FrameError::BadStatus(other)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub tid: u16,
    pub asset: u8,
    pub status: Status,
    pub words: Vec<u16>,
}

impl Response {
    pub fn error(tid: u16, asset: u8, status: Status) -> Self {
        Self {
            tid,
            asset,
            status,
            words: Vec::new(),
        }
    }
}

fn put_words(buf: &mut Vec<u8>, words: &[u16]) {
    for w in words {
        buf.extend_from_slice(&w.to_be_bytes());
    }
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_be_bytes([b[i], b[i + 1]])
}

fn words_at(b: &[u8], start: usize, n: usize) -> Vec<u16> {
    (0..n).map(|k| u16_at(b, start + 2 * k)).collect()
}

/// Checks the length prefix and returns the body.
fn body(bytes: &[u8], header: usize) -> Result<&[u8], FrameError> {
    if bytes.len() < 2 {
        return Err(FrameError::Truncated { need: 2, have: bytes.len() });
    }
    let declared = u16_at(bytes, 0) as usize;
    let body = &bytes[2..];
    if body.len() != declared {
        return Err(FrameError::LengthMismatch {
            declared,
            actual: body.len(),
        });
    }
    if body.len() < header {
        return Err(FrameError::Truncated {
            need: header,
            have: body.len(),
        });
    }
    Ok(body)
}

pub fn encode_request(req: &Request) -> Result<Vec<u8>, FrameError> {
    req.validate()?;
    let len = REQUEST_HEADER + 2 * req.payload.len();
    let mut buf = Vec::with_capacity(2 + len);
    buf.extend_from_slice(&(len as u16).to_be_bytes());
    buf.extend_from_slice(&req.tid.to_be_bytes());
    buf.push(req.asset);
    buf.push(req.op as u8);
    buf.extend_from_slice(&req.addr.to_be_bytes());
    buf.extend_from_slice(&req.count.to_be_bytes());
    put_words(&mut buf, &req.payload);
    Ok(buf)
}

pub fn decode_request(bytes: &[u8]) -> Result<Request, FrameError> {
    let b = body(bytes, REQUEST_HEADER)?;
    let op = match b[3] {
        1 => Op::Read,
        2 => Op::Write,
        other => return Err(FrameError::BadOp(other)),
    };
    let count = u16_at(b, 6);
    let rest = b.len() - REQUEST_HEADER;
    if rest % 2 != 0 {
        return Err(FrameError::LengthMismatch {
            declared: b.len(),
            actual: b.len() - 1,
        });
    }
    let req = Request {
        tid: u16_at(b, 0),
        asset: b[2],
        op,
        addr: u16_at(b, 4),
        count,
        payload: words_at(b, REQUEST_HEADER, rest / 2),
    };
    req.validate()?;
    Ok(req)
}

/// Transaction id and asset of a request body, if the header is present.
/// Used to address error responses to frames that fail to decode.
pub fn peek_ids(bytes: &[u8]) -> Option<(u16, u8)> {
    (bytes.len() >= 5).then(|| (u16_at(bytes, 2), bytes[4]))
}

pub fn encode_response(resp: &Response) -> Result<Vec<u8>, FrameError> {
    if resp.words.len() > MAX_WORDS as usize {
        return Err(FrameError::BadCount(resp.words.len() as u16));
    }
    let len = RESPONSE_HEADER + 2 * resp.words.len();
    let mut buf = Vec::with_capacity(2 + len);
    buf.extend_from_slice(&(len as u16).to_be_bytes());
    buf.extend_from_slice(&resp.tid.to_be_bytes());
    buf.push(resp.asset);
    buf.push(resp.status as u8);
    buf.extend_from_slice(&(resp.words.len() as u16).to_be_bytes());
    put_words(&mut buf, &resp.words);
    Ok(buf)
}

pub fn decode_response(bytes: &[u8]) -> Result<Response, FrameError> {
    let b = body(bytes, RESPONSE_HEADER)?;
    let status = Status::from_u8(b[3])?;
    let count = u16_at(b, 4);
    if count > MAX_WORDS {
        return Err(FrameError::BadCount(count));
    }
    let rest = b.len() - RESPONSE_HEADER;
    if rest != 2 * count as usize {
        return Err(FrameError::PayloadMismatch {
            count,
            got: rest / 2,
        });
    }
    Ok(Response {
        tid: u16_at(b, 0),
        asset: b[2],
        status,
        words: words_at(b, RESPONSE_HEADER, count as usize),
    })
}
