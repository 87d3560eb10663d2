//! Register protocol between the controller and the assets.
//!
//! Assets expose fixed-point registers ([`registers`]) through a
//! [`RegisterStore`]. The controller talks to them with request/response
//! frames ([`frame`]) either in-process or over TCP ([`tcp`]); both paths
//! run the same encode, dispatch and decode code.

pub mod frame;
pub mod registers;
pub mod tcp;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};

use thiserror::Error;

pub use frame::{Op, Request, Response, Status};
pub use registers::{register_table_markdown, Access, AssetKind, RegisterDef};

#[derive(Debug, Error)]
pub enum BusError {
    #[error("request to asset {asset} timed out")]
    Timeout { asset: u8 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("access denied: register `{register}` of asset {asset} is read-only")]
    AccessDenied { asset: u8, register: String },
    #[error("asset {asset} has no register at {addr} (+{count})")]
    UnknownRegister { asset: u8, addr: u16, count: u16 },
    #[error("unknown asset {0}")]
    UnknownAsset(u8),
    #[error("no register `{name}` on a {kind:?}")]
    UnknownName { kind: AssetKind, name: String },
    #[error(transparent)]
    Range(#[from] registers::OutOfRange),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<frame::FrameError> for BusError {
    fn from(e: frame::FrameError) -> Self {
        BusError::Protocol(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WriteRecord {
    pub seq: u64,
    pub origin: String,
    pub addr: u16,
    pub words: Vec<u16>,
}

#[derive(Debug)]
struct StoreInner {
    words: Vec<u16>,
    writes: Vec<WriteRecord>,
}

/// Register image of one asset. All access goes through one lock, so a
/// multi-word register is never observed half-written.
#[derive(Debug)]
pub struct RegisterStore {
    kind: AssetKind,
    inner: Mutex<StoreInner>,
}

impl RegisterStore {
    pub fn new(kind: AssetKind) -> Self {
        Self {
            kind,
            inner: Mutex::new(StoreInner {
                words: vec![0; kind.n_words() as usize],
                writes: Vec::new(),
            }),
        }
    }

    pub fn kind(&self) -> AssetKind {
        self.kind
    }

    fn lock(&self) -> MutexGuard<'_, StoreInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn def(&self, name: &str) -> Result<&'static RegisterDef, BusError> {
        self.kind.register(name).ok_or_else(|| BusError::UnknownName {
            kind: self.kind,
            name: name.to_string(),
        })
    }

    /// Asset-side update; ignores the access mode.
    pub fn set(&self, name: &str, value: f64) -> Result<(), BusError> {
        let def = self.def(name)?;
        let words = def.encode(value)?;
        let mut inner = self.lock();
        let a = def.addr as usize;
        inner.words[a..a + words.len()].copy_from_slice(&words);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<f64, BusError> {
        let def = self.def(name)?;
        let inner = self.lock();
        let a = def.addr as usize;
        Ok(def.decode(&inner.words[a..a + def.width.words() as usize]))
    }

    pub fn write_log(&self) -> Vec<WriteRecord> {
        self.lock().writes.clone()
    }

    /// Serves one protocol request.
    pub fn handle(&self, asset: u8, req: &Request, origin: &str) -> Response {
        let Some(span) = self.kind.span(req.addr, req.count) else {
            return Response::error(req.tid, asset, Status::UnknownRegister);
        };
        let range = req.addr as usize..(req.addr + req.count) as usize;
        let mut inner = self.lock();
        match req.op {
            Op::Read => Response {
                tid: req.tid,
                asset,
                status: Status::Ok,
                words: inner.words[range].to_vec(),
            },
            Op::Write => {
                if span.iter().any(|r| r.access == Access::Read) {
                    return Response::error(req.tid, asset, Status::AccessDenied);
                }
                inner.words[range].copy_from_slice(&req.payload);
                let seq = inner.writes.len() as u64;
                if let Some(prev) = inner.writes.iter().rev().find(|w| w.addr == req.addr) {
                    if prev.origin != origin {
                        log::info!(
                            "asset {asset}: write to {} by {origin} replaces value from {}",
                            req.addr,
                            prev.origin
                        );
                    }
                }
                inner.writes.push(WriteRecord {
                    seq,
                    origin: origin.to_string(),
                    addr: req.addr,
                    words: req.payload.clone(),
                });
                Response {
                    tid: req.tid,
                    asset,
                    status: Status::Ok,
                    words: Vec::new(),
                }
            }
        }
    }
}

/// The assets reachable through one endpoint, keyed by asset id.
#[derive(Debug, Default, Clone)]
pub struct AssetBank {
    assets: BTreeMap<u8, Arc<RegisterStore>>,
}

impl AssetBank {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u8, store: Arc<RegisterStore>) {
        self.assets.insert(id, store);
    }

    pub fn get(&self, id: u8) -> Option<&Arc<RegisterStore>> {
        self.assets.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u8> + '_ {
        self.assets.keys().copied()
    }

    /// Decodes a request frame, dispatches it and encodes the answer.
    /// Undecodable frames get a `Malformed` response.
    pub fn handle_bytes(&self, bytes: &[u8], origin: &str) -> Vec<u8> {
        let resp = match frame::decode_request(bytes) {
            Ok(req) => match self.assets.get(&req.asset) {
                Some(store) => store.handle(req.asset, &req, origin),
                None => Response::error(req.tid, req.asset, Status::UnknownAsset),
            },
            Err(e) => {
                log::debug!("malformed frame from {origin}: {e}");
                let (tid, asset) = frame::peek_ids(bytes).unwrap_or((0, 0));
                Response::error(tid, asset, Status::Malformed)
            }
        };
        frame::encode_response(&resp).expect("responses stay within the word limit")
    }
}

pub trait Transport: Send {
    /// Sends one encoded request frame and returns the encoded response.
    fn exchange(&mut self, asset: u8, frame: &[u8]) -> Result<Vec<u8>, BusError>;
}

/// Calls the asset bank directly, still going through the wire format.
#[derive(Debug, Clone)]
pub struct InProcess {
    bank: Arc<AssetBank>,
}

impl InProcess {
    pub fn new(bank: Arc<AssetBank>) -> Self {
        Self { bank }
    }
}

impl Transport for InProcess {
    fn exchange(&mut self, _asset: u8, frame: &[u8]) -> Result<Vec<u8>, BusError> {
        Ok(self.bank.handle_bytes(frame, "inproc"))
    }
}

/// Typed register access on top of a transport.
pub struct Client {
    transport: Box<dyn Transport>,
    kinds: BTreeMap<u8, AssetKind>,
    next_tid: u16,
}

impl Client {
    pub fn new(transport: Box<dyn Transport>, kinds: BTreeMap<u8, AssetKind>) -> Self {
        Self {
            transport,
            kinds,
            next_tid: 1,
        }
    }

    fn kind(&self, asset: u8) -> Result<AssetKind, BusError> {
        self.kinds.get(&asset).copied().ok_or(BusError::UnknownAsset(asset))
    }

    pub fn request(&mut self, mut req: Request) -> Result<Response, BusError> {
        req.tid = self.next_tid;
        self.next_tid = self.next_tid.wrapping_add(1);
        let bytes = frame::encode_request(&req)?;
        let resp = frame::decode_response(&self.transport.exchange(req.asset, &bytes)?)?;
        if resp.tid != req.tid || resp.asset != req.asset {
            return Err(BusError::Protocol(format!(
                "response for transaction {} of asset {} answers {} of {}",
                req.tid, req.asset, resp.tid, resp.asset
            )));
        }
        match resp.status {
            Status::Ok => Ok(resp),
            Status::AccessDenied => Err(BusError::AccessDenied {
                asset: req.asset,
                register: self
                    .kinds
                    .get(&req.asset)
                    .and_then(|k| k.span(req.addr, req.count))
                    .map(|s| s.iter().map(|r| r.name).collect::<Vec<_>>().join(","))
                    .unwrap_or_else(|| req.addr.to_string()),
            }),
            Status::UnknownRegister => Err(BusError::UnknownRegister {
                asset: req.asset,
                addr: req.addr,
                count: req.count,
            }),
            Status::UnknownAsset => Err(BusError::UnknownAsset(req.asset)),
            Status::Malformed => Err(BusError::Protocol("server rejected frame".into())),
        }
    }

    pub fn read(&mut self, asset: u8, name: &str) -> Result<f64, BusError> {
        let kind = self.kind(asset)?;
        let def = kind.register(name).ok_or_else(|| BusError::UnknownName {
            kind,
            name: name.to_string(),
        })?;
        let resp = self.request(Request::read(0, asset, def.addr, def.width.words()))?;
        if resp.words.len() != def.width.words() as usize {
            return Err(BusError::Protocol(format!("short read of `{name}`")));
        }
        Ok(def.decode(&resp.words))
    }

    /// Reads every register of an asset in one request.
    pub fn read_all(&mut self, asset: u8) -> Result<BTreeMap<&'static str, f64>, BusError> {
        let kind = self.kind(asset)?;
        let resp = self.request(Request::read(0, asset, 0, kind.n_words()))?;
        if resp.words.len() != kind.n_words() as usize {
            return Err(BusError::Protocol("short block read".into()));
        }
        Ok(kind
            .registers()
            .iter()
            .map(|r| {
                let a = r.addr as usize;
                (r.name, r.decode(&resp.words[a..a + r.width.words() as usize]))
            })
            .collect())
    }

    pub fn write(&mut self, asset: u8, name: &str, value: f64) -> Result<(), BusError> {
        let kind = self.kind(asset)?;
        let def = kind.register(name).ok_or_else(|| BusError::UnknownName {
            kind,
            name: name.to_string(),
        })?;
        self.request(Request::write(0, asset, def.addr, def.encode(value)?))?;
        Ok(())
    }
}
