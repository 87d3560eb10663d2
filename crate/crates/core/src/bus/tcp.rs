//! Blocking TCP transport. Each server accepts any number of connections
//! and answers frames on a thread per connection.

use std::collections::BTreeMap;
use std::io::{self, ErrorKind, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::{AssetBank, BusError, Transport};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(500);

const POLL: Duration = Duration::from_millis(50);

/// Reads exactly `buf.len()` bytes, polling `stop` while idle. Returns
/// `Ok(false)` on a clean end of stream before the first byte.
fn read_frame_bytes(stream: &mut TcpStream, buf: &mut [u8], stop: &AtomicBool) -> io::Result<bool> {
    let mut got = 0;
    while got < buf.len() {
        if stop.load(Ordering::Relaxed) {
            return Err(io::Error::new(ErrorKind::Interrupted, "server stopping"));
        }
        match stream.read(&mut buf[got..]) {
            Ok(0) if got == 0 => return Ok(false),
            Ok(0) => return Err(ErrorKind::UnexpectedEof.into()),
            Ok(n) => got += n,
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) if e.kind() == ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn serve_connection(mut stream: TcpStream, bank: Arc<AssetBank>, stop: Arc<AtomicBool>) -> io::Result<()> {
    let origin = stream.peer_addr().map(|a| a.to_string()).unwrap_or_else(|_| "?".into());
    stream.set_read_timeout(Some(POLL))?;
    stream.set_nodelay(true)?;
    loop {
        let mut len = [0u8; 2];
        if !read_frame_bytes(&mut stream, &mut len, &stop)? {
            return Ok(());
        }
        let n = u16::from_be_bytes(len) as usize;
        let mut frame = vec![0u8; 2 + n];
        frame[..2].copy_from_slice(&len);
        if !read_frame_bytes(&mut stream, &mut frame[2..], &stop)? && n > 0 {
            return Ok(());
        }
        let resp = bank.handle_bytes(&frame, &origin);
        stream.write_all(&resp)?;
    }
}

/// A running server; stops and joins its threads on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    conns: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        // unblock accept()
        let _ = TcpStream::connect_timeout(&self.addr, DEFAULT_TIMEOUT);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
        let conns = std::mem::take(&mut *self.conns.lock().unwrap_or_else(|e| e.into_inner()));
        for h in conns {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.accept.is_some() {
            self.shutdown();
        }
    }
}

/// Binds `endpoint` and serves the bank's assets until the handle is
/// stopped or dropped.
pub fn serve(bank: Arc<AssetBank>, endpoint: impl ToSocketAddrs) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(endpoint)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let conns: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::default();
    let accept = {
        let stop = stop.clone();
        let conns = conns.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let (bank, stop) = (bank.clone(), stop.clone());
                let h = std::thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, bank, stop) {
                        if e.kind() != ErrorKind::Interrupted {
                            log::debug!("connection closed: {e}");
                        }
                    }
                });
                conns.lock().unwrap_or_else(|e| e.into_inner()).push(h);
            }
        })
    };
    Ok(ServerHandle {
        addr,
        stop,
        accept: Some(accept),
        conns,
    })
}

/// Client side: one lazily opened connection per asset endpoint.
pub struct TcpTransport {
    endpoints: BTreeMap<u8, SocketAddr>,
    conns: BTreeMap<u8, TcpStream>,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(endpoints: BTreeMap<u8, SocketAddr>) -> Self {
        Self {
            endpoints,
            conns: BTreeMap::new(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn connection(&mut self, asset: u8) -> Result<&mut TcpStream, BusError> {
        if !self.conns.contains_key(&asset) {
            let addr = *self.endpoints.get(&asset).ok_or(BusError::UnknownAsset(asset))?;
            let stream = TcpStream::connect_timeout(&addr, self.timeout)?;
            stream.set_read_timeout(Some(self.timeout))?;
            stream.set_write_timeout(Some(self.timeout))?;
            stream.set_nodelay(true)?;
            self.conns.insert(asset, stream);
        }
        Ok(self.conns.get_mut(&asset).expect("inserted above"))
    }

    fn try_exchange(&mut self, asset: u8, frame: &[u8]) -> Result<Vec<u8>, BusError> {
        let stream = self.connection(asset)?;
        let timeout = |e: io::Error| match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => BusError::Timeout { asset },
            _ => BusError::Io(e),
        };
        stream.write_all(frame).map_err(timeout)?;
        let mut len = [0u8; 2];
        stream.read_exact(&mut len).map_err(timeout)?;
        let n = u16::from_be_bytes(len) as usize;
        let mut resp = vec![0u8; 2 + n];
        resp[..2].copy_from_slice(&len);
        stream.read_exact(&mut resp[2..]).map_err(timeout)?;
        Ok(resp)
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, asset: u8, frame: &[u8]) -> Result<Vec<u8>, BusError> {
        let out = self.try_exchange(asset, frame);
        if out.is_err() {
            // a broken or desynchronised stream is not reused
            if let Some(s) = self.conns.remove(&asset) {
                let _ = s.shutdown(Shutdown::Both);
            }
        }
        out
    }
}
