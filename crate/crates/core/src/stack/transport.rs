use std::io::{self, BufReader};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::service::Service;
use crate::wire::{parse_message, read_message, serialize_message, write_message, Limits, Message, WireError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed message: {0}")]
    Malformed(String),
}

impl From<WireError> for TransportError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(m) => TransportError::Io(m),
            other => TransportError::Malformed(other.to_string()),
        }
    }
}

/// One request out, one response back.
pub trait Transport: Send {
    fn exchange(&mut self, req: &Message) -> Result<Message, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn exchange(&mut self, req: &Message) -> Result<Message, TransportError> {
        (**self).exchange(req)
    }
}

/// Calls the service directly, but still through the wire encoding in both
/// directions.
#[derive(Clone)]
pub struct InProcess(pub Arc<Service>);

impl Transport for InProcess {
    fn exchange(&mut self, req: &Message) -> Result<Message, TransportError> {
        let req = parse_message(&serialize_message(req)?)?;
        let resp = self.0.handle(&req);
        Ok(parse_message(&serialize_message(&resp)?)?)
    }
}

/// A persistent connection, re-dialled once if the peer hung up.
pub struct TcpTransport {
    addr: SocketAddr,
    stream: Option<BufReader<TcpStream>>,
    timeout: Duration,
}

impl TcpTransport {
    pub fn new(addr: SocketAddr) -> Self {
        TcpTransport {
            addr,
            stream: None,
            timeout: Duration::from_secs(10),
        }
    }

    fn connect(&mut self) -> Result<&mut BufReader<TcpStream>, TransportError> {
        if self.stream.is_none() {
            let s = TcpStream::connect_timeout(&self.addr, self.timeout)
                .map_err(|e| TransportError::Unreachable(format!("{}: {e}", self.addr)))?;
            s.set_read_timeout(Some(self.timeout)).ok();
            s.set_nodelay(true).ok();
            self.stream = Some(BufReader::new(s));
        }
        Ok(self.stream.as_mut().expect("connected above"))
    }

    fn try_once(&mut self, bytes: &[u8]) -> Result<Message, TransportError> {
        use std::io::Write;
        let s = self.connect()?;
        s.get_mut().write_all(bytes).map_err(|e| TransportError::Io(e.to_string()))?;
        let (resp, _) = read_message(s, &Limits::default())?;
        Ok(resp)
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, req: &Message) -> Result<Message, TransportError> {
        let bytes = serialize_message(req)?;
        match self.try_once(&bytes) {
            Err(TransportError::Io(_)) => {
                self.stream = None;
                self.try_once(&bytes).inspect_err(|_| self.stream = None)
            }
            other => other,
        }
    }
}

/// A background accept loop; dropping the handle stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.stop_now();
        }
    }
}

/// Runs `per_conn` on its own thread for every accepted connection.
pub fn spawn_listener<F>(listen: &str, per_conn: F) -> io::Result<ServerHandle>
where
    F: Fn(TcpStream) + Send + Sync + 'static,
{
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let per_conn = Arc::new(per_conn);
    let thread = std::thread::spawn(move || {
        for conn in listener.incoming() {
            if flag.load(Ordering::SeqCst) {
                break;
            }
            match conn {
                Ok(stream) => {
                    let f = per_conn.clone();
                    std::thread::spawn(move || f(stream));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
    });
    Ok(ServerHandle {
        addr,
        stop,
        thread: Some(thread),
    })
}

/// Serves `service` over HTTP/1.1, one request in flight per connection.
pub fn serve(service: Arc<Service>, listen: &str) -> io::Result<ServerHandle> {
    spawn_listener(listen, move |mut stream| {
        stream.set_nodelay(true).ok();
        let Ok(reader) = stream.try_clone() else { return };
        let mut reader = BufReader::new(reader);
        loop {
            let req = match read_message(&mut reader, &Limits::default()) {
                Ok((req, _)) => req,
                Err(WireError::Io(_)) => break,
                Err(e) => {
                    log::debug!("unparseable request: {e}");
                    let resp = Message::response(400).with_body("Bad Request\n");
                    let _ = write_message(&mut stream, &resp);
                    break;
                }
            };
            let close = req
                .header_str("Connection")
                .is_some_and(|c| c.eq_ignore_ascii_case("close"));
            let resp = service.handle(&req);
            if write_message(&mut stream, &resp).is_err() || close {
                break;
            }
        }
    })
}
