//! Minimal HTTP/1.1 receiver standing in for a dashboard: records POST bodies
//! in arrival order and counts accepted connections.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

#[derive(Default)]
struct Shared {
    bodies: Vec<Vec<u8>>,
    log: Option<BufWriter<File>>,
    streams: Vec<TcpStream>,
}

pub struct HttpSink {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    connections: Arc<AtomicU64>,
    shared: Arc<Mutex<Shared>>,
    acceptor: Option<JoinHandle<()>>,
}

impl HttpSink {
    /// Binds on loopback; port 0 picks a free one.
    pub fn bind(port: u16) -> io::Result<Self> {
        Self::start(TcpListener::bind(("127.0.0.1", port))?, None)
    }

    /// Binds on all interfaces and also appends each body plus a newline to `log`.
    pub fn bind_with_log(port: u16, log: &Path) -> io::Result<Self> {
        let file = File::create(log)?;
        Self::start(TcpListener::bind(("0.0.0.0", port))?, Some(BufWriter::new(file)))
    }

    fn start(listener: TcpListener, log: Option<BufWriter<File>>) -> io::Result<Self> {
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let connections = Arc::new(AtomicU64::new(0));
        let shared = Arc::new(Mutex::new(Shared {
            log,
            ..Shared::default()
        }));
        let acceptor = {
            let (stop, connections, shared) = (Arc::clone(&stop), Arc::clone(&connections), Arc::clone(&shared));
            thread::Builder::new()
                .name("http-sink".into())
                .spawn(move || accept_loop(listener, stop, connections, shared))?
        };
        Ok(HttpSink {
            addr,
            stop,
            connections,
            shared,
            acceptor: Some(acceptor),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://127.0.0.1:<port><path>`
    pub fn url(&self, path: &str) -> String {
        format!("http://127.0.0.1:{}{path}", self.addr.port())
    }

    pub fn connections(&self) -> u64 {
        self.connections.load(Ordering::SeqCst)
    }

    pub fn bodies(&self) -> Vec<Vec<u8>> {
        self.shared.lock().expect("sink lock").bodies.clone()
    }

    pub fn body_count(&self) -> usize {
        self.shared.lock().expect("sink lock").bodies.len()
    }

    pub fn total_bytes(&self) -> u64 {
        self.shared.lock().expect("sink lock").bodies.iter().map(|b| b.len() as u64).sum()
    }

    /// Stops accepting connections and flushes the log.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_threads()
    }

    fn stop_threads(&mut self) -> io::Result<()> {
        let Some(acceptor) = self.acceptor.take() else {
            return Ok(());
        };
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(("127.0.0.1", self.addr.port()));
        let _ = acceptor.join();
        let mut shared = self.shared.lock().expect("sink lock");
        for s in shared.streams.drain(..) {
            let _ = s.shutdown(Shutdown::Both);
        }
        match shared.log.as_mut() {
            Some(log) => log.flush(),
            None => Ok(()),
        }
    }
}

impl Drop for HttpSink {
    fn drop(&mut self) {
        let _ = self.stop_threads();
    }
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, connections: Arc<AtomicU64>, shared: Arc<Mutex<Shared>>) {
    for stream in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        connections.fetch_add(1, Ordering::SeqCst);
        let _ = stream.set_nodelay(true);
        if let Ok(clone) = stream.try_clone() {
            shared.lock().expect("sink lock").streams.push(clone);
        }
        let shared = Arc::clone(&shared);
        let _ = thread::Builder::new().name("http-sink-conn".into()).spawn(move || {
            if let Err(e) = serve(stream, &shared) {
                log::debug!("http sink connection: {e}");
            }
        });
    }
}

struct Request {
    body: Vec<u8>,
    close: bool,
}

/// Serves requests on one connection until the peer closes or asks to.
fn serve(stream: TcpStream, shared: &Mutex<Shared>) -> io::Result<()> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    while let Some(req) = read_request(&mut reader)? {
        {
            let mut s = shared.lock().expect("sink lock");
            if let Some(log) = s.log.as_mut() {
                log.write_all(&req.body)?;
                log.write_all(b"\n")?;
            }
            s.bodies.push(req.body);
        }
        let response: &[u8] = if req.close {
            b"HTTP/1.1 200 OK\r\nContent-Length: 0\r\nConnection: close\r\n\r\n"
        } else {
            b"HTTP/1.1 200 OK\r\nContent-Length: 0\r\n\r\n"
        };
        writer.write_all(response)?;
        writer.flush()?;
        if req.close {
            break;
        }
    }
    Ok(())
}

fn read_request<R: BufRead>(r: &mut R) -> io::Result<Option<Request>> {
    let mut line = Vec::new();
    // Request line; tolerate stray blank lines between requests.
    loop {
        line.clear();
        if r.read_until(b'\n', &mut line)? == 0 {
            return Ok(None);
        }
        if !trim(&line).is_empty() {
            break;
        }
    }
    let request_line = String::from_utf8_lossy(trim(&line)).into_owned();
    let mut close = request_line.ends_with("HTTP/1.0");
    let mut length = 0usize;
    let mut chunked = false;
    loop {
        line.clear();
        if r.read_until(b'\n', &mut line)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated headers"));
        }
        let header = trim(&line);
        if header.is_empty() {
            break;
        }
        let header = String::from_utf8_lossy(header);
        if let Some((name, value)) = header.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => {
                    length = value
                        .parse()
                        .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad content-length"))?
                }
                "transfer-encoding" => chunked = value.eq_ignore_ascii_case("chunked"),
                "connection" => close = value.eq_ignore_ascii_case("close"),
                _ => {}
            }
        }
    }
    let body = if chunked {
        read_chunked(r)?
    } else {
        let mut body = vec![0; length];
        r.read_exact(&mut body)?;
        body
    };
    Ok(Some(Request { body, close }))
}

fn read_chunked<R: BufRead>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut body = Vec::new();
    let mut line = Vec::new();
    loop {
        line.clear();
        r.read_until(b'\n', &mut line)?;
        let size_text = String::from_utf8_lossy(trim(&line));
        let size_text = size_text.split(';').next().unwrap_or("").trim();
        let size = usize::from_str_radix(size_text, 16)
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "bad chunk size"))?;
        if size == 0 {
            // Trailers up to the blank line.
            loop {
                line.clear();
                if r.read_until(b'\n', &mut line)? == 0 || trim(&line).is_empty() {
                    return Ok(body);
                }
            }
        }
        let start = body.len();
        body.resize(start + size, 0);
        r.read_exact(&mut body[start..])?;
        line.clear();
        r.read_until(b'\n', &mut line)?;
    }
}

fn trim(line: &[u8]) -> &[u8] {
    let mut end = line.len();
    while end > 0 && matches!(line[end - 1], b'\r' | b'\n') {
        end -= 1;
    }
    &line[..end]
}
