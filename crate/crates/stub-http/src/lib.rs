//! Minimal in-process HTTP/1.1 server for tests. Routes map a method and
//! path (optionally with query) to a queue of canned replies; the last reply
//! in a queue repeats. Every request is logged.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn new(status: u16) -> Self {
        Self {
            status,
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn ok(body: impl Into<Vec<u8>>) -> Self {
        Self::new(200).body(body)
    }

    pub fn json(body: impl Into<String>) -> Self {
        Self::new(200)
            .header("Content-Type", "application/json")
            .body(body.into())
    }

    pub fn redirect(status: u16, location: &str) -> Self {
        Self::new(status).header("Location", location)
    }

    pub fn header(mut self, k: &str, v: &str) -> Self {
        self.headers.push((k.to_string(), v.to_string()));
        self
    }

    pub fn body(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub method: String,
    /// Path plus query string, as sent.
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl RecordedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    pub fn path(&self) -> &str {
        self.target.split('?').next().unwrap_or_default()
    }
}

#[derive(Default)]
struct State {
    routes: HashMap<(String, String), (Vec<Reply>, usize)>,
    log: Vec<RecordedRequest>,
}

impl State {
    fn reply_for(&mut self, method: &str, target: &str) -> Reply {
        let path = target.split('?').next().unwrap_or_default();
        let key = [target, path]
            .into_iter()
            .map(|t| (method.to_string(), t.to_string()))
            .find(|k| self.routes.contains_key(k));
        let key = match key {
            Some(k) => k,
            None => {
                // longest matching prefix route, registered with a trailing '*'
                let best = self
                    .routes
                    .keys()
                    .filter(|(m, p)| {
                        m == method
                            && p.ends_with('*')
                            && target.starts_with(&p[..p.len() - 1])
                    })
                    .max_by_key(|(_, p)| p.len())
                    .cloned();
                match best {
                    Some(k) => k,
                    None => return Reply::new(404).body("no route"),
                }
            }
        };
        let (queue, next) = self.routes.get_mut(&key).expect("route exists");
        let reply = queue[(*next).min(queue.len() - 1)].clone();
        *next += 1;
        reply
    }
}

pub struct StubServer {
    port: u16,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start() -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        listener.set_nonblocking(true).expect("nonblocking listener");
        let port = listener.local_addr().expect("local addr").port();
        let state = Arc::new(Mutex::new(State::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let state = state.clone();
            let stop = stop.clone();
            thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match listener.accept() {
                        Ok((stream, _)) => {
                            let state = state.clone();
                            thread::spawn(move || {
                                let _ = serve(stream, &state);
                            });
                        }
                        Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                            thread::sleep(Duration::from_millis(2));
                        }
                        Err(_) => break,
                    }
                }
            })
        };
        Self {
            port,
            state,
            stop,
            handle: Some(handle),
        }
    }

    pub fn base_url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// `host:port`, the form used in allowlists.
    pub fn authority(&self) -> String {
        format!("127.0.0.1:{}", self.port)
    }

    pub fn url(&self, target: &str) -> String {
        format!("{}{}", self.base_url(), target)
    }

    /// Appends `reply` to the queue for `method target`. A target ending in
    /// `*` matches by prefix.
    pub fn route(&self, method: &str, target: &str, reply: Reply) -> &Self {
        let mut st = self.state.lock().unwrap();
        st.routes
            .entry((method.to_string(), target.to_string()))
            .or_insert_with(|| (Vec::new(), 0))
            .0
            .push(reply);
        self
    }

    pub fn get(&self, target: &str, reply: Reply) -> &Self {
        self.route("GET", target, reply)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn hits(&self, path: &str) -> usize {
        self.state
            .lock()
            .unwrap()
            .log
            .iter()
            .filter(|r| r.path() == path || r.target == path)
            .count()
    }

    pub fn clear_log(&self) {
        self.state.lock().unwrap().log.clear();
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, state: &Mutex<State>) -> std::io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(10)))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let target = parts.next().unwrap_or_default().to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 {
            break;
        }
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;

    let reply = {
        let mut st = state.lock().unwrap();
        st.log.push(RecordedRequest {
            method: method.clone(),
            target: target.clone(),
            headers,
            body,
        });
        st.reply_for(&method, &target)
    };

    let mut out = stream;
    let mut head = format!("HTTP/1.1 {} Stub\r\n", reply.status);
    for (k, v) in &reply.headers {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str(&format!(
        "Content-Length: {}\r\nConnection: close\r\n\r\n",
        reply.body.len()
    ));
    out.write_all(head.as_bytes())?;
    if method != "HEAD" {
        out.write_all(&reply.body)?;
    }
    out.flush()
}
