//! Test support: an instrumented HTTP endpoint for exercising adapters and
//! seeded generators of random scales and score sheets.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use crate::scale::{Category, Indicator, Role, Scale, ScaleKind, WeightingMode};
use crate::scoring::ScoreSheet;

#[derive(Debug, Clone)]
pub enum Behavior {
    /// Read the request, then close the connection without answering.
    Drop,
    /// Read the request and never answer.
    Hang,
    Respond { status: u16, body: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl RecordedRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(n, _)| n.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub struct TestServer {
    pub addr: SocketAddr,
    hits: Arc<AtomicUsize>,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    task: JoinHandle<()>,
}

impl TestServer {
    pub async fn start(behavior: Behavior) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let task = {
            let hits = hits.clone();
            let requests = requests.clone();
            tokio::spawn(async move {
                while let Ok((stream, _)) = listener.accept().await {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let behavior = behavior.clone();
                    let requests = requests.clone();
                    tokio::spawn(async move {
                        let _ = serve(stream, behavior, requests).await;
                    });
                }
            })
        };
        Ok(TestServer {
            addr,
            hits,
            requests,
            task,
        })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    /// Connections accepted so far; each adapter attempt opens one.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().map(|r| r.clone()).unwrap_or_default()
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve(
    mut stream: TcpStream,
    behavior: Behavior,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
) -> std::io::Result<()> {
    let request = read_request(&mut stream).await?;
    if let Ok(mut r) = requests.lock() {
        r.push(request);
    }
    match behavior {
        Behavior::Drop => Ok(()),
        Behavior::Hang => {
            std::future::pending::<()>().await;
            Ok(())
        }
        Behavior::Respond { status, body } => {
            let head = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                body.len()
            );
            stream.write_all(head.as_bytes()).await?;
            stream.write_all(body.as_bytes()).await?;
            stream.shutdown().await
        }
    }
}

async fn read_request(stream: &mut TcpStream) -> std::io::Result<RecordedRequest> {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    let head_end = loop {
        if let Some(p) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
            break p;
        }
        let n = stream.read(&mut chunk).await?;
        if n == 0 {
            return Err(std::io::ErrorKind::UnexpectedEof.into());
        }
        buf.extend_from_slice(&chunk[..n]);
    };
    let head = String::from_utf8_lossy(&buf[..head_end]).to_string();
    let mut lines = head.split("\r\n");
    let mut start = lines.next().unwrap_or_default().split(' ');
    let method = start.next().unwrap_or_default().to_string();
    let path = start.next().unwrap_or_default().to_string();
    let headers: Vec<(String, String)> = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(n, v)| (n.trim().to_string(), v.trim().to_string()))
        .collect();
    let len = headers
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = buf[head_end + 4..].to_vec();
    while body.len() < len {
        let n = stream.read(&mut chunk).await?;
        if n == 0 {
            break;
        }
        body.extend_from_slice(&chunk[..n]);
    }
    Ok(RecordedRequest {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).to_string(),
    })
}

/// Random valid scale: four categories of 1..=`max_per_category`
/// indicators, flat or hierarchical, with assorted maxima.
pub fn random_scale<R: rand::Rng>(rng: &mut R, max_per_category: usize) -> Scale {
    let hierarchical = rng.random_bool(0.5);
    let categories = Role::ALL
        .into_iter()
        .enumerate()
        .map(|(ci, role)| {
            let n = rng.random_range(1..=max_per_category.max(1));
            let indicators = (0..n)
                .map(|ii| {
                    let max = [1.0, 5.0, 10.0, 100.0, 7.5][rng.random_range(0..5)];
                    Indicator::new(format!("c{ci}-i{ii}"), format!("Indicator {ci}.{ii}"))
                        .with_weight(rng.random_range(0.05..10.0))
                        .with_max_score(max)
                })
                .collect();
            let cat = Category::new(role, format!("Category {ci}"), indicators);
            if hierarchical {
                cat.with_weight(rng.random_range(0.05..5.0))
            } else {
                cat
            }
        })
        .collect();
    Scale {
        id: format!("random-{}", rng.random::<u32>()),
        name: "Random".into(),
        kind: if rng.random_bool(0.5) {
            ScaleKind::General
        } else {
            ScaleKind::Service
        },
        weighting_mode: if hierarchical {
            WeightingMode::Hierarchical
        } else {
            WeightingMode::Flat
        },
        categories,
    }
}

/// A complete sheet with every score drawn uniformly from `[0, max]`.
pub fn random_sheet<R: rand::Rng>(rng: &mut R, scale: &Scale) -> ScoreSheet {
    let mut sheet = ScoreSheet::new(&scale.id);
    for ind in scale.indicators() {
        let score = if rng.random_bool(0.1) {
            [0.0, ind.max_score][rng.random_range(0..2)]
        } else {
            rng.random_range(0.0..=ind.max_score)
        };
        sheet.entries.insert(ind.id.clone(), score);
    }
    sheet
}
