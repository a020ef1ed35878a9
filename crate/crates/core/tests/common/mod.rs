//! Independent oracles and fixture helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, StudentsT};
use std::path::{Path, PathBuf};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Copies the fixture tree into a fresh temp dir so runs can write freely.
pub fn fixture_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&fixtures(), dir.path());
    dir
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            if e.file_name() == "out" || e.file_name() == "cache" {
                continue;
            }
            copy_tree(&e.path(), &target);
        } else {
            std::fs::copy(e.path(), target).unwrap();
        }
    }
}

pub fn mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

/// One-way ANOVA by explicit sums of squares; p from statrs.
pub fn anova(groups: &[Vec<f64>]) -> (f64, f64, f64, f64) {
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let grand = mean(&all);
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = mean(g);
        ssb += g.len() as f64 * (m - grand).powi(2);
        for v in g {
            ssw += (v - m).powi(2);
        }
    }
    let d1 = (groups.len() - 1) as f64;
    let d2 = (all.len() - groups.len()) as f64;
    let f = (ssb / d1) / (ssw / d2);
    let p = FisherSnedecor::new(d1, d2).unwrap().sf(f);
    (f, d1, d2, p)
}

/// Paired t on differences; p from statrs.
pub fn paired_t(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    let t = m / (var / n).sqrt();
    let p = 2.0 * StudentsT::new(0.0, 1.0, n - 1.0).unwrap().sf(t.abs());
    (t, n - 1.0, p)
}

/// U by counting every (a, b) pair; ties count one half.
pub fn u_by_pairs(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Exact two-sided p by enumerating every split of the pooled sample.
pub fn mwu_exact_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let centre = (na * b.len()) as f64 / 2.0;
    let obs = (u_by_pairs(a, b) - centre).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                x.push(*v);
            } else {
                y.push(*v);
            }
        }
        total += 1;
        if (u_by_pairs(&x, &y) - centre).abs() >= obs - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Ranks by sorting with midranks for ties.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; x.len()];
    for (i, v) in x.iter().enumerate() {
        let below = x.iter().filter(|w| *w < v).count() as f64;
        let equal = x.iter().filter(|w| *w == v).count() as f64;
        r[i] = below + (equal + 1.0) / 2.0;
    }
    r
}

/// Friedman with tie correction; p from statrs.
pub fn friedman(m: &[Vec<f64>]) -> (f64, f64) {
    let n = m.len() as f64;
    let k = m[0].len() as f64;
    let mut sums = vec![0.0; m[0].len()];
    let mut ties = 0.0;
    for row in m {
        for (s, r) in sums.iter_mut().zip(ranks(row)) {
            *s += r;
        }
        let mut seen: Vec<f64> = Vec::new();
        for v in row {
            if !seen.contains(v) {
                seen.push(*v);
                let t = row.iter().filter(|w| *w == v).count() as f64;
                ties += t * t * t - t;
            }
        }
    }
    let raw =
        12.0 / (n * k * (k + 1.0)) * sums.iter().map(|s| s * s).sum::<f64>() - 3.0 * n * (k + 1.0);
    let stat = raw / (1.0 - ties / (n * k * (k * k - 1.0)));
    (stat, ChiSquared::new(k - 1.0).unwrap().sf(stat))
}

fn rss(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let xt = x.transpose();
    let beta = (&xt * x).try_inverse().expect("full rank") * (&xt * y);
    (y - x * beta).norm_squared()
}

/// ANCOVA via normal equations of the full and covariate-only models.
pub fn ancova(post: &[f64], group: &[&str], cov: &[f64]) -> (f64, f64, f64, f64) {
    let mut labels: Vec<&str> = Vec::new();
    for g in group {
        if !labels.contains(g) {
            labels.push(g);
        }
    }
    let n = post.len();
    let k = labels.len();
    let y = DVector::from_column_slice(post);
    let full = DMatrix::from_fn(n, k + 1, |r, c| match c {
        0 => 1.0,
        c if c < k => (group[r] == labels[c]) as u8 as f64,
        _ => cov[r],
    });
    let reduced = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { cov[r] });
    let (sf, sr) = (rss(&full, &y), rss(&reduced, &y));
    let d1 = (k - 1) as f64;
    let d2 = (n - k - 1) as f64;
    let f = ((sr - sf) / d1) / (sf / d2);
    (f, d1, d2, FisherSnedecor::new(d1, d2).unwrap().sf(f))
}

/// Two-tailed binomial p by exact summation of point probabilities no
/// larger than the observed one.
pub fn binomial_exact_sum(k: u64, n: u64, p0: f64) -> f64 {
    let pmf = |i: u64| -> f64 {
        let mut c = 1.0f64;
        for j in 0..i {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        c * p0.powi(i as i32) * (1.0 - p0).powi((n - i) as i32)
    };
    let obs = pmf(k);
    (0..=n)
        .map(pmf)
        .filter(|p| *p <= obs * (1.0 + 1e-7))
        .sum::<f64>()
        .min(1.0)
}

/// Seeded standard-normal draws.
pub fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// scipy `tukey_hsd` textbook case and two more, with frozen adjusted p.
pub struct TukeyCase {
    pub groups: Vec<Vec<f64>>,
    /// `(i, j, p_adj)` for `i < j`.
    pub p_adj: Vec<(usize, usize, f64)>,
}

pub fn tukey_cases() -> Vec<TukeyCase> {
    vec![
        TukeyCase {
            groups: vec![
                vec![24.5, 23.5, 26.4, 27.1, 29.9],
                vec![28.4, 34.2, 29.5, 32.2, 30.1],
                vec![26.1, 28.3, 24.3, 26.2, 27.8],
            ],
            p_adj: vec![(0, 1, 0.01444833), (0, 2, 0.98031072), (1, 2, 0.02033114)],
        },
        TukeyCase {
            groups: vec![
                vec![6.2, 5.8, 7.1, 6.6],
                vec![5.1, 5.6, 4.9, 5.3, 5.0],
                vec![7.4, 6.9, 7.8],
            ],
            p_adj: vec![
                (0, 1, 4.75730696e-03),
                (0, 2, 4.31559081e-02),
                (1, 2, 1.65405830e-04),
            ],
        },
        TukeyCase {
            groups: vec![
                vec![1.0, 2.0, 3.0, 4.0],
                vec![2.5, 3.5, 4.5, 5.5],
                vec![3.0, 3.1, 3.2, 3.3],
                vec![0.5, 1.5, 1.0, 2.0],
            ],
            p_adj: vec![
                (0, 1, 0.18229324),
                (0, 2, 0.78064472),
                (0, 3, 0.31050938),
                (1, 2, 0.6157216),
                (1, 3, 0.00815134),
                (2, 3, 0.07042871),
            ],
        },
    ]
}

/// scipy `normaltest` statistic and p on three samples.
pub fn normality_cases() -> Vec<(Vec<f64>, f64, f64)> {
    vec![
        (
            vec![
                2.041, -2.556, 0.418, -0.568, -0.453, -0.216, -2.02, -0.232, -0.865, 3.323, 0.226,
                -0.353, -0.281, -0.668, -1.055, -0.391, 0.482, -0.239, 0.958, -0.2, 0.024, 1.546,
                0.545, -0.505, -0.183,
            ],
            6.833394620161645,
            0.03282065257440374,
        ),
        (
            vec![
                0.575, 0.59, 0.584, 0.041, 2.157, 1.414, 0.066, 1.457, 3.061, 0.206, 0.775, 0.128,
                1.23, 2.127, 0.906, 1.355, 1.157, 0.758, 1.77, 0.389, 2.04, 4.44, 0.197, 2.38,
                0.714, 0.517, 0.204, 3.129, 0.125, 1.466,
            ],
            10.303261647084513,
            0.005789954628898081,
        ),
        (
            vec![
                0.275, 0.562, 0.4, 0.613, 0.197, 0.18, 0.747, 0.752, 0.567, 0.921, 0.206, 0.851,
                0.169, 0.964, 0.624, 0.607, 0.971, 0.787, 0.79, 0.054, 0.369, 0.085, 0.194, 0.214,
                0.859, 0.127, 0.297, 0.493, 0.849, 0.965, 0.708, 0.214, 0.545, 0.706, 0.052, 0.68,
                0.368, 0.59, 0.67, 0.669,
            ],
            11.119468087366306,
            0.003849800140134977,
        ),
    ]
}

/// Small instances used by several oracle checks.
pub fn anova_cases() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![
            vec![1.0, 2.0, 3.0],
            vec![2.0, 3.0, 4.0, 5.0],
            vec![6.0, 7.0, 8.5],
        ],
        vec![
            vec![0.86, 0.91, 0.79, 0.88],
            vec![0.84, 0.87, 0.9, 0.81],
            vec![0.41, 0.55, 0.38, 0.47],
        ],
        vec![
            vec![10.0, 12.5, 11.0, 9.5, 10.5],
            vec![10.2, 11.9, 12.1, 10.0, 9.9],
        ],
    ]
}

pub fn paired_cases() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (
            vec![0.8, 0.7, 0.9, 0.65, 0.72],
            vec![0.6, 0.62, 0.7, 0.5, 0.71],
        ),
        (vec![1.0, 2.0, 3.0, 4.0], vec![1.5, 1.5, 3.5, 3.0]),
        (
            vec![12.1, 11.4, 13.9, 10.2, 12.8, 11.7],
            vec![11.0, 11.9, 12.0, 10.5, 12.1, 10.0],
        ),
    ]
}

pub fn mwu_cases() -> Vec<(Vec<f64>, Vec<f64>)> {
    vec![
        (vec![1.1, 2.3, 3.8, 4.0], vec![2.0, 5.5, 6.1]),
        (
            vec![0.7, 0.69, 0.72, 0.65, 0.7, 0.66, 0.71, 0.68],
            vec![0.7, 0.64, 0.63, 0.69, 0.62, 0.7, 0.61, 0.67],
        ),
        (
            vec![3.0, 3.0, 4.0, 5.0, 1.0],
            vec![3.0, 2.0, 2.0, 6.0, 7.0, 1.0],
        ),
    ]
}

pub fn friedman_cases() -> Vec<Vec<Vec<f64>>> {
    vec![
        vec![
            vec![3.1, 2.4, 3.0],
            vec![4.0, 3.2, 3.8],
            vec![3.5, 3.5, 3.9],
            vec![2.9, 2.0, 3.3],
            vec![4.2, 3.0, 4.1],
        ],
        vec![
            vec![1.0, 2.0, 3.0],
            vec![1.0, 3.0, 2.0],
            vec![2.0, 1.0, 3.0],
            vec![1.0, 2.0, 3.0],
        ],
        vec![
            vec![5.0, 5.0, 4.0, 3.0],
            vec![2.0, 4.0, 4.0, 1.0],
            vec![3.0, 3.5, 2.0, 1.0],
        ],
    ]
}

pub fn ancova_cases() -> Vec<(Vec<f64>, Vec<&'static str>, Vec<f64>)> {
    vec![
        (
            vec![3.1, 3.5, 2.8, 3.9, 2.2, 2.6, 2.4, 3.0, 3.3, 3.4, 3.0, 3.7],
            vec![
                "success", "success", "success", "success", "control", "control", "control",
                "control", "ea", "ea", "ea", "ea",
            ],
            vec![3.0, 3.2, 2.5, 3.6, 2.9, 3.1, 2.6, 3.4, 3.1, 3.0, 2.7, 3.5],
        ),
        (
            vec![10.0, 11.5, 9.8, 12.2, 13.1, 12.8, 14.0, 13.3],
            vec!["a", "a", "a", "a", "b", "b", "b", "b"],
            vec![1.0, 2.0, 1.5, 2.5, 1.2, 1.9, 2.4, 2.0],
        ),
        (
            vec![5.0, 6.1, 5.5, 7.2, 6.8, 7.9, 4.1, 4.9, 5.2],
            vec!["x", "x", "x", "y", "y", "y", "z", "z", "z"],
            vec![0.1, 0.9, 0.4, 0.3, 0.2, 0.8, 0.5, 0.6, 0.7],
        ),
    ]
}

/// Loads `<dir>/<config>` with paths resolved against `dir`.
pub fn load_run(dir: &Path, config: &str) -> (ehk::config::RunConfig, ehk::corpus::Corpus) {
    let cfg = ehk::config::RunConfig::load(&dir.join(config)).unwrap();
    let corpus = ehk::corpus::load_corpus(&cfg.corpus).unwrap();
    (cfg, corpus)
}

/// Episodes in id order and the Study-1 outputs of every configured model.
pub fn study1_inputs(
    cfg: &ehk::config::RunConfig,
    corpus: &ehk::corpus::Corpus,
) -> (
    Vec<ehk::corpus::EpisodeRecord>,
    Vec<ehk::ermodels::ModelOutput>,
) {
    use ehk::evalrunner::{collect_baseline, collect_generative};
    let mut episodes = corpus.episodes.clone();
    episodes.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let mut outputs = Vec::new();
    for m in &cfg.eval.models {
        if m == ehk::ermodels::BASELINE_MODEL_ID {
            let p = cfg.perception().unwrap();
            outputs.extend(collect_baseline(&episodes, &corpus.root, &p, &p).unwrap());
        } else {
            let runner = cfg.model_runner(m).unwrap();
            outputs.extend(
                collect_generative(&episodes, &corpus.root, &cfg.eval.er_prompt, &runner).unwrap(),
            );
        }
    }
    (episodes, outputs)
}

/// Bag-of-hashed-tokens embedding recomputed from its definition.
pub fn oracle_embedding(joined: &str, dim: usize) -> Vec<f64> {
    use sha2::{Digest, Sha256};
    let mut sum = vec![0.0; dim];
    for tok in joined.split_whitespace() {
        let mut v = Vec::with_capacity(dim);
        let mut counter: u32 = 0;
        while v.len() < dim {
            let block = Sha256::new()
                .chain_update(tok.as_bytes())
                .chain_update(counter.to_le_bytes())
                .finalize();
            for c in block.chunks_exact(4) {
                if v.len() < dim {
                    v.push(
                        u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 / 2_147_483_648.0 - 1.0,
                    );
                }
            }
            counter += 1;
        }
        let mut ss = 0.0;
        for x in &v {
            ss += x * x;
        }
        let n = f64::sqrt(ss);
        for (s, x) in sum.iter_mut().zip(&v) {
            *s += x / n;
        }
    }
    let mut ss = 0.0;
    for x in &sum {
        ss += x * x;
    }
    let n = f64::sqrt(ss);
    sum.iter().map(|x| x / n).collect()
}

/// Cosine by explicit loops, clamped.
pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    (dot / (f64::sqrt(na) * f64::sqrt(nb))).clamp(-1.0, 1.0)
}

pub fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

/// One request seen by [`serve`].
#[derive(Debug, Clone)]
pub struct Seen {
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

impl Seen {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

pub type Handler = dyn Fn(usize, &Seen) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 JSON server on a loopback port. The handler receives the
/// 0-based request number. Returns the base URL and the request log.
pub fn serve(handler: Box<Handler>) -> (String, std::sync::Arc<std::sync::Mutex<Vec<Seen>>>) {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::sync::{Arc, Mutex};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen: Arc<Mutex<Vec<Seen>>> = Arc::default();
    let log = seen.clone();
    let handler: Arc<Handler> = Arc::from(handler);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let log = log.clone();
            let handler = handler.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
                    let mut headers = Vec::new();
                    loop {
                        let mut h = String::new();
                        reader.read_line(&mut h).unwrap();
                        let h = h.trim_end();
                        if h.is_empty() {
                            break;
                        }
                        if let Some((k, v)) = h.split_once(':') {
                            headers.push((k.trim().to_string(), v.trim().to_string()));
                        }
                    }
                    let len: usize = headers
                        .iter()
                        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                        .map(|(_, v)| v.parse().unwrap())
                        .unwrap_or(0);
                    let mut body = vec![0; len];
                    reader.read_exact(&mut body).unwrap();
                    let req = Seen {
                        path,
                        headers,
                        body: serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null),
                    };
                    let n = {
                        let mut l = log.lock().unwrap();
                        l.push(req.clone());
                        l.len() - 1
                    };
                    let (status, text) = handler(n, &req);
                    let resp = format!(
                        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{text}",
                        text.len()
                    );
                    let mut w = stream.try_clone().unwrap();
                    if w.write_all(resp.as_bytes()).is_err() {
                        return;
                    }
                }
            });
        }
    });
    (url, seen)
}

/// Gemini-shaped reply carrying `text`.
pub fn gemini_reply(text: &str) -> String {
    serde_json::json!({ "candidates": [{ "content": { "parts": [{ "text": text }] } }] })
        .to_string()
}
