use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use proptest::prelude::*;
use refertriage::embed::{
    char_ngrams, embed_dataset, embed_hashing, fetch_remote_embeddings, load_embedding_file,
    write_embedding_file, Provider, RemoteConfig,
};
use refertriage::{
    EmbeddingMatrix, HashingEmbedderConfig, Matrix, ReferralDataset, ReferralRecord, Variant,
};

#[derive(Clone, Copy)]
enum Mode {
    Echo,
    DropOne,
    FailFirst,
}

/// Vector the mock server returns for a text.
fn table(text: &str) -> Vec<f64> {
    vec![
        text.len() as f64,
        f64::from(text.bytes().next().unwrap_or(0)),
        0.5,
    ]
}

/// Minimal HTTP/1.1 server answering `POST /embed`. Returns the base URL and
/// a request counter.
fn mock_server(mode: Mode) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                if line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
            let texts: Vec<String> = req["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| t.as_str().unwrap().to_string())
                .collect();
            let (status, payload) = match mode {
                Mode::FailFirst if n == 0 => ("500 Internal Server Error", "{}".to_string()),
                Mode::DropOne if texts.len() > 1 => {
                    let v: Vec<_> = texts[1..].iter().map(|t| table(t)).collect();
                    ("200 OK", serde_json::json!({ "vectors": v }).to_string())
                }
                _ => {
                    let v: Vec<_> = texts.iter().map(|t| table(t)).collect();
                    ("200 OK", serde_json::json!({ "vectors": v }).to_string())
                }
            };
            let resp = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}"), hits)
}

fn quick(endpoint: String, batch_size: usize) -> RemoteConfig {
    RemoteConfig {
        batch_size,
        initial_backoff_ms: 1,
        timeout_secs: 10,
        ..RemoteConfig::new(endpoint)
    }
}

const TEXTS: [&str; 5] = [
    "knee pain",
    "hip",
    "acl rupture",
    "back",
    "shoulder impingement",
];

#[test]
fn remote_batches_in_order() {
    let (url, hits) = mock_server(Mode::Echo);
    let m = fetch_remote_embeddings(&quick(url, 2), &TEXTS).unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    let expected = Matrix::from_rows(&TEXTS.iter().map(|t| table(t)).collect::<Vec<_>>()).unwrap();
    assert_eq!(m, expected);
}

#[test]
fn remote_short_reply_is_error() {
    let (url, _) = mock_server(Mode::DropOne);
    let err = fetch_remote_embeddings(&quick(url, 5), &TEXTS).unwrap_err();
    assert!(err.to_string().contains("received 4"), "{err}");
}

#[test]
fn remote_retries_server_errors() {
    let (url, hits) = mock_server(Mode::FailFirst);
    let m = fetch_remote_embeddings(&quick(url, 5), &TEXTS).unwrap();
    assert_eq!(m.nrows(), 5);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn remote_gives_up_after_attempts() {
    // nothing listens on a just-released port
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let cfg = RemoteConfig {
        max_attempts: 2,
        ..quick(format!("http://127.0.0.1:{port}"), 2)
    };
    let err = fetch_remote_embeddings(&cfg, &TEXTS).unwrap_err();
    assert!(err.to_string().contains("after 2 attempts"), "{err}");
}

#[test]
fn remote_rows_follow_record_permutation() {
    let (url, _) = mock_server(Mode::Echo);
    let records = |order: &[usize]| {
        ReferralDataset::new(
            order
                .iter()
                .map(|&i| ReferralRecord {
                    record_id: format!("r{i}"),
                    diagnosis_text: TEXTS[i].to_string(),
                    icd10_codes: vec![],
                    label: u8::from(i % 2 == 0),
                })
                .collect(),
        )
        .unwrap()
    };
    let provider = Provider::Remote(quick(url, 2));
    let a = embed_dataset(&records(&[0, 1, 2, 3, 4]), &provider, Variant::Base).unwrap();
    let b = embed_dataset(&records(&[3, 0, 4, 2, 1]), &provider, Variant::Base).unwrap();
    for (pos, &i) in [3usize, 0, 4, 2, 1].iter().enumerate() {
        assert_eq!(b.features().row(pos), a.features().row(i));
    }
}

#[test]
fn embedding_file_round_trip_is_exact() {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        f64::from_bits((state >> 12) | 0x3ff0_0000_0000_0000) - 1.5
    };
    let data: Vec<f64> = (0..80).map(|_| next() * 1e-3 + next()).collect();
    let ids: Vec<String> = (0..10).map(|i| format!("id{i}")).collect();
    let emb = EmbeddingMatrix::new(ids, Matrix::from_vec(10, 8, data).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.csv");
    write_embedding_file(&p, &emb).unwrap();
    let back = load_embedding_file(&p).unwrap();
    assert_eq!(back.record_ids, emb.record_ids);
    for (a, b) in back.vectors.as_slice().iter().zip(emb.vectors.as_slice()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn embedding_file_errors_name_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "record_id,d0,d1,d2\na,1,2,3\nb,1,2\n").unwrap();
    let err = load_embedding_file(&p).unwrap_err().to_string();
    assert!(err.contains('3'), "{err}");
    std::fs::write(&p, "record_id,d0,d1\na,1,x\n").unwrap();
    assert!(load_embedding_file(&p).is_err());
    std::fs::write(&p, "record_id,d0\na,1\na,2\n").unwrap();
    assert!(load_embedding_file(&p).is_err());
}

#[test]
fn file_provider_aligns_by_id() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.csv");
    std::fs::write(&p, "record_id,d0,d1\nb,2,2\na,1,1\n").unwrap();
    let d = ReferralDataset::new(vec![
        ReferralRecord {
            record_id: "a".into(),
            diagnosis_text: String::new(),
            icd10_codes: vec![],
            label: 0,
        },
        ReferralRecord {
            record_id: "b".into(),
            diagnosis_text: String::new(),
            icd10_codes: vec![],
            label: 1,
        },
    ])
    .unwrap();
    let e = embed_dataset(&d, &Provider::File { path: p }, Variant::Base).unwrap();
    assert_eq!(e.features().row(0), &[1.0, 1.0]);
    assert_eq!(e.features().row(1), &[2.0, 2.0]);
}

fn lower_text() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{2,9}", 6..20).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn one_char_edit_touches_few_grams(text in lower_text(), pos in any::<prop::sample::Index>(), c in "[a-z]") {
        let cfg = HashingEmbedderConfig::default();
        let chars: Vec<char> = text.chars().collect();
        let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i] != ' ').collect();
        let i = letters[pos.index(letters.len())];
        let mut edited = chars.clone();
        edited[i] = c.chars().next().unwrap();
        let edited: String = edited.into_iter().collect();
        let a = char_ngrams(&text, &cfg);
        let b = char_ngrams(&edited, &cfg);
        prop_assert_eq!(a.len(), b.len());
        let changed = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        let bound = (cfg.ngram_max - cfg.ngram_min + 1) * cfg.ngram_max;
        prop_assert!(changed <= bound);
    }

    #[test]
    fn hashing_rows_permute_with_inputs(texts in prop::collection::vec("[a-z ]{0,30}", 1..12), seed: u64) {
        let cfg = HashingEmbedderConfig { dim: 64, ..Default::default() };
        let mut order: Vec<usize> = (0..texts.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<&str> = order.iter().map(|&i| texts[i].as_str()).collect();
        let a = embed_hashing(&texts, &cfg).unwrap();
        let b = embed_hashing(&permuted, &cfg).unwrap();
        for (pos, &i) in order.iter().enumerate() {
            prop_assert_eq!(b.row(pos), a.row(i));
        }
    }
}
