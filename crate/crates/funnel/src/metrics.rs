use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde_json::{json, Value};

/// JSON-lines metrics sink. Every line carries `kind` and `wall_ms` since
/// the sink was opened.
#[derive(Debug)]
pub struct Metrics {
    out: Option<Mutex<BufWriter<File>>>,
    opened: Instant,
}

impl Metrics {
    pub fn disabled() -> Metrics {
        Metrics { out: None, opened: Instant::now() }
    }

    pub fn to_file(path: &Path) -> std::io::Result<Metrics> {
        Ok(Metrics { out: Some(Mutex::new(BufWriter::new(File::create(path)?))), opened: Instant::now() })
    }

    pub fn enabled(&self) -> bool {
        self.out.is_some()
    }

    pub fn emit(&self, kind: &str, fields: Value) {
        let Some(out) = &self.out else { return };
        let mut line = json!({ "kind": kind, "wall_ms": self.opened.elapsed().as_secs_f64() * 1000.0 });
        if let (Value::Object(dst), Value::Object(src)) = (&mut line, fields) {
            dst.extend(src);
        }
        let mut w = out.lock().unwrap();
        let _ = serde_json::to_writer(&mut *w, &line);
        let _ = w.write_all(b"\n");
    }

    pub fn flush(&self) {
        if let Some(out) = &self.out {
            let _ = out.lock().unwrap().flush();
        }
    }
}
