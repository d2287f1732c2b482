#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;

pub struct Outcome {
    pub code: i32,
    pub out: String,
    pub err: String,
}

/// Runs the command in-process with `OLAC_DATA_DIR` pointing at `data_dir`.
pub fn olac(data_dir: &Path, args: &[&str], extra_env: &[(&str, &str)]) -> Outcome {
    let mut env: HashMap<String, String> = HashMap::new();
    env.insert("OLAC_DATA_DIR".into(), data_dir.display().to_string());
    for (k, v) in extra_env {
        env.insert(k.to_string(), v.to_string());
    }
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<&str> = std::iter::once("olac").chain(args.iter().copied()).collect();
    let code = olac_cli::run(argv, &env, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

pub const INIT: &[&str] = &[
    "repo",
    "init",
    "--id",
    "example.org",
    "--name",
    "Example Archive",
    "--url",
    "http://example.org/archive",
    "--curator",
    "A. Curator",
    "--location",
    "Somewhere",
    "--institution",
    "Example Institute",
    "--institution-url",
    "http://example.org/",
    "--synopsis",
    "Recordings and notes.",
    "--access",
    "Open to all.",
];
