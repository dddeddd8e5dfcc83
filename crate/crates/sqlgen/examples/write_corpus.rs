//! Writes the built-in synthetic corpora as files the CLI can read:
//!
//! ```text
//! cargo run -p sqlgen --example write_corpus -- easy 1 corpora/easy
//! ```

use std::path::PathBuf;

use sqlgen::files::write_corpus;
use sqlgen_core::datagen::synthetic;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (kind, seed, dir) = match args.as_slice() {
        [k, s, d] => (k.as_str(), s.parse::<u64>().expect("seed must be an integer"), PathBuf::from(d)),
        _ => {
            eprintln!("usage: write_corpus easy|hard SEED DIR");
            std::process::exit(2);
        }
    };
    let corpus = match kind {
        "easy" => synthetic::easy(seed),
        "hard" => synthetic::hard(seed),
        other => {
            eprintln!("unknown corpus `{other}`");
            std::process::exit(2);
        }
    };
    write_corpus(&corpus.db, corpus.templates, &dir).expect("write corpus");
    println!("wrote {}", dir.display());
}
