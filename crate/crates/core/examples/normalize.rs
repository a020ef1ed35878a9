//! Normalizes text the way it is prepared for embedding.
//!
//! ```text
//! cargo run --example normalize -- "The human is primarily expressing **concentration and focus**"
//! ```

use std::io::BufRead;

use ehk::textnorm::Normalizer;

fn main() {
    let n = Normalizer::bundled();
    eprintln!("normalization hash {}", &n.config_hash()[..12]);
    let args: Vec<String> = std::env::args().skip(1).collect();
    let lines: Vec<String> = if args.is_empty() {
        std::io::stdin()
            .lock()
            .lines()
            .map_while(Result::ok)
            .collect()
    } else {
        args
    };
    for line in lines {
        println!("{}\t{}", line, n.normalize(&line).joined);
    }
}
