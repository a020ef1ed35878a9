//! Scores sentences with the bundled sentiment lexicon.
//!
//! ```text
//! cargo run --example sentiment -- "The human looks pleased" "They seem annoyed"
//! echo "Not bad at all" | cargo run --example sentiment
//! ```

use std::io::BufRead;

use ehk::sentiment::compound;

fn main() {
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
        let s = compound(&line);
        println!(
            "{:.17}\t{:.3}\t{:.3}\t{:.3}\t{}",
            s.compound, s.positive, s.neutral, s.negative, line
        );
    }
}
