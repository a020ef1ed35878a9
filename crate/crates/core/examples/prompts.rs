//! Lists the bundled prompt templates, optionally rendering one.
//!
//! ```text
//! cargo run --example prompts
//! cargo run --example prompts -- apology_adapt "The person looks confused."
//! ```

use std::collections::BTreeMap;

use ehk::ermodels::{prompt, prompts, PROMPT_SET_VERSION};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let Some(id) = args.first() {
        let p = prompt(id)?;
        let mut vars = BTreeMap::new();
        for (name, value) in p.placeholders().into_iter().zip(&args[1..]) {
            vars.insert(name, value.as_str());
        }
        println!("{}", p.render(&vars)?);
        return Ok(());
    }
    println!("prompt set version {PROMPT_SET_VERSION}");
    for p in prompts() {
        println!(
            "{:<16} {:>5} chars  placeholders {:?}",
            p.prompt_id,
            p.text.len(),
            p.placeholders()
        );
    }
    Ok(())
}
