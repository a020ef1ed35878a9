//! Simulates one handover session and prints its event log.
//!
//! ```text
//! cargo run --example session_sim -- ea
//! cargo run --example session_sim -- control p07
//! ```

use std::sync::Arc;

use ehk::corpus::Condition;
use ehk::ermodels::{MockModelBackend, ModelRunner};
use ehk::session::{replay_log, simulate_session, SessionConfig, SessionRegistry};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let condition: Condition = args.next().as_deref().unwrap_or("ea").parse()?;
    let participant = args.next().unwrap_or_else(|| "p01".into());
    let runner = ModelRunner::new(Arc::new(
        MockModelBackend::new("mock-vlm")
            .with_response(
                "er_study2",
                "The person frowns and looks at the robot, confused.",
            )
            .with_response(
                "apology_adapt",
                "Sorry, I stopped too far away; here are your items.",
            ),
    ));
    let log = simulate_session(
        &SessionRegistry::new(),
        condition,
        &participant,
        2025,
        &SessionConfig::default(),
        Some(&runner),
    )?;
    for e in &log.events {
        println!("{:>8.3}  {:<18} {}", e.t, e.kind, e.payload);
    }
    log.check_invariants()?;
    println!(
        "final state {} (replayed: {})",
        log.final_state,
        replay_log(&log)?
    );
    if let Some(a) = &log.apology {
        println!("apology: {:?}", a.generated_text);
    }
    Ok(())
}
