//! Writes the seeded synthetic corpus as NDJSON to stdout.
//!
//! cargo run --example synth_corpus -- [seed] > synthetic.ndjson

use std::io::{self, BufWriter};

use agentprint_core::corpus::write_corpus;
use agentprint_core::synth::{generate, SynthConfig};

fn main() -> io::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .map_or(42, |s| s.parse().expect("seed must be an integer"));
    let corpus = generate(&SynthConfig {
        seed,
        ..Default::default()
    });
    write_corpus(BufWriter::new(io::stdout().lock()), &corpus)
}
