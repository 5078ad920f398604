//! Example policy process for `vista rollout`: linear feedback on the
//! deviation and heading error reported by the server, spoken over stdio.

use std::io;

use clap::Parser;
use vista_core::episode::LateralFeedbackPolicy;
use vista_server::{Client, ClientError};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 5)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Safety cap on steps per trial.
    #[arg(long, default_value_t = 1_000_000)]
    max_steps: u64,
}

fn run(args: &Args) -> Result<(), ClientError> {
    let policy = LateralFeedbackPolicy::default();
    let mut client = Client::new(io::stdin().lock(), io::stdout().lock());
    client.hello()?;
    for i in 0..args.trials {
        let state = client.reset(Some(args.seed.wrapping_add(i)), None)?;
        let num = |k: &str| state[k].as_f64().unwrap_or(0.0);
        let (mut dev, mut head) = (num("deviation"), num("heading_error"));
        for _ in 0..args.max_steps {
            let r = client.step(policy.command(dev, head))?;
            (dev, head) = (r.deviation, r.heading_error);
            if r.done {
                break;
            }
        }
    }
    let m = client.metrics()?;
    eprintln!("{}", serde_json::to_string(&m).expect("metrics serialize"));
    client.close()
}

fn main() {
    let args = Args::parse();
    if let Err(e) = run(&args) {
        eprintln!("policy error: {e}");
        std::process::exit(1);
    }
}
