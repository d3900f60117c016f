//! Full-size acceptance run. Prints one line per criterion and exits
//! nonzero if any criterion fails.

use bdkit::verification::{Verifier, VerifyConfig, CRITERIA};
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut config = VerifyConfig::default();
    if let Ok(seed) = std::env::var("BDKIT_SEED") {
        config.master_seed = seed.parse().expect("BDKIT_SEED must be an unsigned integer");
    }
    let verifier = Verifier::new(config);
    let mut failed = Vec::new();
    println!("acceptance: master seed {}", config.master_seed);
    for id in CRITERIA {
        match verifier.run(id) {
            Ok(result) => {
                print!("{result}");
                if !result.pass {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:>2} FAIL  error: {e}");
                failed.push(id);
            }
        }
    }
    println!();
    for id in CRITERIA {
        let status = if failed.contains(&id) { "FAIL" } else { "PASS" };
        println!("criterion {id:>2}: {status}");
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of {} criteria fail: {failed:?}", failed.len(), CRITERIA.len());
        ExitCode::FAILURE
    }
}
