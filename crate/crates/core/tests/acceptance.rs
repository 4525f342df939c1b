//! One line per acceptance criterion; exits nonzero if any fails.

use std::process::ExitCode;

use liouville::verify::{run, CRITERIA};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for id in CRITERIA {
        let r = run(id);
        println!("{}", r.line());
        if !r.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
