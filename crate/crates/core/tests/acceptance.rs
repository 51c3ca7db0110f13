//! Verification battery: one line per criterion, nonzero exit on any failure.

use std::process::ExitCode;

use spherelab::acceptance::{run_suite_with, NAMES};
use spherelab::DEFAULT_RESOLUTION;

fn main() -> ExitCode {
    println!("running acceptance battery at resolution {DEFAULT_RESOLUTION}");
    let report = run_suite_with(DEFAULT_RESOLUTION, |r| {
        println!(
            "criterion {:>2} {:<24} {} ({:.2}s): {}",
            r.id,
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        );
    });
    let failed: Vec<u32> = report.results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if report.results.len() == NAMES.len() && failed.is_empty() {
        println!("acceptance: all {} criteria passed in {:.1}s", NAMES.len(), report.total_seconds);
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
