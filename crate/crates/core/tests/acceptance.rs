//! Runs every acceptance criterion at the bundled budgets and prints one
//! line per criterion. `FKMC_ACCEPTANCE=3,holder` restricts the run.

use std::process::ExitCode;

use fk_core::acceptance::{resolve_ids, run_suite, AcceptanceConfig, Verdict};

fn main() -> ExitCode {
    let requested: Vec<String> = std::env::var("FKMC_ACCEPTANCE")
        .map(|v| v.split(',').filter(|s| !s.trim().is_empty()).map(String::from).collect())
        .unwrap_or_default();
    let ids = match resolve_ids(&requested) {
        Ok(ids) => ids,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::FAILURE;
        }
    };
    println!("acceptance: {} criteria", ids.len());
    let report = run_suite(&AcceptanceConfig::default(), &ids, |r| println!("{}", r.line()));
    let passed = report.criteria.iter().filter(|c| c.verdict == Verdict::Pass).count();
    println!("acceptance: {passed}/{} passed", report.criteria.len());
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
