//! A full campaign with all three strategies, exported as a report.
//!
//! cargo run --release --example fuzz_campaign -- [iterations] [report dir]

use sdrfuzz::bigram::CombineWeights;
use sdrfuzz::campaign::{export_report, run_campaign_setup, summary, CampaignSetup};
use sdrfuzz::fixtures::{builtin, historic_dtn};

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(5000, |s| s.parse().expect("iterations"));
    let dir = args.next();

    let kernel = builtin("medium");
    let dtn = historic_dtn("medium_legacy", &kernel, CombineWeights::default());
    let mut setup = CampaignSetup::new(kernel, "CRD".parse().unwrap(), iterations, 7);
    setup.dtn = Some(dtn);
    let run = run_campaign_setup(&setup).unwrap();

    for row in run.series.iter().step_by((run.series.len() / 10).max(1)) {
        println!("{:?}", row);
    }
    println!("{}", serde_json::to_string_pretty(&summary(&run)).unwrap());
    for (label, c) in &run.state.crashes {
        println!("crash {label}: {} hits, first at {}", c.count, c.first_iteration);
    }
    if let Some(dir) = dir {
        for p in export_report(&run, dir.as_ref()).unwrap() {
            println!("wrote {}", p.display());
        }
    }
}
