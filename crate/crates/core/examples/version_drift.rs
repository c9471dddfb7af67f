//! Model learned on an older kernel interface (renamed and removed calls)
//! against a model learned from the campaign's own corpus.
//!
//! cargo run --release --example version_drift -- [iterations] [seeds]

use sdrfuzz::bigram::CombineWeights;
use sdrfuzz::campaign::{run_campaign_setup, CampaignSetup};
use sdrfuzz::fixtures::{builtin, historic_dtn};

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(10_000, |s| s.parse().expect("iterations"));
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seeds"));

    let kernel = builtin("deep");
    let legacy = builtin("deep_legacy");
    let missing: Vec<_> = kernel.vocabulary().names().iter().filter(|n| legacy.vocabulary().id(n).is_none()).collect();
    println!("calls unknown to the old interface: {missing:?}");

    let dtn = historic_dtn("deep_legacy", &kernel, CombineWeights::default());
    for s in ["C", "D"] {
        let mut branches = Vec::new();
        for seed in 0..seeds {
            let mut setup = CampaignSetup::new(kernel.clone(), s.parse().unwrap(), iterations, seed);
            setup.dtn = Some(dtn.clone());
            branches.push(run_campaign_setup(&setup).unwrap().state.coverage.len());
        }
        println!("{s}: branches per seed {branches:?}");
    }
}
