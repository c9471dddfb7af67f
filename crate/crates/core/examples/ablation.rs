//! Strategy ablation on the `deep` kernel: baseline, each single strategy
//! and all three, several seeds, medians of the final row.
//!
//! cargo run --release --example ablation -- [iterations] [seeds]

use rayon::prelude::*;
use sdrfuzz::bigram::{combine_rpms, CombineWeights};
use sdrfuzz::campaign::{run_campaign_setup, CampaignSetup, Strategies};
use sdrfuzz::fixtures::{builtin, historic_corpus, pretrained_rpms, HistoricCorpus};

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().map_or(20_000, |s| s.parse().expect("iterations"));
    let seeds: u64 = args.next().map_or(5, |s| s.parse().expect("seeds"));
    let name = args.next().unwrap_or_else(|| "deep".into());

    let kernel = builtin(&name);
    let legacy = builtin(&format!("{name}_legacy"));
    let corpus = historic_corpus(&legacy, HistoricCorpus::default());
    let (normal, abnormal) = pretrained_rpms(&corpus);
    let dtn = combine_rpms(
        &normal.project(legacy.vocabulary(), kernel.vocabulary()),
        &abnormal.project(legacy.vocabulary(), kernel.vocabulary()),
        CombineWeights::default(),
    )
    .expect("same size");

    println!("strategy  median_branches  median_unique_crashes");
    for s in ["baseline", "C", "R", "D", "CRD"] {
        let strategies: Strategies = s.parse().unwrap();
        let runs: Vec<_> = (0..seeds)
            .into_par_iter()
            .map(|seed| {
                let mut setup = CampaignSetup::new(kernel.clone(), strategies, iterations, seed);
                setup.dtn = Some(dtn.clone());
                let run = run_campaign_setup(&setup).expect("campaign runs");
                (run.state.coverage.len(), run.state.unique_crashes())
            })
            .collect();
        let b = median(runs.iter().map(|r| r.0).collect());
        let c = median(runs.iter().map(|r| r.1).collect());
        println!("{s:<9} {b:>15}  {c:>21}   {runs:?}");
    }
}
