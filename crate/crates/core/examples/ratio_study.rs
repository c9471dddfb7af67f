//! Sweeps the normal:abnormal weighting of the historic model with
//! otherwise identical campaigns.
//!
//! cargo run --release --example ratio_study -- [iterations]

use sdrfuzz::bigram::{save_rpm, CombineWeights};
use sdrfuzz::campaign::{ratio_study_csv, run_ratio_study, CampaignConfig, PretrainedPaths, Strategies};
use sdrfuzz::fixtures::historic_rpms;

fn main() {
    let iterations: usize = std::env::args().nth(1).map_or(3000, |s| s.parse().expect("iterations"));
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let (normal, abnormal, vocab) = historic_rpms("medium_legacy");
    let paths = PretrainedPaths {
        normal: dir.join("normal.json"),
        abnormal: dir.join("abnormal.json"),
    };
    save_rpm(&normal, &vocab, &paths.normal).unwrap();
    save_rpm(&abnormal, &vocab, &paths.abnormal).unwrap();

    let mut cfg = CampaignConfig::new("builtin:medium", Strategies::NONE, iterations, 3);
    cfg.pretrained_rpm_paths = Some(paths);
    let ratios: Vec<_> = ["1:1", "1:2", "2:1", "1:4", "4:1"]
        .iter()
        .map(|r| CombineWeights::parse(r).unwrap())
        .collect();
    print!("{}", ratio_study_csv(&run_ratio_study(&cfg, &ratios).unwrap()));
}

