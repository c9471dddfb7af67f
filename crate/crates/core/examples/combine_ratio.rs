//! Mixes a normal and an abnormal model under a few weight ratios.
//!
//! cargo run --example combine_ratio

use sdrfuzz::bigram::{combine_rpms, CombineWeights, Rpm};
use sdrfuzz::matrix::SquareMatrix;

fn main() {
    let normal = Rpm::new(SquareMatrix::from_rows(&[[0.5, 0.5], [1.0, 0.0]])).unwrap();
    let abnormal = Rpm::new(SquareMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
    for ratio in ["1:1", "2:1", "4:2", "1:3"] {
        let w = CombineWeights::parse(ratio).unwrap();
        let dtn = combine_rpms(&normal, &abnormal, w).unwrap();
        println!("{ratio:>4}  {:?} {:?}", dtn.row(0), dtn.row(1));
    }
}
