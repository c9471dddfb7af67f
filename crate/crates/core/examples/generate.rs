//! Forward generation and bidirectional random walks on the same table.
//!
//! cargo run --example generate

use sdrfuzz::bigram::CombineWeights;
use sdrfuzz::choice_table::{init_act, transform_rpm, update_act};
use sdrfuzz::fixtures::{builtin, historic_dtn};
use sdrfuzz::generator::{gen_random_walk, gen_unidirectional, GenConfig};
use sdrfuzz::matrix::SquareMatrix;
use sdrfuzz::trace::to_pipe_line;
use sdrfuzz::Rpm;

fn main() {
    let kernel = builtin("medium");
    let ct = kernel.static_choice_table();
    let dtn = historic_dtn("medium_legacy", &kernel, CombineWeights::default());
    let zero = SquareMatrix::zeros(kernel.len());
    let act = update_act(&init_act(&ct), &ct, &transform_rpm(&dtn), &zero).unwrap();
    let corpus_n = Rpm::zeros(kernel.len());
    let v = kernel.vocabulary();

    println!("forward:");
    for seed in 0..3 {
        let cfg = GenConfig::new(8, seed, kernel.start_set());
        println!("  {}", to_pipe_line(&gen_unidirectional(&act, &cfg).unwrap(), v));
    }
    println!("walk:");
    for seed in 0..3 {
        let cfg = GenConfig::new(8, seed, kernel.start_set());
        println!("  {}", to_pipe_line(&gen_random_walk(&act, &dtn, &corpus_n, &cfg).unwrap(), v));
    }
}
