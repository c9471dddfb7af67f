//! Row entropy of the static table against the table augmented with a
//! model learned on an older kernel.
//!
//! cargo run --example entropy

use sdrfuzz::bigram::CombineWeights;
use sdrfuzz::choice_table::{init_act, shannon_index, transform_rpm, update_act};
use sdrfuzz::fixtures::{builtin, historic_dtn};
use sdrfuzz::matrix::SquareMatrix;

fn main() {
    let kernel = builtin("medium");
    let ct = kernel.static_choice_table();
    let act = init_act(&ct);
    let dtn = historic_dtn("medium_legacy", &kernel, CombineWeights::default());
    let zero = SquareMatrix::zeros(kernel.len());
    let augmented = update_act(&act, &ct, &transform_rpm(&dtn), &zero).unwrap();

    let before = shannon_index(&act);
    let after = shannon_index(&augmented);
    println!("call            static  augmented");
    for id in kernel.vocabulary().ids() {
        let i = id.index();
        println!("{:<14} {:>7.3} {:>10.3}", kernel.vocabulary().name(id), before.per_row_si[i], after.per_row_si[i]);
    }
    println!("mean           {:>7.3} {:>10.3}", before.mean_si, after.mean_si);
}
