//! Learns normal and abnormal bigram models from a few pipe traces, then
//! spreads name-only abnormal pairs over every parameter variant.
//!
//! cargo run --example learn_rpm

use sdrfuzz::bigram::{base_pair_deltas, counts_to_rpm, expand_abnormal_counts, learn_by_label, CountMatrix};
use sdrfuzz::trace::{parse_pipe_trace, Corpus, Label, Vocabulary};

fn main() {
    let mut corpus = Corpus::default();
    let lines = [
        (Label::Normal, "open|read|read|close"),
        (Label::Normal, "open|write|close"),
        (Label::Abnormal, "open|close|read"),
    ];
    for (label, line) in lines {
        let t = parse_pipe_trace(line, &mut corpus.vocabulary, label).expect("valid line");
        corpus.traces.push(t);
    }
    let (normal, abnormal) = learn_by_label(&corpus);
    let v = &corpus.vocabulary;
    for (tag, rpm) in [("normal", &normal), ("abnormal", &abnormal)] {
        println!("{tag}:");
        for i in v.ids() {
            let row: Vec<String> = rpm.row(i.index()).iter().map(|p| format!("{p:.2}")).collect();
            println!("  {:<6} {}", v.name(i), row.join(" "));
        }
    }

    let variants = Vocabulary::from_names(["socket$inet", "socket$unix", "bind", "close"]);
    let seqs = [vec!["socket", "bind"], vec!["socket", "close"]];
    let deltas = base_pair_deltas(seqs.iter().map(Vec::as_slice));
    let counts = expand_abnormal_counts(&deltas, &variants, &CountMatrix::zeros(variants.len())).expect("known bases");
    let rpm = counts_to_rpm(&counts);
    println!("name-only abnormal over variants:");
    for i in variants.ids() {
        println!("  {:<12} {:?}", variants.name(i), rpm.row(i.index()));
    }
}
