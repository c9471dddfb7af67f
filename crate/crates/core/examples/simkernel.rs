//! Runs crash reproducers and a few hand-written programs on the simulated
//! kernel and prints which calls succeeded, the branches hit and any crash.
//!
//! cargo run --example simkernel

use sdrfuzz::fixtures::builtin;
use sdrfuzz::trace::to_pipe_line;

fn main() {
    let kernel = builtin("medium");
    let v = kernel.vocabulary();
    println!("{} calls, {} reachable branches", kernel.len(), kernel.branch_space_size());

    let mut programs: Vec<Vec<_>> = (0..kernel.crash_patterns().len()).map(|k| kernel.reproducer(k)).collect();
    for names in [["read", "open", "read"], ["socket", "connect", "sendmsg"]] {
        programs.push(names.iter().map(|n| v.id(n).unwrap()).collect());
    }
    for seq in programs {
        let out = kernel.execute(&seq).unwrap();
        let ok: String = out.succeeded.iter().map(|&s| if s { '+' } else { '-' }).collect();
        println!(
            "{:<50} {ok:<8} branches={:<3} crash={}",
            to_pipe_line(&seq, v),
            out.branches_hit.len(),
            out.crash.as_deref().unwrap_or("-")
        );
    }
}
