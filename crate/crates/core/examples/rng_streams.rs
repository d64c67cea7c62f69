//! Keyed random streams: the same key path always yields the same draws,
//! and sibling keys are independent.

use lifonet::stochastics::StreamKey;

fn main() {
    let root = StreamKey::root(42);
    let a: Vec<f64> = {
        let mut s = root.named("service").named("3").stream();
        (0..3).map(|_| s.open01()).collect()
    };
    let b: Vec<f64> = {
        let mut s = root.named("service").named("3").stream();
        (0..3).map(|_| s.open01()).collect()
    };
    let c: Vec<f64> = {
        let mut s = root.named("service").named("6").stream();
        (0..3).map(|_| s.open01()).collect()
    };
    println!("service/3: {a:?}");
    println!("again:     {b:?}");
    println!("service/6: {c:?}");
    for rep in 0..3u64 {
        let mut s = root.named("induction").child(rep).stream();
        println!("replication {rep}: first draw {:.12}", s.open01());
    }
}
