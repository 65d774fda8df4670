//! Per-client traffic for a few catalogue sizes and report counts.
//!
//! cargo run --release --example communication_costs

use fedmf::mf::HyperParams;
use fedmf::server::comm_cost;

fn main() {
    println!("items      k  down/epoch  down/total  up/total(4B)  up/total(wire)");
    for &m in &[1000usize, 2500, 9781] {
        for &k in &[1usize, 100, 250] {
            let hp = HyperParams {
                k,
                ..HyperParams::default()
            };
            let c = comm_cost(&hp, m);
            println!(
                "{m:>5}  {k:>5}  {:>8.1}KB  {:>8.2}MB  {:>10.1}KB  {:>12.1}KB",
                c.download_per_epoch as f64 / 1e3,
                c.download_total as f64 / 1e6,
                c.upload_total as f64 / 1e3,
                c.upload_total_wire as f64 / 1e3
            );
        }
    }
}
