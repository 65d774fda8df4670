//! Clients send attributed messages; the proxy strips the sender, pools the
//! reports and shuffles them. The batch round-trips through the debug dump.
//!
//! cargo run --release --example proxy_shuffle

use fedmf::ldp::PerturbedReport;
use fedmf::proxy::{strip_and_shuffle, AnonymousReportBatch, ClientMessage};
use fedmf::rng::stream;

fn main() -> fedmf::Result<()> {
    let messages: Vec<ClientMessage> = (0..3u64)
        .map(|id| ClientMessage {
            client_id: id,
            epoch: 4,
            reports: (0..2)
                .map(|j| PerturbedReport {
                    cell_index: (10 * id + j) as u32,
                    sign: j % 2 == 0,
                })
                .collect(),
        })
        .collect();
    for m in &messages {
        println!("client {} -> {:?}", m.client_id, m.reports);
    }

    let batch = strip_and_shuffle(messages, &mut stream(1, &[3]))?;
    println!("server sees epoch {}:", batch.epoch);
    for r in &batch.reports {
        println!(
            "  cell {:>2} {}",
            r.cell_index,
            if r.sign { '+' } else { '-' }
        );
    }

    let mut dump = Vec::new();
    batch.write_dump(&mut dump)?;
    let back = AnonymousReportBatch::read_dump(&dump[..])?;
    println!(
        "dump: {} bytes, round trip ok: {}",
        dump.len(),
        back == batch
    );
    Ok(())
}
