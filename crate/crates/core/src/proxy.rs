//! In-process stand-in for the anonymizing proxy: drops client metadata,
//! splits messages into single reports and shuffles them across clients.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ldp::{PerturbedReport, REPORT_WIRE_BYTES};

/// What a client sends. `client_id` stands in for network metadata and
/// never gets past the proxy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientMessage {
    pub client_id: u64,
    pub epoch: u32,
    pub reports: Vec<PerturbedReport>,
}

/// What the server receives. Has no field that could carry attribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnonymousReportBatch {
    pub epoch: u32,
    pub reports: Vec<PerturbedReport>,
}

pub fn strip_and_shuffle<R: Rng + ?Sized>(
    messages: Vec<ClientMessage>,
    rng: &mut R,
) -> Result<AnonymousReportBatch> {
    let epoch = match messages.first() {
        Some(m) => m.epoch,
        None => return Err(Error::Empty("no client messages")),
    };
    if let Some(m) = messages.iter().find(|m| m.epoch != epoch) {
        return Err(Error::MixedEpochs {
            first: epoch,
            other: m.epoch,
        });
    }
    let mut reports: Vec<PerturbedReport> = messages.into_iter().flat_map(|m| m.reports).collect();
    reports.shuffle(rng);
    Ok(AnonymousReportBatch { epoch, reports })
}

impl AnonymousReportBatch {
    /// Debug dump: `u32` epoch, `u32` report count (both LE), then the
    /// 5-byte wire encoding of each report.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&(self.reports.len() as u32).to_le_bytes())?;
        for r in &self.reports {
            w.write_all(&r.to_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let epoch = u32::from_le_bytes(word);
        r.read_exact(&mut word)?;
        let n = u32::from_le_bytes(word) as usize;
        let mut reports = Vec::with_capacity(n);
        let mut rec = [0u8; REPORT_WIRE_BYTES];
        for _ in 0..n {
            r.read_exact(&mut rec)?;
            reports.push(PerturbedReport::from_bytes(rec)?);
        }
        Ok(Self { epoch, reports })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn msg(client_id: u64, epoch: u32, cells: &[u32]) -> ClientMessage {
        ClientMessage {
            client_id,
            epoch,
            reports: cells
                .iter()
                .map(|&c| PerturbedReport {
                    cell_index: c,
                    sign: c % 2 == 0,
                })
                .collect(),
        }
    }

    fn sorted(mut v: Vec<PerturbedReport>) -> Vec<PerturbedReport> {
        v.sort();
        v
    }

    #[test]
    fn single_client_is_permuted() {
        let m = msg(7, 3, &[1, 2, 3, 4, 5, 6, 7, 8]);
        let b = strip_and_shuffle(vec![m.clone()], &mut stream(0, &[])).unwrap();
        assert_eq!(b.epoch, 3);
        assert_eq!(sorted(b.reports), sorted(m.reports));
    }

    #[test]
    fn conservation_across_clients() {
        let ms: Vec<_> = (0..5)
            .map(|c| msg(c, 0, &[c as u32, 10 + c as u32, 20]))
            .collect();
        let all: Vec<_> = ms.iter().flat_map(|m| m.reports.clone()).collect();
        let b = strip_and_shuffle(ms, &mut stream(1, &[])).unwrap();
        assert_eq!(b.reports.len(), 15);
        assert_eq!(sorted(b.reports), sorted(all));
    }

    #[test]
    fn mixed_epochs_and_empty_rejected() {
        let mut rng = stream(2, &[]);
        assert!(matches!(
            strip_and_shuffle(vec![msg(1, 0, &[1]), msg(2, 1, &[2])], &mut rng),
            Err(Error::MixedEpochs { first: 0, other: 1 })
        ));
        assert!(strip_and_shuffle(vec![], &mut rng).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let b = strip_and_shuffle(vec![msg(1, 4, &[3, 9, 12])], &mut stream(3, &[])).unwrap();
        let mut buf = Vec::new();
        b.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 3 * REPORT_WIRE_BYTES);
        assert_eq!(AnonymousReportBatch::read_dump(&buf[..]).unwrap(), b);
    }
}
