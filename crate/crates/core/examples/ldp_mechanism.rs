//! Randomized response on one item gradient: clip, perturb into k reports,
//! decode, and compare the average against the clipped gradient.
//!
//! cargo run --release --example ldp_mechanism

use fedmf::ldp::{
    clip_to_unit, decode_report, output_prob, perturb_k, privacy_budget, scale_constant,
    MechanismParams,
};
use fedmf::mf::Matrix;
use fedmf::rng::stream;

fn main() -> fedmf::Result<()> {
    let (m, f) = (4, 2);
    let grad = Matrix::from_vec(m, f, vec![0.9, -0.4, 2.5, 0.0, -0.1, -3.0, 0.3, 0.6])?;
    let clipped = clip_to_unit(&grad);

    let eps = 2.5;
    let n = 200_000;
    let params = MechanismParams::new(eps, m, f, n)?;
    println!("B = {:.3}", scale_constant(&params)?);

    let mut rng = stream(7, &[0]);
    let reports = perturb_k(&grad, &params, &mut rng)?;
    let first = reports[0];
    println!(
        "report 0: cell {} sign {} -> wire {:?}",
        first.cell_index,
        first.sign,
        first.to_bytes()
    );

    let mut mean = Matrix::zeros(m, f);
    for r in &reports {
        let d = decode_report(r, &params)?;
        for (a, b) in mean.as_mut_slice().iter_mut().zip(d.as_slice()) {
            *a += b / n as f64;
        }
    }
    println!("cell  clipped  estimate");
    for c in 0..m * f {
        println!(
            "{c:>4}  {:>7.3}  {:>8.3}",
            clipped.as_slice()[c],
            mean.as_slice()[c]
        );
    }

    // worst-case likelihood ratio between inputs 1 and -1
    let ratio = output_prob(1.0, eps, true)? / output_prob(-1.0, eps, true)?;
    println!("max ratio {ratio:.6} vs e^eps {:.6}", eps.exp());

    let one_epoch = MechanismParams::new(eps, m, f, 100)?;
    println!(
        "user-level budget for k=100: {}",
        privacy_budget(&one_epoch)
    );
    Ok(())
}
