//! The client side of one epoch: closed-form user vector, the gradient it
//! privatizes, and a check that the solve is a minimum.
//!
//! cargo run --release --example user_update

use fedmf::mf::{
    client_gradient, update_user_embedding, user_system_naive, HyperParams, Matrix, UserEmbedding,
};
use fedmf::rng::stream;

fn user_loss(x: &UserEmbedding, v: &Matrix, items: &[usize], hp: &HyperParams) -> f64 {
    let mut l = hp.reg * x.0.iter().map(|a| a * a).sum::<f64>();
    for i in 0..v.n_rows() {
        let p = if items.contains(&i) { 1.0 } else { 0.0 };
        let c = 1.0 + hp.alpha * p;
        let s: f64 = x.0.iter().zip(v.row(i)).map(|(a, b)| a * b).sum();
        l += c * (p - s) * (p - s);
    }
    l
}

fn main() -> fedmf::Result<()> {
    let hp = HyperParams {
        reg: 0.1,
        ..HyperParams::default()
    };
    let v = Matrix::random_uniform(12, hp.n_factors, 0.5, &mut stream(3, &[1]));
    let items = [1, 4, 7];

    let x = update_user_embedding(&v, &items, &hp)?;
    println!(
        "x_u = {:?}",
        x.0.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>()
    );

    let (a, b) = user_system_naive(&v, &items, &hp);
    let xv = nalgebra::DVector::from_vec(x.0.clone());
    println!(
        "normal-equation residual {:.2e}",
        (&a * &xv - &b).norm() / b.norm()
    );

    let base = user_loss(&x, &v, &items, &hp);
    let mut nudged = x.clone();
    nudged.0[0] += 1e-3;
    println!(
        "loss at solve {base:.6}, nudged {:.6}",
        user_loss(&nudged, &v, &items, &hp)
    );

    let g = client_gradient(&x, &v, &items, &hp);
    println!("client gradient, interacted rows:");
    for &i in &items {
        println!(
            "  item {i}: {:?}",
            g.row(i)
                .iter()
                .map(|a| format!("{a:+.4}"))
                .collect::<Vec<_>>()
        );
    }
    Ok(())
}
