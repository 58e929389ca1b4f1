//! The evaluation metrics on small hand-made inputs.
//!
//! ```text
//! cargo run --release --example metrics_tour
//! ```

use voicelike::metrics::{
    accuracy_f1, cer, compute_eer, cosine_similarity, kendall_tau, mse, pearson_lcc, spearman_srcc, LikeLabel,
};

fn main() -> voicelike::Result<()> {
    let pred = [0.1, 0.4, 0.4, 0.9, -0.3];
    let truth = [0.0, 0.5, 0.2, 1.0, -0.5];
    println!("MSE {:.4}", mse(&pred, &truth)?);
    println!("LCC {:.4}", pearson_lcc(&pred, &truth)?);
    println!("SRCC {:.4} (ties share their average rank)", spearman_srcc(&pred, &truth)?);
    println!("Kendall tau-b {:.4}", kendall_tau(&pred, &truth)?);

    let label = |v: f64| if v >= 0.0 { LikeLabel::Liked } else { LikeLabel::Disliked };
    let (acc, f1) = accuracy_f1(
        &pred.map(label),
        &truth.map(label),
        LikeLabel::Liked,
    )?;
    println!("liked/disliked accuracy {acc:.2}, F1 {f1:.2}");

    println!("CER {:.3}", cer("kitten", "sitting")?);
    println!("cosine {:.4}", cosine_similarity(&[1.0, 2.0, 0.0], &[2.0, 3.0, 1.0])?);

    let genuine = [0.9, 0.8, 0.75, 0.6];
    let impostor = [0.1, 0.3, 0.65, 0.2];
    let e = compute_eer(&genuine, &impostor)?;
    println!("EER {:.3} at threshold {:.3} (FAR {:.3}, FRR {:.3})", e.eer, e.threshold, e.far, e.frr);
    Ok(())
}
