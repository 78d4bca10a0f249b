//! Multi-view gradient consistency on hand-made gradients: agreeing views
//! leave the loss alone, disagreeing views scale it up to e times.

use svbrdf::grad::{GradientBuffers, MapKind};
use svbrdf::optim::{composite_loss, mvcl, MvclMode, Theta};

fn main() -> svbrdf::Result<()> {
    let theta = Theta::initial(4, 8, 4);
    // Each view's gradient is a per-texel pattern over the 4x4 diffuse map.
    let grads = |patterns: &[fn(usize) -> f64]| -> Vec<GradientBuffers> {
        patterns
            .iter()
            .map(|p| {
                let mut g = GradientBuffers::zeros(&theta.maps, &theta.env);
                let d = g.get_mut(MapKind::Diffuse);
                for t in 0..d.num_texels() {
                    for c in 0..3 {
                        *d.get_mut(t, c) = p(t);
                    }
                }
                g
            })
            .collect()
    };
    let coverage = vec![2; 16];
    let recon = [0.02, 0.03];
    let cases: [(&str, [fn(usize) -> f64; 2]); 3] = [
        ("agree", [|_| 1.0, |_| 0.3]),
        ("disagree", [|_| 1.0, |_| -1.0]),
        ("partial", [|_| 1.0, |t| if t % 2 == 0 { 1.0 } else { 0.0 }]),
    ];
    for (label, patterns) in cases {
        let m = mvcl(&grads(&patterns), &coverage, &[MapKind::Diffuse])?;
        let (loss, _) = composite_loss(&recon, &m.per_view, MvclMode::PerView)?;
        println!("{label:<9} mvcl {:.4}  loss {:.5} (recon mean {:.5})", m.global, loss, recon.iter().sum::<f64>() / 2.0);
    }
    Ok(())
}
