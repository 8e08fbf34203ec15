//! Style statistics and style shuffling on a pair of feature maps.

use ssavd::objective::{style_shuffle, style_stats};
use ssavd::tensor::{Graph, RngState, Tensor};

fn main() -> ssavd::Result<()> {
    let mut rng = RngState::new(1);
    // two (C=2, L=6) audio feature maps with different offsets and gains
    let a = Tensor::<f64>::from_fn(&[2, 6], |_| rng.normal());
    let b = Tensor::<f64>::from_fn(&[2, 6], |_| 3.0 + 4.0 * rng.normal());
    let g = Graph::new();
    let (fa, fb) = (g.constant(a.clone()), g.constant(b.clone()));
    for omega in [1.0, 0.5, 0.0] {
        let s = style_shuffle(&fa, &fb, omega, 0)?.tensor();
        let st = style_stats(&s, 0)?;
        println!("omega {omega:.1}: channel means {:?}, stds {:?}", st.mean, st.std);
    }
    let sb = style_stats(&b, 0)?;
    println!("style of b:      channel means {:?}, stds {:?}", sb.mean, sb.std);
    Ok(())
}
