//! Compares back-propagated gradients with central differences for both
//! recurrent models on a random window.
//!
//! cargo run --release --example gradient_check -- [seed]

use readiness::models::{KeyFrameModelParams, Regressor, SimpleModelParams};
use readiness::numerics::{finite_diff_entry, relative_error, Matrix, DEFAULT_FD_STEP};
use readiness::RngState;

const DIM: usize = 54;
const FRAMES: usize = 60;

fn check<R: Regressor>(name: &str, model: &R, window: &Matrix, rng: &mut RngState) -> readiness::Result<()> {
    // loss = prediction, so the gradient is d pred / d params
    let mut grads = model.zeros_like();
    model.forward_backward(window, &|_| 1.0, &mut grads)?;

    let mut objective = |p: &R| p.predict(window).unwrap_or(f64::NAN);
    let mut work = model.clone();
    println!("{name} ({} parameters)", model.num_params());
    let analytic = grads.blocks();
    let sizes: Vec<_> = model.blocks().iter().map(|(n, m)| (n.clone(), m.len())).collect();
    for (b, (block, len)) in sizes.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let i = rng.below(*len);
            let numeric = finite_diff_entry(&mut objective, &mut work, b, i, DEFAULT_FD_STEP)?;
            worst = worst.max(relative_error(analytic[b].1.data()[i], numeric, 1e-6));
        }
        println!("  {block:<24} worst relative error {worst:.2e}");
    }
    Ok(())
}

fn main() -> readiness::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut rng = RngState::new(seed);
    let window = Matrix::from_fn(FRAMES, DIM, |_, _| rng.uniform())?;

    let simple = SimpleModelParams::init(DIM, &mut rng);
    check("simple LSTM", &simple, &window, &mut rng)?;
    let keyframe = KeyFrameModelParams::init(DIM, &mut rng);
    check("key-frame LSTM", &keyframe, &window, &mut rng)?;
    Ok(())
}
