//! Turns fifteen 2 s segment scores into a per-frame readiness index.
//!
//! cargo run --example ori_interpolation

use readiness::ratings::{interpolate_ori, segment_center, to_unit};

fn main() -> readiness::Result<()> {
    let segments = [
        4.5, 4.5, 4.0, 3.0, 2.0, 1.5, 1.5, 2.5, 3.5, 4.0, 4.5, 5.0, 5.0, 4.0, 3.0,
    ];
    let ori = interpolate_ori("demo", &segments)?;
    println!("{} frames at {} fps", ori.len(), ori.frame_rate);

    println!("\nknot  frame  segment  ori");
    for (i, &s) in segments.iter().enumerate() {
        let f = segment_center(i);
        println!("{i:>4}  {f:>5}  {s:>7.2}  {:.4}", ori.values[f]);
    }

    println!("\nbetween knots (frames 240..=300, step 10)");
    for f in (240..=300).step_by(10) {
        println!("  {f:>3}  {:.4}  unit {:.4}", ori.values[f], to_unit(ori.values[f])?);
    }
    Ok(())
}
