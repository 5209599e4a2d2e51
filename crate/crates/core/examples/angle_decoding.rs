//! Principal angles between a codeword and a received block, and the decoder
//! statistic for the sent codeword against random distractors.

use covert_mimo::channels;
use covert_mimo::linalg;
use covert_mimo::linksim;
use covert_mimo::montecarlo::Engine;
use num_complex::Complex64;

fn main() -> covert_mimo::Result<()> {
    let c = Complex64::new;
    let x = linalg::from_rows(
        4,
        2,
        &[c(0.0, 0.0), c(2.0, 0.0), c(1.0, -2.0), c(1.0, 0.0), c(2.0, 0.0), c(1.0, -1.0), c(0.0, 0.0), c(-1.0, 0.0)],
    )?;
    let y = linalg::from_rows(
        4,
        2,
        &[
            c(-0.35, -0.27),
            c(2.39, -0.19),
            c(1.77, -1.66),
            c(1.13, -1.30),
            c(1.46, 0.11),
            c(0.91, -0.82),
            c(0.23, -0.19),
            c(-1.25, 0.53),
        ],
    )?;
    let angles = linalg::principal_angles(&x, &y)?;
    for (deg, rad) in angles.degrees().iter().zip(&angles.angles) {
        println!("angle {deg:7.3} deg, cosine {:.4}", rad.cos());
    }
    println!("sent codeword statistic: {:.3e}", linksim::decoder_statistic(&x, &y)?);

    let engine = Engine::new(1, 1);
    let stats = engine.try_map(0, 9_900, |rng, _| {
        let d = channels::sample_noise(4, 2, rng).map(|z| z * 2f64.sqrt());
        linksim::decoder_statistic(&d, &y)
    })?;
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    println!("mean distractor statistic: {mean:.4} over {} draws", stats.len());
    Ok(())
}
