//! Joint decomposition of the legitimate and warden channels with a shared
//! left factor.

use covert_mimo::channels;
use covert_mimo::linalg;
use covert_mimo::montecarlo::Engine;

fn main() -> covert_mimo::Result<()> {
    let mut rng = Engine::new(5, 1).stream(0, 0);
    let h_b = channels::sample_noise(2, 3, &mut rng);
    let h_w = channels::sample_noise(2, 2, &mut rng);
    let g = linalg::gsvd(&h_b, &h_w)?;
    println!("legitimate gains {:?}", g.lambda_b);
    println!("warden gains     {:?}", g.lambda_w);
    let rel = |a: &linalg::ComplexMatrix, b: &linalg::ComplexMatrix| linalg::frobenius_norm(&(a - b)) / linalg::frobenius_norm(b);
    println!("relative residuals {:.2e} / {:.2e}", rel(&g.reconstruct_b(), &h_b), rel(&g.reconstruct_w(), &h_w));
    Ok(())
}
