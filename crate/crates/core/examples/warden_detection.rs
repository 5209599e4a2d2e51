//! Minimum total detection error of the warden's likelihood-ratio test
//! against the Pinsker floor, as the transmit power is scaled up.

use covert_mimo::channels::{FadingModel, SystemDims};
use covert_mimo::covertness::{self, CovertParams};
use covert_mimo::linalg;
use covert_mimo::linksim;
use covert_mimo::montecarlo::Engine;

fn main() -> covert_mimo::Result<()> {
    let p = CovertParams::new(1000, 0.01, 0.1, 1.0, SystemDims::square(2)?)?;
    let worst = FadingModel::fixed(linalg::identity(2))?;
    let engine = Engine::new(2026, 1);
    let base = covertness::power_ach(&p);
    println!("scale   KL       alpha+beta   Pinsker floor");
    for scale in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let r = linksim::detection_error_sum_at(&p, base * scale, &worst, 2_000, &engine)?;
        println!("{scale:>5}   {:.4}   {:.3}        {:.3}", r.mean_kl, r.error_sum.value, covertness::pinsker_floor(r.mean_kl));
    }
    Ok(())
}
