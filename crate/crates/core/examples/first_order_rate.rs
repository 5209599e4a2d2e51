//! First-order covert rate sqrt(n) R1 as the antenna count grows.

use covert_mimo::bounds::{self, GainConvention};
use covert_mimo::channels::FadingModel;
use covert_mimo::montecarlo::Engine;

fn main() -> covert_mimo::Result<()> {
    let (n, epsilon, delta, lambda0) = (1000, 0.01, 0.1, 1.0);
    let engine = Engine::new(2026, 1);
    println!("N_a  kappa_eps  sqrt(n)R1 (power gain)");
    for na in [1, 2, 4, 8] {
        let model = FadingModel::rician_ones(10.0, na, na)?;
        let kappa = bounds::kappa_epsilon(&model, lambda0, epsilon, 50_000, &engine, GainConvention::Power)?;
        let r1 = bounds::first_order_rate(n, epsilon, delta, &kappa)?;
        println!("{na:>3}  {:>9.4}  {:.4} ± {:.4}", kappa.value, r1.sqrt_n_rate, r1.estimate.ci_half_width);
    }
    Ok(())
}
