//! Finite-blocklength achievability and converse bounds around the
//! first-order rate for a 2x2 Rician channel.

use covert_mimo::bounds::{self, BetaTail, GainConvention};
use covert_mimo::channels::{FadingModel, SystemDims};
use covert_mimo::covertness::CovertParams;
use covert_mimo::montecarlo::Engine;

fn main() -> covert_mimo::Result<()> {
    let model = FadingModel::rician_ones(10.0, 2, 2)?;
    let engine = Engine::new(2026, 1);
    let trials = 200_000;
    let kappa = bounds::kappa_epsilon(&model, 1.0, 0.01, trials, &engine, GainConvention::Power)?;
    println!("     n   sqrt(n)ach   sqrt(n)R1   sqrt(n)con");
    for n in [1_000, 3_000, 10_000, 30_000, 100_000] {
        let p = CovertParams::new(n, 0.01, 0.1, 1.0, SystemDims::square(2)?)?;
        let ach = bounds::ach_rate_bound(&p, &model, trials, &engine, BetaTail::ErlangDominance)?;
        let con = bounds::con_rate_bound(&p, &model, trials, &engine)?;
        let r1 = bounds::first_order_rate(n, 0.01, 0.1, &kappa)?;
        println!("{n:>6}   {:>10.4}   {:>9.4}   {:>10.4}", ach.sqrt_n_rate, r1.sqrt_n_rate, con.sqrt_n_rate);
    }
    Ok(())
}
