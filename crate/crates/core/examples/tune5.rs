use faultscope_core::simulate::*;
fn main() {
    for seed in 0..12u64 {
        let exp = make_twin(&TwinConfig {
            n: 30, sensors: 10, k: 1, seed, shape: InputShape::Step, dt: 0.05, horizon: 5.0,
        }).unwrap();
        eprint!("seed {seed}: abscissa(shifted)...");
        let a = spectral_abscissa(&exp.system.a);
        eprintln!(" {a:.3}");
    }
}
