use zext_core::billiard::*;
use zext_core::rng::task_rng;

fn main() {
    let b = Billiard::default_two_disk();
    let mut rng = task_rng(42, 2, 900);
    let s = b.sample_state(&mut rng);
    let rep = time_reversal_retrace::<BigReal>(b.config(), &s, 100).unwrap();
    println!("retrace: dev={:.3e} disks={} phi={}", rep.max_position_dev, rep.disks_match, rep.phi_reversed);
}
