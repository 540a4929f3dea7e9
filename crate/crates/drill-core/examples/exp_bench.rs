use drill_core::mathx;
use std::time::Instant;

fn main() {
    let n = 9_000_000usize;
    let mut xs: Vec<f64> = (0..n).map(|i| -((i % 1000) as f64) * 0.01).collect();
    let t = Instant::now();
    for x in xs.iter_mut() {
        *x = mathx::exp(*x - 0.5);
    }
    let dt = t.elapsed().as_secs_f64();
    println!("exp map over {n}: {:.1} ms ({:.1} ns/elem), sink {}", dt * 1e3, dt / n as f64 * 1e9, xs[5]);

    let mut ys: Vec<f64> = (0..n).map(|i| ((i % 2000) as f64 - 1000.0) * 0.003).collect();
    let t = Instant::now();
    for y in ys.iter_mut() {
        *y = mathx::sigmoid(*y);
    }
    let dt = t.elapsed().as_secs_f64();
    println!("sigmoid map: {:.1} ms ({:.1} ns/elem), sink {}", dt * 1e3, dt / n as f64 * 1e9, ys[5]);

    let mut zs: Vec<f64> = (0..n).map(|i| ((i % 2000) as f64 - 1000.0) * 0.003).collect();
    let t = Instant::now();
    for z in zs.iter_mut() {
        *z = mathx::tanh(*z);
    }
    let dt = t.elapsed().as_secs_f64();
    println!("tanh map: {:.1} ms ({:.1} ns/elem), sink {}", dt * 1e3, dt / n as f64 * 1e9, zs[5]);
}
