use drill_core::tape::{ParamStore, Tape};
use drill_core::{Rng, Tensor};
use std::time::Instant;

fn time_ms(mut f: impl FnMut(), reps: usize) -> f64 {
    f();
    let t = Instant::now();
    for _ in 0..reps { f(); }
    t.elapsed().as_secs_f64() * 1e3 / reps as f64
}

fn main() {
    for threads in [1usize, 2] {
        drill_core::gemm::set_threads(threads);
        println!("--- threads = {threads} ---");
        let mut rng = Rng::seed(1);
        let (p, d, v) = (4480usize, 128usize, 2000usize);
        let h = Tensor::uniform(&mut rng, p, d, -1.0, 1.0);
        let e = Tensor::uniform(&mut rng, v, d, -1.0, 1.0);
        let dl = Tensor::uniform(&mut rng, p, v, -0.1, 0.1);

        // raw kernels
        let mut c = vec![0.0; p * v];
        println!("nt  H·E^T fwd: {:.1} ms", time_ms(|| drill_core::gemm::nt(p, d, v, h.values(), e.values(), &mut c), 5));
        let mut c2 = vec![0.0; p * d];
        println!("nn  dL·E bwd dH: {:.1} ms", time_ms(|| drill_core::gemm::nn(p, v, d, dl.values(), e.values(), &mut c2), 5));
        let mut c3 = vec![0.0; v * d];
        println!("tn  dL^T·H bwd dE: {:.1} ms", time_ms(|| drill_core::gemm::tn(v, p, d, dl.values(), h.values(), &mut c3), 5));

        // lstm-shape gemms: X(128x128)·W(512x128)^T, 70 of them
        let x = Tensor::uniform(&mut rng, 128, 128, -1.0, 1.0);
        let w = Tensor::uniform(&mut rng, 512, 128, -1.0, 1.0);
        let mut c4 = vec![0.0; 128 * 512];
        println!("nt  lstm x70: {:.1} ms", time_ms(|| {
            for _ in 0..70 { drill_core::gemm::nt(128, 128, 512, x.values(), w.values(), &mut c4); }
        }, 5));

        // CE fwd via tape
        let store = ParamStore::new();
        let targets: Vec<usize> = (0..p).map(|i| i % v).collect();
        println!("CE fwd (tape): {:.1} ms", time_ms(|| {
            let mut tape = Tape::new();
            let ln = tape.constant(dl.clone());
            let bn = tape.constant(Tensor::zeros(1, v));
            let _ = tape.softmax_cross_entropy_rows_biased(&store, ln, bn, &targets).unwrap();
        }, 5));

        // tensor clone cost (72MB)
        println!("clone 72MB: {:.1} ms", time_ms(|| { let _x = dl.clone(); }, 5));
    }
}
