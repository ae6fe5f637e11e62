use facn_core::nn::Conv2d;
use ndarray::Array3;
use std::time::Instant;

fn main() {
    // Heaviest conv in the hr=64 model: 64ch -> 64ch at 64x64.
    let mut conv = Conv2d::<f32>::new("bench", 64, 64, 1, 0);
    let x = Array3::<f32>::from_elem((64, 64, 64), 0.1);
    // warmup
    for _ in 0..3 { let y = conv.forward(&x).unwrap(); let _ = conv.backward(&y).unwrap(); }
    let iters = 20;
    let t = Instant::now();
    for _ in 0..iters {
        let y = conv.forward(&x).unwrap();
        let _ = conv.backward(&y).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() / iters as f64;
    // fwd ~ 2*9*64*64*4096 flops, bwd ~ 2x that
    let flops = 3.0 * 2.0 * 9.0 * 64.0 * 64.0 * 4096.0;
    println!("64ch 64x64 fwd+bwd: {:.2} ms  ({:.1} GFLOP/s effective)", dt * 1e3, flops / dt / 1e9);

    let mut conv = Conv2d::<f32>::new("bench2", 64, 64, 1, 0);
    let x = Array3::<f32>::from_elem((64, 32, 32), 0.1);
    for _ in 0..3 { let y = conv.forward(&x).unwrap(); let _ = conv.backward(&y).unwrap(); }
    let t = Instant::now();
    for _ in 0..iters {
        let y = conv.forward(&x).unwrap();
        let _ = conv.backward(&y).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() / iters as f64;
    let flops = 3.0 * 2.0 * 9.0 * 64.0 * 64.0 * 1024.0;
    println!("64ch 32x32 fwd+bwd: {:.2} ms  ({:.1} GFLOP/s effective)", dt * 1e3, flops / dt / 1e9);

    // f64 for gradient checks
    let mut conv = Conv2d::<f64>::new("bench3", 64, 64, 1, 0);
    let x = Array3::<f64>::from_elem((64, 16, 16), 0.1);
    for _ in 0..3 { let y = conv.forward(&x).unwrap(); let _ = conv.backward(&y).unwrap(); }
    let t = Instant::now();
    for _ in 0..iters {
        let y = conv.forward(&x).unwrap();
        let _ = conv.backward(&y).unwrap();
    }
    let dt = t.elapsed().as_secs_f64() / iters as f64;
    let flops = 3.0 * 2.0 * 9.0 * 64.0 * 64.0 * 256.0;
    println!("64ch 16x16 f64 fwd+bwd: {:.3} ms  ({:.1} GFLOP/s effective)", dt * 1e3, flops / dt / 1e9);
}
