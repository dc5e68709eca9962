use gaborkit::wavefield::*;
use num_complex::Complex64;

fn lowpass(img: &RealImage) -> RealImage {
    // circular aperture radius sqrt(2)*n/4, inclusive, wraparound metric
    let n = img.n();
    let spec = dft2(&img.to_complex().unwrap(), Direction::Forward);
    let half = n as i64 / 2;
    let mut data = spec.data().to_vec();
    for my in 0..n as i64 {
        for mx in 0..n as i64 {
            let cy = if my < half { my } else { my - n as i64 };
            let cx = if mx < half { mx } else { mx - n as i64 };
            if 8 * (cx * cx + cy * cy) as u64 > (n * n) as u64 {
                data[(my as usize) * n + mx as usize] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let filtered = dft2(&ComplexField::new(n, data).unwrap(), Direction::Inverse);
    RealImage::new(n, filtered.data().iter().map(|c| c.re.max(0.0)).collect()).unwrap()
}

fn main() {
    let n = 64;
    for &(y0, x0, lp) in &[(30usize, 33usize, false), (30, 33, true), (32, 32, true), (10, 50, true)] {
        let mut source = RealImage::zeros(n);
        source.set(y0, x0, 1.0);
        let a = if lp { lowpass(&source).normalize_max() } else { source };
        let params = PropagationParams::new(658e-9, 5.5e-6, n, 0.001).unwrap();
        let sensor = propagate(&a.to_complex().unwrap(), &params.with_z(-0.001)).unwrap();
        let interf = rectify(&sensor).normalize_max();
        let holo = reconstruct_hologram(&interf, &params).unwrap();
        let (ay, ax) = holo.argmax();
        let peak = holo.get(ay, ax);
        let at_src = holo.get(y0, x0);
        let total: f64 = holo.data().iter().map(|v| v * v).sum();
        let mut outside = 0.0;
        for y in 0..n { for x in 0..n {
            let (dy, dx) = (y as f64 - y0 as f64, x as f64 - x0 as f64);
            if (dy*dy+dx*dx).sqrt() > 5.0 { outside += holo.get(y,x).powi(2); }
        }}
        println!("src=({y0},{x0}) lowpass={lp} -> argmax=({ay},{ax}) peak={peak:.4} H[src]={at_src:.4} ring_frac={:.4}", outside/total);
    }
}
