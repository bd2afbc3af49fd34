use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use smalldev_core::mc::map_chunks;
use smalldev_core::quantize::{
    decay_exponent, gauss_scalar_codebook, product_quantizer, quant_curve, quant_error, QuantCurve, QuantEntry,
};
use smalldev_core::spectral::{kl_spectrum, EigenSpectrum};
use smalldev_core::ProcessSpec;

fn bm_spectrum() -> EigenSpectrum {
    kl_spectrum(&ProcessSpec::BrownianMotion, 1024, 64).unwrap()
}

fn budgets(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

#[test]
fn small_codebooks() {
    let one = gauss_scalar_codebook(1).unwrap();
    assert_eq!((one.points.as_slice(), one.distortion_sq), (&[0.0][..], 1.0));
    let two = gauss_scalar_codebook(2).unwrap();
    let c = (2.0 / std::f64::consts::PI).sqrt();
    assert!((two.points[0] + c).abs() < 1e-8 && (two.points[1] - c).abs() < 1e-8);
    assert!((two.distortion_sq - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-8);
    // classical tabulated optima for three and four levels
    assert!((gauss_scalar_codebook(3).unwrap().distortion_sq - 0.190_174).abs() < 1e-6);
    assert!((gauss_scalar_codebook(4).unwrap().distortion_sq - 0.117_482).abs() < 1e-6);
}

#[test]
fn codebooks_are_sorted_symmetric_and_improving() {
    let mut last = f64::INFINITY;
    for n in [1, 2, 3, 5, 8, 16, 64, 200, 1024] {
        let c = gauss_scalar_codebook(n).unwrap();
        assert_eq!(c.points.len(), n);
        assert!(c.points.windows(2).all(|w| w[0] < w[1]));
        for (a, b) in c.points.iter().zip(c.points.iter().rev()) {
            assert!((a + b).abs() < 1e-9, "{n}");
        }
        assert!(c.distortion_sq < last);
        last = c.distortion_sq;
    }
    // high-resolution law: n² e(n)² → π√3/2
    let c = gauss_scalar_codebook(1024).unwrap();
    let hr = 1024.0f64.powi(2) * c.distortion_sq / (std::f64::consts::PI * 3f64.sqrt() / 2.0);
    assert!((hr - 1.0).abs() < 0.02, "{hr}");
}

#[test]
fn codebook_distortion_matches_monte_carlo() {
    let n_mc = 10_000_000;
    for n in [3, 4, 8] {
        let c = gauss_scalar_codebook(n).unwrap();
        let parts = map_chunks(n_mc, 40 + n as u64, |rng, size| {
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..size {
                let x: f64 = StandardNormal.sample(rng);
                let d = (x - c.points[c.nearest(x)]).powi(2);
                s += d;
                s2 += d * d;
            }
            (s, s2)
        });
        let (s, s2) = parts.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let nf = n_mc as f64;
        let mean = s / nf;
        let se = ((s2 / nf - mean * mean) / nf).sqrt();
        assert!((mean - c.distortion_sq).abs() < 3.0 * se, "{n}: {mean} {} ± {se}", c.distortion_sq);
    }
}

#[test]
fn zero_budget_quantizes_to_the_mean() {
    let sp = bm_spectrum();
    let q = product_quantizer(&sp, 0.0).unwrap();
    assert!(q.levels.iter().all(|&n| n == 1) && q.rate == 0.0);
    assert!((q.distortion_sq() - sp.trace()).abs() < 1e-15);
    let (d, se) = quant_error(&q, 1000, 3).unwrap();
    assert!((d - 0.5f64.sqrt()).abs() <= 3.0 * se + 1e-6, "{d} ± {se}");
}

#[test]
fn dominant_coordinate_takes_every_level() {
    let sp = EigenSpectrum::from_values(vec![1.0, 1e-6], 0);
    let q = product_quantizer(&sp, 4f64.ln()).unwrap();
    assert_eq!(q.levels, vec![4, 1]);
    assert!(q.rate <= q.budget + 1e-12);
}

#[test]
fn allocation_is_monotone_and_locally_optimal() {
    let sp = bm_spectrum();
    let q = product_quantizer(&sp, 8.0).unwrap();
    assert!(q.rate <= 8.0 + 1e-12);
    assert!(q.levels.windows(2).all(|w| w[0] >= w[1]), "{:?}", q.levels);
    let e = |n: usize| gauss_scalar_codebook(n).unwrap().distortion_sq;
    let base = q.distortion_sq();
    // no feasible move of one level between two coordinates lowers the distortion
    let active = q.levels.iter().filter(|&&n| n > 1).count();
    for i in 0..active {
        for j in 0..=active.min(q.levels.len() - 1) {
            if i == j {
                continue;
            }
            let (ni, nj) = (q.levels[i], q.levels[j]);
            let rate = q.rate - (ni as f64).ln() - (nj as f64).ln() + ((ni - 1) as f64).ln() + ((nj + 1) as f64).ln();
            if rate > 8.0 + 1e-12 {
                continue;
            }
            let d = base + q.lambdas[i] * (e(ni - 1) - e(ni)) + q.lambdas[j] * (e(nj + 1) - e(nj));
            assert!(d >= base - 1e-15, "move {i}->{j}: {d} < {base}");
        }
    }
}

#[test]
fn product_search_separates() {
    let sp = bm_spectrum();
    let q = product_quantizer(&sp, 6.0).unwrap();
    assert!(q.codebook_size() <= 4096.0, "{}", q.codebook_size());
    let dims: Vec<usize> = (0..q.levels.len()).filter(|&k| q.levels[k] > 1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let xi: Vec<f64> = (0..q.levels.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fast = q.quantize(&xi);
        // enumerate the full product codebook over the quantized coordinates
        let mut best = (f64::INFINITY, Vec::new());
        let mut idx = vec![0usize; dims.len()];
        loop {
            let d: f64 =
                dims.iter().zip(&idx).map(|(&k, &i)| q.lambdas[k] * (xi[k] - q.codebooks[k].points[i]).powi(2)).sum();
            if d < best.0 {
                best = (d, idx.clone());
            }
            let mut p = 0;
            while p < dims.len() {
                idx[p] += 1;
                if idx[p] < q.levels[dims[p]] {
                    break;
                }
                idx[p] = 0;
                p += 1;
            }
            if p == dims.len() {
                break;
            }
        }
        for (slot, &k) in dims.iter().enumerate() {
            assert_eq!(fast[k], q.codebooks[k].points[best.1[slot]]);
        }
    }
}

#[test]
fn curve_is_monotone() {
    let c = quant_curve(&bm_spectrum(), &budgets(0.5, 16.0, 12), 20_000, 9).unwrap();
    assert!(c.entries.windows(2).all(|w| w[1].distortion <= w[0].distortion), "{:?}", c.entries);
    let mut out = Vec::new();
    c.write_csv(&mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().starts_with("r,distortion,stderr\n"));
}

#[test]
fn smoother_process_quantizes_faster() {
    let exact = |sp: &EigenSpectrum| QuantCurve {
        entries: budgets(2.0, 16.0, 15)
            .into_iter()
            .map(|r| QuantEntry {
                r,
                distortion: product_quantizer(sp, r).unwrap().distortion_sq().sqrt(),
                stderr: 0.0,
            })
            .collect(),
    };
    let ibm = kl_spectrum(&ProcessSpec::integrated(ProcessSpec::BrownianMotion, 1), 1024, 64).unwrap();
    let a = decay_exponent(&exact(&bm_spectrum()), 2.0, 16.0).unwrap();
    let b = decay_exponent(&exact(&ibm), 2.0, 16.0).unwrap();
    assert!((b - a - 1.0).abs() < 0.3, "{a} {b}");
}

#[test]
fn rejects_bad_input() {
    assert!(gauss_scalar_codebook(0).is_err());
    assert!(product_quantizer(&bm_spectrum(), -1.0).is_err());
    assert!(quant_error(&product_quantizer(&bm_spectrum(), 1.0).unwrap(), 1, 0).is_err());
}
