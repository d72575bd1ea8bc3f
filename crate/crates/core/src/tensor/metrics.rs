use super::{increment_index, DenseTensor};
use crate::error::{Error, Result};

/// `1 - ||X - X̂||_F / ||X||_F`.
pub fn fitness(original: &DenseTensor, approx: &DenseTensor) -> Result<f64> {
    if original.dims() != approx.dims() {
        return Err(Error::Argument(format!(
            "fitness of tensors with dims {:?} and {:?}",
            original.dims(),
            approx.dims()
        )));
    }
    let norm = original.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::Domain("fitness undefined for a zero-norm original".into()));
    }
    let err: f64 = original
        .values()
        .iter()
        .zip(approx.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(1.0 - err / norm)
}

/// Population mean and standard deviation of all entries.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Sums each cell with its in-bounds neighbours along `mode` (window width 3).
fn box_sum_along(values: &[f64], dims: &[usize], strides: &[usize], mode: usize) -> Vec<f64> {
    let n = dims[mode];
    let stride = strides[mode];
    let mut out = values.to_vec();
    if n == 1 {
        return out;
    }
    let block = stride * n;
    for base in (0..values.len()).step_by(block) {
        for inner in 0..stride {
            let line = base + inner;
            for i in 0..n {
                let mut s = values[line + i * stride];
                if i > 0 {
                    s += values[line + (i - 1) * stride];
                }
                if i + 1 < n {
                    s += values[line + (i + 1) * stride];
                }
                out[line + i * stride] = s;
            }
        }
    }
    out
}

/// `1 - E_i[σ₃(i)] / σ`, where σ₃(i) is the population standard deviation of
/// the 3^d window centred at `i`, truncated at the tensor boundary.
pub fn smoothness(t: &DenseTensor) -> Result<f64> {
    let (mean, sigma) = mean_std(t.values());
    if sigma == 0.0 {
        return Err(Error::Domain("smoothness undefined for a constant tensor".into()));
    }
    let dims = t.dims();
    let strides = t.strides();
    let centred: Vec<f64> = t.values().iter().map(|v| v - mean).collect();
    let mut s1 = centred.clone();
    let mut s2: Vec<f64> = centred.iter().map(|v| v * v).collect();
    for mode in 0..dims.len() {
        s1 = box_sum_along(&s1, dims, strides, mode);
        s2 = box_sum_along(&s2, dims, strides, mode);
    }

    let mut idx = vec![0usize; dims.len()];
    let mut total = 0.0;
    for flat in 0..t.len() {
        let count: usize = idx
            .iter()
            .zip(dims)
            .map(|(&i, &n)| 1 + usize::from(i > 0) + usize::from(i + 1 < n))
            .product();
        let c = count as f64;
        let m = s1[flat] / c;
        let var = (s2[flat] / c - m * m).max(0.0);
        total += var.sqrt();
        increment_index(&mut idx, dims);
    }
    Ok(1.0 - total / t.len() as f64 / sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(dims: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(dims, |_| rng.random::<f64>()).unwrap()
    }

    /// Direct nested-loop window scan with a two-pass variance.
    fn smoothness_oracle(t: &DenseTensor) -> f64 {
        let dims = t.dims();
        let d = dims.len();
        let vals = t.values();
        let n = vals.len() as f64;
        let gm = vals.iter().sum::<f64>() / n;
        let gs = (vals.iter().map(|v| (v - gm).powi(2)).sum::<f64>() / n).sqrt();
        let mut acc = 0.0;
        for flat in 0..t.len() {
            let centre = t.unravel(flat);
            let mut window = Vec::new();
            for code in 0..3usize.pow(d as u32) {
                let mut c = code;
                let mut idx = Vec::with_capacity(d);
                let mut ok = true;
                for k in 0..d {
                    let off = (c % 3) as isize - 1;
                    c /= 3;
                    let x = centre[k] as isize + off;
                    if x < 0 || x >= dims[k] as isize {
                        ok = false;
                        break;
                    }
                    idx.push(x as usize);
                }
                if ok {
                    window.push(t.get(&idx).unwrap());
                }
            }
            let m = window.iter().sum::<f64>() / window.len() as f64;
            let v = window.iter().map(|x| (x - m).powi(2)).sum::<f64>() / window.len() as f64;
            acc += v.sqrt();
        }
        1.0 - acc / n / gs
    }

    #[test]
    fn fitness_cases() {
        let x = DenseTensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        assert_eq!(fitness(&x, &x).unwrap(), 1.0);
        let z = DenseTensor::zeros(&[2]).unwrap();
        assert_eq!(fitness(&x, &z).unwrap(), 0.0);
        let a = DenseTensor::new(vec![2], vec![3.0, 0.0]).unwrap();
        assert!((fitness(&x, &a).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(fitness(&z, &x), Err(Error::Domain(_))));
        assert!(matches!(fitness(&x, &DenseTensor::zeros(&[3]).unwrap()), Err(Error::Argument(_))));
    }

    #[test]
    fn fitness_decreases_with_noise() {
        for seed in 0..10 {
            let x = random_tensor(&[6, 7], seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let noise: Vec<f64> = (0..x.len()).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut prev = 1.0;
            for amp in [0.01, 0.05, 0.1, 0.5, 1.0] {
                let approx = DenseTensor::new(
                    x.dims().to_vec(),
                    x.values().iter().zip(&noise).map(|(v, n)| v + amp * n).collect(),
                )
                .unwrap();
                let f = fitness(&x, &approx).unwrap();
                assert!(f < prev);
                prev = f;
            }
        }
    }

    #[test]
    fn smoothness_rejects_constant() {
        let t = DenseTensor::new(vec![2, 2], vec![1.5; 4]).unwrap();
        assert!(matches!(smoothness(&t), Err(Error::Domain(_))));
    }

    #[test]
    fn smoothness_matches_window_scan() {
        for seed in 0..3 {
            let t = random_tensor(&[5, 5, 5], seed);
            let s = smoothness(&t).unwrap();
            assert!((s - smoothness_oracle(&t)).abs() < 1e-12, "seed {seed}");
            assert!(s <= 1.0);
        }
        let t = random_tensor(&[1, 4, 2, 3], 9);
        assert!((smoothness(&t).unwrap() - smoothness_oracle(&t)).abs() < 1e-12);
    }

    #[test]
    fn smooth_ramps_score_higher_than_noise() {
        let ramp = DenseTensor::from_fn(&[20, 20], |i| (i[0] + i[1]) as f64).unwrap();
        let noise = random_tensor(&[20, 20], 4);
        assert!(smoothness(&ramp).unwrap() > smoothness(&noise).unwrap());
        // Large constant blocks: only windows straddling a block edge vary.
        let blocks = DenseTensor::from_fn(&[40, 40], |i| ((i[0] / 20) * 2 + i[1] / 20) as f64).unwrap();
        assert!(smoothness(&blocks).unwrap() > 0.8);
    }
}
