use crate::error::{Error, Result};
use crate::numkit::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then contiguous cut into train/val/test.
///
/// Train and validation sizes are `round(n · fraction)`; test takes the
/// remainder.
pub fn split<T: Clone>(items: &[T], seed: u64, fractions: (f64, f64, f64)) -> Result<Splits<T>> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::usage(format!(
            "split fractions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    let n = items.len();
    let n_train = (n as f64 * a).round() as usize;
    let n_val = (n as f64 * b).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::usage(format!(
            "{n} records cannot be split into three non-empty parts with fractions ({a}, {b}, {c})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).split(0x5B17).shuffle(&mut order);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Splits {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}
