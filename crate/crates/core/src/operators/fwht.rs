use super::OperatorError;

/// In-place unnormalized Walsh-Hadamard transform (natural ordering).
///
/// Applying it twice multiplies the input by its length.
pub fn fwht(v: &mut [f64]) -> Result<(), OperatorError> {
    fwht_counted(v).map(|_| ())
}

/// Same as [`fwht`], returning the number of butterflies performed.
pub fn fwht_counted(v: &mut [f64]) -> Result<u64, OperatorError> {
    let n = v.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(OperatorError::NotPowerOfTwo(n));
    }
    Ok(fwht_unchecked(v))
}

pub(crate) fn fwht_unchecked(v: &mut [f64]) -> u64 {
    let n = v.len();
    let mut ops = 0u64;
    let mut h = 1;
    while h < n {
        for start in (0..n).step_by(2 * h) {
            let (lo, hi) = v[start..start + 2 * h].split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let x = *a;
                let y = *b;
                *a = x + y;
                *b = x - y;
            }
            ops += h as u64;
        }
        h *= 2;
    }
    ops
}

/// Entry `(row, col)` of the order-`n` Sylvester Hadamard matrix.
pub fn hadamard_entry(row: usize, col: usize) -> f64 {
    if (row & col).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}
