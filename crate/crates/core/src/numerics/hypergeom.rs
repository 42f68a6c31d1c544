use super::NumericsError;

/// Rising factorial `(a)_i = a (a+1) ... (a+i-1)`, `(a)_0 = 1`.
pub fn pochhammer(a: f64, i: u32) -> f64 {
    (0..i).fold(1.0, |acc, k| acc * (a + k as f64))
}

/// Terminating Gauss series `F(-m, b; c; z) = Σ_{i=0}^{m} (-m)_i (b)_i / (c)_i z^i / i!`.
///
/// Terms are built by the ratio recurrence, so the Pochhammer symbols are
/// running products. Fails if `(c)_i` vanishes for some `i <= m`.
pub fn hypergeom_2f1_terminating(m: u32, b: f64, c: f64, z: f64) -> Result<f64, NumericsError> {
    for i in 0..m {
        if c + i as f64 == 0.0 {
            return Err(NumericsError::InvalidInput(format!(
                "(c)_i vanishes: c = {c} hits zero at i = {}",
                i + 1
            )));
        }
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 0..m {
        let k = i as f64;
        term *= (k - m as f64) * (b + k) / ((c + k) * (k + 1.0)) * z;
        sum += term;
    }
    Ok(sum)
}
