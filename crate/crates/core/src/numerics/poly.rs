use super::NumericsError;

/// Real polynomial with coefficients in ascending degree, intended for the
/// single-sign-change case where Descartes' rule of signs guarantees exactly
/// one positive root.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedPolynomial {
    coefficients: Vec<f64>,
}

impl SignedPolynomial {
    pub fn new(coefficients: Vec<f64>) -> Result<Self, NumericsError> {
        if coefficients.is_empty() {
            return Err(NumericsError::InvalidInput("empty coefficient list".into()));
        }
        if let Some(c) = coefficients.iter().find(|c| !c.is_finite()) {
            return Err(NumericsError::InvalidInput(format!("non-finite coefficient {c}")));
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn eval(&self, f: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * f + c)
    }

    /// `Σ |c_k| f^k`, the natural size of rounding errors in `eval(f)`.
    pub fn magnitude(&self, f: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * f.abs() + c.abs())
    }

    /// Sign changes in the coefficient sequence, zeros skipped.
    pub fn sign_changes(&self) -> usize {
        let signs: Vec<f64> = self
            .coefficients
            .iter()
            .filter(|c| **c != 0.0)
            .map(|c| c.signum())
            .collect();
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// The unique positive root, found by bisection on `[0, B]` with `B` a
    /// Cauchy bound. Rejects coefficient sequences without exactly one sign
    /// change. The root is bisected to full double precision and then checked
    /// against `|p(root)| <= tol * Σ|c_k| root^k`.
    pub fn positive_root(&self, tol: f64) -> Result<f64, NumericsError> {
        let changes = self.sign_changes();
        if changes != 1 {
            return Err(NumericsError::InvalidInput(format!(
                "expected exactly one coefficient sign change, found {changes}"
            )));
        }
        let first = self.coefficients.iter().position(|c| *c != 0.0).unwrap();
        let last = self.coefficients.iter().rposition(|c| *c != 0.0).unwrap();
        let reduced = &self.coefficients[first..=last];
        let q = |f: f64| reduced.iter().rev().fold(0.0, |acc, &c| acc * f + c);

        let lead = reduced[reduced.len() - 1];
        let bound = 1.0
            + reduced[..reduced.len() - 1]
                .iter()
                .map(|c| (c / lead).abs())
                .fold(0.0, f64::max);
        let low_sign = reduced[0].signum();
        let (mut lo, mut hi) = (0.0f64, bound);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let v = q(mid);
            if v == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if v.signum() == low_sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        let residual = self.eval(root).abs();
        if residual > tol * self.magnitude(root) {
            return Err(NumericsError::InvalidInput(format!(
                "root {root} leaves residual {residual} above tolerance"
            )));
        }
        Ok(root)
    }
}
