use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix, ParamTensor, NORM_EPSILON};

/// Learnable unit-norm prototypes: `C·M` rows, class-major, so prototype `k`
/// of class `c` lives in row `c·M + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    pub param: ParamTensor,
    num_classes: usize,
    per_class: usize,
}

impl PrototypeBank {
    /// Gaussian rows, normalized.
    pub fn random<R: Rng + ?Sized>(
        num_classes: usize,
        per_class: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Self::check_layout(num_classes, per_class)?;
        let mut value = Matrix::random_normal(num_classes * per_class, dim, 1.0, rng);
        normalize_rows(&mut value, per_class)?;
        Ok(Self {
            param: ParamTensor::new(value),
            num_classes,
            per_class,
        })
    }

    pub fn from_matrix(value: Matrix, num_classes: usize, per_class: usize) -> Result<Self> {
        Self::check_layout(num_classes, per_class)?;
        if value.rows() != num_classes * per_class {
            return Err(Error::config(format!(
                "{} prototype rows for {num_classes} classes x {per_class} prototypes",
                value.rows()
            )));
        }
        for (r, row) in value.row_iter().enumerate() {
            let n = norm(row);
            if !((n - 1.0).abs() <= 1e-6) {
                return Err(Error::Degenerate(format!(
                    "prototype {} of class {} has norm {n}",
                    r % per_class,
                    r / per_class
                )));
            }
        }
        Ok(Self {
            param: ParamTensor::new(value),
            num_classes,
            per_class,
        })
    }

    fn check_layout(num_classes: usize, per_class: usize) -> Result<()> {
        if num_classes < 2 {
            return Err(Error::config(format!(
                "a prototype bank needs at least 2 classes, got {num_classes}"
            )));
        }
        if per_class == 0 {
            return Err(Error::config("a prototype bank needs at least 1 prototype per class"));
        }
        Ok(())
    }

    pub fn prototypes(&self) -> &Matrix {
        &self.param.value
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn per_class(&self) -> usize {
        self.per_class
    }

    pub fn dim(&self) -> usize {
        self.param.value.cols()
    }

    pub fn prototype(&self, class: usize, k: usize) -> &[f64] {
        self.param.value.row(class * self.per_class + k)
    }

    /// Projects every row back onto the unit sphere. A collapsed row aborts
    /// with its class and prototype id; nothing is modified in that case.
    pub fn renormalize(&mut self) -> Result<()> {
        normalize_rows(&mut self.param.value, self.per_class)
    }
}

fn normalize_rows(m: &mut Matrix, per_class: usize) -> Result<()> {
    let norms: Vec<f64> = m.row_iter().map(norm).collect();
    if let Some(r) = norms.iter().position(|&n| !(n >= NORM_EPSILON)) {
        return Err(Error::Degenerate(format!(
            "prototype {} of class {} collapsed (norm {:e})",
            r % per_class,
            r / per_class,
            norms[r]
        )));
    }
    for (r, n) in norms.into_iter().enumerate() {
        for v in m.row_mut(r) {
            *v /= n;
        }
    }
    Ok(())
}
