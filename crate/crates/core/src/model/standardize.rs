use crate::error::{Error, Result};

/// Per-column affine rescaling `(v - mean) / scale` fit on training rows.
///
/// A column with zero spread keeps `scale = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            scale: vec![1.0; width],
        }
    }

    /// Fits population mean and standard deviation of each column.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut count = 0usize;
        let mut sums: Vec<f64> = Vec::new();
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for row in &rows {
            if count == 0 {
                sums = vec![0.0; row.len()];
            } else if row.len() != sums.len() {
                return Err(Error::Dimension(format!(
                    "rows of width {} and {} cannot be standardized together",
                    sums.len(),
                    row.len()
                )));
            }
            sums.iter_mut().zip(row.iter()).for_each(|(s, v)| *s += v);
            count += 1;
        }
        if count == 0 {
            return Err(Error::Usage("cannot fit a standardizer on zero rows".into()));
        }
        let mean: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; mean.len()];
        for row in &rows {
            for ((s, v), m) in sq.iter_mut().zip(row.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_in_place(&self, row: &mut [f64]) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::Dimension(format!(
                "row of width {} for a standardizer of width {}",
                row.len(),
                self.width()
            )));
        }
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_and_apply() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(rows.iter().map(Vec::as_slice)).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        let mut r = vec![3.0, 7.0];
        s.apply_in_place(&mut r).unwrap();
        assert_eq!(r, vec![1.0, 2.0]);
    }

    #[test]
    fn ragged_rows_fail() {
        let rows = [vec![1.0, 5.0], vec![3.0]];
        assert!(Standardizer::fit(rows.iter().map(Vec::as_slice)).is_err());
    }
}
