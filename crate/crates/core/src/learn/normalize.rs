use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{ensure_len, Error, Result};

/// Per-dimension min-max scaling onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Vec<f64>>,
    {
        let mut rows = rows.into_iter();
        let first = rows.next().ok_or(Error::Empty("normalizer data"))?;
        let mut min = first.clone();
        let mut max = first.clone();
        for r in rows {
            ensure_len("normalizer row", min.len(), r.len())?;
            for (i, &v) in r.iter().enumerate() {
                min[i] = min[i].min(v);
                max[i] = max[i].max(v);
            }
        }
        if min.iter().chain(&max).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalizer data"));
        }
        Ok(Self { min, max })
    }

    pub fn dims(&self) -> usize {
        self.min.len()
    }

    /// Dimensions with zero range; they map to 0.5.
    pub fn degenerate(&self) -> Vec<usize> {
        (0..self.dims())
            .filter(|&i| self.max[i] <= self.min[i])
            .collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    (v - lo) / (hi - lo)
                } else {
                    0.5
                }
            })
            .collect()
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { lo + v * (hi - lo) } else { lo })
            .collect()
    }
}

/// Input and target scalers fitted on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerStats {
    pub input: MinMax,
    pub output: MinMax,
}

impl NormalizerStats {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let seqs = &ds.sequences;
        Ok(Self {
            input: MinMax::fit(seqs.iter().flat_map(|s| &s.inputs))?,
            output: MinMax::fit(seqs.iter().flat_map(|s| &s.targets))?,
        })
    }

    pub fn normalize(&self, ds: &Dataset) -> Result<Dataset> {
        ensure_len("normalizer input width", self.input.dims(), ds.dim_in())?;
        ensure_len("normalizer output width", self.output.dims(), ds.dim_out())?;
        let mut out = ds.clone();
        for s in &mut out.sequences {
            for x in &mut s.inputs {
                *x = self.input.apply(x);
            }
            for y in &mut s.targets {
                *y = self.output.apply(y);
            }
        }
        Ok(out)
    }
}

pub fn fit_normalizer(ds: &Dataset) -> Result<NormalizerStats> {
    NormalizerStats::fit(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_affine_extension() {
        let mm = MinMax {
            min: vec![2.0],
            max: vec![4.0],
        };
        assert_eq!(mm.apply(&[3.0]), vec![0.5]);
        assert_eq!(mm.apply(&[5.0]), vec![1.5]);
        assert_eq!(mm.apply(&[0.0]), vec![-1.0]);
    }

    #[test]
    fn degenerate_dimension_maps_to_half() {
        let rows = vec![vec![1.0, 3.0], vec![2.0, 3.0]];
        let mm = MinMax::fit(&rows).unwrap();
        assert_eq!(mm.degenerate(), vec![1]);
        assert_eq!(mm.apply(&[1.5, 3.0])[1], 0.5);
        assert_eq!(mm.invert(&[0.5, 0.5])[1], 3.0);
    }

    #[test]
    fn fit_spans_unit_interval() {
        let rows = vec![vec![-1.0, 10.0], vec![3.0, 20.0], vec![0.5, 15.0]];
        let mm = MinMax::fit(&rows).unwrap();
        for r in &rows {
            assert!(mm.apply(r).iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(MinMax::fit(std::iter::empty::<&Vec<f64>>()).is_err());
    }
}
