//! Dependent-variable containers: one column for scale and duration
//! families, a pair of PIT columns for the copula.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Series {
    Univariate(Vec<f64>),
    Bivariate(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Copy)]
pub enum SeriesView<'a> {
    Univariate(&'a [f64]),
    Bivariate(&'a [[f64; 2]]),
}

impl Series {
    pub fn len(&self) -> usize {
        match self {
            Series::Univariate(v) => v.len(),
            Series::Bivariate(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn view(&self) -> SeriesView<'_> {
        match self {
            Series::Univariate(v) => SeriesView::Univariate(v),
            Series::Bivariate(v) => SeriesView::Bivariate(v),
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> SeriesView<'_> {
        match self {
            Series::Univariate(v) => SeriesView::Univariate(&v[range]),
            Series::Bivariate(v) => SeriesView::Bivariate(&v[range]),
        }
    }

    /// Rows picked by `idx`, in order.
    pub fn gather(&self, idx: &[usize]) -> Series {
        match self {
            Series::Univariate(v) => Series::Univariate(idx.iter().map(|&i| v[i]).collect()),
            Series::Bivariate(v) => Series::Bivariate(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Series::Univariate(_) => 1,
            Series::Bivariate(_) => 2,
        }
    }
}

impl<'a> SeriesView<'a> {
    pub fn len(&self) -> usize {
        match self {
            SeriesView::Univariate(v) => v.len(),
            SeriesView::Bivariate(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self, n: usize) -> SeriesView<'a> {
        match *self {
            SeriesView::Univariate(v) => SeriesView::Univariate(&v[..n]),
            SeriesView::Bivariate(v) => SeriesView::Bivariate(&v[..n]),
        }
    }

    pub fn to_owned(&self) -> Series {
        match *self {
            SeriesView::Univariate(v) => Series::Univariate(v.to_vec()),
            SeriesView::Bivariate(v) => Series::Bivariate(v.to_vec()),
        }
    }
}
