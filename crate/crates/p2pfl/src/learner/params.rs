//! Flat parameter vectors and their layer layout.
//!
//! A [`ParamVector`] is the unit exchanged between nodes: every layer's
//! weight matrix and bias vector flattened into one `Vec<f64>` in a fixed
//! order. The [`Layout`] pins that order so two vectors can only be
//! combined when they describe the same architecture.

use crate::error::{Error, Result};

/// Shape of one affine layer: weights are stored input-major
/// (`fan_in` rows of `fan_out` values), followed by `fan_out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerShape {
    pub fn weight_count(&self) -> usize {
        self.fan_in * self.fan_out
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.fan_out
    }
}

/// Ordered layer shapes fixing the flattening of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout(Vec<LayerShape>);

impl Layout {
    pub fn new(layers: Vec<LayerShape>) -> Self {
        Layout(layers)
    }

    /// Layout of a free-standing `dim`-vector with no layer structure
    /// (a single bias-only layer); handy for tests and generic vector math.
    pub fn flat(dim: usize) -> Self {
        Layout(vec![LayerShape {
            fan_in: 0,
            fan_out: dim,
        }])
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.0
    }

    pub fn param_count(&self) -> usize {
        self.0.iter().map(LayerShape::param_count).sum()
    }
}

/// Borrowed view of one layer's slice of a [`ParamVector`].
#[derive(Debug, Clone, Copy)]
pub struct Layer<'a> {
    pub weights: &'a [f64],
    pub biases: &'a [f64],
    pub shape: LayerShape,
}

/// Flat model parameters plus the layout that gives them meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.param_count()];
        ParamVector { values, layout }
    }

    pub fn from_values(layout: Layout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.param_count() {
            return Err(Error::LayoutMismatch(format!(
                "{} values for a layout of {} parameters",
                values.len(),
                layout.param_count()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn check_same_layout(&self, other: &ParamVector) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(
                "operands have different layer layouts".into(),
            ));
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self *= a`
    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ParamVector) -> Result<()> {
        self.check_same_layout(other)?;
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
        Ok(())
    }

    /// `self - other`
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_same_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }

    /// `self + other`
    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_same_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }
}
