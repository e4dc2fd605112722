use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named contiguous range inside a [`ParameterVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl Slot {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Flat parameter storage with a layout mapping each model term to its slice.
///
/// Slots are laid out back to back in insertion order, so they are disjoint and
/// cover the whole vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterVector {
    values: Vec<f64>,
    layout: Vec<Slot>,
}

impl ParameterVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a named slot holding `values`.
    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let start = self.values.len();
        self.layout.push(Slot {
            name: name.into(),
            start,
            len: values.len(),
        });
        self.values.extend(values);
    }

    /// Rebuilds a vector from raw storage, checking that the layout tiles it.
    pub fn from_parts(values: Vec<f64>, layout: Vec<Slot>) -> Result<Self> {
        let mut cursor = 0;
        for slot in &layout {
            if slot.start != cursor {
                return Err(Error::LayoutMismatch(format!(
                    "slot '{}' starts at {} but the previous slot ends at {}",
                    slot.name, slot.start, cursor
                )));
            }
            cursor += slot.len;
        }
        if cursor != values.len() {
            return Err(Error::LayoutMismatch(format!(
                "layout covers {cursor} entries but the vector holds {}",
                values.len()
            )));
        }
        Ok(ParameterVector { values, layout })
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

    pub fn layout(&self) -> &[Slot] {
        &self.layout
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn range(&self, name: &str) -> Range<usize> {
        self.slot(name).map_or(0..0, Slot::range)
    }

    pub fn get(&self, name: &str) -> &[f64] {
        &self.values[self.range(name)]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        let r = self.range(name);
        &mut self.values[r]
    }

    /// A zero vector with the same layout.
    pub fn zeros_like(&self) -> ParameterVector {
        ParameterVector {
            values: vec![0.0; self.values.len()],
            layout: self.layout.clone(),
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<ParameterVector> {
        if values.len() != self.values.len() {
            return Err(Error::dims(
                "parameter vector",
                self.values.len(),
                values.len(),
            ));
        }
        Ok(ParameterVector {
            values,
            layout: self.layout.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_tile_the_vector() {
        let mut p = ParameterVector::new();
        p.push("a", vec![1.0, 2.0]);
        p.push("empty", vec![]);
        p.push("b", vec![3.0]);
        assert_eq!(p.len(), 3);
        assert_eq!(p.get("a"), &[1.0, 2.0]);
        assert_eq!(p.get("empty"), &[] as &[f64]);
        assert_eq!(p.get("b"), &[3.0]);
        assert_eq!(p.layout().iter().map(|s| s.len).sum::<usize>(), p.len());
        let rebuilt =
            ParameterVector::from_parts(p.values().to_vec(), p.layout().to_vec()).unwrap();
        assert_eq!(rebuilt, p);
    }

    #[test]
    fn overlapping_layout_rejected() {
        let layout = vec![
            Slot {
                name: "a".into(),
                start: 0,
                len: 2,
            },
            Slot {
                name: "b".into(),
                start: 1,
                len: 1,
            },
        ];
        assert!(matches!(
            ParameterVector::from_parts(vec![0.0; 3], layout),
            Err(Error::LayoutMismatch(_))
        ));
    }
}
