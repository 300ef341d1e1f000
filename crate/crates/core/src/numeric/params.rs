use serde::{Deserialize, Serialize};

use super::matrix::MatRef;
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId(pub(crate) usize);

impl SegmentId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named, shaped window into the flat parameter buffer. Vectors are
/// stored as `rows × 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Every trainable scalar of a model in one contiguous buffer, with a
/// segment table naming each tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    data: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-initialised `rows × cols` tensor.
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> SegmentId {
        let id = SegmentId(self.segments.len());
        self.segments.push(Segment {
            name: name.into(),
            rows,
            cols,
            offset: self.data.len(),
        });
        self.data.resize(self.data.len() + rows * cols, 0.0);
        id
    }

    pub fn from_parts(segments: Vec<Segment>, data: Vec<f64>) -> Result<Self> {
        let mut expected = 0;
        for seg in &segments {
            if seg.offset != expected {
                return Err(Error::Data(format!(
                    "segment {} starts at {} but previous segments end at {expected}",
                    seg.name, seg.offset
                )));
            }
            expected += seg.len();
        }
        ensure_len("parameter buffer", expected, data.len())?;
        super::matrix::ensure_finite("parameters", &data)?;
        Ok(Self { data, segments })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegmentId) -> &Segment {
        &self.segments[id.0]
    }

    pub fn find(&self, name: &str) -> Option<SegmentId> {
        self.segments.iter().position(|s| s.name == name).map(SegmentId)
    }

    /// The segment containing a flat index.
    pub fn segment_at(&self, flat: usize) -> Option<&Segment> {
        self.segments.iter().find(|s| s.range().contains(&flat))
    }

    pub fn get(&self, id: SegmentId) -> &[f64] {
        &self.data[self.segments[id.0].range()]
    }

    pub fn get_mut(&mut self, id: SegmentId) -> &mut [f64] {
        let range = self.segments[id.0].range();
        &mut self.data[range]
    }

    pub fn matrix(&self, id: SegmentId) -> MatRef<'_> {
        let seg = &self.segments[id.0];
        MatRef::new(seg.rows, seg.cols, &self.data[seg.range()]).expect("segment shape")
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        ensure_len("flat parameters", self.data.len(), values.len())?;
        super::matrix::ensure_finite("parameters", values)?;
        self.data.copy_from_slice(values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_are_contiguous() {
        let mut store = ParamStore::new();
        let w = store.add("w", 2, 3);
        let b = store.add("b", 2, 1);
        assert_eq!(store.len(), 8);
        assert_eq!(store.segment(b).offset, 6);
        store.get_mut(w)[4] = 1.5;
        assert_eq!(store.matrix(w).row(1), &[0.0, 1.5, 0.0]);
        assert_eq!(store.segment_at(7).unwrap().name, "b");
        assert_eq!(store.find("w"), Some(w));

        let rebuilt = ParamStore::from_parts(store.segments().to_vec(), store.flat().to_vec()).unwrap();
        assert_eq!(rebuilt, store);
    }

    #[test]
    fn rejects_gaps_and_bad_lengths() {
        let seg = |name: &str, offset| Segment {
            name: name.into(),
            rows: 2,
            cols: 1,
            offset,
        };
        assert!(ParamStore::from_parts(vec![seg("a", 0), seg("b", 3)], vec![0.0; 5]).is_err());
        assert!(ParamStore::from_parts(vec![seg("a", 0)], vec![0.0; 3]).is_err());
    }
}
