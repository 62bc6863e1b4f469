//! Mixed-radix enumeration of joint state and action spaces.
//!
//! Joint configurations are indexed with agent 0 as the most significant
//! digit. Every table in the crate uses this order.

use serde::{Deserialize, Serialize};

use crate::error::{LocalityError, Result};

/// A product space `X_0 × … × X_{n-1}` of finite coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Space {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl Space {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.contains(&0) {
            return Err(LocalityError::DimensionMismatch(
                "every coordinate needs at least one value".into(),
            ));
        }
        let mut strides = vec![1usize; sizes.len()];
        let mut len = 1usize;
        for i in (0..sizes.len()).rev() {
            strides[i] = len;
            len = len.checked_mul(sizes[i]).ok_or_else(|| {
                LocalityError::DimensionMismatch("joint space size overflows usize".into())
            })?;
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            strides,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, coord: usize) -> usize {
        self.sizes[coord]
    }

    pub fn stride(&self, coord: usize) -> usize {
        self.strides[coord]
    }

    /// Value of coordinate `coord` in joint index `idx`.
    #[inline]
    pub fn digit(&self, idx: usize, coord: usize) -> usize {
        (idx / self.strides[coord]) % self.sizes[coord]
    }

    pub fn digits(&self, idx: usize) -> Vec<usize> {
        (0..self.dims()).map(|c| self.digit(idx, c)).collect()
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.strides).map(|(d, s)| d * s).sum()
    }

    /// Joint index obtained from `idx` by setting coordinate `coord` to `value`.
    #[inline]
    pub fn with_digit(&self, idx: usize, coord: usize, value: usize) -> usize {
        let cur = self.digit(idx, coord);
        idx - cur * self.strides[coord] + value * self.strides[coord]
    }

    /// Sub-space spanned by the coordinates of `scope`.
    pub fn subspace(&self, scope: &Scope) -> Space {
        let sizes: Vec<usize> = scope.coords().iter().map(|&c| self.sizes[c]).collect();
        Space::new(&sizes).expect("sub-space of a valid space")
    }

    /// Index of the projection of `idx` onto `scope`, in the sub-space order.
    pub fn project(&self, idx: usize, scope: &Scope) -> usize {
        let mut out = 0;
        for &c in scope.coords() {
            out = out * self.sizes[c] + self.digit(idx, c);
        }
        out
    }

    /// Projection table: joint index -> scoped index, for every joint index.
    pub fn projection_table(&self, scope: &Scope) -> Vec<usize> {
        (0..self.len).map(|i| self.project(i, scope)).collect()
    }

    /// Joint index whose in-scope coordinates take the values encoded by
    /// `sub_idx` and whose out-of-scope coordinates are pinned to zero.
    pub fn embed(&self, sub_idx: usize, scope: &Scope) -> usize {
        let mut rem = sub_idx;
        let mut out = 0;
        for &c in scope.coords().iter().rev() {
            let d = rem % self.sizes[c];
            rem /= self.sizes[c];
            out += d * self.strides[c];
        }
        out
    }
}

/// A sorted set of coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Scope(Vec<usize>);

impl Scope {
    pub fn new(mut coords: Vec<usize>) -> Self {
        coords.sort_unstable();
        coords.dedup();
        Scope(coords)
    }

    pub fn full(n: usize) -> Self {
        Scope((0..n).collect())
    }

    pub fn empty() -> Self {
        Scope(Vec::new())
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, coord: usize) -> bool {
        self.0.binary_search(&coord).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check_within(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&c) if c >= n => Err(LocalityError::DimensionMismatch(format!(
                "scope coordinate {c} out of range for {n} agents"
            ))),
            _ => Ok(()),
        }
    }
}

impl TryFrom<Vec<usize>> for Scope {
    type Error = String;

    fn try_from(v: Vec<usize>) -> std::result::Result<Self, String> {
        let s = Scope::new(v.clone());
        if s.0.len() != v.len() {
            return Err("scope contains duplicate coordinates".into());
        }
        Ok(s)
    }
}

impl From<Scope> for Vec<usize> {
    fn from(s: Scope) -> Self {
        s.0
    }
}

/// Number of coordinates where two joint indices differ.
pub fn hamming(space: &Space, x: usize, y: usize) -> usize {
    (0..space.dims())
        .filter(|&c| space.digit(x, c) != space.digit(y, c))
        .count()
}
