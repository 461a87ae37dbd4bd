//! Row-major 2-D grids used for attention maps, edge images and masks.
//!
//! Coordinates are always `(row, col)`, i.e. `(i, j)` with `i` running down
//! the image and `j` across it.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "grid {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn contains(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.height && (j as usize) < self.width
    }

    #[inline]
    pub fn get(&self, i: isize, j: isize) -> Option<&T> {
        if self.contains(i, j) {
            Some(&self.data[i as usize * self.width + j as usize])
        } else {
            None
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Grid<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<Grid<V>> {
        self.ensure_same_dims(other)?;
        Ok(Grid {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Iterates `(row, col, &value)` in storage order.
    pub fn indexed(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width.max(1);
        self.data.iter().enumerate().map(move |(k, v)| (k / w, k % w, v))
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.height && j < self.width);
        &self.data[i * self.width + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.height && j < self.width);
        &mut self.data[i * self.width + j]
    }
}

impl<S: Scalar> Grid<S> {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, S::zero())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn max_value(&self) -> S {
        self.data.iter().copied().fold(S::zero(), S::max)
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Nonzero cells as a binary grid.
    pub fn support(&self) -> Grid<bool> {
        self.map(|v| *v > S::zero())
    }

    pub fn threshold(&self, level: S) -> Grid<bool> {
        self.map(|v| *v > level)
    }

    pub fn cast<U: Scalar>(&self) -> Grid<U> {
        self.map(|v| U::of(v.as_f64()))
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    pub fn and(&self, other: &Grid<bool>) -> Result<Grid<bool>> {
        self.zip_map(other, |a, b| *a && *b)
    }

    pub fn or(&self, other: &Grid<bool>) -> Result<Grid<bool>> {
        self.zip_map(other, |a, b| *a || *b)
    }

    /// True when every set cell of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Grid<bool>) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    pub fn to_scalar<S: Scalar>(&self) -> Grid<S> {
        self.map(|v| if *v { S::one() } else { S::zero() })
    }
}
