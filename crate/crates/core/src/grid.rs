//! Dense channel-major raster used for images, feature maps, depth and label maps.

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("data length {len} does not match {channels}x{height}x{width}")]
    Length {
        len: usize,
        channels: usize,
        height: usize,
        width: usize,
    },
    #[error("grid contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// `channels × height × width` values stored channel-major, then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self, GridError> {
        if data.len() != channels * height * width {
            return Err(GridError::Length {
                len: data.len(),
                channels,
                height,
                width,
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(value.is_finite());
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Builds a grid by evaluating `f(channel, row, col)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data).expect("from_fn produced a non-finite value")
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    /// One channel as a borrowed plane.
    pub fn plane(&self, c: usize) -> Plane<'_> {
        let n = self.height * self.width;
        Plane {
            height: self.height,
            width: self.width,
            data: &self.data[c * n..(c + 1) * n],
        }
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::new(
            self.channels,
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
        .expect("map produced a non-finite value")
    }
}

/// A single-channel view into a [`Grid`].
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub height: usize,
    pub width: usize,
    pub data: &'a [f64],
}

impl Plane<'_> {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}
