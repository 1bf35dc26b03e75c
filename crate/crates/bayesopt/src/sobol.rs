//! Unscrambled Sobol low-discrepancy sequence (Joe–Kuo direction numbers) and
//! box-corner enumeration for initial designs.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const BITS: usize = 32;

/// `(degree s, polynomial a, initial m_1..m_s)` for dimensions 2..=16.
const DIRECTIONS: [(u32, u32, &[u32]); 15] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
];

pub const MAX_DIM: usize = DIRECTIONS.len() + 1;

/// Iterator over Sobol points in `[0, 1)^D`, skipping the all-zero first point.
#[derive(Debug, Clone)]
pub struct Sobol {
    directions: Vec<[u32; BITS]>,
    index: u64,
}

impl Sobol {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::SobolDimension { dim, max: MAX_DIM });
        }
        let mut directions = Vec::with_capacity(dim);
        let mut first = [0u32; BITS];
        for (k, v) in first.iter_mut().enumerate() {
            *v = 1 << (BITS - 1 - k);
        }
        directions.push(first);
        for &(s, a, m) in DIRECTIONS.iter().take(dim - 1) {
            let s = s as usize;
            let mut v = [0u32; BITS];
            for k in 0..s {
                v[k] = m[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                let mut x = v[k - s] ^ (v[k - s] >> s);
                for i in 1..s {
                    if (a >> (s - 1 - i)) & 1 == 1 {
                        x ^= v[k - i];
                    }
                }
                v[k] = x;
            }
            directions.push(v);
        }
        Ok(Self { directions, index: 0 })
    }

    pub fn dim(&self) -> usize {
        self.directions.len()
    }

    /// Integer coordinates of the `n`-th point in Gray-code order.
    fn raw(&self, n: u64) -> Vec<u32> {
        let gray = n ^ (n >> 1);
        self.directions
            .iter()
            .map(|v| {
                let mut x = 0u32;
                for (k, dv) in v.iter().enumerate() {
                    if (gray >> k) & 1 == 1 {
                        x ^= dv;
                    }
                }
                x
            })
            .collect()
    }

    pub fn next_point<T: Scalar>(&mut self) -> Vec<T> {
        self.index += 1;
        let scale = T::lit(1.0 / 4_294_967_296.0);
        self.raw(self.index).into_iter().map(|x| T::from_u32(x).unwrap() * scale).collect()
    }
}

/// First `count` Sobol points (zero point excluded).
pub fn sobol_points<T: Scalar>(dim: usize, count: usize) -> Result<Vec<Vec<T>>> {
    let mut seq = Sobol::new(dim)?;
    Ok((0..count).map(|_| seq.next_point()).collect())
}

/// All `2^D` corners of the unit box; bit `j` of the corner index selects coordinate `j`.
pub fn corners<T: Scalar>(dim: usize) -> Result<Vec<Vec<T>>> {
    if dim > 16 {
        return Err(Error::CornerExplosion { dim });
    }
    Ok((0..1usize << dim)
        .map(|mask| (0..dim).map(|j| if (mask >> j) & 1 == 1 { T::one() } else { T::zero() }).collect())
        .collect())
}

/// Initial design: `count` Sobol points followed (optionally) by every box corner.
pub fn initial_design<T: Scalar>(dim: usize, count: usize, include_corners: bool) -> Result<Vec<Vec<T>>> {
    if include_corners && dim > 16 {
        return Err(Error::CornerExplosion { dim });
    }
    let mut pts = if count > 0 { sobol_points(dim, count)? } else { Vec::new() };
    if include_corners {
        pts.extend(corners(dim)?);
    }
    Ok(pts)
}
