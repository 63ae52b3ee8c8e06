use std::fmt;
use std::ops::{Add, Neg, Sub};

/// A lattice site in `Z^D` for `D` in `{1, 2}`.
///
/// One-dimensional sites keep their second coordinate at zero, so the derived
/// lexicographic order is the canonical order in both dimensions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Site(pub [i64; 2]);

pub const MAX_DIMENSION: usize = 2;

impl Site {
    pub const ORIGIN: Site = Site([0, 0]);

    pub fn new1(x: i64) -> Self {
        Site([x, 0])
    }

    pub fn new2(x: i64, y: i64) -> Self {
        Site([x, y])
    }

    pub fn from_coords(coords: &[i64]) -> crate::Result<Self> {
        match *coords {
            [x] => Ok(Site::new1(x)),
            [x, y] => Ok(Site::new2(x, y)),
            _ => Err(crate::Error::invalid(format!(
                "site must have 1 or 2 coordinates, got {}",
                coords.len()
            ))),
        }
    }

    pub fn coords(&self, dim: usize) -> &[i64] {
        &self.0[..dim]
    }

    pub fn x(&self) -> i64 {
        self.0[0]
    }

    pub fn y(&self) -> i64 {
        self.0[1]
    }

    /// Whether the site is representable in dimension `dim`.
    pub fn fits(&self, dim: usize) -> bool {
        dim == 2 || self.0[1] == 0
    }

    pub fn scale(&self, k: i64) -> Self {
        Site([self.0[0] * k, self.0[1] * k])
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        Site([self.0[0] + rhs.0[0], self.0[1] + rhs.0[1]])
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        Site([self.0[0] - rhs.0[0], self.0[1] - rhs.0[1]])
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site([-self.0[0], -self.0[1]])
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0[0], self.0[1])
    }
}

/// Per-axis extent `max - min` of a set of sites; `[0, 0]` when empty.
pub fn span<'a>(sites: impl IntoIterator<Item = &'a Site>) -> [i64; 2] {
    let mut lo = [i64::MAX; 2];
    let mut hi = [i64::MIN; 2];
    let mut any = false;
    for s in sites {
        any = true;
        for d in 0..2 {
            lo[d] = lo[d].min(s.0[d]);
            hi[d] = hi[d].max(s.0[d]);
        }
    }
    if !any {
        return [0, 0];
    }
    [hi[0] - lo[0], hi[1] - lo[1]]
}
