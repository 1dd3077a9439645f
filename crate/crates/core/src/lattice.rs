//! Finite windows of Z², sites, spins and lattice distance.
//!
//! A window is an `L × L` box of interior sites. Under pinned boundaries it is
//! surrounded by a frame of width `W` whose spins are frozen; every site of the
//! extended `(L + 2W)²` grid gets a dense index, row-major in `(x1, x2)` with
//! interior coordinates running over `0..L` and frame coordinates over
//! `-W..0` and `L..L + W`.

use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::rng::coord_key;

/// An agent's action, `σ(x) ∈ {−1, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Spin {
    Minus,
    Plus,
}

impl Spin {
    pub fn value(self) -> i32 {
        match self {
            Spin::Minus => -1,
            Spin::Plus => 1,
        }
    }

    pub fn flipped(self) -> Spin {
        match self {
            Spin::Minus => Spin::Plus,
            Spin::Plus => Spin::Minus,
        }
    }

    pub fn from_value(v: i64) -> Option<Spin> {
        match v {
            -1 => Some(Spin::Minus),
            1 => Some(Spin::Plus),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Spin::Minus => '-',
            Spin::Plus => '+',
        }
    }
}

impl std::ops::Mul for Spin {
    type Output = Spin;

    fn mul(self, rhs: Spin) -> Spin {
        if self == rhs {
            Spin::Plus
        } else {
            Spin::Minus
        }
    }
}

/// Sign function with `sgn(0) = 0`, returned as a reward value.
pub fn sgn(v: i32) -> i8 {
    v.signum() as i8
}

/// Lattice coordinates, interior sites have both components in `0..L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub x1: i32,
    pub x2: i32,
}

impl Site {
    pub const fn new(x1: i32, x2: i32) -> Self {
        Self { x1, x2 }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryMode {
    Torus,
    Free,
    Pinned,
}

impl BoundaryMode {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryMode::Torus => "torus",
            BoundaryMode::Free => "free",
            BoundaryMode::Pinned => "pinned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "torus" => Some(BoundaryMode::Torus),
            "free" => Some(BoundaryMode::Free),
            "pinned" => Some(BoundaryMode::Pinned),
            _ => None,
        }
    }
}

/// Frozen spins on the frame around a pinned window, in frame order (row-major
/// over the extended grid, skipping interior sites).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    width: usize,
    spins: Vec<Spin>,
}

impl Frame {
    pub fn new(side: usize, width: usize, spins: Vec<Spin>) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidWindow(
                "frame width must be at least 1".into(),
            ));
        }
        let expected = frame_size(side, width);
        if spins.len() != expected {
            return Err(Error::InvalidWindow(format!(
                "frame of width {width} around side {side} needs {expected} spins, got {}",
                spins.len()
            )));
        }
        Ok(Self { width, spins })
    }

    pub fn uniform(side: usize, width: usize, spin: Spin) -> Result<Self> {
        Self::new(side, width, vec![spin; frame_size(side, width)])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }
}

fn frame_size(side: usize, width: usize) -> usize {
    let ext = side + 2 * width;
    ext * ext - side * side
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Torus,
    Free,
    Pinned(Frame),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Window {
    side: usize,
    boundary: Boundary,
}

impl Window {
    pub fn new(side: usize, boundary: Boundary) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidWindow(format!(
                "side length must be at least 2, got {side}"
            )));
        }
        if side > 1 << 15 {
            return Err(Error::InvalidWindow(format!(
                "side length {side} is too large"
            )));
        }
        if let Boundary::Pinned(frame) = &boundary {
            // Re-validate: frames are built for a specific side length.
            Frame::new(side, frame.width, frame.spins.clone())?;
        }
        Ok(Self { side, boundary })
    }

    pub fn torus(side: usize) -> Result<Self> {
        Self::new(side, Boundary::Torus)
    }

    pub fn free(side: usize) -> Result<Self> {
        Self::new(side, Boundary::Free)
    }

    pub fn pinned(side: usize, frame: Frame) -> Result<Self> {
        Self::new(side, Boundary::Pinned(frame))
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn mode(&self) -> BoundaryMode {
        match self.boundary {
            Boundary::Torus => BoundaryMode::Torus,
            Boundary::Free => BoundaryMode::Free,
            Boundary::Pinned(_) => BoundaryMode::Pinned,
        }
    }

    pub fn frame(&self) -> Option<&Frame> {
        match &self.boundary {
            Boundary::Pinned(f) => Some(f),
            _ => None,
        }
    }

    /// Same geometry with a different frame. Used to build the two copies of a coupling.
    pub fn with_frame(&self, frame: Frame) -> Result<Self> {
        match &self.boundary {
            Boundary::Pinned(old) if old.width == frame.width => Self::pinned(self.side, frame),
            _ => Err(Error::InvalidWindow(
                "frame width does not match the window".into(),
            )),
        }
    }

    pub fn frame_width(&self) -> usize {
        self.frame().map_or(0, |f| f.width)
    }

    /// Side of the extended grid (interior plus frame).
    pub fn extent(&self) -> usize {
        self.side + 2 * self.frame_width()
    }

    /// Number of indexed sites, frame included.
    pub fn num_sites(&self) -> usize {
        self.extent() * self.extent()
    }

    pub fn num_interior(&self) -> usize {
        self.side * self.side
    }

    pub fn index(&self, site: Site) -> Option<usize> {
        let w = self.frame_width() as i64;
        let ext = self.extent() as i64;
        let a = site.x1 as i64 + w;
        let b = site.x2 as i64 + w;
        if (0..ext).contains(&a) && (0..ext).contains(&b) {
            Some((a * ext + b) as usize)
        } else {
            None
        }
    }

    pub fn site(&self, index: usize) -> Site {
        let w = self.frame_width() as i32;
        let ext = self.extent();
        Site::new((index / ext) as i32 - w, (index % ext) as i32 - w)
    }

    pub fn is_interior(&self, site: Site) -> bool {
        let l = self.side as i32;
        (0..l).contains(&site.x1) && (0..l).contains(&site.x2)
    }

    pub fn is_interior_index(&self, index: usize) -> bool {
        self.is_interior(self.site(index))
    }

    /// Position of an interior site in `0..L²` (row-major).
    pub fn ordinal(&self, index: usize) -> Option<usize> {
        let s = self.site(index);
        self.is_interior(s)
            .then(|| s.x1 as usize * self.side + s.x2 as usize)
    }

    /// Inverse of [`Window::ordinal`].
    pub fn interior_index(&self, ordinal: usize) -> usize {
        let s = Site::new((ordinal / self.side) as i32, (ordinal % self.side) as i32);
        self.index(s).expect("interior site")
    }

    /// Dense indices of interior sites, in ordinal order.
    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_interior()).map(move |o| self.interior_index(o))
    }

    /// Dense indices of frame sites, in frame order.
    pub fn frame_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_sites()).filter(move |&i| !self.is_interior_index(i))
    }

    /// Randomness key for a site: coordinates relative to the window centre.
    pub fn key(&self, index: usize) -> u64 {
        let s = self.site(index);
        let c = (self.side / 2) as i64;
        coord_key(s.x1 as i64 - c, s.x2 as i64 - c)
    }

    /// L1 distance, with wraparound under torus boundaries.
    pub fn distance(&self, a: Site, b: Site) -> u32 {
        let d1 = (a.x1 - b.x1).unsigned_abs();
        let d2 = (a.x2 - b.x2).unsigned_abs();
        match self.boundary {
            Boundary::Torus => {
                let l = self.side as u32;
                d1.min(l - d1 % l) + d2.min(l - d2 % l)
            }
            _ => d1 + d2,
        }
    }

    pub fn distance_idx(&self, a: usize, b: usize) -> u32 {
        self.distance(self.site(a), self.site(b))
    }

    /// Site at `center + (d1, d2)`: wrapped on the torus, clipped to the
    /// extended grid otherwise.
    pub fn offset(&self, center: usize, d1: i32, d2: i32) -> Option<usize> {
        let c = self.site(center);
        match self.boundary {
            Boundary::Torus => {
                let l = self.side as i32;
                self.index(Site::new(
                    (c.x1 + d1).rem_euclid(l),
                    (c.x2 + d2).rem_euclid(l),
                ))
            }
            _ => self.index(Site::new(c.x1 + d1, c.x2 + d2)),
        }
    }
}

const CACHED_RADII: usize = 48;

/// Offsets of the L1 ball of the given radius, in lexicographic order.
pub fn ball_offsets(radius: u32) -> &'static [(i32, i32)] {
    static TABLE: OnceLock<Vec<Vec<(i32, i32)>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..CACHED_RADII as u32).map(build_ball).collect());
    match table.get(radius as usize) {
        Some(v) => v,
        None => panic!(
            "observation radius {radius} exceeds the supported maximum {}",
            CACHED_RADII - 1
        ),
    }
}

/// Largest observation radius the pattern machinery supports.
pub const MAX_RADIUS: u32 = CACHED_RADII as u32 - 1;

fn build_ball(radius: u32) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let mut v = Vec::with_capacity((2 * r * r + 2 * r + 1) as usize);
    for d1 in -r..=r {
        let rest = r - d1.abs();
        for d2 in -rest..=rest {
            v.push((d1, d2));
        }
    }
    v
}
