//! Interval geometry on `[0, 1)`.
//!
//! The unit interval is cut into `2m` half-open bins of width `1/(2m)`.
//! Bins `2k` and `2k + 1` form pair `k`; a [`GreenList`] picks one member of
//! every pair. Membership and nearest-interval lookups are O(1).

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Half-open interval `[lo, hi)` inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// One selection bit per interval pair. Bit `k == false` makes the lower
/// member `[2k/2m, (2k+1)/2m)` green, `true` the upper member.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GreenList {
    bits: Vec<bool>,
}

impl GreenList {
    /// Builds a green list from explicit selection bits.
    pub fn from_bits(m: usize, bits: Vec<bool>) -> Result<Self> {
        if m == 0 {
            return Err(Error::schema("green list needs at least one interval pair"));
        }
        if bits.len() != m {
            return Err(Error::schema(format!(
                "green list has {} selection bits but m = {m}",
                bits.len()
            )));
        }
        Ok(Self { bits })
    }

    /// Draws a green list from a seed. Deterministic in `(m, seed)`; keys
    /// persist the resulting bits, never the seed.
    pub fn random(m: usize, seed: u64) -> Result<Self> {
        Self::from_rng(m, &mut rng::stream(seed))
    }

    pub fn from_rng<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("m must be at least 1"));
        }
        Ok(Self {
            bits: (0..m).map(|_| rng.random::<bool>()).collect(),
        })
    }

    /// Number of interval pairs.
    pub fn m(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    fn bins(&self) -> usize {
        2 * self.bits.len()
    }

    /// Left edge of bin `j`, `j / (2m)`. Every boundary comparison goes
    /// through here so membership and interval bounds agree bit-for-bit.
    fn edge(&self, j: usize) -> f64 {
        j as f64 / self.bins() as f64
    }

    fn bin(&self, j: usize) -> Interval {
        Interval {
            lo: self.edge(j),
            hi: self.edge(j + 1),
        }
    }

    /// Index of the bin containing `frac`.
    fn bin_index(&self, frac: f64) -> usize {
        debug_assert!((0.0..1.0).contains(&frac), "frac {frac} outside [0, 1)");
        let bins = self.bins();
        let mut j = ((frac * bins as f64) as usize).min(bins - 1);
        // frac * 2m may round across a boundary; one step fixes it.
        if j > 0 && frac < self.edge(j) {
            j -= 1;
        } else if j + 1 < bins && frac >= self.edge(j + 1) {
            j += 1;
        }
        j
    }

    /// Pair containing `frac`; equals `min(floor(frac * m), m - 1)`.
    pub fn pair_index(&self, frac: f64) -> usize {
        self.bin_index(frac) / 2
    }

    /// Green member of pair `k`.
    pub fn green_interval(&self, k: usize) -> Interval {
        self.bin(2 * k + usize::from(self.bits[k]))
    }

    /// Red member of pair `k`.
    pub fn red_interval(&self, k: usize) -> Interval {
        self.bin(2 * k + usize::from(!self.bits[k]))
    }

    pub fn green_intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        (0..self.m()).map(|k| self.green_interval(k))
    }

    /// Whether `frac` falls in a green interval.
    pub fn in_green(&self, frac: f64) -> bool {
        let j = self.bin_index(frac);
        self.bits[j / 2] == (j % 2 == 1)
    }

    /// Green interval whose center is closest to `frac`.
    ///
    /// Only the containing pair and the two pairs on either side can hold the
    /// minimizer, so at most five candidates are compared. Ties go to the
    /// lower-indexed interval.
    pub fn nearest_green(&self, frac: f64) -> Interval {
        let c = self.pair_index(frac);
        let first = c.saturating_sub(2);
        let last = (c + 2).min(self.m() - 1);
        let mut best = self.green_interval(first);
        let mut best_dist = (frac - best.center()).abs();
        for k in first + 1..=last {
            let g = self.green_interval(k);
            let dist = (frac - g.center()).abs();
            if dist < best_dist {
                best = g;
                best_dist = dist;
            }
        }
        best
    }
}

/// A finite real split as `whole + frac` with `whole = floor(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub whole: f64,
    pub frac: f64,
}

/// Floor-based integer/fractional split; negative inputs get `frac` in
/// `[0, 1)` too (`-1.25 -> (-2, 0.75)`).
pub fn fractional_part(x: f64) -> Result<Split> {
    if !x.is_finite() {
        return Err(Error::domain(format!("non-finite value {x}")));
    }
    Ok(split(x))
}

pub(crate) fn split(x: f64) -> Split {
    let whole = x.floor();
    let mut frac = x - whole;
    // Tiny negatives: x - floor(x) rounds up to exactly 1.
    if frac >= 1.0 {
        frac = ONE_MINUS_ULP;
    }
    Split { whole, frac }
}

const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;
