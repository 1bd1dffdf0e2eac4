//! Block permutors of length `T`.
//!
//! Random permutors are drawn by Fisher-Yates shuffling (`SliceRandom::shuffle`)
//! driven by `Xoshiro256PlusPlus` seeded through `SeedableRng::seed_from_u64`,
//! so a `(T, seed)` pair names the same permutor on every platform.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPermutor {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl BlockPermutor {
    /// Builds a permutor from its forward map; fails unless `forward` is a
    /// bijection on `0..forward.len()`.
    pub fn from_forward(forward: Vec<usize>) -> Result<Self, Error> {
        let n = forward.len();
        if n == 0 {
            return Err(Error::InvalidPermutor("length 0".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (i, &f) in forward.iter().enumerate() {
            if f >= n {
                return Err(Error::InvalidPermutor(format!("index {f} out of range 0..{n}")));
            }
            if inverse[f] != usize::MAX {
                return Err(Error::InvalidPermutor(format!("index {f} repeated")));
            }
            inverse[f] = i;
        }
        Ok(BlockPermutor { forward, inverse })
    }

    pub fn identity(len: usize) -> Result<Self, Error> {
        Self::from_forward((0..len).collect())
    }

    /// Uniformly random permutor of length `len`, fully determined by `seed`.
    pub fn random(len: usize, seed: u64) -> Result<Self, Error> {
        if len == 0 {
            return Err(Error::InvalidPermutor("length 0".into()));
        }
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let mut forward: Vec<usize> = (0..len).collect();
        forward.shuffle(&mut rng);
        Self::from_forward(forward)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// `out[i] = x[forward[i]]`.
    pub fn apply<T: Copy>(&self, x: &[T]) -> Result<Vec<T>, Error> {
        self.check_len(x.len())?;
        Ok(self.forward.iter().map(|&j| x[j]).collect())
    }

    /// `out[i] = x[inverse[i]]`, undoing [`apply`](Self::apply).
    pub fn apply_inverse<T: Copy>(&self, x: &[T]) -> Result<Vec<T>, Error> {
        self.check_len(x.len())?;
        Ok(self.inverse.iter().map(|&j| x[j]).collect())
    }

    /// Allocation-free [`apply`](Self::apply) into `out`.
    pub fn apply_into<T: Copy>(&self, x: &[T], out: &mut [T]) {
        debug_assert!(x.len() == self.len() && out.len() == self.len());
        for (o, &j) in out.iter_mut().zip(&self.forward) {
            *o = x[j];
        }
    }

    /// Allocation-free [`apply_inverse`](Self::apply_inverse) into `out`.
    pub fn apply_inverse_into<T: Copy>(&self, x: &[T], out: &mut [T]) {
        debug_assert!(x.len() == self.len() && out.len() == self.len());
        for (o, &j) in out.iter_mut().zip(&self.inverse) {
            *o = x[j];
        }
    }

    fn check_len(&self, n: usize) -> Result<(), Error> {
        if n != self.len() {
            return Err(Error::LengthMismatch {
                what: "permutor input",
                expected: self.len(),
                actual: n,
            });
        }
        Ok(())
    }

    /// Whitespace-separated forward indices.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() * 6);
        for (i, f) in self.forward.iter().enumerate() {
            if i > 0 {
                s.push(if i % 20 == 0 { '\n' } else { ' ' });
            }
            write!(s, "{f}").unwrap();
        }
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, Error> {
        let forward = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|e| Error::InvalidPermutor(format!("bad index {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_forward(forward)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, Error> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<(), Error> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}
