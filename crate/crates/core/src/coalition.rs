use std::fmt;

use crate::error::{Error, Result};

/// Widest player set a [`Coalition`] can address.
pub const MAX_PLAYERS: usize = 64;

/// Mask with the low `n` bits set.
pub fn full_mask(n: usize) -> u64 {
    debug_assert!(n <= MAX_PLAYERS);
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// A subset of players `0..n`, stored as a bitset.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Coalition {
    members: u64,
    n: u8,
}

impl Coalition {
    pub fn new(members: u64, n: usize) -> Result<Self> {
        if n == 0 || n > MAX_PLAYERS {
            return Err(Error::TooManyFeatures(n));
        }
        if members & !full_mask(n) != 0 {
            return Err(Error::config(format!(
                "coalition {members:#x} names players outside 0..{n}"
            )));
        }
        Ok(Coalition { members, n: n as u8 })
    }

    /// Callers guarantee `members ⊆ full_mask(n)` and `1 <= n <= 64`.
    pub(crate) fn from_bits_unchecked(members: u64, n: usize) -> Self {
        debug_assert!(members & !full_mask(n) == 0);
        Coalition { members, n: n as u8 }
    }

    pub fn empty(n: usize) -> Self {
        Coalition::from_bits_unchecked(0, n)
    }

    pub fn full(n: usize) -> Self {
        Coalition::from_bits_unchecked(full_mask(n), n)
    }

    pub fn members(self) -> u64 {
        self.members
    }

    pub fn num_players(self) -> usize {
        self.n as usize
    }

    pub fn len(self) -> usize {
        self.members.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.members == 0
    }

    pub fn is_full(self) -> bool {
        self.members == full_mask(self.num_players())
    }

    pub fn contains(self, player: usize) -> bool {
        player < self.num_players() && self.members >> player & 1 == 1
    }

    pub fn with(self, player: usize) -> Self {
        assert!(player < self.num_players(), "player {player} out of range");
        Coalition {
            members: self.members | 1 << player,
            n: self.n,
        }
    }

    pub fn without(self, player: usize) -> Self {
        assert!(player < self.num_players(), "player {player} out of range");
        Coalition {
            members: self.members & !(1 << player),
            n: self.n,
        }
    }

    pub fn complement(self) -> Self {
        Coalition {
            members: full_mask(self.num_players()) ^ self.members,
            n: self.n,
        }
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.members;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let i = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(i)
        })
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()?;
        write!(f, "/{}", self.n)
    }
}
