use serde::{Deserialize, Serialize};
use std::fmt;

/// Upper bound on declared atomic propositions; letters are bitmasks.
pub const MAX_APS: usize = 16;

/// A letter of `2^AP`: bit `i` is set iff proposition `i` holds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Letter(pub u32);

impl Letter {
    pub const EMPTY: Letter = Letter(0);

    pub fn holds(self, ap: usize) -> bool {
        self.0 >> ap & 1 == 1
    }

    pub fn with(self, ap: usize) -> Letter {
        Letter(self.0 | 1 << ap)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Builds a letter from proposition names, or returns the first unknown name.
    pub fn from_names<S: AsRef<str>>(names: &[S], aps: &[String]) -> Result<Letter, String> {
        let mut letter = Letter::EMPTY;
        for name in names {
            let name = name.as_ref();
            match aps.iter().position(|ap| ap == name) {
                Some(i) => letter = letter.with(i),
                None => return Err(name.to_string()),
            }
        }
        Ok(letter)
    }

    /// Proposition names in declaration order.
    pub fn names(self, aps: &[String]) -> Vec<String> {
        (0..aps.len()).filter(|&i| self.holds(i)).map(|i| aps[i].clone()).collect()
    }

    pub fn display(self, aps: &[String]) -> LetterDisplay<'_> {
        LetterDisplay { letter: self, aps }
    }
}

pub struct LetterDisplay<'a> {
    letter: Letter,
    aps: &'a [String],
}

impl fmt::Display for LetterDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.letter.names(self.aps).join(","))
    }
}

/// Number of letters over `n` propositions.
pub fn alphabet_size(n: usize) -> usize {
    1usize << n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        let aps = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let l = Letter::from_names(&["c", "a"], &aps).unwrap();
        assert_eq!(l, Letter(0b101));
        assert_eq!(l.names(&aps), vec!["a", "c"]);
        assert_eq!(l.display(&aps).to_string(), "{a,c}");
        assert_eq!(Letter::from_names(&["z"], &aps), Err("z".to_string()));
    }
}
