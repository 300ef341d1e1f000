use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Feature channel of an utterance. Declaration order is the canonical
/// node order within an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "t")]
    Textual,
    #[serde(rename = "v")]
    Visual,
    #[serde(rename = "a")]
    Acoustic,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Textual, Modality::Visual, Modality::Acoustic];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Textual => "t",
            Modality::Visual => "v",
            Modality::Acoustic => "a",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "t" => Ok(Modality::Textual),
            "v" => Ok(Modality::Visual),
            "a" => Ok(Modality::Acoustic),
            other => Err(Error::Argument(format!("unknown modality {other:?} (expected t, v or a)"))),
        }
    }
}

/// Parses a modality set such as `"tva"`, `"t+a"` or `"v"` into canonical order.
pub fn parse_modalities(s: &str) -> Result<Vec<Modality>, Error> {
    let mut out = Vec::new();
    for c in s.chars().filter(|c| !matches!(c, '+' | ',' | ' ')) {
        let m: Modality = c.to_string().parse()?;
        if out.contains(&m) {
            return Err(Error::Argument(format!("modality {m} listed twice in {s:?}")));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(Error::Argument("empty modality set".into()));
    }
    out.sort();
    Ok(out)
}

pub fn modality_label(ms: &[Modality]) -> String {
    ms.iter().map(|m| m.tag()).collect::<Vec<_>>().join("+")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sets() {
        assert_eq!(parse_modalities("avt").unwrap(), Modality::ALL.to_vec());
        assert_eq!(parse_modalities("t+a").unwrap(), vec![Modality::Textual, Modality::Acoustic]);
        assert!(parse_modalities("tt").is_err());
        assert!(parse_modalities("x").is_err());
        assert!(parse_modalities("").is_err());
        assert_eq!(modality_label(&[Modality::Visual, Modality::Acoustic]), "v+a");
    }
}
