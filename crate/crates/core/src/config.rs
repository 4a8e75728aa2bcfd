//! Exact keys for cone configurations.
//!
//! A configuration is a tuple of symbols in template order. When
//! `alphabet^len` fits in a `u64` the tuple is radix-packed (first symbol most
//! significant), otherwise it is kept as a byte string. Both encodings order
//! exactly like the tuples themselves.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Symbol = u8;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConfigKey {
    Packed(u64),
    Wide(Box<[Symbol]>),
}

/// Ordered tuple of symbols read from a template.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConeConfig(pub Vec<Symbol>);

impl ConeConfig {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }
}

/// Encoder/decoder for configurations of a fixed length over a fixed alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigCodec {
    pub alphabet: u16,
    pub len: usize,
}

impl ConfigCodec {
    pub fn new(alphabet: u16, len: usize) -> Self {
        ConfigCodec { alphabet, len }
    }

    pub fn packs(&self) -> bool {
        let mut cap: u128 = 1;
        for _ in 0..self.len {
            cap *= self.alphabet as u128;
            if cap > u64::MAX as u128 {
                return false;
            }
        }
        true
    }

    pub fn encode(&self, symbols: &[Symbol]) -> ConfigKey {
        debug_assert_eq!(symbols.len(), self.len);
        if self.packs() {
            let a = self.alphabet as u64;
            ConfigKey::Packed(symbols.iter().fold(0u64, |acc, &s| acc * a + s as u64))
        } else {
            ConfigKey::Wide(symbols.into())
        }
    }

    pub fn decode(&self, key: &ConfigKey) -> ConeConfig {
        match key {
            ConfigKey::Wide(s) => ConeConfig(s.to_vec()),
            ConfigKey::Packed(mut x) => {
                let a = self.alphabet as u64;
                let mut out = vec![0; self.len];
                for slot in out.iter_mut().rev() {
                    *slot = (x % a) as Symbol;
                    x /= a;
                }
                ConeConfig(out)
            }
        }
    }

    /// Text form: concatenated digits for alphabets up to 10, `.`-separated otherwise.
    pub fn format(&self, key: &ConfigKey) -> String {
        format_symbols(self.alphabet, self.decode(key).symbols())
    }

    pub fn parse(&self, text: &str) -> Result<ConfigKey> {
        let symbols = parse_symbols(self.alphabet, text)?;
        if symbols.len() != self.len {
            return Err(Error::Params(format!(
                "configuration `{text}` has length {}, expected {}",
                symbols.len(),
                self.len
            )));
        }
        Ok(self.encode(&symbols))
    }

    /// Number of distinct configurations, saturating.
    pub fn cardinality(&self) -> u128 {
        (0..self.len).fold(1u128, |acc, _| acc.saturating_mul(self.alphabet as u128))
    }
}

pub fn format_symbols(alphabet: u16, symbols: &[Symbol]) -> String {
    if alphabet <= 10 {
        symbols.iter().map(|s| char::from(b'0' + s)).collect()
    } else {
        symbols.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(".")
    }
}

pub fn parse_symbols(alphabet: u16, text: &str) -> Result<Vec<Symbol>> {
    let bad = || Error::Params(format!("bad configuration `{text}`"));
    let symbols: Vec<Symbol> = if alphabet <= 10 {
        text.chars()
            .map(|c| c.to_digit(10).map(|d| d as Symbol).ok_or_else(bad))
            .collect::<Result<_>>()?
    } else if text.is_empty() {
        Vec::new()
    } else {
        text.split('.')
            .map(|s| s.parse::<Symbol>().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if symbols.iter().any(|&s| s as u16 >= alphabet) {
        return Err(bad());
    }
    Ok(symbols)
}

impl fmt::Display for ConeConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wide_fallback() {
        let c = ConfigCodec::new(2, 80);
        assert!(!c.packs());
        let s: Vec<Symbol> = (0..80).map(|i| (i % 2) as Symbol).collect();
        assert_eq!(c.decode(&c.encode(&s)).0, s);
    }

    #[test]
    fn text_forms() {
        let c = ConfigCodec::new(2, 3);
        assert_eq!(c.format(&c.encode(&[1, 0, 1])), "101");
        let c = ConfigCodec::new(12, 2);
        assert_eq!(c.format(&c.encode(&[11, 3])), "11.3");
        assert_eq!(c.parse("11.3").unwrap(), c.encode(&[11, 3]));
        assert!(c.parse("12.3").is_err());
    }

    proptest! {
        #[test]
        fn encoding_is_injective_and_order_preserving(
            alphabet in 2u16..12,
            a in proptest::collection::vec(0u8..12, 0..30),
            b in proptest::collection::vec(0u8..12, 0..30),
        ) {
            let len = a.len().min(b.len());
            let a: Vec<Symbol> = a[..len].iter().map(|s| s % alphabet as u8).collect();
            let b: Vec<Symbol> = b[..len].iter().map(|s| s % alphabet as u8).collect();
            let c = ConfigCodec::new(alphabet, len);
            let (ka, kb) = (c.encode(&a), c.encode(&b));
            prop_assert_eq!(c.decode(&ka).0, a.clone());
            prop_assert_eq!(ka.cmp(&kb), a.cmp(&b));
            prop_assert_eq!(c.parse(&c.format(&ka)).unwrap(), ka);
        }
    }
}
